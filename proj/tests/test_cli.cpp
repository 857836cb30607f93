#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <doctest.h>
#include <json.hpp>

#include "skelres/checkpoint.hpp"
#include "skelres/skeleton.hpp"
#include "support/synthetic.hpp"

using namespace skelres;
using namespace skelres::testing;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "skelres_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

struct CmdResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CmdResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path so = scratch_dir() / ("stdout_" + std::to_string(counter));
    const fs::path se = scratch_dir() / ("stderr_" + std::to_string(counter));
    ++counter;
    const std::string cmd = std::string(SKELRES_CLI_PATH) + " " + args + " > " + so.string() +
                            " 2> " + se.string();
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

void write_corpus_json(const fs::path& dir, const std::vector<SkeletonSequence>& corpus) {
    fs::create_directories(dir);
    for (const auto& seq : corpus)
        std::ofstream(dir / (sequence_id(seq) + ".json")) << write_canonical_json(seq);
}

SkeletonSequence constant_sequence() {
    SkeletonSequence seq;
    seq.action_id = 2;
    seq.subject_id = 9;
    seq.repetition = 1;
    seq.joints_per_frame = 20;
    seq.frames.resize(3);
    for (auto& f : seq.frames) f.joints.resize(20);  // every coordinate 0: no range
    return seq;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("encode writes PNGs and a manifest, deterministically") {
    const fs::path data = scratch_dir() / "enc_data";
    auto corpus = make_learnable_corpus({2, 3}, 2, 1);  // 4 sequences
    write_corpus_json(data, corpus);
    const fs::path out1 = scratch_dir() / "enc_out1";

    CmdResult r = run_cli("encode --data " + data.string() + " --out " + out1.string() +
                          " --threads 1");
    CHECK(r.exit_code == 0);
    for (const auto& seq : corpus) CHECK(fs::is_regular_file(out1 / (sequence_id(seq) + ".png")));

    json manifest = json::parse(slurp(out1 / "manifest.json"));
    REQUIRE(manifest.is_array());
    REQUIRE(manifest.size() == corpus.size());
    CHECK(manifest[0].at("file") == "a02_s01_e01.png");
    CHECK(manifest[0].at("action_id") == 2);
    CHECK(manifest[0].at("subject_id") == 1);
    CHECK(manifest[0].at("joints_per_frame") == 20);
    CHECK(manifest[0].at("frames").get<int>() > 0);

    // A second run (multi-threaded, via the environment variable) reproduces
    // every byte.
    const fs::path out2 = scratch_dir() / "enc_out2";
    CmdResult r2 = run_cli("encode --data " + data.string() + " --out " + out2.string());
    // run through the env-var thread default:
    const std::string env_cmd = "SKELRES_THREADS=2 " + std::string(SKELRES_CLI_PATH) +
                                " encode --data " + data.string() + " --out " + out2.string() +
                                " > /dev/null 2>&1";
    CHECK(std::system(env_cmd.c_str()) == 0);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(out2 / "manifest.json") == slurp(out1 / "manifest.json"));
    for (const auto& seq : corpus) {
        const std::string name = sequence_id(seq) + ".png";
        CHECK(slurp(out2 / name) == slurp(out1 / name));
    }
}

TEST_CASE("encode keeps going past bad sequences but reports failure") {
    const fs::path data = scratch_dir() / "enc_bad_data";
    auto corpus = make_learnable_corpus({2, 3}, 2, 1);
    write_corpus_json(data, corpus);
    write_corpus_json(data, {constant_sequence()});  // degenerate: min == max
    const fs::path out = scratch_dir() / "enc_bad_out";

    CmdResult r = run_cli("encode --data " + data.string() + " --out " + out.string() +
                          " --threads 1");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("a02_s09_e01") != std::string::npos);
    json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.size() == corpus.size());  // the good ones all made it
    CHECK_FALSE(fs::exists(out / "a02_s09_e01.png"));
}

TEST_CASE("encode rejects a permutation of the wrong length per file") {
    const fs::path data = scratch_dir() / "enc_perm_data";
    write_corpus_json(data, make_learnable_corpus({2}, 1, 1));
    const fs::path perm = scratch_dir() / "short_perm.json";
    std::ofstream(perm) << R"({"layout": "toy", "order": [1, 0, 2]})";
    CmdResult r = run_cli("encode --data " + data.string() + " --out " +
                          (scratch_dir() / "enc_perm_out").string() + " --perm " + perm.string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("3") != std::string::npos);  // permutation length in the message
}

TEST_CASE("train runs an experiment config end to end") {
    const fs::path data = scratch_dir() / "train_data";
    auto corpus = make_learnable_corpus({2, 3}, 4, 1);  // 4 train / 4 test sequences
    write_corpus_json(data, corpus);
    const fs::path out = scratch_dir() / "train_out";
    const fs::path config = scratch_dir() / "train_config.json";
    std::ofstream(config) << json{{"protocol", "msr-as1"},
                                  {"data_dir", data.string()},
                                  {"data_format", "json"},
                                  {"output_dir", out.string()},
                                  {"depth", 8},
                                  {"kind", "proposed"},
                                  {"epochs", 1},
                                  {"batch_size", 8},
                                  {"seed", 3},
                                  {"augment", {{"crops_per_image", 1},
                                               {"hflip", false},
                                               {"vflip", false}}}}
                                 .dump(2);

    CmdResult r = run_cli("train --config " + config.string());
    CHECK(r.exit_code == 0);
    REQUIRE(fs::is_regular_file(out / "metrics.csv"));
    REQUIRE(fs::is_regular_file(out / "checkpoint.skrn"));
    REQUIRE(fs::is_regular_file(out / "summary.json"));

    std::ifstream csv(out / "metrics.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "epoch,train_loss,train_err,test_err,seconds");
    std::getline(csv, line);
    CHECK(line.rfind("1,", 0) == 0);

    NetworkParams<float> net = load_checkpoint((out / "checkpoint.skrn").string());
    CHECK(net.spec.depth == 8);
    CHECK(net.spec.num_classes == 8);  // the protocol's full action set

    json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary.at("protocol") == "msr-as1");
    CHECK(summary.at("epochs") == 1);
    CHECK(summary.at("parameter_count").get<long long>() == count_params(net));
    CHECK(json::parse(r.out).at("best_epoch") == summary.at("best_epoch"));

    SUBCASE("eval on the same protocol reproduces the trained metrics") {
        const fs::path eval_out = scratch_dir() / "eval_out";
        CmdResult ev = run_cli("eval --checkpoint " + (out / "checkpoint.skrn").string() +
                               " --data " + data.string() + " --protocol msr-as1 --out " +
                               eval_out.string());
        CHECK(ev.exit_code == 0);
        json metrics = json::parse(slurp(eval_out / "metrics.json"));
        CHECK(metrics.at("test_accuracy_pct").get<double>() ==
              summary.at("best_test_accuracy_pct").get<double>());
        CHECK(metrics.at("test_sequences") == 4);
        std::ifstream conf(eval_out / "confusion.csv");
        std::getline(conf, line);
        CHECK(line.rfind("true\\pred,", 0) == 0);
        int rows = 0;
        while (std::getline(conf, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 8);
    }

    SUBCASE("eval under a protocol with a different class count is refused") {
        const fs::path ntu_data = scratch_dir() / "eval_ntu_data";
        write_corpus_json(ntu_data, make_subject_camera_grid(4, 1, {1, 2}));
        CmdResult ev = run_cli("eval --checkpoint " + (out / "checkpoint.skrn").string() +
                               " --data " + ntu_data.string() + " --protocol ntu-xsub");
        CHECK(ev.exit_code == 1);
        CHECK(ev.err.find("classes") != std::string::npos);
    }

    SUBCASE("flag overrides beat the config file") {
        CmdResult bad = run_cli("train --config " + config.string() + " --depth 21");
        CHECK(bad.exit_code == 1);
        CHECK(bad.err.find("depth") != std::string::npos);
    }
}

TEST_CASE("config validation failures name the offending field") {
    const fs::path data = scratch_dir() / "cfg_data";
    write_corpus_json(data, make_learnable_corpus({2}, 2, 1));
    auto config_with = [&](const json& patch) {
        json doc{{"protocol", "msr-as1"}, {"data_dir", data.string()}, {"epochs", 1}};
        for (const auto& [k, v] : patch.items()) doc[k] = v;
        static int n = 0;
        const fs::path p = scratch_dir() / ("cfg_" + std::to_string(n++) + ".json");
        std::ofstream(p) << doc.dump();
        return p;
    };

    CmdResult r = run_cli("train --config " + config_with({{"protocol", "msr-as9"}}).string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("protocol") != std::string::npos);

    r = run_cli("train --config " + config_with({{"depth", 10}}).string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("depth") != std::string::npos);

    r = run_cli("train --config " + config_with({{"banana", 1}}).string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("banana") != std::string::npos);

    r = run_cli("train --config " + config_with({{"epochs", "many"}}).string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("epochs") != std::string::npos);

    r = run_cli("train --config " + config_with({{"data_dir", "/no/such/dir"}}).string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("data_dir") != std::string::npos);

    CmdResult missing = run_cli("train --config /no/such/config.json");
    CHECK(missing.exit_code == 1);
}

TEST_CASE("large-scale protocols need explicit opt-in") {
    const fs::path data = scratch_dir() / "ntu_data";
    write_corpus_json(data, make_subject_camera_grid(5, 1, {1, 2}));
    const fs::path out = scratch_dir() / "ntu_out";
    const fs::path config = scratch_dir() / "ntu_config.json";
    std::ofstream(config) << json{{"protocol", "ntu-xsub"},
                                  {"data_dir", data.string()},
                                  {"output_dir", out.string()},
                                  {"depth", 8},
                                  {"epochs", 0}}
                                 .dump();

    CmdResult refused = run_cli("train --config " + config.string());
    CHECK(refused.exit_code == 1);
    CHECK(refused.err.find("allow") != std::string::npos);

    CmdResult ok = run_cli("train --config " + config.string() + " --allow-ntu-scale");
    CHECK(ok.exit_code == 0);
    CHECK(fs::is_regular_file(out / "summary.json"));
}

TEST_CASE("gradient checking from the command line") {
    CmdResult ok = run_cli("gradcheck --seeds 1 --depth 8");
    CHECK(ok.exit_code == 0);
    CHECK(ok.out.find("pass") != std::string::npos);
    CHECK(ok.out.find("FAIL") == std::string::npos);
    CHECK(ok.out.find("all gradient checks passed") != std::string::npos);

    CmdResult bad = run_cli("gradcheck --seeds 1 --depth 8 --kind proposed --corrupt");
    CHECK(bad.exit_code == 1);
    CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("inspect summarizes checkpoints and datasets") {
    const fs::path ckpt = scratch_dir() / "inspect.skrn";
    NetworkParams<float> net = init_network<float>(make_network_spec(14, UnitKind::Original, 6), 2);
    save_checkpoint(ckpt.string(), net);
    CmdResult r = run_cli("inspect --checkpoint " + ckpt.string());
    CHECK(r.exit_code == 0);
    json doc = json::parse(r.out);
    CHECK(doc.at("depth") == 14);
    CHECK(doc.at("kind") == "original");
    CHECK(doc.at("residual_units") == 6);
    CHECK(doc.at("parameter_count").get<long long>() == count_params(net));

    const fs::path data = scratch_dir() / "inspect_data";
    write_corpus_json(data, make_learnable_corpus({2, 3}, 2, 2));
    CmdResult d = run_cli("inspect --data " + data.string());
    CHECK(d.exit_code == 0);
    json docd = json::parse(d.out);
    CHECK(docd.at("sequences") == 8);
    CHECK(docd.at("per_action").at("a2") == 4);
    CHECK(docd.at("per_subject").at("s1") == 4);
    CHECK(docd.at("frames").at("min").get<int>() >= 44);

    CmdResult miss = run_cli("inspect --checkpoint /no/such.skrn");
    CHECK(miss.exit_code == 1);
    CHECK(miss.err.find("error:") != std::string::npos);

    CmdResult none = run_cli("inspect");
    CHECK(none.exit_code == 2);
}

}  // TEST_SUITE
