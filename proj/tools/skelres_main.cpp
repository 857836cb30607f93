#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "skelres/checkpoint.hpp"
#include "skelres/encoder.hpp"
#include "skelres/gradcheck.hpp"
#include "skelres/protocol.hpp"
#include "skelres/skeleton.hpp"
#include "skelres/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skelres;

namespace {

int default_threads() {
    if (const char* env = std::getenv("SKELRES_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

struct CorpusOptions {
    std::string data_dir;
    std::string format = "json";  // json | text
    int joints_per_frame = 20;
    int values_per_joint = 3;
};

std::vector<fs::path> list_inputs(const CorpusOptions& opt) {
    if (!fs::is_directory(opt.data_dir)) throw IoError("'" + opt.data_dir + "' is not a directory");
    const std::string ext = opt.format == "json" ? ".json" : ".txt";
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(opt.data_dir))
        if (entry.is_regular_file() && entry.path().extension() == ext)
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

SkeletonSequence load_sequence(const fs::path& path, const CorpusOptions& opt) {
    if (opt.format == "json") {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path.string() + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        return parse_canonical_json(buf.str());
    }
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    SkeletonSequence seq = parse_text_skeleton(in, opt.joints_per_frame, opt.values_per_joint);
    const FilenameMetadata meta = metadata_from_filename(path.filename().string());
    seq.action_id = meta.action_id;
    seq.subject_id = meta.subject_id;
    seq.repetition = meta.repetition;
    seq.camera_id = meta.camera_id;
    return seq;
}

std::vector<SkeletonSequence> load_corpus(const CorpusOptions& opt, std::ostream& warnings,
                                          int* failures = nullptr) {
    std::vector<SkeletonSequence> corpus;
    int failed = 0;
    for (const auto& path : list_inputs(opt)) {
        try {
            corpus.push_back(load_sequence(path, opt));
        } catch (const Error& e) {
            warnings << "warning: skipping " << path.filename().string() << ": " << e.what()
                     << "\n";
            ++failed;
        }
    }
    if (failures) *failures = failed;
    return corpus;
}

JointPermutation permutation_for(const std::string& perm_file, Index joints) {
    if (perm_file.empty()) return identity_permutation(joints);
    JointPermutation p = load_permutation(perm_file);
    if (static_cast<Index>(p.order.size()) != joints)
        throw LengthMismatchError("permutation '" + p.layout + "' covers " +
                                  std::to_string(p.order.size()) + " joints but sequences have " +
                                  std::to_string(joints));
    return p;
}

void add_corpus_flags(CLI::App* cmd, CorpusOptions& opt) {
    cmd->add_option("--data", opt.data_dir, "directory of skeleton files")->required();
    cmd->add_option("--format", opt.format, "input encoding: json (canonical) or text")
        ->check(CLI::IsMember({"json", "text"}));
    cmd->add_option("--joints-per-frame", opt.joints_per_frame,
                    "joints per frame for the text adapter");
    cmd->add_option("--values-per-joint", opt.values_per_joint,
                    "numbers per joint row for the text adapter (first 3 are x y z)");
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

struct EncodeArgs {
    CorpusOptions corpus;
    std::string out_dir;
    std::string perm_file;
    Index height = 32, width = 32;
    std::string method = "bicubic";
    int threads = default_threads();
};

int cmd_encode(const EncodeArgs& args) {
    const ResizeMethod method = resize_method_from_string(args.method);
    fs::create_directories(args.out_dir);
    const std::vector<fs::path> files = list_inputs(args.corpus);

    std::vector<std::string> errors(files.size());
    std::vector<json> entries(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < files.size(); i = next.fetch_add(1)) {
            try {
                SkeletonSequence seq = load_sequence(files[i], args.corpus);
                const JointPermutation perm =
                    permutation_for(args.perm_file, seq.joints_per_frame);
                const ActionImage img = encode_image(seq, perm, args.height, args.width, method);
                const std::string name = sequence_id(seq) + ".png";
                save_png(img, (fs::path(args.out_dir) / name).string());
                entries[i] = json{{"file", name},
                                  {"source", files[i].filename().string()},
                                  {"subject_id", seq.subject_id},
                                  {"action_id", seq.action_id},
                                  {"repetition", seq.repetition},
                                  {"camera_id", seq.camera_id},
                                  {"joints_per_frame", seq.joints_per_frame},
                                  {"frames", seq.num_frames()}};
            } catch (const Error& e) {
                errors[i] = files[i].filename().string() + ": " + e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(args.threads, static_cast<int>(files.size())));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    json manifest = json::array();
    int failed = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!errors[i].empty()) {
            std::cerr << "error: " << errors[i] << "\n";
            ++failed;
        } else if (!entries[i].is_null()) {
            manifest.push_back(std::move(entries[i]));
        }
    }
    std::ofstream mf(fs::path(args.out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    std::cerr << "encoded " << manifest.size() << "/" << files.size() << " sequences to "
              << args.out_dir << "\n";
    return failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    CorpusOptions corpus;
    std::string protocol;
    std::string permutation;  // path; empty = identity
    std::string output_dir = ".";
    TrainConfig train;
    bool allow_ntu_scale = false;
};

void check_known_keys(const json& doc, const std::vector<std::string>& known,
                      const std::string& prefix) {
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown key");
    }
}

template <typename T>
void read_field(const json& doc, const char* key, T& out, const std::string& prefix) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(prefix.empty() ? key : prefix + "." + std::string(key),
                          "wrong type");
    }
}

ExperimentConfig parse_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ConfigError("document", "config is not a JSON object");

    check_known_keys(doc, {"protocol", "data_dir", "data_format", "joints_per_frame",
                           "values_per_joint", "permutation", "output_dir", "depth", "kind",
                           "epochs", "batch_size", "weight_decay", "momentum", "seed",
                           "resize_method", "augment", "schedule", "allow_ntu_scale"},
                     "");

    ExperimentConfig cfg;
    read_field(doc, "protocol", cfg.protocol, "");
    read_field(doc, "data_dir", cfg.corpus.data_dir, "");
    read_field(doc, "data_format", cfg.corpus.format, "");
    read_field(doc, "joints_per_frame", cfg.corpus.joints_per_frame, "");
    read_field(doc, "values_per_joint", cfg.corpus.values_per_joint, "");
    read_field(doc, "permutation", cfg.permutation, "");
    read_field(doc, "output_dir", cfg.output_dir, "");
    read_field(doc, "allow_ntu_scale", cfg.allow_ntu_scale, "");

    long long depth = cfg.train.depth;
    read_field(doc, "depth", depth, "");
    cfg.train.depth = static_cast<Index>(depth);
    if (doc.contains("kind")) {
        std::string kind;
        read_field(doc, "kind", kind, "");
        try {
            cfg.train.kind = unit_kind_from_string(kind);
        } catch (const KindError& e) {
            throw ConfigError("kind", e.what());
        }
    }
    read_field(doc, "epochs", cfg.train.epochs, "");
    read_field(doc, "batch_size", cfg.train.batch_size, "");
    read_field(doc, "weight_decay", cfg.train.weight_decay, "");
    read_field(doc, "momentum", cfg.train.momentum, "");
    read_field(doc, "seed", cfg.train.seed, "");
    if (doc.contains("resize_method")) {
        std::string m;
        read_field(doc, "resize_method", m, "");
        try {
            cfg.train.method = resize_method_from_string(m);
        } catch (const Error& e) {
            throw ConfigError("resize_method", e.what());
        }
    }
    if (doc.contains("augment")) {
        const json& a = doc.at("augment");
        if (!a.is_object()) throw ConfigError("augment", "must be an object");
        check_known_keys(a, {"pre_resize", "crop_size", "crops_per_image", "hflip", "vflip"},
                         "augment");
        if (a.contains("pre_resize")) {
            auto v = a.at("pre_resize").get<std::vector<Index>>();
            if (v.size() != 2) throw ConfigError("augment.pre_resize", "must be [H, W]");
            cfg.train.augment.pre_h = v[0];
            cfg.train.augment.pre_w = v[1];
        }
        if (a.contains("crop_size")) {
            auto v = a.at("crop_size").get<std::vector<Index>>();
            if (v.size() != 2) throw ConfigError("augment.crop_size", "must be [H, W]");
            cfg.train.augment.crop_h = v[0];
            cfg.train.augment.crop_w = v[1];
        }
        read_field(a, "crops_per_image", cfg.train.augment.crops_per_image, "augment");
        read_field(a, "hflip", cfg.train.augment.horizontal_flip, "augment");
        read_field(a, "vflip", cfg.train.augment.vertical_flip, "augment");
    }
    if (doc.contains("schedule")) {
        const json& s = doc.at("schedule");
        if (!s.is_array()) throw ConfigError("schedule", "must be an array of segments");
        for (const auto& seg : s) {
            check_known_keys(seg, {"first", "last", "rate"}, "schedule");
            LrSegment ls;
            read_field(seg, "first", ls.first_epoch, "schedule");
            read_field(seg, "last", ls.last_epoch, "schedule");
            read_field(seg, "rate", ls.rate, "schedule");
            cfg.train.schedule.push_back(ls);
        }
    }

    if (cfg.protocol.empty()) throw ConfigError("protocol", "required");
    if (cfg.corpus.data_dir.empty()) throw ConfigError("data_dir", "required");
    try {
        protocol_actions(cfg.protocol);
    } catch (const UnknownProtocolError& e) {
        throw ConfigError("protocol", e.what());
    }
    try {
        make_network_spec(cfg.train.depth, cfg.train.kind, 2);
    } catch (const DepthError& e) {
        throw ConfigError("depth", e.what());
    }
    if (cfg.train.epochs < 0) throw ConfigError("epochs", "must be non-negative");
    if (cfg.train.batch_size < 1) throw ConfigError("batch_size", "must be positive");
    return cfg;
}

Index corpus_joint_count(const std::vector<SkeletonSequence>& corpus) {
    if (corpus.empty()) throw EmptyDatasetError("no sequences could be loaded");
    const int k = corpus.front().joints_per_frame;
    for (const auto& s : corpus)
        if (s.joints_per_frame != k)
            throw ShapeError("corpus mixes joint counts (" + std::to_string(k) + " and " +
                             std::to_string(s.joints_per_frame) + ")");
    return k;
}

int cmd_train(const std::string& config_path, const ExperimentConfig& overrides,
              const std::vector<std::string>& overridden) {
    ExperimentConfig cfg = parse_experiment_config(config_path);
    auto on = [&](const std::string& flag) {
        return std::find(overridden.begin(), overridden.end(), flag) != overridden.end();
    };
    if (on("depth")) cfg.train.depth = overrides.train.depth;
    if (on("kind")) cfg.train.kind = overrides.train.kind;
    if (on("epochs")) cfg.train.epochs = overrides.train.epochs;
    if (on("batch-size")) cfg.train.batch_size = overrides.train.batch_size;
    if (on("seed")) cfg.train.seed = overrides.train.seed;
    if (on("protocol")) cfg.protocol = overrides.protocol;
    if (on("data")) cfg.corpus.data_dir = overrides.corpus.data_dir;
    if (on("out")) cfg.output_dir = overrides.output_dir;
    if (on("perm")) cfg.permutation = overrides.permutation;
    if (on("allow-ntu-scale")) cfg.allow_ntu_scale = true;

    if (!fs::is_directory(cfg.corpus.data_dir))
        throw ConfigError("data_dir", "'" + cfg.corpus.data_dir + "' is not a directory");
    if (!cfg.permutation.empty() && !fs::is_regular_file(cfg.permutation))
        throw ConfigError("permutation", "'" + cfg.permutation + "' does not exist");

    if (cfg.protocol.rfind("ntu-", 0) == 0 && !cfg.allow_ntu_scale)
        throw ConfigError("protocol",
                          "full-size cross-subject/cross-view training is disabled by default; "
                          "set allow_ntu_scale (or pass --allow-ntu-scale) to proceed");

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SkeletonSequence> corpus = load_corpus(cfg.corpus, std::cerr);
    const JointPermutation perm =
        permutation_for(cfg.permutation, corpus_joint_count(corpus));

    fs::create_directories(cfg.output_dir);
    std::ofstream csv(fs::path(cfg.output_dir) / "metrics.csv");
    FitResult result = fit(cfg.train, corpus, cfg.protocol, perm, &csv, &std::cerr);

    const std::string ckpt_path = (fs::path(cfg.output_dir) / "checkpoint.skrn").string();
    save_checkpoint(ckpt_path, result.best_params);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json summary{{"protocol", cfg.protocol},
                 {"split", result.split_name},
                 {"depth", cfg.train.depth},
                 {"kind", to_string(cfg.train.kind)},
                 {"seed", cfg.train.seed},
                 {"epochs", cfg.train.epochs},
                 {"num_classes", result.best_params.spec.num_classes},
                 {"parameter_count", count_params(result.best_params)},
                 {"final_test_accuracy_pct", result.final_metrics.test_accuracy_pct()},
                 {"best_test_accuracy_pct", result.best_metrics.test_accuracy_pct()},
                 {"best_epoch", result.best_epoch},
                 {"checkpoint", ckpt_path},
                 {"wall_time_seconds", wall}};
    std::ofstream(fs::path(cfg.output_dir) / "summary.json") << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const CorpusOptions& corpus_opt,
             const std::string& protocol, const std::string& perm_file,
             const std::string& out_dir) {
    NetworkParams<float> net = load_checkpoint(ckpt_path);
    std::vector<SkeletonSequence> corpus = load_corpus(corpus_opt, std::cerr);
    const JointPermutation perm = permutation_for(perm_file, corpus_joint_count(corpus));

    ProtocolSplit split = make_split(corpus, protocol);
    LabelMap labels = make_label_map(corpus, protocol);
    const std::set<std::string> test_ids(split.test.begin(), split.test.end());
    std::vector<SkeletonSequence> test_seqs;
    for (const auto& s : corpus)
        if (test_ids.count(sequence_id(s))) test_seqs.push_back(s);

    Metrics m = evaluate(net, test_seqs, perm, ResizeMethod::Bicubic, labels);

    json per_class = json::object();
    for (int t = 0; t < labels.num_classes(); ++t) {
        int total = 0;
        for (int p = 0; p < labels.num_classes(); ++p) total += m.confusion[t][p];
        per_class["a" + std::to_string(labels.action_of(t))] =
            total == 0 ? json(nullptr) : json(100.0 * m.confusion[t][t] / total);
    }
    json out{{"protocol", protocol},
             {"split", split.name},
             {"test_sequences", test_seqs.size()},
             {"test_accuracy_pct", m.test_accuracy_pct()},
             {"per_class_accuracy_pct", per_class}};

    std::ostringstream confusion;
    confusion << "true\\pred";
    for (int p = 0; p < labels.num_classes(); ++p) confusion << ",a" << labels.action_of(p);
    confusion << "\n";
    for (int t = 0; t < labels.num_classes(); ++t) {
        confusion << "a" << labels.action_of(t);
        for (int p = 0; p < labels.num_classes(); ++p) confusion << "," << m.confusion[t][p];
        confusion << "\n";
    }

    if (out_dir.empty()) {
        std::cout << out.dump(2) << "\n" << confusion.str();
    } else {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "metrics.json") << out.dump(2) << "\n";
        std::ofstream(fs::path(out_dir) / "confusion.csv") << confusion.str();
        std::cout << out.dump(2) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck / inspect
// ---------------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, int seeds, Index depth, const std::string& kind,
                  bool corrupt) {
    bool all_ok = true;
    auto report = [&](const std::vector<LayerCheck>& checks) {
        for (const auto& c : checks) {
            std::printf("%-34s max_rel_err %.3e  tol %.0e  %s\n", c.name.c_str(), c.max_rel_err,
                        c.tolerance, c.pass ? "pass" : "FAIL");
            all_ok = all_ok && c.pass;
        }
    };
    for (int s = 0; s < seeds; ++s)
        report(run_layer_gradchecks(seed + static_cast<std::uint64_t>(s), corrupt));
    for (UnitKind k : {UnitKind::Original, UnitKind::Proposed})
        if (kind == "both" || kind == to_string(k))
            report(run_network_gradcheck(depth, k, seed));
    std::printf("%s\n", all_ok ? "all gradient checks passed" : "gradient checks FAILED");
    return all_ok ? 0 : 1;
}

int cmd_inspect_checkpoint(const std::string& path) {
    NetworkParams<float> net = load_checkpoint(path);
    json doc = json::parse(spec_to_json(net.spec));
    doc["residual_units"] = total_units(net.spec);
    doc["parameter_count"] = count_params(net);
    std::cout << doc.dump(2) << "\n";
    return 0;
}

int cmd_inspect_data(const CorpusOptions& opt) {
    std::vector<SkeletonSequence> corpus = load_corpus(opt, std::cerr);
    if (corpus.empty()) throw EmptyDatasetError("no sequences could be loaded");
    std::map<int, int> per_action, per_subject;
    int min_frames = corpus.front().num_frames(), max_frames = min_frames;
    long long total_frames = 0;
    for (const auto& s : corpus) {
        ++per_action[s.action_id];
        ++per_subject[s.subject_id];
        min_frames = std::min(min_frames, s.num_frames());
        max_frames = std::max(max_frames, s.num_frames());
        total_frames += s.num_frames();
    }
    json ja = json::object(), js = json::object();
    for (auto [a, n] : per_action) ja["a" + std::to_string(a)] = n;
    for (auto [s, n] : per_subject) js["s" + std::to_string(s)] = n;
    json doc{{"sequences", corpus.size()},
             {"joints_per_frame", corpus.front().joints_per_frame},
             {"frames", {{"min", min_frames},
                         {"max", max_frames},
                         {"mean", static_cast<double>(total_frames) / corpus.size()}}},
             {"per_action", ja},
             {"per_subject", js}};
    std::cout << doc.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skeleton-sequence action recognition: RGB encoding + residual networks"};
    app.require_subcommand(1);

    EncodeArgs enc;
    CLI::App* encode = app.add_subcommand("encode", "encode skeleton sequences to PNG images");
    add_corpus_flags(encode, enc.corpus);
    encode->add_option("--out", enc.out_dir, "output directory")->required();
    encode->add_option("--perm", enc.perm_file, "joint permutation JSON");
    encode->add_option("--height", enc.height, "output image height");
    encode->add_option("--width", enc.width, "output image width");
    encode->add_option("--method", enc.method, "resize method")
        ->check(CLI::IsMember({"nearest", "bicubic"}));
    encode->add_option("--threads", enc.threads, "worker threads (default: SKELRES_THREADS)");

    std::string train_config;
    ExperimentConfig overrides;
    std::string override_kind;
    CLI::App* train = app.add_subcommand("train", "train a network per an experiment config");
    train->add_option("--config", train_config, "experiment config JSON")->required();
    train->add_option("--depth", overrides.train.depth, "network depth (6n+2)");
    train->add_option("--kind", override_kind, "residual unit kind")
        ->check(CLI::IsMember({"original", "proposed"}));
    train->add_option("--epochs", overrides.train.epochs, "training epochs");
    train->add_option("--batch-size", overrides.train.batch_size, "mini-batch size");
    train->add_option("--seed", overrides.train.seed, "master seed");
    train->add_option("--protocol", overrides.protocol, "protocol name");
    train->add_option("--data", overrides.corpus.data_dir, "dataset directory");
    train->add_option("--out", overrides.output_dir, "output directory");
    train->add_option("--perm", overrides.permutation, "joint permutation JSON");
    train->add_flag("--allow-ntu-scale", "allow full-scale cross-subject/view training");

    CorpusOptions eval_corpus;
    std::string eval_ckpt, eval_protocol, eval_perm, eval_out;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a protocol's test side");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    add_corpus_flags(eval, eval_corpus);
    eval->add_option("--protocol", eval_protocol, "protocol name")->required();
    eval->add_option("--perm", eval_perm, "joint permutation JSON");
    eval->add_option("--out", eval_out, "output directory (default: stdout)");

    std::uint64_t gc_seed = 1;
    int gc_seeds = 1;
    Index gc_depth = 20;
    std::string gc_kind = "both";
    bool gc_corrupt = false;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference checks of every backward pass");
    gradcheck->add_option("--seed", gc_seed, "base seed");
    gradcheck->add_option("--seeds", gc_seeds, "number of seeds to sweep")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--depth", gc_depth, "depth for the width-reduced network check");
    gradcheck->add_option("--kind", gc_kind, "unit kind for the network check")
        ->check(CLI::IsMember({"both", "original", "proposed"}));
    gradcheck->add_flag("--corrupt", gc_corrupt,
                        "negative control: skew one analytic gradient and expect a failure");

    std::string inspect_ckpt;
    CorpusOptions inspect_corpus;
    CLI::App* inspect = app.add_subcommand("inspect", "summarize a checkpoint or a dataset");
    inspect->add_option("--checkpoint", inspect_ckpt, "checkpoint file");
    inspect->add_option("--data", inspect_corpus.data_dir, "directory of skeleton files");
    inspect->add_option("--format", inspect_corpus.format, "input encoding")
        ->check(CLI::IsMember({"json", "text"}));
    inspect->add_option("--joints-per-frame", inspect_corpus.joints_per_frame,
                        "joints per frame for the text adapter");
    inspect->add_option("--values-per-joint", inspect_corpus.values_per_joint,
                        "numbers per joint row for the text adapter");

    CLI11_PARSE(app, argc, argv);

    try {
        if (encode->parsed()) return cmd_encode(enc);
        if (train->parsed()) {
            if (!override_kind.empty()) overrides.train.kind = unit_kind_from_string(override_kind);
            std::vector<std::string> overridden;
            for (const char* flag : {"depth", "kind", "epochs", "batch-size", "seed", "protocol",
                                     "data", "out", "perm", "allow-ntu-scale"})
                if (train->count("--" + std::string(flag))) overridden.push_back(flag);
            return cmd_train(train_config, overrides, overridden);
        }
        if (eval->parsed())
            return cmd_eval(eval_ckpt, eval_corpus, eval_protocol, eval_perm, eval_out);
        if (gradcheck->parsed())
            return cmd_gradcheck(gc_seed, gc_seeds, gc_depth, gc_kind, gc_corrupt);
        if (inspect->parsed()) {
            if (!inspect_ckpt.empty()) return cmd_inspect_checkpoint(inspect_ckpt);
            if (!inspect_corpus.data_dir.empty()) return cmd_inspect_data(inspect_corpus);
            std::cerr << "error: inspect needs --checkpoint or --data\n";
            return 2;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
