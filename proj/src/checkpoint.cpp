#include "skelres/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace skelres {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'K', 'R', 'N'};
constexpr std::uint8_t kVersion = 1;

json spec_to_json_obj(const NetworkSpec& spec) {
    return json{{"depth", spec.depth},
                {"kind", to_string(spec.kind)},
                {"num_classes", spec.num_classes},
                {"stage_widths", spec.stage_widths},
                {"units_per_stage", spec.units_per_stage},
                {"input_channels", spec.input_channels},
                {"dropout_rate", spec.dropout_rate},
                {"bn_eps", spec.bn_eps},
                {"bn_momentum", spec.bn_momentum}};
}

NetworkSpec spec_from_json_obj(const json& doc) {
    try {
        NetworkSpec spec = make_network_spec(doc.at("depth").get<Index>(),
                                             unit_kind_from_string(doc.at("kind").get<std::string>()),
                                             doc.at("num_classes").get<Index>());
        const auto widths = doc.at("stage_widths").get<std::vector<Index>>();
        if (widths.size() != 3) throw SchemaError("stage_widths", "must have 3 entries");
        std::copy(widths.begin(), widths.end(), spec.stage_widths.begin());
        if (doc.at("units_per_stage").get<Index>() != spec.units_per_stage)
            throw SchemaError("units_per_stage", "inconsistent with depth");
        spec.input_channels = doc.at("input_channels").get<Index>();
        spec.dropout_rate = doc.at("dropout_rate").get<double>();
        spec.bn_eps = doc.at("bn_eps").get<double>();
        spec.bn_momentum = doc.at("bn_momentum").get<double>();
        return spec;
    } catch (const json::exception& e) {
        throw SchemaError("spec", e.what());
    }
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_to_json_obj(spec).dump(); }

NetworkSpec spec_from_json_text(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("spec", "not valid JSON");
    return spec_from_json_obj(doc);
}

void save_checkpoint(const std::string& path, const NetworkParams<float>& net) {
    auto& mutable_net = const_cast<NetworkParams<float>&>(net);
    const auto refs = network_state(mutable_net);

    json manifest = json::array();
    std::uint64_t offset = 0;
    for (const auto& ref : refs) {
        manifest.push_back(
            {{"name", ref.name}, {"shape", ref.tensor->shape()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(ref.tensor->size()) * sizeof(float);
    }
    const std::string header =
        json{{"spec", spec_to_json_obj(net.spec)}, {"tensors", std::move(manifest)}}.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    const std::uint32_t header_len = static_cast<std::uint32_t>(header.size());
    char len_bytes[4];
    for (int i = 0; i < 4; ++i) len_bytes[i] = static_cast<char>((header_len >> (8 * i)) & 0xff);
    out.write(len_bytes, 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& ref : refs) {
        static_assert(sizeof(float) == 4);
        // x86-64 is little-endian; floats are stored as-is
        out.write(reinterpret_cast<const char*>(ref.tensor->data()),
                  static_cast<std::streamsize>(ref.tensor->size() * sizeof(float)));
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

NetworkParams<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ChecksumError("'" + path + "' is not a checkpoint (bad magic)");
    if (static_cast<std::uint8_t>(bytes[4]) != kVersion)
        throw ChecksumError("unsupported checkpoint version " +
                            std::to_string(static_cast<int>(bytes[4])));
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i)
        header_len |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[5 + i]))
                      << (8 * i);
    if (bytes.size() < 9 + static_cast<std::size_t>(header_len))
        throw ChecksumError("checkpoint truncated inside the header");

    json doc = json::parse(bytes.substr(9, header_len), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("spec") ||
        !doc.contains("tensors") || !doc.at("tensors").is_array())
        throw ChecksumError("checkpoint header is not valid");

    NetworkSpec spec;
    try {
        spec = spec_from_json_obj(doc.at("spec"));
    } catch (const Error& e) {
        throw ChecksumError(std::string("checkpoint spec invalid: ") + e.what());
    }
    NetworkParams<float> net = alloc_network<float>(spec);
    auto refs = network_state(net);

    const std::size_t data_begin = 9 + header_len;
    const std::size_t data_len = bytes.size() - data_begin;
    std::vector<bool> filled(refs.size(), false);
    std::uint64_t expected_total = 0;
    for (const auto& entry : doc.at("tensors")) {
        std::string name;
        std::vector<Index> shape;
        std::uint64_t offset = 0;
        try {
            name = entry.at("name").get<std::string>();
            shape = entry.at("shape").get<std::vector<Index>>();
            offset = entry.at("offset").get<std::uint64_t>();
        } catch (const json::exception& e) {
            throw ChecksumError(std::string("checkpoint manifest entry invalid: ") + e.what());
        }
        std::size_t idx = refs.size();
        for (std::size_t i = 0; i < refs.size(); ++i)
            if (refs[i].name == name) idx = i;
        if (idx == refs.size())
            throw ChecksumError("checkpoint names unknown tensor '" + name + "'");
        if (filled[idx]) throw ChecksumError("checkpoint lists tensor '" + name + "' twice");
        Tensor<float>& t = *refs[idx].tensor;
        if (shape != t.shape())
            throw ChecksumError("checkpoint tensor '" + name + "' has shape " +
                                Tensor<float>::shape_string(shape) + ", expected " +
                                Tensor<float>::shape_string(t.shape()));
        const std::uint64_t nbytes = static_cast<std::uint64_t>(t.size()) * sizeof(float);
        if (offset + nbytes > data_len)
            throw ChecksumError("checkpoint truncated: tensor '" + name +
                                "' extends past end of file");
        std::memcpy(t.data(), bytes.data() + data_begin + offset, nbytes);
        filled[idx] = true;
        expected_total += nbytes;
    }
    for (std::size_t i = 0; i < refs.size(); ++i)
        if (!filled[i])
            throw ChecksumError("checkpoint is missing tensor '" + refs[i].name + "'");
    if (expected_total != data_len)
        throw ChecksumError("checkpoint data section is " + std::to_string(data_len) +
                            " bytes, expected " + std::to_string(expected_total));
    return net;
}

}  // namespace skelres
