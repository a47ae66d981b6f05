#include "equivae/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace equivae {

namespace {

constexpr char kMagic[4] = {'E', 'Q', 'V', 'A'};
constexpr uint32_t kVersion = 1;

using nlohmann::json;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

uint32_t get_u32(const std::string& in, size_t at) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | static_cast<uint8_t>(in[at + static_cast<size_t>(i)]);
    }
    return v;
}

uint64_t get_u64(const std::string& in, size_t at) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | static_cast<uint8_t>(in[at + static_cast<size_t>(i)]);
    }
    return v;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
    json j;
    j["backbone"] = c.backbone == BackboneKind::Mlp ? "mlp" : "conv";
    j["mlp_hidden"] = c.mlp_hidden;
    j["channels"] = c.channels;
    j["height"] = c.height;
    j["width"] = c.width;
    j["classes"] = c.classes;
    j["d_r"] = c.d_r;
    j["d_v"] = c.d_v;
    j["head_widths"] = c.head_widths;
    j["decoder_widths"] = c.decoder_widths;
    j["classifier_widths"] = c.classifier_widths;
    j["r_proj_width"] = c.r_proj_width;
    j["likelihood"] = c.likelihood == Likelihood::Bernoulli ? "bernoulli" : "gaussian";
    j["dropout_rate"] = c.dropout_rate;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    const std::string backbone = j.at("backbone").get<std::string>();
    if (backbone == "mlp") {
        c.backbone = BackboneKind::Mlp;
    } else if (backbone == "conv") {
        c.backbone = BackboneKind::Conv;
    } else {
        throw ConfigError("unknown backbone '" + backbone + "'");
    }
    c.mlp_hidden = j.at("mlp_hidden").get<std::vector<int64_t>>();
    c.channels = j.at("channels").get<int64_t>();
    c.height = j.at("height").get<int64_t>();
    c.width = j.at("width").get<int64_t>();
    c.classes = j.at("classes").get<int64_t>();
    c.d_r = j.at("d_r").get<int64_t>();
    c.d_v = j.at("d_v").get<int64_t>();
    c.head_widths = j.at("head_widths").get<std::vector<int64_t>>();
    c.decoder_widths = j.at("decoder_widths").get<std::vector<int64_t>>();
    c.classifier_widths = j.at("classifier_widths").get<std::vector<int64_t>>();
    c.r_proj_width = j.at("r_proj_width").get<int64_t>();
    const std::string lk = j.at("likelihood").get<std::string>();
    if (lk == "bernoulli") {
        c.likelihood = Likelihood::Bernoulli;
    } else if (lk == "gaussian") {
        c.likelihood = Likelihood::Gaussian;
    } else {
        throw ConfigError("unknown likelihood '" + lk + "'");
    }
    c.dropout_rate = j.at("dropout_rate").get<double>();
    return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    json header;
    header["format"] = "equivae-checkpoint";
    header["model"] = model_config_to_json(checkpoint.model);

    json tensors = json::array();
    for (const auto& name : checkpoint.params.names()) {
        const Tensor& t = checkpoint.params.get(name);
        json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        tensors.push_back(entry);
    }
    header["tensors"] = tensors;

    if (checkpoint.cluster_means && !checkpoint.cluster_means->empty()) {
        json cm;
        cm["m_used"] = checkpoint.cluster_means->m_used;
        cm["means"] = checkpoint.cluster_means->mean_per_class;
        cm["counts"] = checkpoint.cluster_means->count_per_class;
        header["cluster_means"] = cm;
    }
    if (checkpoint.preproc) {
        header["preproc"] = {{"mean", checkpoint.preproc->mean},
                             {"std", checkpoint.preproc->std_dev}};
    }

    const std::string header_bytes = header.dump();
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, header_bytes.size());
    out += header_bytes;
    for (const auto& name : checkpoint.params.names()) {
        const auto& values = checkpoint.params.get(name).values();
        const size_t at = out.size();
        out.resize(at + values.size() * sizeof(double));
        std::memcpy(out.data() + at, values.data(), values.size() * sizeof(double));
    }

    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot write checkpoint '" + path + "'");
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw IoError("failed writing checkpoint '" + path + "'");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open checkpoint '" + path + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(file)),
                      std::istreambuf_iterator<char>());
    if (bytes.size() < 16) {
        throw TruncatedFileError("checkpoint shorter than its fixed header");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw BadMagicError("corrupt checkpoint header");
    }
    const uint32_t version = get_u32(bytes, 4);
    if (version != kVersion) {
        throw VersionMismatchError("checkpoint version " + std::to_string(version) +
                                   ", expected " + std::to_string(kVersion));
    }
    const uint64_t header_len = get_u64(bytes, 8);
    if (bytes.size() < 16 + header_len) {
        throw TruncatedFileError("checkpoint header truncated");
    }
    json header;
    try {
        header = json::parse(bytes.substr(16, header_len));
    } catch (const json::exception& e) {
        throw BadMagicError(std::string("corrupt checkpoint header: ") + e.what());
    }

    Checkpoint checkpoint;
    checkpoint.model = model_config_from_json(header.at("model"));

    size_t at = 16 + header_len;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const Shape shape = entry.at("shape").get<Shape>();
        const size_t count = static_cast<size_t>(shape_size(shape));
        if (at + count * sizeof(double) > bytes.size()) {
            throw TruncatedFileError("checkpoint payload truncated at tensor '" + name + "'");
        }
        std::vector<double> values(count);
        std::memcpy(values.data(), bytes.data() + at, count * sizeof(double));
        at += count * sizeof(double);
        checkpoint.params.insert(name, Tensor::from_values(shape, std::move(values), true));
    }

    if (header.contains("cluster_means")) {
        ClusterMeans cm;
        cm.m_used = header["cluster_means"].at("m_used").get<int64_t>();
        cm.mean_per_class =
            header["cluster_means"].at("means").get<std::vector<std::vector<double>>>();
        cm.count_per_class =
            header["cluster_means"].at("counts").get<std::vector<int64_t>>();
        checkpoint.cluster_means = std::move(cm);
    }
    if (header.contains("preproc")) {
        checkpoint.preproc = Standardization{header["preproc"].at("mean").get<double>(),
                                             header["preproc"].at("std").get<double>()};
    }
    return checkpoint;
}

}  // namespace equivae
