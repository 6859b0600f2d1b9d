#include "ingra/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "config_json.hpp"
#include "ingra/error.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace ingra {

nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {
        {"num_variables", cfg.num_variables},
        {"target_index", cfg.target_index},
        {"window_length", cfg.window_length},
        {"hidden_size", cfg.hidden_size},
        {"num_prototypes", cfg.num_prototypes},
        {"alpha", cfg.alpha},
        {"tau", cfg.tau},
        {"lambda1", cfg.lambda1},
        {"lambda2", cfg.lambda2},
        {"gamma", cfg.gamma},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"pretrain_epochs", cfg.pretrain_epochs},
        {"train_epochs", cfg.train_epochs},
        {"seed", cfg.seed},
    };
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.num_variables = j.at("num_variables").get<Index>();
    cfg.target_index = j.at("target_index").get<Index>();
    cfg.window_length = j.at("window_length").get<Index>();
    cfg.hidden_size = j.at("hidden_size").get<Index>();
    cfg.num_prototypes = j.at("num_prototypes").get<Index>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.tau = j.at("tau").get<double>();
    cfg.lambda1 = j.at("lambda1").get<double>();
    cfg.lambda2 = j.at("lambda2").get<double>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.batch_size = j.at("batch_size").get<Index>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.pretrain_epochs = j.at("pretrain_epochs").get<Index>();
    cfg.train_epochs = j.at("train_epochs").get<Index>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

namespace {

constexpr char kMagic[8] = {'I', 'N', 'G', 'R', 'A', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void append_raw(std::string& out, const T& value) {
    const char* p = reinterpret_cast<const char*>(&value);
    out.append(p, sizeof(T));
}

} // namespace

void atomic_write_file(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot open '" + tmp + "' for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        f.flush();
        if (!f) throw DataError("failed writing '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot move '" + tmp + "' into place");
}

void save_checkpoint(const IngraModel& model, const std::string& path) {
    const ParamStore& store = model.params();

    nlohmann::json header;
    header["format_version"] = kVersion;
    header["config"] = config_to_json(model.config());
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < store.tensor_count(); ++i) {
        const Tensor& t = store.tensor(i);
        tensors.push_back({{"name", t.name}, {"rows", t.rows()}, {"cols", t.cols()}});
    }
    header["tensors"] = std::move(tensors);
    const std::string htext = header.dump();

    std::string out;
    out.reserve(htext.size() + 64 + store.parameter_count() * sizeof(double));
    out.append(kMagic, sizeof(kMagic));
    append_raw(out, kVersion);
    append_raw(out, static_cast<std::uint64_t>(htext.size()));
    out += htext;
    for (std::size_t i = 0; i < store.tensor_count(); ++i) {
        const Tensor& t = store.tensor(i);
        // RowMajor storage: coefficients are already row-major contiguous
        out.append(reinterpret_cast<const char*>(t.value.data()),
                   static_cast<std::size_t>(t.size()) * sizeof(double));
    }
    atomic_write_file(path, out);
}

IngraModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path + "'");

    char magic[8];
    if (!f.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("'" + path + "' is not a checkpoint file");
    std::uint32_t version = 0;
    std::uint64_t hlen = 0;
    if (!f.read(reinterpret_cast<char*>(&version), sizeof(version)) ||
        !f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen)))
        throw DataError("'" + path + "' is truncated");
    if (version != kVersion)
        throw DataError("checkpoint version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kVersion) + ")");
    if (hlen > (1ULL << 26)) throw DataError("checkpoint header is implausibly large");

    std::string htext(static_cast<std::size_t>(hlen), '\0');
    if (!f.read(htext.data(), static_cast<std::streamsize>(hlen)))
        throw DataError("'" + path + "' is truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }

    IngraModel model(config_from_json(header.at("config")));
    ParamStore& store = model.params();
    const nlohmann::json& tensors = header.at("tensors");
    if (tensors.size() != store.tensor_count())
        throw DataError("checkpoint lists " + std::to_string(tensors.size()) +
                        " tensors, model has " + std::to_string(store.tensor_count()));

    for (std::size_t i = 0; i < store.tensor_count(); ++i) {
        Tensor& t = store.tensor(i);
        const nlohmann::json& meta = tensors.at(i);
        if (meta.at("name").get<std::string>() != t.name ||
            meta.at("rows").get<Index>() != t.rows() ||
            meta.at("cols").get<Index>() != t.cols())
            throw DataError("checkpoint tensor " + std::to_string(i) + " ('" +
                            meta.at("name").get<std::string>() + "') does not match model tensor '" +
                            t.name + "'");
        if (!f.read(reinterpret_cast<char*>(t.value.data()),
                    static_cast<std::streamsize>(t.size()) * sizeof(double)))
            throw DataError("'" + path + "' is truncated inside tensor '" + t.name + "'");
        if (!t.value.allFinite())
            throw DataError("checkpoint tensor '" + t.name + "' holds non-finite values");
    }
    char extra = 0;
    if (f.read(&extra, 1))
        throw DataError("'" + path + "' has trailing bytes after the last tensor");
    return model;
}

} // namespace ingra
