#include "ingra/run_io.hpp"

#include <filesystem>
#include <fstream>

#include "ingra/checkpoint.hpp"
#include "ingra/error.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ingra {

void prepare_out_dir(const std::string& dir, bool force) {
    fs::path p(dir);
    std::error_code ec;
    if (fs::exists(p, ec)) {
        if (!fs::is_directory(p, ec))
            throw ConfigError("output path " + dir + " exists and is not a directory");
        if (!fs::is_empty(p, ec) && !force)
            throw ConfigError("output directory " + dir + " is not empty (use --force)");
    }
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

void write_run_manifest(const RunManifest& manifest) {
    nlohmann::json j;
    j["command"] = manifest.command;
    j["config"] = manifest.config;
    j["seed"] = manifest.seed;
    j["inputs"] = manifest.inputs;
    j["out_dir"] = manifest.out_dir;
    j["tool_version"] = manifest.tool_version;
    j["wall_seconds"] = manifest.wall_seconds;
    atomic_write_file((fs::path(manifest.out_dir) / "manifest.json").string(),
                      j.dump(2) + "\n");
}

void save_dataset(const Benchmark& bench, const std::string& dir) {
    fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root / "data", ec);
    if (ec) throw DataError("cannot create " + (root / "data").string() + ": " + ec.message());

    // Per-individual split labels; index order is the on-disk order.
    std::vector<std::string> split(bench.samples.size(), "train");
    for (std::size_t i : bench.unseen_indices) split[i] = "unseen";

    nlohmann::json j;
    j["spec"] = {
        {"structures", bench.spec.structures},
        {"per_structure", bench.spec.per_structure},
        {"exo_vars", bench.spec.exo_vars},
        {"length", bench.spec.length},
        {"lag", bench.spec.lag},
        {"narma_order", bench.spec.narma_order},
        {"noise_std", bench.spec.noise_std},
        {"seed", bench.spec.seed},
    };
    j["structures"] = bench.structures;

    nlohmann::json individuals = nlohmann::json::array();
    for (std::size_t i = 0; i < bench.samples.size(); ++i) {
        const MtsSample& s = bench.samples[i];
        std::string file = "data/" + s.id + ".csv";
        save_csv(s, (root / file).string());
        individuals.push_back({
            {"id", s.id},
            {"file", file},
            {"structure", s.structure_id},
            {"split", split[i]},
            {"omega", s.ground_truth},
            {"target", s.var_names.empty() ? "target" : s.var_names[0]},
        });
    }
    j["individuals"] = std::move(individuals);
    atomic_write_file((root / "dataset.json").string(), j.dump(2) + "\n");
}

Benchmark load_dataset(const std::string& dir) {
    fs::path root(dir);
    std::ifstream in(root / "dataset.json");
    if (!in) throw DataError("no dataset.json under " + dir);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed dataset.json under " + dir + ": " + e.what());
    }

    Benchmark bench;
    try {
        const auto& spec = j.at("spec");
        bench.spec.structures = spec.at("structures").get<Index>();
        bench.spec.per_structure = spec.at("per_structure").get<Index>();
        bench.spec.exo_vars = spec.at("exo_vars").get<Index>();
        bench.spec.length = spec.at("length").get<Index>();
        bench.spec.lag = spec.at("lag").get<Index>();
        bench.spec.narma_order = spec.at("narma_order").get<Index>();
        bench.spec.noise_std = spec.at("noise_std").get<double>();
        bench.spec.seed = spec.at("seed").get<std::uint64_t>();
        bench.structures = j.at("structures").get<std::vector<std::vector<int>>>();

        for (const auto& ind : j.at("individuals")) {
            std::string file = ind.at("file").get<std::string>();
            std::string target = ind.at("target").get<std::string>();
            MtsSample sample = load_csv((root / file).string(), target);
            sample.id = ind.at("id").get<std::string>();
            sample.structure_id = ind.at("structure").get<int>();
            sample.ground_truth = ind.at("omega").get<std::vector<int>>();
            if (!sample.ground_truth.empty() &&
                static_cast<Index>(sample.ground_truth.size()) != sample.num_variables() - 1)
                throw DataError("ground truth width mismatch for individual " + sample.id);
            std::string split = ind.at("split").get<std::string>();
            if (split == "train") bench.train_indices.push_back(bench.samples.size());
            else if (split == "unseen") bench.unseen_indices.push_back(bench.samples.size());
            else throw DataError("unknown split label '" + split + "' for " + sample.id);
            bench.samples.push_back(std::move(sample));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset.json under " + dir + " is missing fields: " + e.what());
    }
    if (bench.samples.empty()) throw DataError("dataset under " + dir + " has no individuals");
    return bench;
}

} // namespace ingra
