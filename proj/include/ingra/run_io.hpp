#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ingra/data.hpp"

namespace ingra {

// Provenance record written by every command: enough to rerun it exactly.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config; // fully resolved settings
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::string out_dir;
    std::string tool_version;
    double wall_seconds = 0.0;
};

// Atomic write of <out_dir>/manifest.json; call last so a manifest's
// presence marks a completed run.
void write_run_manifest(const RunManifest& manifest);

// Dataset directory layout: dataset.json (spec, structures, per-individual
// ground truth and split) plus data/<id>.csv per individual.
void save_dataset(const Benchmark& bench, const std::string& dir);
Benchmark load_dataset(const std::string& dir);

// Refuses a non-empty existing directory unless force; creates it otherwise.
void prepare_out_dir(const std::string& dir, bool force);

} // namespace ingra
