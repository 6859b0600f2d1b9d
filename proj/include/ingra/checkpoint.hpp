#pragma once

#include <string>

#include "ingra/model.hpp"

namespace ingra {

// Checkpoint file: "INGRACKP" magic, a format version, a JSON header with
// the model config and the tensor index, then each tensor's values as raw
// row-major little-endian doubles in registration order. Save and load
// round-trip bitwise.
void save_checkpoint(const IngraModel& model, const std::string& path);

IngraModel load_checkpoint(const std::string& path);

// Writes via a sibling temp file and rename, so readers never observe a
// half-written file.
void atomic_write_file(const std::string& path, const std::string& bytes);

} // namespace ingra
