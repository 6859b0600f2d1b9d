#pragma once

namespace ingra {

inline constexpr const char* kToolVersion = "0.1.0";

} // namespace ingra
