#pragma once

namespace qvortex {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qvortex
