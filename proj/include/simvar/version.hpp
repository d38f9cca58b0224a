#pragma once

namespace simvar {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace simvar
