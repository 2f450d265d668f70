#pragma once

namespace mtss {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mtss
