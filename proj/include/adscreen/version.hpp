#pragma once

namespace adscreen {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace adscreen
