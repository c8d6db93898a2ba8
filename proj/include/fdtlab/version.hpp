#pragma once

namespace fdtlab {

inline constexpr const char* version = "0.1.0";

}  // namespace fdtlab
