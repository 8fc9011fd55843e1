#pragma once

namespace densedial {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace densedial
