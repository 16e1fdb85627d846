#pragma once

namespace rsl {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace rsl
