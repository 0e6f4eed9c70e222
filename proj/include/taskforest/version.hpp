#pragma once

namespace taskforest {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace taskforest
