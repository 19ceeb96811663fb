#pragma once

namespace propensity {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace propensity
