#pragma once

namespace cqr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cqr
