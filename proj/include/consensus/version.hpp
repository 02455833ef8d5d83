#pragma once

namespace consensus {

inline constexpr const char* kVersion = "0.1.0";

} // namespace consensus
