#pragma once

namespace vif {
inline constexpr const char* kVersion = "0.1.0";
}
