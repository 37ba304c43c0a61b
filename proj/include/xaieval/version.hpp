#pragma once

namespace xai {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace xai
