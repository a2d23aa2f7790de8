#pragma once

namespace headshare {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace headshare
