#pragma once

#include <cstdio>
#include <string>

namespace ddppo {

inline void log_warn(const std::string& msg) { std::fprintf(stderr, "[ddppo] warning: %s\n", msg.c_str()); }
inline void log_info(const std::string& msg) { std::fprintf(stderr, "[ddppo] %s\n", msg.c_str()); }

}  // namespace ddppo
