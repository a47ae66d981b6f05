#pragma once

#include <string>

namespace equivae {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Level from EQUIVAE_LOG (error|info|debug), read once; defaults to info.
/// Debug additionally switches on per-op finiteness checks.
LogLevel log_level();
void init_logging();
bool log_enabled(LogLevel level);
void log_message(LogLevel level, const std::string& message);

}  // namespace equivae
