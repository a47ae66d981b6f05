#include "equivae/logging.hpp"

#include <cstdlib>
#include <iostream>

#include "equivae/tensor.hpp"

namespace equivae {

namespace {

LogLevel parse_level() {
    const char* env = std::getenv("EQUIVAE_LOG");
    if (!env) {
        return LogLevel::Info;
    }
    const std::string value(env);
    if (value == "error") return LogLevel::Error;
    if (value == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

LogLevel g_level = parse_level();

}  // namespace

LogLevel log_level() {
    return g_level;
}

void init_logging() {
    g_level = parse_level();
    if (g_level == LogLevel::Debug) {
        set_debug_checks(true);
    }
}

bool log_enabled(LogLevel level) {
    return static_cast<int>(level) <= static_cast<int>(g_level);
}

void log_message(LogLevel level, const std::string& message) {
    if (!log_enabled(level)) {
        return;
    }
    if (level == LogLevel::Error) {
        std::cerr << "[equivae] " << message << std::endl;
    } else {
        std::cout << "[equivae] " << message << std::endl;
    }
}

}  // namespace equivae
