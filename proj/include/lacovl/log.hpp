#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace lacovl {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Level comes from LACOVL_LOG (error|info|debug); default info.
inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("LACOVL_LOG");
        if (!env) return LogLevel::Info;
        const std::string v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

inline void log_error(const std::string& msg) { std::fprintf(stderr, "error: %s\n", msg.c_str()); }

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::fprintf(stdout, "%s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::fprintf(stdout, "debug: %s\n", msg.c_str());
}

}  // namespace lacovl
