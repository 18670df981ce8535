#include "hallucinet/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

namespace hallucinet {

static LogLevel parse_level(const char* s) {
    if (!s) return LogLevel::warn;
    std::string v(s);
    if (v == "error") return LogLevel::error;
    if (v == "warn") return LogLevel::warn;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
}

LogLevel log_level() {
    static LogLevel level = parse_level(std::getenv("HALLUCINET_LOG"));
    return level;
}

void log_message(LogLevel level, const std::string& msg) {
    if (level > log_level()) return;
    static std::mutex mu;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::lock_guard<std::mutex> lock(mu);
    std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

}  // namespace hallucinet
