#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace stepdiff::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Level comes from STEPDIFF_LOG={error,info,debug}; default info.
inline Level level() {
    static const Level lv = [] {
        const char* e = std::getenv("STEPDIFF_LOG");
        if (e && std::strcmp(e, "error") == 0) return Level::error;
        if (e && std::strcmp(e, "debug") == 0) return Level::debug;
        return Level::info;
    }();
    return lv;
}

template <typename... Args>
void error(const char* fmt, Args... args) {
    std::fprintf(stderr, "[error] ");
    if constexpr (sizeof...(Args) == 0)
        std::fprintf(stderr, "%s", fmt);
    else
        std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

template <typename... Args>
void info(const char* fmt, Args... args) {
    if (level() < Level::info) return;
    std::fprintf(stderr, "[info] ");
    if constexpr (sizeof...(Args) == 0)
        std::fprintf(stderr, "%s", fmt);
    else
        std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

template <typename... Args>
void debug(const char* fmt, Args... args) {
    if (level() < Level::debug) return;
    std::fprintf(stderr, "[debug] ");
    if constexpr (sizeof...(Args) == 0)
        std::fprintf(stderr, "%s", fmt);
    else
        std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

}  // namespace stepdiff::log
