#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace ddl::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Controlled by DDL_LOG_LEVEL (error|warn|info|debug). Default: warn.
inline Level threshold() {
    static Level lvl = [] {
        const char* env = std::getenv("DDL_LOG_LEVEL");
        if (!env) return Level::kWarn;
        if (!std::strcmp(env, "error")) return Level::kError;
        if (!std::strcmp(env, "info")) return Level::kInfo;
        if (!std::strcmp(env, "debug")) return Level::kDebug;
        return Level::kWarn;
    }();
    return lvl;
}

template <typename... Args>
void emit(Level lvl, const char* tag, const char* fmt, Args... args) {
    if (lvl > threshold()) return;
    std::fprintf(stderr, "[%s] ", tag);
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

#define DDL_LOG_ERROR(...) ::ddl::log::emit(::ddl::log::Level::kError, "error", __VA_ARGS__)
#define DDL_LOG_WARN(...) ::ddl::log::emit(::ddl::log::Level::kWarn, "warn", __VA_ARGS__)
#define DDL_LOG_INFO(...) ::ddl::log::emit(::ddl::log::Level::kInfo, "info", __VA_ARGS__)
#define DDL_LOG_DEBUG(...) ::ddl::log::emit(::ddl::log::Level::kDebug, "debug", __VA_ARGS__)

}  // namespace ddl::log
