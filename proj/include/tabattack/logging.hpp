#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace tabattack::log {

enum class Level { error = 0, info = 1, debug = 2 };

inline Level threshold() {
    static Level lvl = [] {
        const char* env = std::getenv("TABATTACK_LOG");
        if (!env) return Level::info;
        std::string s(env);
        if (s == "error") return Level::error;
        if (s == "debug") return Level::debug;
        return Level::info;
    }();
    return lvl;
}

inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}

inline void emit(Level lvl, const std::string& msg) {
    if (lvl > threshold()) return;
    const char* tag = lvl == Level::error ? "error" : (lvl == Level::info ? "info" : "debug");
    std::lock_guard<std::mutex> guard(mutex());
    std::cerr << "[tabattack:" << tag << "] " << msg << "\n";
}

inline void error(const std::string& msg) { emit(Level::error, msg); }
inline void info(const std::string& msg) { emit(Level::info, msg); }
inline void debug(const std::string& msg) { emit(Level::debug, msg); }

}  // namespace tabattack::log
