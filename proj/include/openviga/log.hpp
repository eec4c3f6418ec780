// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <string>

namespace openviga::log {

enum class Level { kDebug, kInfo, kWarn, kError };

Level threshold();
void set_threshold(Level level);
/// Hands a formatted message to the stderr logger.
void emit(Level level, const std::string& message);

template <typename... Args>
void write(Level level, const Args&... args) {
    if (level < threshold()) {
        return;
    }
    std::ostringstream line;
    (line << ... << args);
    emit(level, line.str());
}

template <typename... Args>
void info(const Args&... args) {
    write(Level::kInfo, args...);
}
template <typename... Args>
void warn(const Args&... args) {
    write(Level::kWarn, args...);
}
template <typename... Args>
void error(const Args&... args) {
    write(Level::kError, args...);
}

}  // namespace openviga::log
