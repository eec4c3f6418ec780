// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>

namespace openviga::log {

namespace {

std::atomic<Level> g_threshold{Level::kInfo};

spdlog::logger& logger() {
    static const auto instance = [] {
        auto l = spdlog::stderr_logger_mt("openviga");
        l->set_pattern("[%l] %v");
        l->set_level(spdlog::level::trace);
        return l;
    }();
    return *instance;
}

spdlog::level::level_enum to_spdlog(Level level) {
    switch (level) {
        case Level::kDebug: return spdlog::level::debug;
        case Level::kInfo: return spdlog::level::info;
        case Level::kWarn: return spdlog::level::warn;
        case Level::kError: return spdlog::level::err;
    }
    return spdlog::level::info;
}

}  // namespace

Level threshold() { return g_threshold.load(); }

void set_threshold(Level level) { g_threshold.store(level); }

void emit(Level level, const std::string& message) { logger().log(to_spdlog(level), message); }

}  // namespace openviga::log
