#pragma once

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace stlcbf::detail {

// Library diagnostics go to stderr; stdout is reserved for reports.
inline spdlog::logger& log() {
    static const std::shared_ptr<spdlog::logger> logger = [] {
        if (auto existing = spdlog::get("stlcbf")) return existing;
        return spdlog::stderr_color_mt("stlcbf");
    }();
    return *logger;
}

}  // namespace stlcbf::detail
