// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace circssm {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Non-fatal runtime diagnostics (tail-mass beyond K_max, variance clamps,
/// jitter escalation). Default sink writes to stderr; tests may replace it.
void warn(const std::string& message);
void set_warn_handler(std::function<void(const std::string&)> handler);

/// FNV-1a over a string, used to stamp outputs with a config fingerprint.
std::uint64_t fnv1a64(const std::string& text);

std::string version_string();

}  // namespace circssm
