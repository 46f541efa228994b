// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/util.hpp"

#include <iostream>
#include <mutex>

namespace circssm {

namespace {
std::function<void(const std::string&)>& warn_handler() {
  static std::function<void(const std::string&)> handler =
      [](const std::string& m) { std::cerr << "[circssm] warning: " << m << "\n"; };
  return handler;
}
std::mutex warn_mutex;
}  // namespace

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(warn_mutex);
  warn_handler()(message);
}

void set_warn_handler(std::function<void(const std::string&)> handler) {
  std::lock_guard<std::mutex> lock(warn_mutex);
  warn_handler() = std::move(handler);
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string version_string() { return "0.1.0"; }

}  // namespace circssm
