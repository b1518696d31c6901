#include "pcp/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace pcp::log {
namespace {
std::atomic<Level> g_level{Level::Warn};
std::mutex g_mutex;
const char* tag(Level l) {
  switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warning";
    case Level::Error: return "error";
    default: return "";
  }
}
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level lvl, const std::string& msg) {
  std::lock_guard lock(g_mutex);
  std::cerr << "[pcp " << tag(lvl) << "] " << msg << '\n';
}

}  // namespace pcp::log
