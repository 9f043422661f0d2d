#include "stmrecon/error.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace stmrecon {

namespace {
std::atomic<bool> g_warn{true};
std::mutex g_warn_mutex;
} // namespace

void warn(const std::string &msg)
{
  if (!g_warn.load()) return;
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  std::cerr << "warning: " << msg << "\n";
}

void set_warnings_enabled(bool on) { g_warn.store(on); }

} // namespace stmrecon
