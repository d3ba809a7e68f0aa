#include "dpm/parallel.hpp"

#include <cstdlib>
#include <string>

namespace dpm {

namespace {
std::atomic<int> g_threads{0};
}

int thread_count() {
  const int n = g_threads.load();
  if (n > 0) return n;
  if (const char* env = std::getenv("DPM_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return 1;
}

void set_thread_count(int n) { g_threads.store(n > 0 ? n : 0); }

} // namespace dpm
