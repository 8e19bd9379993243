#include "imse/parallel.hpp"

#include <cstdlib>

namespace imse {

namespace {
std::atomic<int> g_default_threads{0};
}

void set_default_threads(int threads) { g_default_threads = threads < 0 ? 0 : threads; }

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  int d = g_default_threads.load();
  if (d > 0) return d;
  if (const char* env = std::getenv("IMSE_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace imse
