#include "otstereo/parallel.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>

namespace otstereo {
namespace {

int env_threads() {
  const char* v = std::getenv("OTSTEREO_THREADS");
  if (!v) return 0;
  int n = std::atoi(v);
  return n > 0 ? n : 0;
}

std::atomic<int> g_threads{env_threads()};

}  // namespace

void set_threads(int n) { g_threads.store(n > 0 ? n : 0); }

int threads() {
  int n = g_threads.load();
  return n > 0 ? n : omp_get_max_threads();
}

}  // namespace otstereo
