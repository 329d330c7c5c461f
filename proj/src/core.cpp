#include "gslab/core.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace gslab {

int thread_count() {
  const char* env = std::getenv("GSLAB_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v <= 0) return 1;
  return static_cast<int>(v);
}

void parallel_for(Index n, const std::function<void(Index)>& fn) {
  const int workers = thread_count();
  if (workers <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const int used = static_cast<int>(std::min<Index>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(used);
  for (int w = 0; w < used; ++w) {
    pool.emplace_back([&, w]() {
      for (Index i = w; i < n; i += used) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace gslab
