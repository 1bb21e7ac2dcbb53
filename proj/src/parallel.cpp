#include "hkrect/parallel.hpp"

namespace hkrect {

namespace {
std::atomic<unsigned> configured{0};
}

void set_thread_count(unsigned n) { configured.store(n); }

unsigned thread_count() {
  const unsigned n = configured.load();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace hkrect
