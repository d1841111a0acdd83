#include <atomic>
#include <cstdlib>
#include <string_view>

#include "codemix/kernels/kernels.hpp"

namespace codemix::kernels {
namespace {

const KernelTable* select_default() {
  const char* env = std::getenv("CODEMIX_KERNELS");
  const std::string_view want = env ? env : "";
  if (want == "scalar") return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) {
  slot().store(&table, std::memory_order_release);
}

}  // namespace codemix::kernels
