// OpenBLAS is linked statically and detects the CPU when its own init ctor
// runs. Sandboxed/virtualized hosts often mask CPUID vendor strings, which
// makes OpenBLAS fall back to a generic pre-SSE3 kernel set; pick the AVX-512
// kernels explicitly when the instruction set is actually there. Priority 102
// runs after libgcc's cpu-feature ctor (101) and before OpenBLAS's own.

#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace {

__attribute__((constructor(102))) void select_blas_core() {
  if (__builtin_cpu_supports("avx512f"))
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
}

// BLAS calls are issued from already-parallel sections; keep them single
// threaded so results do not depend on the worker count.
struct BlasThreadPin {
  BlasThreadPin() { openblas_set_num_threads(1); }
} pin_on_load;

}  // namespace
