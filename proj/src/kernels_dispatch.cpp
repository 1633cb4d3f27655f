#include "milcci/kernels.hpp"

#include "milcci/error.hpp"

namespace milcci::kern {

const Ops* avx2_ops_table();  // defined in kernels_avx2.cpp, null if not compiled in

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct Dispatch {
  const Ops* ops;
  Backend backend;
  Dispatch() {
    if (avx2_ops_table() != nullptr && cpu_has_avx2()) {
      ops = avx2_ops_table();
      backend = Backend::avx2;
    } else {
      ops = &scalar_ops();
      backend = Backend::scalar;
    }
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

const Ops& ops() { return *dispatch().ops; }

Backend active_backend() { return dispatch().backend; }

const char* backend_name() {
  switch (dispatch().backend) {
    case Backend::avx2: return "avx2";
    case Backend::scalar: return "scalar";
  }
  return "scalar";
}

bool avx2_available() { return avx2_ops_table() != nullptr && cpu_has_avx2(); }

void set_backend(Backend b) {
  if (b == Backend::avx2) {
    if (!avx2_available()) throw_param("avx2 backend not available on this CPU");
    dispatch().ops = avx2_ops_table();
  } else {
    dispatch().ops = &scalar_ops();
  }
  dispatch().backend = b;
}

}  // namespace milcci::kern
