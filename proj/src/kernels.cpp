#include "ttd/kernels.hpp"

#include <vector>

namespace ttd::kernels {

namespace scalar {
void add(const double*, const double*, double*, std::size_t);
void sub(const double*, const double*, double*, std::size_t);
void mul(const double*, const double*, double*, std::size_t);
void div(const double*, const double*, double*, std::size_t);
void scale(const double*, double, double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void relu(const double*, double*, std::size_t);
double sum(const double*, std::size_t);
double dot(const double*, const double*, std::size_t);
void matmul(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_nt(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
}  // namespace scalar

#ifdef TTD_HAVE_AVX2
namespace avx2 {
void add(const double*, const double*, double*, std::size_t);
void sub(const double*, const double*, double*, std::size_t);
void mul(const double*, const double*, double*, std::size_t);
void div(const double*, const double*, double*, std::size_t);
void scale(const double*, double, double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void relu(const double*, double*, std::size_t);
double sum(const double*, std::size_t);
double dot(const double*, const double*, std::size_t);
void matmul(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_nt(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
}  // namespace avx2
#else
namespace avx2 = scalar;
#endif

Isa detect_isa() {
#if defined(TTD_HAVE_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

namespace {
Isa g_isa = detect_isa();
}

Isa active_isa() { return g_isa; }
void set_isa(Isa isa) { g_isa = isa; }

const char* isa_name(Isa isa) {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

#define TTD_DISPATCH(fn, ...)                        \
  do {                                               \
    if (g_isa == Isa::Avx2) {                        \
      avx2::fn(__VA_ARGS__);                         \
      return;                                        \
    }                                                \
    scalar::fn(__VA_ARGS__);                         \
  } while (0)

void add(const double* a, const double* b, double* out, std::size_t n) { TTD_DISPATCH(add, a, b, out, n); }
void sub(const double* a, const double* b, double* out, std::size_t n) { TTD_DISPATCH(sub, a, b, out, n); }
void mul(const double* a, const double* b, double* out, std::size_t n) { TTD_DISPATCH(mul, a, b, out, n); }
void div(const double* a, const double* b, double* out, std::size_t n) { TTD_DISPATCH(div, a, b, out, n); }
void scale(const double* a, double s, double* out, std::size_t n) { TTD_DISPATCH(scale, a, s, out, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { TTD_DISPATCH(axpy, alpha, x, y, n); }
void relu(const double* a, double* out, std::size_t n) { TTD_DISPATCH(relu, a, out, n); }

double sum(const double* a, std::size_t n) {
  return g_isa == Isa::Avx2 ? avx2::sum(a, n) : scalar::sum(a, n);
}

double dot(const double* a, const double* b, std::size_t n) {
  return g_isa == Isa::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  TTD_DISPATCH(matmul, a, b, c, m, k, n);
}

namespace {

// Tiled out-of-place transpose: src (r x c) -> dst (c x r).
void pack_transpose(const double* src, double* dst, std::size_t r, std::size_t c) {
  constexpr std::size_t T = 32;
  for (std::size_t i0 = 0; i0 < r; i0 += T)
    for (std::size_t j0 = 0; j0 < c; j0 += T) {
      const std::size_t i1 = i0 + T < r ? i0 + T : r;
      const std::size_t j1 = j0 + T < c ? j0 + T : c;
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * r + i] = src[i * c + j];
    }
}

thread_local std::vector<double> g_pack;

}  // namespace

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  // For tall outputs the register-blocked matmul beats the dot loop even
  // after paying for packing B^T; for skinny ones packing dominates.
  if (m >= 16 && n >= 8) {
    g_pack.resize(k * n);
    pack_transpose(b, g_pack.data(), n, k);
    matmul(a, g_pack.data(), c, m, k, n);
    return;
  }
  TTD_DISPATCH(matmul_nt, a, b, c, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  if (n >= 16 && m >= 4) {
    g_pack.resize(k * m);
    pack_transpose(a, g_pack.data(), k, m);
    matmul(g_pack.data(), b, c, m, k, n);
    return;
  }
  TTD_DISPATCH(matmul_tn, a, b, c, m, k, n);
}

#undef TTD_DISPATCH

}  // namespace ttd::kernels
