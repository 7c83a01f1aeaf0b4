#pragma once

#include <cstddef>

// Dense double-precision kernels used by the tensor layer.  Every kernel has
// a scalar reference implementation and, where profitable, an AVX2/FMA
// variant.  The active variant is chosen once at startup from CPUID; tests
// may force a specific lane to check equivalence.
namespace ttd::kernels {

enum class Isa { Scalar, Avx2 };

// Best ISA supported by the running CPU.
Isa detect_isa();

// Currently active ISA (defaults to detect_isa() on first use).
Isa active_isa();
void set_isa(Isa isa);

const char* isa_name(Isa isa);

// Elementwise, all operands length n, out may alias inputs.
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void div(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void relu(const double* a, double* out, std::size_t n);

// Reductions.
double sum(const double* a, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// C(m x n) = A(m x k) * B(k x n), row-major, C overwritten.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

// C(m x n) = A(m x k) * B(n x k)^T; avoids materializing the transpose.
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

// C(m x n) = A(k x m)^T * B(k x n); avoids materializing the transpose.
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

}  // namespace ttd::kernels
