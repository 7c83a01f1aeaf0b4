#include <doctest.h>
#include <ttd/kernels.hpp>
#include <ttd/rng.hpp>

#include <array>
#include <cmath>
#include <vector>

using namespace ttd;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

}  // namespace

#ifdef TTD_HAVE_AVX2

// Run each kernel under both dispatch targets, compare elementwise.  Elementwise ops and
// the matmul microkernel must agree to tight tolerance with the scalar reference; reductions
// reassociate so they get a relative bound.
TEST_CASE("avx2 kernels match scalar reference") {
    REQUIRE(kernels::detect_isa() == kernels::Isa::Avx2);
    Rng rng(99, 0);

    for (std::size_t n : {1ul, 3ul, 7ul, 8ul, 9ul, 31ul, 64ul, 257ul}) {
        auto a = random_vec(rng, n), b = random_vec(rng, n);
        for (auto& x : b) x += (x == 0.0) ? 1.0 : 0.0;  // keep divisors nonzero
        std::vector<double> out_s(n), out_v(n);

        auto check_binary = [&](auto&& fn) {
            kernels::set_isa(kernels::Isa::Scalar);
            fn(a.data(), b.data(), out_s.data(), n);
            kernels::set_isa(kernels::Isa::Avx2);
            fn(a.data(), b.data(), out_v.data(), n);
            for (std::size_t i = 0; i < n; ++i)
                CHECK(out_s[i] == doctest::Approx(out_v[i]).epsilon(1e-14));
        };
        check_binary(kernels::add);
        check_binary(kernels::sub);
        check_binary(kernels::mul);
        check_binary(kernels::div);

        kernels::set_isa(kernels::Isa::Scalar);
        kernels::scale(a.data(), 1.7, out_s.data(), n);
        double sum_s = kernels::sum(a.data(), n);
        double dot_s = kernels::dot(a.data(), b.data(), n);
        kernels::set_isa(kernels::Isa::Avx2);
        kernels::scale(a.data(), 1.7, out_v.data(), n);
        double sum_v = kernels::sum(a.data(), n);
        double dot_v = kernels::dot(a.data(), b.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(out_s[i] == out_v[i]);
        CHECK(sum_s == doctest::Approx(sum_v).epsilon(1e-12));
        CHECK(dot_s == doctest::Approx(dot_v).epsilon(1e-12));
    }
    kernels::set_isa(kernels::detect_isa());
}

TEST_CASE("avx2 matmul matches scalar reference") {
    Rng rng(7, 1);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1},
                           {2, 3, 4},
                           {4, 8, 8},
                           {5, 7, 9},
                           {16, 33, 17},
                           {13, 400, 21}}) {
        auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
        std::vector<double> c_s(m * n), c_v(m * n);
        kernels::set_isa(kernels::Isa::Scalar);
        kernels::matmul(a.data(), b.data(), c_s.data(), m, k, n);
        kernels::set_isa(kernels::Isa::Avx2);
        kernels::matmul(a.data(), b.data(), c_v.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(c_s[i] == doctest::Approx(c_v[i]).epsilon(1e-12));
    }
    kernels::set_isa(kernels::detect_isa());
}

TEST_CASE("avx2 transposed-operand matmuls match scalar reference") {
    Rng rng(8, 1);
    // sizes straddle the pack-and-multiply cutover in the dispatcher
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1},
                           {2, 5, 3},
                           {4, 16, 8},
                           {7, 9, 5},
                           {17, 33, 19},
                           {40, 64, 40},
                           {3, 400, 21}}) {
        auto a_nt = random_vec(rng, m * k), b_nt = random_vec(rng, n * k);
        auto a_tn = random_vec(rng, k * m), b_tn = random_vec(rng, k * n);
        std::vector<double> c_s(m * n), c_v(m * n);

        kernels::set_isa(kernels::Isa::Scalar);
        kernels::matmul_nt(a_nt.data(), b_nt.data(), c_s.data(), m, k, n);
        kernels::set_isa(kernels::Isa::Avx2);
        kernels::matmul_nt(a_nt.data(), b_nt.data(), c_v.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(c_s[i] == doctest::Approx(c_v[i]).epsilon(1e-12));

        kernels::set_isa(kernels::Isa::Scalar);
        kernels::matmul_tn(a_tn.data(), b_tn.data(), c_s.data(), m, k, n);
        kernels::set_isa(kernels::Isa::Avx2);
        kernels::matmul_tn(a_tn.data(), b_tn.data(), c_v.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(c_s[i] == doctest::Approx(c_v[i]).epsilon(1e-12));
    }
    kernels::set_isa(kernels::detect_isa());
}

#endif  // TTD_HAVE_AVX2

TEST_CASE("scalar transposed-operand matmuls agree with naive loops") {
    Rng rng(4, 2);
    for (auto [m, k, n] :
         {std::array<std::size_t, 3>{3, 5, 4}, {20, 12, 18}, {1, 7, 1}}) {
        auto a_nt = random_vec(rng, m * k), b_nt = random_vec(rng, n * k);
        auto a_tn = random_vec(rng, k * m), b_tn = random_vec(rng, k * n);
        std::vector<double> c(m * n);
        kernels::set_isa(kernels::Isa::Scalar);

        kernels::matmul_nt(a_nt.data(), b_nt.data(), c.data(), m, k, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0;
                for (std::size_t p = 0; p < k; ++p) acc += a_nt[i * k + p] * b_nt[j * k + p];
                CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-13));
            }

        kernels::matmul_tn(a_tn.data(), b_tn.data(), c.data(), m, k, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0;
                for (std::size_t p = 0; p < k; ++p) acc += a_tn[p * m + i] * b_tn[p * n + j];
                CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-13));
            }
    }
    kernels::set_isa(kernels::detect_isa());
}

TEST_CASE("scalar matmul agrees with naive triple loop") {
    Rng rng(3, 2);
    std::size_t m = 6, k = 11, n = 5;
    auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
    std::vector<double> c(m * n);
    kernels::set_isa(kernels::Isa::Scalar);
    kernels::matmul(a.data(), b.data(), c.data(), m, k, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-13));
        }
    kernels::set_isa(kernels::detect_isa());
}
