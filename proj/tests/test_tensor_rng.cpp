#include <doctest.h>
#include <ttd/rng.hpp>
#include <ttd/tensor.hpp>

#include <cmath>
#include <set>

using namespace ttd;

TEST_CASE("tensor shape accessors") {
    Tensor s = Tensor::scalar(3.5);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.item() == 3.5);

    Tensor v = Tensor::zeros({4});
    CHECK(v.rank() == 1);
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 4);
    v.at(2) = 7.0;
    CHECK(v(2) == 7.0);

    Tensor m = Tensor::full({2, 3}, -1.0);
    CHECK(m.rank() == 2);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m(1, 2) == -1.0);
    CHECK(m.size() == 6);
}

TEST_CASE("rng streams are deterministic and independent") {
    Rng a(42, 0), b(42, 0), c(42, 1);
    for (int i = 0; i < 100; ++i) {
        auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
    }
    // same seed+stream reconstructed later gives identical draws
    Rng d(42, 0);
    Rng e(42, 0);
    for (int i = 0; i < 10; ++i) CHECK(d.normal() == e.normal());
}

TEST_CASE("uniform draws lie in [0, 1) and cover the range") {
    Rng rng(1, 0);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

// Normal draws: sample moments against the standard normal.  With n = 200000 the standard
// error of the mean is ~0.0022 so a 4-sigma band is ~0.009.
TEST_CASE("normal draws have standard moments") {
    Rng rng(2024, 3);
    const int n = 200000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("fork produces decorrelated child streams") {
    Rng rng(5, 0);
    Rng f1 = rng.fork(1);
    Rng f2 = rng.fork(2);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 50; ++i) {
        seen.insert(f1.next_u64());
        seen.insert(f2.next_u64());
    }
    CHECK(seen.size() == 100);
}
