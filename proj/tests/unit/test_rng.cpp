#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "slab/parallel.hpp"
#include "slab/rng.hpp"

using namespace slab;

TEST_SUITE("rng") {
  TEST_CASE("Philox4x32-10 known-answer vectors") {
    using B = Philox4x32::Block;
    using K = Philox4x32::Key;
    CHECK(Philox4x32::generate(B{0, 0, 0, 0}, K{0, 0}) ==
          B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::generate(B{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                               K{0xffffffffu, 0xffffffffu}) ==
          B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::generate(B{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                               K{0xa4093822u, 0x299f31d0u}) ==
          B{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
  }

  TEST_CASE("streams are reproducible and distinct") {
    RandomStream a(42, 1), b(42, 1), c(42, 2), d(43, 1);
    bool differs_stream = false, differs_seed = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a();
      CHECK(x == b());
      differs_stream |= x != c();
      differs_seed |= x != d();
    }
    CHECK(differs_stream);
    CHECK(differs_seed);
  }

  TEST_CASE("uniform, uniform_index and normal moments") {
    RandomStream rng(1, 0);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0, usum = 0.0;
    std::vector<int> hist(7, 0);
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      sum += z;
      sum2 += z * z;
      const double u = rng.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      usum += u;
      ++hist[rng.uniform_index(7)];
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sum2 / n - 1.0) < 0.02);
    CHECK(std::abs(usum / n - 0.5) < 0.005);
    for (const int h : hist) CHECK(std::abs(h - n / 7.0) < 5.0 * std::sqrt(n / 7.0));
  }

  TEST_CASE("shuffle yields a permutation") {
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    RandomStream rng(9, 9);
    rng.shuffle(std::span<int>(v));
    CHECK_FALSE(std::is_sorted(v.begin(), v.end()));
    std::sort(v.begin(), v.end());
    for (int i = 0; i < 100; ++i) CHECK(v[static_cast<std::size_t>(i)] == i);
  }

  TEST_CASE("parallel_for_ranges covers every index once for any worker count") {
    for (unsigned workers : {1u, 2u, 3u, 8u, 200u}) {
      std::vector<std::atomic<int>> seen(101);
      parallel_for_ranges(101, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) seen[i]++;
      });
      for (auto& s : seen) CHECK(s.load() == 1);
    }
    CHECK_THROWS_AS(parallel_for_ranges(10, 4,
                                        [](std::size_t b, std::size_t, std::size_t) {
                                          if (b > 0) throw std::runtime_error("boom");
                                        }),
                    std::runtime_error);
  }
}
