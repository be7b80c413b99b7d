#include <doctest.h>

#include <cmath>
#include <numbers>

#include "slab/error.hpp"
#include "slab/linalg.hpp"
#include "slab/synthdata.hpp"

using namespace slab;
using namespace slab::synth;

namespace {

constexpr double kPi = std::numbers::pi;

LatentCurveSpec cyclic(double beta, double b, double noise) {
  LatentCurveSpec s;
  s.sharpness = beta;
  s.base_logit = b;
  s.angle_noise = noise;
  return s;
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("nearly one-hot limit") {
    const auto spec = cyclic(50.0, 0.0, 0.0);
    const Matrix w = feature_directions(spec);
    for (int m = 0; m < 12; ++m) {
      const double a = 2.0 * kPi * m / 12.0;
      const Vector z = (Vector(2) << std::cos(a), std::sin(a)).finished();
      const Vector p = feature_probabilities(spec, w, z);
      CHECK(1.0 - p(m) < 1e-20);
      CHECK(p((m + 6) % 12) < 1e-20);
    }
  }

  TEST_CASE("closed-form Bernoulli rates for the defaults") {
    const auto spec = cyclic(5.0, -2.0, 0.0);
    const Matrix w = feature_directions(spec);
    const Vector z = (Vector(2) << 1.0, 0.0).finished();
    const Vector p = feature_probabilities(spec, w, z);
    CHECK(p(0) == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-14));
    CHECK(p(0) == doctest::Approx(0.9526).epsilon(1e-4));
    CHECK(p(3) == doctest::Approx(0.1192).epsilon(1e-3));
    CHECK(p(9) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
  }

  TEST_CASE("empirical rates stay within 3 sigma of sigmoid(l) for a fixed latent") {
    auto spec = cyclic(5.0, -2.0, 0.0);
    spec.cycle_positions = true;
    spec.num_features = 12;
    const std::size_t n = 100000 * 12;
    const auto data = generate(spec, n);
    // With cycling, month 0 is sampled at indices 0, 12, 24, ...
    std::vector<double> hits(12, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; i += 12) {
      ++count;
      for (const auto c : data.row(i)) hits[c] += 1.0;
    }
    const Vector p = feature_probabilities(spec, feature_directions(spec),
                                           (Vector(2) << 1.0, 0.0).finished());
    for (int k = 0; k < 12; ++k) {
      const double rate = hits[static_cast<std::size_t>(k)] / static_cast<double>(count);
      const double sigma = std::sqrt(p(k) * (1.0 - p(k)) / static_cast<double>(count));
      CHECK(std::abs(rate - p(k)) <= 3.0 * sigma);
    }
  }

  TEST_CASE("cyclic second moment is circulant and unimodal") {
    const auto spec = cyclic(5.0, -2.0, 0.0);
    const auto data = gen_cyclic(spec, 200000);
    std::vector<std::uint32_t> cols(12);
    for (std::uint32_t i = 0; i < 12; ++i) cols[i] = i;
    for (const auto mode : {linalg::MomentMode::kRaw, linalg::MomentMode::kCorrelation}) {
      const Matrix s = linalg::second_moment(data, cols, mode).values;
      std::vector<double> avg(12, 0.0);
      for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 12; ++j) avg[static_cast<std::size_t>((j - i + 12) % 12)] += s(i, j) / 12.0;
      }
      double worst = 0.0;
      for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 12; ++j) {
          worst = std::max(worst, std::abs(s(i, j) - avg[static_cast<std::size_t>((j - i + 12) % 12)]));
        }
      }
      CHECK(worst <= 0.02);
      for (int lag = 0; lag < 6; ++lag) CHECK(avg[static_cast<std::size_t>(lag)] > avg[static_cast<std::size_t>(lag + 1)]);
    }
  }

  TEST_CASE("figure-8 closed forms") {
    LatentCurveSpec spec;
    spec.kind = CurveKind::kFigure8;
    spec.num_features = 10;
    const Matrix w = feature_directions(spec);
    const Vector p0 = feature_probabilities(spec, w, Vector::Zero(2));
    CHECK((p0.array() - sigmoid(spec.base_logit)).abs().maxCoeff() < 1e-15);
    const Vector top = (Vector(2) << 1.0, 0.0).finished();  // theta = pi/2
    const Vector p1 = feature_probabilities(spec, w, top);
    for (int k = 0; k < 10; ++k) {
      const double phi = 2.0 * kPi * k / 10.0;
      CHECK(p1(k) == doctest::Approx(sigmoid(spec.sharpness * std::sin(phi) + spec.base_logit)).epsilon(1e-14));
    }
    const Matrix g = w * w.transpose();
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) {
        const double pi = 2.0 * kPi * i / 10.0, pj = 2.0 * kPi * j / 10.0;
        CHECK(std::abs(g(i, j) - (std::sin(pi) * std::sin(pj) + std::sin(2 * pi) * std::sin(2 * pj))) < 1e-12);
      }
    }
    CHECK_THROWS_AS(gen_cyclic(spec, 10), ContractError);
    CHECK(gen_figure8(spec, 10).rows() == 10);
  }

  TEST_CASE("Fibonacci lattice on the sphere") {
    LatentCurveSpec spec;
    spec.kind = CurveKind::kSphere;
    spec.num_features = 2;
    const Matrix w2 = feature_directions(spec);
    CHECK(std::acos(w2(0, 2)) == doctest::Approx(kPi / 3.0).epsilon(1e-12));
    CHECK(std::acos(w2(1, 2)) == doctest::Approx(2.0 * kPi / 3.0).epsilon(1e-12));

    spec.num_features = 64;
    const Matrix w = feature_directions(spec);
    double total = 0.0;
    int pairs = 0;
    for (int i = 0; i < 64; ++i) {
      CHECK(std::abs(w.row(i).norm() - 1.0) < 1e-12);
      for (int j = i + 1; j < 64; ++j) {
        total += w.row(i).dot(w.row(j));
        ++pairs;
      }
    }
    CHECK(std::abs(total / pairs) < 0.05);
    const Vector z = sample_latent(spec, 5);
    CHECK(std::abs(z.norm() - 1.0) < 1e-12);
  }

  TEST_CASE("generation is deterministic and independent of worker count") {
    LatentCurveSpec spec;
    const auto a = generate(spec, 5000, 1);
    CHECK(a == generate(spec, 5000, 1));
    CHECK(a == generate(spec, 5000, 4));
    spec.seed = 43;
    CHECK_FALSE(a == generate(spec, 5000, 1));
  }

  TEST_CASE("spec validation and naming") {
    LatentCurveSpec bad;
    bad.sharpness = 0.0;
    CHECK_THROWS_AS(validate(bad), ContractError);
    bad = LatentCurveSpec{};
    bad.num_features = 1;
    CHECK_THROWS_AS(validate(bad), ContractError);
    bad = LatentCurveSpec{};
    bad.angle_noise = -0.1;
    CHECK_THROWS_AS(validate(bad), ContractError);

    LatentCurveSpec spec;
    CHECK(feature_names(spec).front() == "january");
    CHECK(feature_names(spec).back() == "december");
    spec.num_features = 5;
    CHECK(feature_names(spec) == std::vector<std::string>{"f0", "f1", "f2", "f3", "f4"});
    CHECK(parse_curve_kind("figure8") == CurveKind::kFigure8);
    CHECK_THROWS(parse_curve_kind("torus"));

    const auto ds = to_dataset(spec, generate(spec, 100));
    CHECK(ds.vocab.size() == 5);
    CHECK(ds.size() == 100);
  }
}
