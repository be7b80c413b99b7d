#include "slab/synthdata.hpp"

#include <cmath>
#include <numbers>

#include "slab/error.hpp"
#include "slab/parallel.hpp"
#include "slab/rng.hpp"

namespace slab::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_kind(const LatentCurveSpec& spec, CurveKind kind) {
  if (spec.kind != kind) {
    throw ContractError(std::string("expected a ") + to_string(kind) + " spec, got " +
                        to_string(spec.kind));
  }
}

}  // namespace

const char* to_string(CurveKind kind) {
  switch (kind) {
    case CurveKind::kCyclic: return "cyclic";
    case CurveKind::kFigure8: return "figure8";
    case CurveKind::kSphere: return "sphere";
  }
  return "?";
}

CurveKind parse_curve_kind(std::string_view text) {
  if (text == "cyclic") return CurveKind::kCyclic;
  if (text == "figure8") return CurveKind::kFigure8;
  if (text == "sphere") return CurveKind::kSphere;
  throw ContractError("unknown curve kind '" + std::string(text) + "'");
}

void validate(const LatentCurveSpec& spec) {
  SLAB_REQUIRE(spec.num_features >= 2, "need at least two features");
  SLAB_REQUIRE(spec.sharpness > 0.0 && std::isfinite(spec.sharpness), "sharpness must be positive");
  SLAB_REQUIRE(std::isfinite(spec.base_logit), "base logit must be finite");
  SLAB_REQUIRE(spec.angle_noise >= 0.0 && std::isfinite(spec.angle_noise),
               "angle noise must be non-negative");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix feature_directions(const LatentCurveSpec& spec) {
  validate(spec);
  const auto f = static_cast<Index>(spec.num_features);
  const double ff = static_cast<double>(spec.num_features);
  Matrix w;
  switch (spec.kind) {
    case CurveKind::kCyclic:
      w.resize(f, 2);
      for (Index k = 0; k < f; ++k) {
        const double phi = kTwoPi * static_cast<double>(k) / ff;
        w(k, 0) = std::cos(phi);
        w(k, 1) = std::sin(phi);
      }
      break;
    case CurveKind::kFigure8:
      w.resize(f, 2);
      for (Index k = 0; k < f; ++k) {
        const double phi = kTwoPi * static_cast<double>(k) / ff;
        w(k, 0) = std::sin(phi);
        w(k, 1) = std::sin(2.0 * phi);
      }
      break;
    case CurveKind::kSphere: {
      // Fibonacci lattice.
      w.resize(f, 3);
      const double golden = std::numbers::pi * (1.0 + std::sqrt(5.0));
      for (Index k = 0; k < f; ++k) {
        const double kk = static_cast<double>(k) + 0.5;
        const double polar = std::acos(1.0 - 2.0 * kk / ff);
        const double azimuth = golden * kk;
        w(k, 0) = std::sin(polar) * std::cos(azimuth);
        w(k, 1) = std::sin(polar) * std::sin(azimuth);
        w(k, 2) = std::cos(polar);
      }
      break;
    }
  }
  return w;
}

Vector sample_latent(const LatentCurveSpec& spec, std::uint64_t index) {
  RandomStream rng(spec.seed, index);
  if (spec.kind == CurveKind::kSphere) {
    Vector z(3);
    double norm = 0.0;
    do {
      for (Index i = 0; i < 3; ++i) z(i) = rng.normal();
      norm = z.norm();
    } while (norm < 1e-12);
    return z / norm;
  }
  const std::uint64_t position = spec.cycle_positions ? index % spec.num_features
                                                      : rng.uniform_index(spec.num_features);
  double theta = kTwoPi * static_cast<double>(position) / static_cast<double>(spec.num_features);
  if (spec.angle_noise > 0.0) theta += spec.angle_noise * rng.normal();
  Vector z(2);
  if (spec.kind == CurveKind::kCyclic) {
    z << std::cos(theta), std::sin(theta);
  } else {
    z << std::sin(theta), std::sin(2.0 * theta);
  }
  return z;
}

Vector feature_probabilities(const LatentCurveSpec& spec, const Matrix& directions,
                             const Vector& z) {
  Vector logits = spec.sharpness * (directions * z);
  logits.array() += spec.base_logit;
  return logits.unaryExpr([](double x) { return sigmoid(x); });
}

SparseBinaryMatrix generate(const LatentCurveSpec& spec, std::size_t n, unsigned workers) {
  validate(spec);
  SLAB_REQUIRE(n >= 1, "sample count must be positive");
  const Matrix directions = feature_directions(spec);
  std::vector<std::vector<std::uint32_t>> rows(n);
  parallel_for_ranges(n, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      // The latent draw consumes the head of stream i; the bits use a
      // disjoint stream so changing the latent recipe never shifts them.
      const Vector p = feature_probabilities(spec, directions, sample_latent(spec, i));
      RandomStream bits(spec.seed, streams::kSplit + i);
      auto& row = rows[i];
      for (Index k = 0; k < p.size(); ++k) {
        if (bits.uniform() < p(k)) row.push_back(static_cast<std::uint32_t>(k));
      }
    }
  });
  SparseBinaryMatrix out(spec.num_features);
  for (const auto& row : rows) out.append_row(row);
  return out;
}

SparseBinaryMatrix gen_cyclic(const LatentCurveSpec& spec, std::size_t n, unsigned workers) {
  require_kind(spec, CurveKind::kCyclic);
  return generate(spec, n, workers);
}

SparseBinaryMatrix gen_figure8(const LatentCurveSpec& spec, std::size_t n, unsigned workers) {
  require_kind(spec, CurveKind::kFigure8);
  return generate(spec, n, workers);
}

SparseBinaryMatrix gen_sphere(const LatentCurveSpec& spec, std::size_t n, unsigned workers) {
  require_kind(spec, CurveKind::kSphere);
  return generate(spec, n, workers);
}

std::vector<std::string> feature_names(const LatentCurveSpec& spec) {
  if (spec.kind == CurveKind::kCyclic && spec.num_features == 12) {
    return {"january", "february", "march",     "april",   "may",      "june",
            "july",    "august",   "september", "october", "november", "december"};
  }
  std::vector<std::string> names;
  for (std::size_t k = 0; k < spec.num_features; ++k) names.push_back("f" + std::to_string(k));
  return names;
}

corpus::BowsDataset to_dataset(const LatentCurveSpec& spec, SparseBinaryMatrix samples) {
  SLAB_REQUIRE(samples.cols() == spec.num_features, "sample width does not match the spec");
  corpus::BowsDataset ds;
  ds.vocab = corpus::Vocab(feature_names(spec), samples.column_counts(), "synthetic");
  ds.samples = std::move(samples);
  return ds;
}

}  // namespace slab::synth
