#pragma once

// Synthetic correlated binary features driven by a low-dimensional latent
// curve: sample a latent point z, compute logits beta * <w_k, z> + b for
// each feature direction w_k, then draw independent Bernoulli bits.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "slab/corpus.hpp"
#include "slab/matrix.hpp"
#include "slab/sparse.hpp"

namespace slab::synth {

enum class CurveKind { kCyclic, kFigure8, kSphere };

const char* to_string(CurveKind kind);
CurveKind parse_curve_kind(std::string_view text);

struct LatentCurveSpec {
  CurveKind kind = CurveKind::kCyclic;
  std::size_t num_features = 12;
  double sharpness = 5.0;     // beta
  double base_logit = -2.0;   // b
  double angle_noise = 0.1;   // sigma_theta, cyclic and figure-8 only
  std::uint64_t seed = 42;
  // Sample i uses position i mod F instead of a uniform draw.
  bool cycle_positions = false;
};

// Throws ContractError if the spec violates its invariants.
void validate(const LatentCurveSpec& spec);

// F x k generator directions (k = 2 for curves, 3 for the sphere).
Matrix feature_directions(const LatentCurveSpec& spec);

// Latent point for sample `index`; deterministic in (seed, index).
Vector sample_latent(const LatentCurveSpec& spec, std::uint64_t index);

// Bernoulli probabilities sigmoid(beta * W z + b) for a latent point.
Vector feature_probabilities(const LatentCurveSpec& spec, const Matrix& directions,
                             const Vector& z);

double sigmoid(double x);

// n x F binary samples. Each sample draws from its own Philox stream, so the
// output does not depend on `workers`.
SparseBinaryMatrix generate(const LatentCurveSpec& spec, std::size_t n, unsigned workers = 1);

// Kind-checked entry points.
SparseBinaryMatrix gen_cyclic(const LatentCurveSpec& spec, std::size_t n, unsigned workers = 1);
SparseBinaryMatrix gen_figure8(const LatentCurveSpec& spec, std::size_t n, unsigned workers = 1);
SparseBinaryMatrix gen_sphere(const LatentCurveSpec& spec, std::size_t n, unsigned workers = 1);

// Month names for a cyclic curve with 12 features, "f0".."f{F-1}" otherwise.
std::vector<std::string> feature_names(const LatentCurveSpec& spec);

// Wraps generated samples as a dataset (c = s = 1) so they share the corpus
// file format. Frequencies are the column counts.
corpus::BowsDataset to_dataset(const LatentCurveSpec& spec, SparseBinaryMatrix samples);

}  // namespace slab::synth
