#pragma once

// Measurements on trained models: per-feature R^2, the linear-superposition
// verdict, interference decomposition, group geometry, Fourier and coordinate
// probes, and value-coding ablations.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slab/linalg.hpp"
#include "slab/matrix.hpp"
#include "slab/models.hpp"
#include "slab/sparse.hpp"

namespace slab::diag {

// ---------------------------------------------------------------------------
// R^2 and FEV

struct R2Result {
  Vector r2;                    // NaN where undefined
  std::vector<bool> undefined;  // zero target variance
};

// Rows are samples. R2_i = 1 - MSE_i / Var_i over the evaluation rows.
R2Result r2_per_feature(const Matrix& predictions, const Matrix& targets);

struct FevResult {
  double value = 0.0;
  bool undefined = false;  // model output has zero variance
};

// 1 - sum |model - probe|^2 / sum |model - mean(model)|^2, rows are samples.
FevResult fev(const Matrix& probe_recon, const Matrix& model_recon);

// Streaming versions over column blocks (one sample per column).
class R2Accumulator {
 public:
  explicit R2Accumulator(Index d);
  // Adds predictions for the listed rows of a binary dataset.
  void add(const Matrix& predictions, const SparseBinaryMatrix& data,
           std::span<const std::size_t> rows);
  void add(const Matrix& predictions, const Matrix& targets);
  R2Result result() const;
  std::size_t count() const { return n_; }

 private:
  Vector sse_, sum_, sumsq_;
  std::size_t n_ = 0;
};

class FevAccumulator {
 public:
  explicit FevAccumulator(Index d);
  void add(const Matrix& probe_recon, const Matrix& model_recon);
  FevResult result() const;

 private:
  double diff_ = 0.0;
  Vector sum_, sumsq_;
  std::size_t n_ = 0;
};

// R^2 of the autoencoder's own reconstruction on every row of `data`.
R2Result ae_r2(const models::TiedAutoencoder& model, const SparseBinaryMatrix& data,
               std::size_t chunk = 1024);

// ---------------------------------------------------------------------------
// Linear probe and the superposition verdict

struct LinearProbe {
  Matrix p;  // d x m
  Vector c;  // d

  Matrix apply(const Matrix& hidden) const;  // d x B
};

enum class ProbeMethod { kClosedForm, kTrained };

struct ProbeOptions {
  ProbeMethod method = ProbeMethod::kClosedForm;
  // Tikhonov term added to the latent covariance, relative to its trace / m.
  double ridge = 1e-8;
  // Used by the trained method.
  models::TrainConfig train{5, 1024, 1e-3};
};

LinearProbe fit_linear_probe(const models::TiedAutoencoder& model,
                             const SparseBinaryMatrix& train, const ProbeOptions& options = {});

enum class VerdictClass { kLinear, kNonlinear, kUnrecovered };
const char* to_string(VerdictClass c);

// Pure classification rule shared by the verdict and the census.
VerdictClass classify(double r2_linear, double r2_nonlinear, double epsilon);

struct FeatureVerdict {
  Index feature = 0;
  double r2_linear = 0.0;
  double r2_nonlinear = 0.0;
  VerdictClass verdict = VerdictClass::kUnrecovered;
  bool undefined = false;    // zero variance on the evaluation split
  bool interferes = false;   // some other column has |<w_i, w_j>| > tolerance
};

struct SuperpositionVerdict {
  std::vector<FeatureVerdict> features;
  double epsilon = 0.5;
  // Every tested feature interferes with at least one other feature.
  bool interference_condition = false;
  FevResult probe_fev;
  LinearProbe probe;
};

inline constexpr double kInterferenceTolerance = 1e-6;

// Fits the probe on `train` and scores features on `validation`. An empty
// feature list tests every feature.
SuperpositionVerdict linear_superposition_test(const models::TiedAutoencoder& model,
                                               const SparseBinaryMatrix& train,
                                               const SparseBinaryMatrix& validation,
                                               std::span<const Index> features, double epsilon,
                                               const ProbeOptions& options = {});

struct CensusCounts {
  std::size_t linear = 0;
  std::size_t nonlinear = 0;
  std::size_t unrecovered = 0;
  std::size_t below_floor = 0;  // too few validation occurrences to test
  double epsilon = 0.5;
  std::size_t min_occurrences = 0;
};

CensusCounts census_superposition(const models::TiedAutoencoder& model,
                                  const SparseBinaryMatrix& train,
                                  const SparseBinaryMatrix& validation, double epsilon,
                                  std::size_t min_occurrences = 10,
                                  const ProbeOptions& options = {});

// ---------------------------------------------------------------------------
// Interference

struct Contribution {
  Index feature = 0;
  std::string label;
  double value = 0.0;  // <w_i, w_j> f_j
};

struct InterferenceBreakdown {
  Index feature = 0;
  double signal = 0.0;        // |w_i|^2 f_i
  double interference = 0.0;  // sum_{j != i} <w_i, w_j> f_j
  double bias = 0.0;
  double preactivation = 0.0;
  std::vector<Contribution> top;  // largest |value| first
};

InterferenceBreakdown interference_breakdown(const models::TiedAutoencoder& model,
                                             const Vector& sample, Index feature,
                                             std::size_t top_k,
                                             std::span<const std::string> labels = {});

// Same for a binary sample given by its active feature ids.
InterferenceBreakdown interference_breakdown(const models::TiedAutoencoder& model,
                                             std::span<const std::uint32_t> active, Index feature,
                                             std::size_t top_k,
                                             std::span<const std::string> labels = {});

struct OneHotComparison {
  double r2_onehot = 0.0;
  double r2_context = 0.0;
  std::optional<double> fraction_context_better;  // empty when no sample qualifies
  double onehot_value = 0.0;  // reconstruction of feature i from e_i alone
  std::size_t occurrences = 0;
  bool insufficient = false;
};

// One-hot reconstruction uses f_i e_i as input; context reconstruction the
// full sample. Both R^2 values are over every validation row. The fraction is
// over rows with f_i = 1; ties do not count as better.
OneHotComparison onehot_vs_context(const models::TiedAutoencoder& model,
                                   const SparseBinaryMatrix& validation, Index feature,
                                   std::size_t min_occurrences = 10);

// ---------------------------------------------------------------------------
// Geometry

struct GeometryReport {
  std::string group;
  std::vector<Index> members;
  Matrix coords;  // members x 2
  double offdiag_frobenius = 0.0;
  double ordering_score = 0.0;
  Vector norms;
  bool degenerate = false;
};

// Fraction of cyclically adjacent label pairs (k, k+1 mod n) that are also
// adjacent in the angular order of `coords` around their centroid. 1 when
// the angular order is the label order up to rotation and reflection.
double ordering_score(const Matrix& coords);

// PCA of the selected W columns.
GeometryReport group_geometry(const models::TiedAutoencoder& model, std::span<const Index> members,
                              std::string group = {});
// Classical MDS of the members' data correlation matrix R (equivalently PCA
// on R): coordinates sqrt(lambda_k) v_k of its eigenpairs. When the leading
// eigenvector has a single sign it is skipped in favour of the next two.
GeometryReport correlation_geometry(const SparseBinaryMatrix& data, std::span<const Index> members,
                                    std::string group = {});

// Off-diagonal Frobenius norm of each model's sub-Gram for `members`.
std::vector<double> frobenius_sweep(std::span<const models::TiedAutoencoder> models,
                                    std::span<const Index> members);

struct AntipodalReport {
  std::vector<bool> paired;
  std::vector<Index> partner;
  std::size_t count = 0;
};

// Feature i is paired when its largest off-diagonal |G_ij| is negative, is at
// least `partner_ratio` |w_i|^2, is mutual (i is also j's largest), and every
// other off-diagonal |G_ik| is at most `other_ratio` |w_i|^2.
AntipodalReport antipodal_pairs(const Matrix& gram, double partner_ratio = 0.5,
                                double other_ratio = 0.2);

// ---------------------------------------------------------------------------
// Value-coding probes

struct FrequencyFit {
  int frequency = 0;
  double r2 = 0.0;      // mean of cosine and sine leave-one-out R^2
  double r2_cos = 0.0;
  double r2_sin = 0.0;
  Vector dir_cos;       // fitted readout weights in embedding space
  Vector dir_sin;
  // Fourier component of the centred embeddings, i.e. the direction along
  // which cos / sin of this frequency is written into the embedding.
  Vector pattern_cos;
  Vector pattern_sin;
  Matrix projection;    // tokens x 2 fitted (cos, sin) values
  double radius_cv = 0.0;
  bool rank_deficient = false;
};

// embeddings: width x p, column a is token a. Per-frequency fits of
// cos(2 pi q a / p) and sin(2 pi q a / p), scored by leave-one-out R^2 so that
// a wide embedding cannot fit noise. Sorted by frequency.
std::vector<FrequencyFit> fourier_projection(const Matrix& embeddings, std::uint32_t p,
                                             double ridge = 1e-6);

// Encoding patterns of the `count` best frequencies, two per frequency.
Matrix top_frequency_directions(const std::vector<FrequencyFit>& fits, std::size_t count);

struct CoordinateProbe {
  Matrix weights;  // width x axes
  Vector intercept;
  // Least squares regression of the centred training embeddings on the
  // centred coordinates: the directions the coordinates are written along.
  Matrix encoding;  // width x axes
  Vector r2_heldout;
  double mean_r2 = 0.0;
};

// Ridge least squares from embedding columns to coordinates (rows of
// `coords`, one column per axis). Fitted on `train` tokens, scored on
// `heldout` tokens.
CoordinateProbe coordinate_probe(const Matrix& embeddings, const Matrix& coords,
                                 std::span<const std::uint32_t> train,
                                 std::span<const std::uint32_t> heldout, double ridge = 1e-4);

enum class AblationMode { kKeep, kRemove };
const char* to_string(AblationMode m);

// Embedding table after projecting each token's deviation from the mean
// embedding onto (keep) or off (remove) span(directions).
Matrix ablate_embeddings(const Matrix& embeddings, const Matrix& directions, AblationMode mode);

models::ClassifierMetrics vc_ablation(const models::MlpClassifier& model, const Matrix& directions,
                                      AblationMode mode,
                                      std::span<const models::PairExample> eval);

}  // namespace slab::diag
