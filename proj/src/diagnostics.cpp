#include "slab/diagnostics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "slab/error.hpp"
#include "slab/rng.hpp"

namespace slab::diag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool zero_variance(double var, double mean) { return var <= 1e-14 * std::max(1.0, mean * mean); }

// Calls fn(rows, hidden) for consecutive chunks of a dataset.
template <typename Fn>
void for_each_chunk(const models::TiedAutoencoder& model, const SparseBinaryMatrix& data,
                    std::size_t chunk, Fn&& fn) {
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.rows(); start += chunk) {
    const std::size_t end = std::min(data.rows(), start + chunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    fn(std::span<const std::size_t>(rows), models::ae_encode(model, data, rows));
  }
}

Matrix activate(const models::TiedAutoencoder& model, Matrix pre) {
  if (model.activation == models::Activation::kRelu) return pre.cwiseMax(0.0);
  return pre;
}

Matrix dense_targets(const SparseBinaryMatrix& data, std::span<const std::size_t> rows, Index d) {
  Matrix t = Matrix::Zero(d, static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (const auto c : data.row(rows[j])) t(c, static_cast<Index>(j)) = 1.0;
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// R^2 and FEV

R2Result r2_per_feature(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw DimensionError("predictions and targets differ in shape");
  }
  SLAB_REQUIRE(targets.rows() >= 2, "R^2 needs at least two samples");
  const auto n = static_cast<double>(targets.rows());
  R2Result out;
  out.r2.resize(targets.cols());
  out.undefined.assign(static_cast<std::size_t>(targets.cols()), false);
  for (Index i = 0; i < targets.cols(); ++i) {
    const double mean = targets.col(i).mean();
    const double var = (targets.col(i).array() - mean).square().sum() / n;
    const double mse = (predictions.col(i) - targets.col(i)).squaredNorm() / n;
    if (zero_variance(var, mean)) {
      out.r2(i) = kNaN;
      out.undefined[static_cast<std::size_t>(i)] = true;
    } else {
      out.r2(i) = 1.0 - mse / var;
    }
  }
  return out;
}

FevResult fev(const Matrix& probe_recon, const Matrix& model_recon) {
  if (probe_recon.rows() != model_recon.rows() || probe_recon.cols() != model_recon.cols()) {
    throw DimensionError("probe and model reconstructions differ in shape");
  }
  const Matrix centred = model_recon.rowwise() - model_recon.colwise().mean();
  const double denom = centred.squaredNorm();
  if (denom <= 0.0) return {kNaN, true};
  return {1.0 - (model_recon - probe_recon).squaredNorm() / denom, false};
}

R2Accumulator::R2Accumulator(Index d)
    : sse_(Vector::Zero(d)), sum_(Vector::Zero(d)), sumsq_(Vector::Zero(d)) {}

void R2Accumulator::add(const Matrix& predictions, const SparseBinaryMatrix& data,
                        std::span<const std::size_t> rows) {
  add(predictions, dense_targets(data, rows, sse_.size()));
}

void R2Accumulator::add(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != sse_.size() || targets.rows() != sse_.size() ||
      predictions.cols() != targets.cols()) {
    throw DimensionError("accumulator block has the wrong shape");
  }
  sse_ += (predictions - targets).rowwise().squaredNorm();
  sum_ += targets.rowwise().sum();
  sumsq_ += targets.rowwise().squaredNorm();
  n_ += static_cast<std::size_t>(targets.cols());
}

R2Result R2Accumulator::result() const {
  SLAB_REQUIRE(n_ >= 2, "R^2 needs at least two samples");
  const auto n = static_cast<double>(n_);
  R2Result out;
  out.r2.resize(sse_.size());
  out.undefined.assign(static_cast<std::size_t>(sse_.size()), false);
  for (Index i = 0; i < sse_.size(); ++i) {
    const double mean = sum_(i) / n;
    const double var = sumsq_(i) / n - mean * mean;
    if (zero_variance(var, mean)) {
      out.r2(i) = kNaN;
      out.undefined[static_cast<std::size_t>(i)] = true;
    } else {
      out.r2(i) = 1.0 - (sse_(i) / n) / var;
    }
  }
  return out;
}

FevAccumulator::FevAccumulator(Index d) : sum_(Vector::Zero(d)), sumsq_(Vector::Zero(d)) {}

void FevAccumulator::add(const Matrix& probe_recon, const Matrix& model_recon) {
  diff_ += (model_recon - probe_recon).squaredNorm();
  sum_ += model_recon.rowwise().sum();
  sumsq_ += model_recon.rowwise().squaredNorm();
  n_ += static_cast<std::size_t>(model_recon.cols());
}

FevResult FevAccumulator::result() const {
  const auto n = static_cast<double>(n_);
  const double denom = sumsq_.sum() - sum_.squaredNorm() / n;
  if (n_ == 0 || denom <= 1e-14 * std::max(1.0, sumsq_.sum())) return {kNaN, true};
  return {1.0 - diff_ / denom, false};
}

R2Result ae_r2(const models::TiedAutoencoder& model, const SparseBinaryMatrix& data,
               std::size_t chunk) {
  R2Accumulator acc(model.features());
  for_each_chunk(model, data, chunk, [&](std::span<const std::size_t> rows, Matrix hidden) {
    Matrix pre = model.w.transpose() * hidden;
    pre.colwise() += model.b;
    acc.add(activate(model, std::move(pre)), data, rows);
  });
  return acc.result();
}

// ---------------------------------------------------------------------------
// Linear probe and verdicts

Matrix LinearProbe::apply(const Matrix& hidden) const {
  Matrix out = p * hidden;
  out.colwise() += c;
  return out;
}

LinearProbe fit_linear_probe(const models::TiedAutoencoder& model, const SparseBinaryMatrix& train,
                             const ProbeOptions& options) {
  SLAB_REQUIRE(train.rows() >= 2, "probe needs at least two training samples");
  const Index m = model.latent();
  const Index d = model.features();
  LinearProbe probe;
  if (options.method == ProbeMethod::kClosedForm) {
    Matrix hh = Matrix::Zero(m, m);
    Matrix hx = Matrix::Zero(m, d);  // sum of h x^T
    Vector hsum = Vector::Zero(m);
    Vector xsum = Vector::Zero(d);
    for_each_chunk(model, train, 4096, [&](std::span<const std::size_t> rows, const Matrix& hidden) {
      hh.noalias() += hidden * hidden.transpose();
      hsum += hidden.rowwise().sum();
      for (std::size_t j = 0; j < rows.size(); ++j) {
        for (const auto c : train.row(rows[j])) {
          hx.col(c) += hidden.col(static_cast<Index>(j));
          xsum(c) += 1.0;
        }
      }
    });
    const auto n = static_cast<double>(train.rows());
    const Vector hmean = hsum / n;
    const Vector xmean = xsum / n;
    Matrix chh = hh / n - hmean * hmean.transpose();
    const Matrix chx = hx / n - hmean * xmean.transpose();
    const double scale = std::max(chh.trace() / static_cast<double>(m), 1e-300);
    chh.diagonal().array() += options.ridge * scale;
    const Eigen::LDLT<Matrix> ldlt(chh);
    if (ldlt.info() != Eigen::Success) throw DataError("probe normal equations are singular");
    probe.p = ldlt.solve(chx).transpose();
    probe.c = xmean - probe.p * hmean;
    return probe;
  }

  // Gradient training with the same optimizer as the models.
  const auto& cfg = options.train;
  cfg.validate();
  probe.p = Matrix::Zero(d, m);
  probe.c = Vector::Zero(d);
  std::vector<double> m1p(static_cast<std::size_t>(probe.p.size()), 0.0), m2p(m1p.size(), 0.0);
  std::vector<double> m1c(static_cast<std::size_t>(d), 0.0), m2c(m1c.size(), 0.0);
  const std::size_t n = train.rows();
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      RandomStream rng(cfg.seed, streams::kShuffle + epoch);
      rng.shuffle(std::span<std::size_t>(order));
    }
    for (std::size_t k = 0; k < per_epoch; ++k) {
      const std::size_t begin = k * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Matrix hidden = models::ae_encode(model, train, rows);
      Matrix delta = probe.apply(hidden);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        for (const auto c : train.row(rows[j])) delta(c, static_cast<Index>(j)) -= 1.0;
      }
      delta *= 2.0 / static_cast<double>(rows.size());
      const Matrix gp = delta * hidden.transpose();
      const Vector gc = delta.rowwise().sum();
      if (!gp.allFinite() || !gc.allFinite()) throw DataError("probe training diverged");
      const double lr = models::learning_rate(cfg, step, total);
      ++step;
      const double decay = cfg.effective_optimizer() == models::Optimizer::kAdamW ? cfg.weight_decay : 0.0;
      models::adam_update({probe.p.data(), m1p.size()}, {gp.data(), m1p.size()}, m1p, m2p, lr, decay, step);
      models::adam_update({probe.c.data(), m1c.size()}, {gc.data(), m1c.size()}, m1c, m2c, lr, decay, step);
    }
  }
  return probe;
}

const char* to_string(VerdictClass c) {
  switch (c) {
    case VerdictClass::kLinear: return "linear";
    case VerdictClass::kNonlinear: return "nonlinear";
    case VerdictClass::kUnrecovered: return "unrecovered";
  }
  return "?";
}

VerdictClass classify(double r2_linear, double r2_nonlinear, double epsilon) {
  const double floor = 1.0 - epsilon;
  if (r2_linear >= floor) return VerdictClass::kLinear;
  if (r2_nonlinear >= floor) return VerdictClass::kNonlinear;
  return VerdictClass::kUnrecovered;
}

SuperpositionVerdict linear_superposition_test(const models::TiedAutoencoder& model,
                                               const SparseBinaryMatrix& train,
                                               const SparseBinaryMatrix& validation,
                                               std::span<const Index> features, double epsilon,
                                               const ProbeOptions& options) {
  SLAB_REQUIRE(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
  const Index d = model.features();
  if (train.cols() != static_cast<std::size_t>(d) || validation.cols() != static_cast<std::size_t>(d)) {
    throw DimensionError("dataset width does not match the model");
  }
  SuperpositionVerdict out;
  out.epsilon = epsilon;
  out.probe = fit_linear_probe(model, train, options);

  R2Accumulator lin(d), nonlin(d);
  FevAccumulator fev_acc(d);
  for_each_chunk(model, validation, 1024, [&](std::span<const std::size_t> rows, const Matrix& hidden) {
    Matrix pre = model.w.transpose() * hidden;
    pre.colwise() += model.b;
    const Matrix recon = activate(model, std::move(pre));
    const Matrix probe_recon = out.probe.apply(hidden);
    const Matrix targets = dense_targets(validation, rows, d);
    lin.add(probe_recon, targets);
    nonlin.add(recon, targets);
    fev_acc.add(probe_recon, recon);
  });
  const auto r2_lin = lin.result();
  const auto r2_non = nonlin.result();
  out.probe_fev = fev_acc.result();

  std::vector<Index> all;
  if (features.empty()) {
    all.resize(static_cast<std::size_t>(d));
    std::iota(all.begin(), all.end(), Index{0});
    features = all;
  }
  const Matrix gram = model.gram();
  out.interference_condition = true;
  for (const Index i : features) {
    SLAB_REQUIRE(i >= 0 && i < d, "feature id out of range");
    FeatureVerdict v;
    v.feature = i;
    v.r2_linear = r2_lin.r2(i);
    v.r2_nonlinear = r2_non.r2(i);
    v.undefined = r2_lin.undefined[static_cast<std::size_t>(i)];
    v.verdict = v.undefined ? VerdictClass::kUnrecovered : classify(v.r2_linear, v.r2_nonlinear, epsilon);
    for (Index j = 0; j < d && !v.interferes; ++j) {
      if (j != i && std::abs(gram(i, j)) > kInterferenceTolerance) v.interferes = true;
    }
    out.interference_condition = out.interference_condition && v.interferes;
    out.features.push_back(v);
  }
  return out;
}

CensusCounts census_superposition(const models::TiedAutoencoder& model,
                                  const SparseBinaryMatrix& train,
                                  const SparseBinaryMatrix& validation, double epsilon,
                                  std::size_t min_occurrences, const ProbeOptions& options) {
  const auto verdict = linear_superposition_test(model, train, validation, {}, epsilon, options);
  const auto counts = validation.column_counts();
  CensusCounts out;
  out.epsilon = epsilon;
  out.min_occurrences = min_occurrences;
  for (const auto& v : verdict.features) {
    if (v.undefined || counts[static_cast<std::size_t>(v.feature)] < min_occurrences) {
      ++out.below_floor;
      continue;
    }
    switch (v.verdict) {
      case VerdictClass::kLinear: ++out.linear; break;
      case VerdictClass::kNonlinear: ++out.nonlinear; break;
      case VerdictClass::kUnrecovered: ++out.unrecovered; break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interference

InterferenceBreakdown interference_breakdown(const models::TiedAutoencoder& model,
                                             const Vector& sample, Index feature,
                                             std::size_t top_k, std::span<const std::string> labels) {
  const Index d = model.features();
  if (sample.size() != d) throw DimensionError("sample width does not match the model");
  SLAB_REQUIRE(feature >= 0 && feature < d, "feature id out of range");
  SLAB_REQUIRE(labels.empty() || labels.size() == static_cast<std::size_t>(d),
               "one label per feature required");
  const Vector g = model.w.transpose() * model.w.col(feature);  // <w_i, w_j> for all j
  InterferenceBreakdown out;
  out.feature = feature;
  out.signal = g(feature) * sample(feature);
  out.bias = model.b(feature);
  out.preactivation = model.w.col(feature).dot(model.w * sample) + model.b(feature);
  std::vector<Contribution> terms;
  for (Index j = 0; j < d; ++j) {
    if (j == feature) continue;
    const double v = g(j) * sample(j);
    out.interference += v;
    if (v != 0.0) {
      terms.push_back({j, labels.empty() ? std::to_string(j) : labels[static_cast<std::size_t>(j)], v});
    }
  }
  std::stable_sort(terms.begin(), terms.end(), [](const Contribution& a, const Contribution& b) {
    return std::abs(a.value) > std::abs(b.value);
  });
  if (terms.size() > top_k) terms.resize(top_k);
  out.top = std::move(terms);
  return out;
}

InterferenceBreakdown interference_breakdown(const models::TiedAutoencoder& model,
                                             std::span<const std::uint32_t> active, Index feature,
                                             std::size_t top_k, std::span<const std::string> labels) {
  Vector sample = Vector::Zero(model.features());
  for (const auto c : active) {
    SLAB_REQUIRE(c < model.features(), "active feature id out of range");
    sample(c) = 1.0;
  }
  return interference_breakdown(model, sample, feature, top_k, labels);
}

OneHotComparison onehot_vs_context(const models::TiedAutoencoder& model,
                                   const SparseBinaryMatrix& validation, Index feature,
                                   std::size_t min_occurrences) {
  SLAB_REQUIRE(feature >= 0 && feature < model.features(), "feature id out of range");
  SLAB_REQUIRE(validation.rows() >= 2, "validation set too small");
  auto act = [&](double x) {
    return model.activation == models::Activation::kRelu ? std::max(x, 0.0) : x;
  };
  const auto wi = model.w.col(feature);
  const double bi = model.b(feature);
  OneHotComparison out;
  out.onehot_value = act(wi.squaredNorm() + bi);
  const double off_value = act(bi);

  Matrix preds(static_cast<Index>(validation.rows()), 2);
  Matrix targets = Matrix::Zero(static_cast<Index>(validation.rows()), 2);
  std::size_t better = 0;
  for_each_chunk(model, validation, 1024, [&](std::span<const std::size_t> rows, const Matrix& hidden) {
    const Vector ctx = hidden.transpose() * wi;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto r = static_cast<Index>(rows[j]);
      const bool on = validation.contains(rows[j], static_cast<std::uint32_t>(feature));
      const double context = act(ctx(static_cast<Index>(j)) + bi);
      preds(r, 0) = on ? out.onehot_value : off_value;
      preds(r, 1) = context;
      targets(r, 0) = targets(r, 1) = on ? 1.0 : 0.0;
      if (on) {
        ++out.occurrences;
        if (std::abs(context - 1.0) < std::abs(out.onehot_value - 1.0)) ++better;
      }
    }
  });
  const auto r2 = r2_per_feature(preds, targets);
  out.r2_onehot = r2.r2(0);
  out.r2_context = r2.r2(1);
  out.insufficient = out.occurrences < min_occurrences;
  if (!out.insufficient && out.occurrences > 0) {
    out.fraction_context_better = static_cast<double>(better) / static_cast<double>(out.occurrences);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

double ordering_score(const Matrix& coords) {
  const Index n = coords.rows();
  SLAB_REQUIRE(n >= 3 && coords.cols() == 2, "ordering score needs at least three 2D points");
  const Eigen::RowVector2d centre = coords.colwise().mean();
  std::vector<double> angle(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    angle[static_cast<std::size_t>(i)] = std::atan2(coords(i, 1) - centre(1), coords(i, 0) - centre(0));
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return angle[static_cast<std::size_t>(a)] < angle[static_cast<std::size_t>(b)];
  });
  std::vector<Index> position(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) position[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;
  std::size_t adjacent = 0;
  for (Index k = 0; k < n; ++k) {
    const Index a = position[static_cast<std::size_t>(k)];
    const Index b = position[static_cast<std::size_t>((k + 1) % n)];
    const Index gap = (a - b + n) % n;
    if (gap == 1 || gap == n - 1) ++adjacent;
  }
  return static_cast<double>(adjacent) / static_cast<double>(n);
}

namespace {

GeometryReport geometry_from_points(const Matrix& points, std::span<const Index> members,
                                    std::string group, const Matrix& sub_gram) {
  GeometryReport out;
  out.group = std::move(group);
  out.members.assign(members.begin(), members.end());
  const auto pca = linalg::pca_2d(points);
  out.coords = pca.coords;
  out.degenerate = pca.degenerate;
  out.ordering_score = ordering_score(out.coords);
  out.offdiag_frobenius = linalg::offdiag_frobenius(sub_gram);
  out.norms = points.colwise().norm().transpose();
  return out;
}

}  // namespace

GeometryReport group_geometry(const models::TiedAutoencoder& model, std::span<const Index> members,
                              std::string group) {
  SLAB_REQUIRE(members.size() >= 3, "group geometry needs at least three features");
  Matrix points(model.latent(), static_cast<Index>(members.size()));
  for (std::size_t k = 0; k < members.size(); ++k) {
    SLAB_REQUIRE(members[k] >= 0 && members[k] < model.features(), "feature id out of range");
    points.col(static_cast<Index>(k)) = model.w.col(members[k]);
  }
  return geometry_from_points(points, members, std::move(group), points.transpose() * points);
}

GeometryReport correlation_geometry(const SparseBinaryMatrix& data, std::span<const Index> members,
                                    std::string group) {
  SLAB_REQUIRE(members.size() >= 3, "group geometry needs at least three features");
  std::vector<std::uint32_t> cols;
  for (const Index i : members) {
    SLAB_REQUIRE(i >= 0 && static_cast<std::size_t>(i) < data.cols(), "feature id out of range");
    cols.push_back(static_cast<std::uint32_t>(i));
  }
  const auto r = linalg::second_moment(data, cols, linalg::MomentMode::kCorrelation);
  const auto eig = linalg::sym_eig(r.values);
  const Index n = r.values.rows();

  // Positively correlated groups have a leading same-sign (Perron) mode that
  // only measures overall co-occurrence; the shape lives in the next pair.
  const Vector& lead = eig.eigenvectors.col(0);
  const bool perron = (lead.array() >= 0.0).all() || (lead.array() <= 0.0).all();
  const Index first = perron && n >= 3 ? 1 : 0;

  GeometryReport out;
  out.group = std::move(group);
  out.members.assign(members.begin(), members.end());
  out.coords = Matrix::Zero(n, 2);
  const double top = std::max(eig.eigenvalues(0), 0.0);
  for (Index k = 0; k < 2; ++k) {
    const double lambda = std::max(eig.eigenvalues(first + k), 0.0);
    if (lambda <= 1e-10 * top || lambda == 0.0) {
      out.degenerate = true;
      continue;
    }
    out.coords.col(k) = std::sqrt(lambda) * eig.eigenvectors.col(first + k);
  }
  out.ordering_score = ordering_score(out.coords);
  out.offdiag_frobenius = linalg::offdiag_frobenius(r.values);
  out.norms = r.values.colwise().norm().transpose();
  out.degenerate = out.degenerate || !r.degenerate_columns.empty();
  return out;
}

std::vector<double> frobenius_sweep(std::span<const models::TiedAutoencoder> models,
                                    std::span<const Index> members) {
  SLAB_REQUIRE(models.size() >= 2, "a sweep needs at least two models");
  std::vector<double> out;
  for (const auto& model : models) {
    Matrix cols(model.latent(), static_cast<Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k) {
      SLAB_REQUIRE(members[k] >= 0 && members[k] < model.features(), "feature id out of range");
      cols.col(static_cast<Index>(k)) = model.w.col(members[k]);
    }
    out.push_back(linalg::offdiag_frobenius(cols.transpose() * cols));
  }
  return out;
}

AntipodalReport antipodal_pairs(const Matrix& gram, double partner_ratio, double other_ratio) {
  SLAB_REQUIRE(gram.rows() == gram.cols() && gram.rows() >= 2, "gram must be square");
  const Index d = gram.rows();
  std::vector<Index> best(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) {
    Index arg = i == 0 ? 1 : 0;
    for (Index j = 0; j < d; ++j) {
      if (j != i && std::abs(gram(i, j)) > std::abs(gram(i, arg))) arg = j;
    }
    best[static_cast<std::size_t>(i)] = arg;
  }
  AntipodalReport out;
  out.paired.assign(static_cast<std::size_t>(d), false);
  out.partner = best;
  for (Index i = 0; i < d; ++i) {
    const Index j = best[static_cast<std::size_t>(i)];
    const double norm2 = gram(i, i);
    bool ok = norm2 > 0.0 && gram(i, j) < 0.0 && -gram(i, j) >= partner_ratio * norm2 &&
              best[static_cast<std::size_t>(j)] == i;
    for (Index k = 0; k < d && ok; ++k) {
      if (k != i && k != j && std::abs(gram(i, k)) > other_ratio * norm2) ok = false;
    }
    out.paired[static_cast<std::size_t>(i)] = ok;
    if (ok) ++out.count;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value-coding probes

std::vector<FrequencyFit> fourier_projection(const Matrix& embeddings, std::uint32_t p, double ridge) {
  SLAB_REQUIRE(p >= 3, "modulus must be at least 3");
  if (embeddings.cols() != static_cast<Index>(p)) {
    throw DimensionError("embedding table must have one column per residue");
  }
  const Index k = embeddings.rows();
  const Matrix x = embeddings.transpose();  // p x k
  const Matrix xc = x.rowwise() - x.colwise().mean();
  Matrix a = xc.transpose() * xc;
  const double scale = std::max(a.trace() / static_cast<double>(k), 1e-300);
  a.diagonal().array() += ridge * scale;
  const Eigen::LDLT<Matrix> ldlt(a);
  const Matrix solve_xt = ldlt.solve(xc.transpose());  // k x p
  const Matrix hat = xc * solve_xt;                    // centred hat matrix
  const double pp = static_cast<double>(p);
  Vector leverage = hat.diagonal().array() + 1.0 / pp;
  const bool deficient = ldlt.info() != Eigen::Success || leverage.maxCoeff() > 1.0 - 1e-8;

  std::vector<FrequencyFit> fits;
  for (std::uint32_t q = 1; q <= p / 2; ++q) {
    FrequencyFit fit;
    fit.frequency = static_cast<int>(q);
    fit.rank_deficient = deficient;
    fit.projection.resize(p, 2);
    double r2[2];
    for (int part = 0; part < 2; ++part) {
      Vector y(p);
      for (std::uint32_t t = 0; t < p; ++t) {
        const double ang = 2.0 * std::numbers::pi * q * t / pp;
        y(t) = part == 0 ? std::cos(ang) : std::sin(ang);
      }
      const double ymean = y.mean();
      const Vector yc = y.array() - ymean;
      const double sst = yc.squaredNorm();
      const Vector beta = solve_xt * yc;
      const Vector fitted = (xc * beta).array() + ymean;
      fit.projection.col(part) = fitted;
      (part == 0 ? fit.dir_cos : fit.dir_sin) = beta;
      (part == 0 ? fit.pattern_cos : fit.pattern_sin) =
          sst > 0.0 ? Vector(xc.transpose() * yc / sst) : Vector::Zero(k);
      if (sst <= 1e-12 * pp) {
        r2[part] = kNaN;
        continue;
      }
      double press = 0.0;
      for (std::uint32_t t = 0; t < p; ++t) {
        const double e = (y(t) - fitted(t)) / std::max(1.0 - leverage(t), 1e-12);
        press += e * e;
      }
      r2[part] = 1.0 - press / sst;
    }
    fit.r2_cos = r2[0];
    fit.r2_sin = r2[1];
    if (std::isnan(r2[1])) {
      fit.r2 = r2[0];
    } else {
      fit.r2 = 0.5 * (r2[0] + r2[1]);
    }
    const Vector radius = fit.projection.rowwise().norm();
    const double mean_r = radius.mean();
    const double sd_r = std::sqrt((radius.array() - mean_r).square().mean());
    fit.radius_cv = mean_r > 0.0 ? sd_r / mean_r : kNaN;
    fits.push_back(std::move(fit));
  }
  return fits;
}

Matrix top_frequency_directions(const std::vector<FrequencyFit>& fits, std::size_t count) {
  SLAB_REQUIRE(count >= 1 && count <= fits.size(), "frequency count out of range");
  std::vector<std::size_t> order(fits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fits[a].r2 > fits[b].r2; });
  const Index width = fits.front().dir_cos.size();
  Matrix out(width, static_cast<Index>(2 * count));
  for (std::size_t k = 0; k < count; ++k) {
    out.col(static_cast<Index>(2 * k)) = fits[order[k]].pattern_cos;
    out.col(static_cast<Index>(2 * k + 1)) = fits[order[k]].pattern_sin;
  }
  return out;
}

CoordinateProbe coordinate_probe(const Matrix& embeddings, const Matrix& coords,
                                 std::span<const std::uint32_t> train,
                                 std::span<const std::uint32_t> heldout, double ridge) {
  SLAB_REQUIRE(train.size() >= 10, "coordinate probe needs at least ten training tokens");
  SLAB_REQUIRE(heldout.size() >= 2, "coordinate probe needs at least two held-out tokens");
  SLAB_REQUIRE(ridge >= 0.0, "ridge must be non-negative");
  if (coords.rows() != embeddings.cols()) throw DimensionError("one coordinate row per token required");
  const Index k = embeddings.rows();
  const Index axes = coords.cols();
  auto gather = [&](std::span<const std::uint32_t> ids, Matrix& x, Matrix& y) {
    x.resize(static_cast<Index>(ids.size()), k);
    y.resize(static_cast<Index>(ids.size()), axes);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      SLAB_REQUIRE(ids[r] < embeddings.cols(), "token id out of range");
      x.row(static_cast<Index>(r)) = embeddings.col(ids[r]).transpose();
      y.row(static_cast<Index>(r)) = coords.row(ids[r]);
    }
  };
  Matrix xt, yt, xh, yh;
  gather(train, xt, yt);
  gather(heldout, xh, yh);
  const Eigen::RowVectorXd xmean = xt.colwise().mean();
  const Eigen::RowVectorXd ymean = yt.colwise().mean();
  const Matrix xc = xt.rowwise() - xmean;
  Matrix a = xc.transpose() * xc;
  a.diagonal().array() += ridge;
  const Eigen::LDLT<Matrix> ldlt(a);
  const Vector dvals = ldlt.vectorD();
  const double dmax = dvals.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || dvals.minCoeff() <= 1e-12 * std::max(dmax, 1e-300)) {
    throw DataError("coordinate probe normal equations are singular; retry with a positive ridge");
  }
  CoordinateProbe out;
  out.weights = ldlt.solve(xc.transpose() * (yt.rowwise() - ymean));
  out.intercept = (ymean - xmean * out.weights).transpose();
  const Matrix yc = yt.rowwise() - ymean;
  out.encoding = (yc.transpose() * yc).ldlt().solve(yc.transpose() * xc).transpose();
  Matrix pred = xh * out.weights;
  pred.rowwise() += out.intercept.transpose();
  out.r2_heldout.resize(axes);
  for (Index c = 0; c < axes; ++c) {
    const double mean = yh.col(c).mean();
    const double sst = (yh.col(c).array() - mean).square().sum();
    out.r2_heldout(c) = sst > 0.0 ? 1.0 - (pred.col(c) - yh.col(c)).squaredNorm() / sst : kNaN;
  }
  out.mean_r2 = out.r2_heldout.mean();
  return out;
}

const char* to_string(AblationMode m) { return m == AblationMode::kKeep ? "keep" : "remove"; }

Matrix ablate_embeddings(const Matrix& embeddings, const Matrix& directions, AblationMode mode) {
  if (directions.rows() != embeddings.rows()) {
    throw DimensionError("directions must live in the embedding space");
  }
  SLAB_REQUIRE(directions.cols() >= 1, "need at least one direction");
  const double tol = 1e-10 * std::max(1.0, directions.cwiseAbs().maxCoeff());
  Eigen::ColPivHouseholderQR<Matrix> check(directions);
  check.setThreshold(tol);
  if (check.rank() < directions.cols()) {
    throw ContractError("value-coding directions are linearly dependent");
  }
  const Eigen::HouseholderQR<Matrix> hqr(directions);
  const Matrix basis = hqr.householderQ() * Matrix::Identity(directions.rows(), directions.cols());
  const Vector mean = embeddings.rowwise().mean();
  const Matrix dev = embeddings.colwise() - mean;
  const Matrix proj = basis * (basis.transpose() * dev);
  if (mode == AblationMode::kKeep) return proj.colwise() + mean;
  return embeddings - proj;
}

models::ClassifierMetrics vc_ablation(const models::MlpClassifier& model, const Matrix& directions,
                                      AblationMode mode, std::span<const models::PairExample> eval) {
  models::MlpClassifier edited = model;
  edited.embedding = ablate_embeddings(model.embedding, directions, mode);
  return models::evaluate(edited, eval);
}

}  // namespace slab::diag
