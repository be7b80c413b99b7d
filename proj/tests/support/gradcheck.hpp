#pragma once

// Central finite-difference checks shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>

#include "slab/models.hpp"
#include "slab/rng.hpp"

namespace slab::testing {

struct GradCheck {
  double rel_error = 0.0;    // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double kink_margin = 0.0;  // smallest |preactivation| over rectified units
};

inline double relative_error(const Vector& a, const Vector& n) {
  const double scale = std::max({a.norm(), n.norm(), 1e-12});
  return (a - n).norm() / scale;
}

// Numerical gradient of loss() w.r.t. every entry of `params`.
inline Vector numeric_gradient(double* params, Index count, const std::function<double()>& loss,
                               double h = 1e-5) {
  Vector g(count);
  for (Index k = 0; k < count; ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double up = loss();
    params[k] = saved - h;
    const double down = loss();
    params[k] = saved;
    g(k) = (up - down) / (2.0 * h);
  }
  return g;
}

inline Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

// Random tied autoencoder with a random dense batch (d x B).
inline GradCheck check_autoencoder(Index m, Index d, Index batch, models::Activation act,
                                   std::uint64_t seed) {
  auto model = models::TiedAutoencoder::random(m, d, act, seed);
  RandomStream rng(seed, 77);
  for (Index i = 0; i < d; ++i) model.b(i) = 0.3 * rng.normal();
  Matrix x(d, batch);
  for (Index k = 0; k < x.size(); ++k) x.data()[k] = rng.uniform() < 0.4 ? 1.0 : 0.0;

  const auto g = models::ae_backward(model, x);
  const auto fw = models::ae_forward(model, x);
  auto loss = [&] { return models::ae_loss(model, x); };
  Vector analytic(g.dw.size() + g.db.size());
  analytic << flatten(g.dw), g.db;
  Vector numeric(analytic.size());
  numeric << numeric_gradient(model.w.data(), model.w.size(), loss),
      numeric_gradient(model.b.data(), model.b.size(), loss);
  GradCheck out;
  out.rel_error = relative_error(analytic, numeric);
  out.kink_margin = act == models::Activation::kRelu ? fw.preactivation.cwiseAbs().minCoeff()
                                                     : INFINITY;
  return out;
}

inline GradCheck check_classifier(Index tokens, Index width, std::vector<Index> hidden,
                                  Index classes, Index batch, std::uint64_t seed) {
  auto model = models::MlpClassifier::random(tokens, width, hidden, classes, seed);
  RandomStream rng(seed, 78);
  for (auto& layer : model.hidden) {
    for (Index i = 0; i < layer.b.size(); ++i) layer.b(i) = 0.2 * rng.normal();
  }
  for (Index i = 0; i < model.output.b.size(); ++i) model.output.b(i) = 0.2 * rng.normal();
  std::vector<models::PairExample> data(static_cast<std::size_t>(batch));
  for (auto& ex : data) {
    ex.a = static_cast<std::uint32_t>(rng.uniform_index(static_cast<std::uint64_t>(tokens)));
    ex.b = static_cast<std::uint32_t>(rng.uniform_index(static_cast<std::uint64_t>(tokens)));
    ex.label = static_cast<std::uint32_t>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
  }
  const auto g = models::mlp_backward(model, data);
  auto loss = [&] { return models::mlp_loss(model, data); };

  std::vector<Vector> parts_a, parts_n;
  auto add = [&](Matrix& p, const Matrix& gp) {
    parts_a.push_back(flatten(gp));
    parts_n.push_back(numeric_gradient(p.data(), p.size(), loss));
  };
  auto addv = [&](Vector& p, const Vector& gp) {
    parts_a.push_back(gp);
    parts_n.push_back(numeric_gradient(p.data(), p.size(), loss));
  };
  add(model.embedding, g.grad.embedding);
  for (std::size_t l = 0; l < model.hidden.size(); ++l) {
    add(model.hidden[l].w, g.grad.hidden[l].w);
    addv(model.hidden[l].b, g.grad.hidden[l].b);
  }
  add(model.output.w, g.grad.output.w);
  addv(model.output.b, g.grad.output.b);
  Index total = 0;
  for (const auto& v : parts_a) total += v.size();
  Vector a(total), n(total);
  Index at = 0;
  for (std::size_t i = 0; i < parts_a.size(); ++i) {
    a.segment(at, parts_a[i].size()) = parts_a[i];
    n.segment(at, parts_n[i].size()) = parts_n[i];
    at += parts_a[i].size();
  }

  // Kink margin over all hidden pre-activations of the batch.
  double margin = INFINITY;
  {
    const Index k = model.width();
    Matrix x(2 * k, batch);
    for (Index j = 0; j < batch; ++j) {
      x.col(j).head(k) = model.embedding.col(data[static_cast<std::size_t>(j)].a);
      x.col(j).tail(k) = model.embedding.col(data[static_cast<std::size_t>(j)].b);
    }
    for (const auto& layer : model.hidden) {
      Matrix pre = layer.w * x;
      pre.colwise() += layer.b;
      margin = std::min(margin, pre.cwiseAbs().minCoeff());
      x = pre.cwiseMax(0.0);
    }
  }
  return {relative_error(a, n), margin};
}

}  // namespace slab::testing
