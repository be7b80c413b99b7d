#include <cmath>
#include <numeric>

#include "slab/error.hpp"
#include "slab/models.hpp"
#include "slab/rng.hpp"

namespace slab::models {

const char* to_string(Activation a) { return a == Activation::kRelu ? "relu" : "linear"; }

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "linear" || text == "identity") return Activation::kIdentity;
  throw ContractError("unknown activation '" + std::string(text) + "'");
}

TiedAutoencoder::TiedAutoencoder(Index m, Index d, Activation act)
    : w(Matrix::Zero(m, d)), b(Vector::Zero(d)), activation(act) {
  SLAB_REQUIRE(m >= 1 && d >= 1, "autoencoder dimensions must be positive");
}

TiedAutoencoder TiedAutoencoder::random(Index m, Index d, Activation activation,
                                        std::uint64_t seed) {
  TiedAutoencoder model(m, d, activation);
  RandomStream rng(seed, streams::kInit);
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  for (Index k = 0; k < model.w.size(); ++k) model.w.data()[k] = sd * rng.normal();
  return model;
}

namespace {

void check_dense_batch(const TiedAutoencoder& model, const Matrix& batch) {
  if (batch.rows() != model.features()) {
    throw DimensionError("batch has " + std::to_string(batch.rows()) + " features, model expects " +
                         std::to_string(model.features()));
  }
  SLAB_REQUIRE(batch.cols() >= 1, "batch must not be empty");
}

AeForward decode(const TiedAutoencoder& model, Matrix hidden) {
  AeForward out;
  out.hidden = std::move(hidden);
  out.preactivation.noalias() = model.w.transpose() * out.hidden;
  out.preactivation.colwise() += model.b;
  if (model.activation == Activation::kRelu) {
    out.reconstruction = out.preactivation.cwiseMax(0.0);
  } else {
    out.reconstruction = out.preactivation;
  }
  return out;
}

// On entry `delta` holds reconstruction - target. Scales it into dL/dPre and
// returns the loss.
double residual_to_delta(const TiedAutoencoder& model, const Matrix& pre, Matrix& delta) {
  const auto batch = static_cast<double>(delta.cols());
  const double loss = delta.squaredNorm() / batch;
  delta *= 2.0 / batch;
  if (model.activation == Activation::kRelu) {
    delta = (pre.array() > 0.0).select(delta, 0.0);
  }
  return loss;
}

}  // namespace

AeForward ae_forward(const TiedAutoencoder& model, const Matrix& batch) {
  check_dense_batch(model, batch);
  return decode(model, model.w * batch);
}

double ae_loss(const TiedAutoencoder& model, const Matrix& batch) {
  const auto fw = ae_forward(model, batch);
  return (fw.reconstruction - batch).squaredNorm() / static_cast<double>(batch.cols());
}

AeGradients ae_backward(const TiedAutoencoder& model, const Matrix& batch) {
  const auto fw = ae_forward(model, batch);
  Matrix delta = fw.reconstruction - batch;
  AeGradients g;
  g.loss = residual_to_delta(model, fw.preactivation, delta);
  // Decoder path (W^T as the decoder) plus encoder path (W f).
  g.dw.noalias() = fw.hidden * delta.transpose();
  g.dw.noalias() += (model.w * delta) * batch.transpose();
  g.db = delta.rowwise().sum();
  return g;
}

Matrix ae_encode(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                 std::span<const std::size_t> rows) {
  if (data.cols() != static_cast<std::size_t>(model.features())) {
    throw DimensionError("dataset has " + std::to_string(data.cols()) +
                         " features, model expects " + std::to_string(model.features()));
  }
  SLAB_REQUIRE(!rows.empty(), "batch must not be empty");
  Matrix hidden = Matrix::Zero(model.latent(), static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    auto h = hidden.col(static_cast<Index>(j));
    for (const auto c : data.row(rows[j])) h += model.w.col(c);
  }
  return hidden;
}

AeForward ae_forward(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                     std::span<const std::size_t> rows) {
  return decode(model, ae_encode(model, data, rows));
}

double ae_loss(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
               std::span<const std::size_t> rows) {
  auto fw = ae_forward(model, data, rows);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (const auto c : data.row(rows[j])) fw.reconstruction(c, static_cast<Index>(j)) -= 1.0;
  }
  return fw.reconstruction.squaredNorm() / static_cast<double>(rows.size());
}

AeGradients ae_backward(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                        std::span<const std::size_t> rows) {
  auto fw = ae_forward(model, data, rows);
  Matrix& delta = fw.reconstruction;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (const auto c : data.row(rows[j])) delta(c, static_cast<Index>(j)) -= 1.0;
  }
  AeGradients g;
  g.loss = residual_to_delta(model, fw.preactivation, delta);
  g.dw.noalias() = fw.hidden * delta.transpose();
  const Matrix back = model.w * delta;  // m x B
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (const auto c : data.row(rows[j])) g.dw.col(c) += back.col(static_cast<Index>(j));
  }
  g.db = delta.rowwise().sum();
  return g;
}

double ae_dataset_loss(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                       std::size_t chunk) {
  SLAB_REQUIRE(data.rows() > 0 && chunk > 0, "empty dataset");
  std::vector<std::size_t> rows;
  double total = 0.0;
  for (std::size_t start = 0; start < data.rows(); start += chunk) {
    const std::size_t end = std::min(data.rows(), start + chunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    total += ae_loss(model, data, rows) * static_cast<double>(rows.size());
  }
  return total / static_cast<double>(data.rows());
}

}  // namespace slab::models
