#include <cmath>

#include "slab/error.hpp"
#include "slab/models.hpp"
#include "slab/rng.hpp"

namespace slab::models {

MlpClassifier::MlpClassifier(Index num_tokens, Index width, std::vector<Index> hidden_sizes,
                             Index num_classes) {
  SLAB_REQUIRE(num_tokens >= 1 && width >= 1 && num_classes >= 2, "invalid classifier shape");
  embedding = Matrix::Zero(width, num_tokens);
  Index in = 2 * width;
  for (const Index h : hidden_sizes) {
    SLAB_REQUIRE(h >= 1, "hidden layer sizes must be positive");
    hidden.push_back({Matrix::Zero(h, in), Vector::Zero(h)});
    in = h;
  }
  output = {Matrix::Zero(num_classes, in), Vector::Zero(num_classes)};
}

MlpClassifier MlpClassifier::random(Index num_tokens, Index width, std::vector<Index> hidden_sizes,
                                    Index num_classes, std::uint64_t seed) {
  MlpClassifier model(num_tokens, width, std::move(hidden_sizes), num_classes);
  RandomStream rng(seed, streams::kInit);
  auto fill = [&](Matrix& m, double sd) {
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = sd * rng.normal();
  };
  fill(model.embedding, 1.0);
  for (auto& layer : model.hidden) fill(layer.w, 1.0 / std::sqrt(static_cast<double>(layer.w.cols())));
  fill(model.output.w, 1.0 / std::sqrt(static_cast<double>(model.output.w.cols())));
  return model;
}

std::vector<Index> MlpClassifier::hidden_sizes() const {
  std::vector<Index> sizes;
  for (const auto& layer : hidden) sizes.push_back(layer.w.rows());
  return sizes;
}

MlpClassifier MlpClassifier::zeros_like() const {
  return MlpClassifier(num_tokens(), width(), hidden_sizes(), num_classes());
}

std::size_t MlpClassifier::parameter_count() const {
  auto n = static_cast<std::size_t>(embedding.size() + output.w.size() + output.b.size());
  for (const auto& layer : hidden) n += static_cast<std::size_t>(layer.w.size() + layer.b.size());
  return n;
}

bool MlpClassifier::all_finite() const {
  bool ok = embedding.allFinite() && output.w.allFinite() && output.b.allFinite();
  for (const auto& layer : hidden) ok = ok && layer.w.allFinite() && layer.b.allFinite();
  return ok;
}

namespace {

struct MlpTrace {
  std::vector<Matrix> activations;  // input, then each hidden layer output
  std::vector<Matrix> pre;          // hidden pre-activations
  Matrix logits;
};

MlpTrace run_forward(const MlpClassifier& model, std::span<const PairExample> batch) {
  SLAB_REQUIRE(!batch.empty(), "batch must not be empty");
  const Index k = model.width();
  const auto n = static_cast<Index>(batch.size());
  Matrix x(2 * k, n);
  for (Index j = 0; j < n; ++j) {
    const auto& ex = batch[static_cast<std::size_t>(j)];
    if (ex.a >= model.num_tokens() || ex.b >= model.num_tokens()) {
      throw ContractError("token id out of range");
    }
    x.col(j).head(k) = model.embedding.col(ex.a);
    x.col(j).tail(k) = model.embedding.col(ex.b);
  }
  MlpTrace t;
  t.activations.push_back(std::move(x));
  for (const auto& layer : model.hidden) {
    Matrix z = layer.w * t.activations.back();
    z.colwise() += layer.b;
    t.activations.push_back(z.cwiseMax(0.0));
    t.pre.push_back(std::move(z));
  }
  t.logits.noalias() = model.output.w * t.activations.back();
  t.logits.colwise() += model.output.b;
  return t;
}

// Softmax probabilities in place; returns summed cross-entropy.
double softmax_cross_entropy(Matrix& logits, std::span<const PairExample> batch) {
  double total = 0.0;
  for (Index j = 0; j < logits.cols(); ++j) {
    auto col = logits.col(j);
    const std::uint32_t label = batch[static_cast<std::size_t>(j)].label;
    SLAB_REQUIRE(label < logits.rows(), "label out of range");
    const double mx = col.maxCoeff();
    col.array() = (col.array() - mx).exp();
    const double z = col.sum();
    total += std::log(z) - std::log(col(label));
    col /= z;
  }
  return total;
}

}  // namespace

Matrix mlp_forward(const MlpClassifier& model, std::span<const PairExample> batch) {
  return run_forward(model, batch).logits;
}

double mlp_loss(const MlpClassifier& model, std::span<const PairExample> batch) {
  Matrix logits = mlp_forward(model, batch);
  return softmax_cross_entropy(logits, batch) / static_cast<double>(batch.size());
}

MlpGradients mlp_backward(const MlpClassifier& model, std::span<const PairExample> batch) {
  auto t = run_forward(model, batch);
  const auto n = static_cast<double>(batch.size());
  MlpGradients g{model.zeros_like(), 0.0};
  Matrix delta = std::move(t.logits);
  g.loss = softmax_cross_entropy(delta, batch) / n;
  for (Index j = 0; j < delta.cols(); ++j) delta(batch[static_cast<std::size_t>(j)].label, j) -= 1.0;
  delta /= n;

  g.grad.output.w.noalias() = delta * t.activations.back().transpose();
  g.grad.output.b = delta.rowwise().sum();
  Matrix up = model.output.w.transpose() * delta;
  for (std::size_t l = model.hidden.size(); l-- > 0;) {
    up = (t.pre[l].array() > 0.0).select(up, 0.0);
    g.grad.hidden[l].w.noalias() = up * t.activations[l].transpose();
    g.grad.hidden[l].b = up.rowwise().sum();
    up = model.hidden[l].w.transpose() * up;
  }
  const Index k = model.width();
  for (Index j = 0; j < up.cols(); ++j) {
    const auto& ex = batch[static_cast<std::size_t>(j)];
    g.grad.embedding.col(ex.a) += up.col(j).head(k);
    g.grad.embedding.col(ex.b) += up.col(j).tail(k);
  }
  return g;
}

ClassifierMetrics evaluate(const MlpClassifier& model, std::span<const PairExample> data,
                           std::size_t chunk) {
  SLAB_REQUIRE(!data.empty(), "evaluation set is empty");
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const auto part = data.subspan(start, std::min(chunk, data.size() - start));
    Matrix logits = mlp_forward(model, part);
    for (Index j = 0; j < logits.cols(); ++j) {
      Index arg;
      logits.col(j).maxCoeff(&arg);
      if (arg == part[static_cast<std::size_t>(j)].label) ++correct;
    }
    loss += softmax_cross_entropy(logits, part);
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace slab::models
