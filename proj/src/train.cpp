#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "slab/error.hpp"
#include "slab/models.hpp"
#include "slab/rng.hpp"

namespace slab::models {

const char* to_string(Schedule s) { return s == Schedule::kCosine ? "cosine" : "constant"; }
const char* to_string(Optimizer o) { return o == Optimizer::kAdamW ? "adamw" : "adam"; }

Schedule parse_schedule(std::string_view text) {
  if (text == "cosine") return Schedule::kCosine;
  if (text == "constant") return Schedule::kConstant;
  throw ContractError("unknown schedule '" + std::string(text) + "'");
}

Optimizer parse_optimizer(std::string_view text) {
  if (text == "adam") return Optimizer::kAdam;
  if (text == "adamw") return Optimizer::kAdamW;
  throw ContractError("unknown optimizer '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  SLAB_REQUIRE(epochs >= 1, "epochs must be at least 1");
  SLAB_REQUIRE(batch_size >= 1, "batch size must be at least 1");
  SLAB_REQUIRE(base_lr > 0.0 && std::isfinite(base_lr), "learning rate must be positive");
  SLAB_REQUIRE(weight_decay >= 0.0 && std::isfinite(weight_decay),
               "weight decay must be non-negative");
}

double learning_rate(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  if (config.schedule == Schedule::kConstant || total_steps == 0) return config.base_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, double lr, double weight_decay, std::size_t step,
                 const AdamConstants& c) {
  SLAB_REQUIRE(param.size() == grad.size() && m.size() == param.size() && v.size() == param.size(),
               "optimizer state size mismatch");
  SLAB_REQUIRE(step >= 1, "optimizer steps count from 1");
  const double t = static_cast<double>(step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  const double shrink = lr * weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    if (weight_decay > 0.0) param[i] -= shrink * param[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / corr1;
    const double vhat = v[i] / corr2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

namespace {

template <typename M>
std::span<double> flat(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename M>
std::span<const double> flat(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

std::vector<std::span<double>> blocks(TiedAutoencoder& m) { return {flat(m.w), flat(m.b)}; }
std::vector<std::span<const double>> blocks(const AeGradients& g) {
  return {flat(g.dw), flat(g.db)};
}

std::vector<std::span<double>> blocks(MlpClassifier& m) {
  std::vector<std::span<double>> out{flat(m.embedding)};
  for (auto& layer : m.hidden) {
    out.push_back(flat(layer.w));
    out.push_back(flat(layer.b));
  }
  out.push_back(flat(m.output.w));
  out.push_back(flat(m.output.b));
  return out;
}
std::vector<std::span<const double>> blocks(const MlpGradients& g) {
  const MlpClassifier& m = g.grad;
  std::vector<std::span<const double>> out{flat(m.embedding)};
  for (const auto& layer : m.hidden) {
    out.push_back(flat(layer.w));
    out.push_back(flat(layer.b));
  }
  out.push_back(flat(m.output.w));
  out.push_back(flat(m.output.b));
  return out;
}

bool all_finite(const std::vector<std::span<const double>>& bs) {
  for (const auto& b : bs) {
    for (const double x : b) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

// Shared minibatch loop. `gradient(rows)` returns an object with a `loss`
// member and a blocks() overload matching the model's parameter order.
template <typename Model, typename GradientFn>
TrainResult run_loop(Model& model, std::size_t n, const TrainConfig& config,
                     const EpochHook& hook, GradientFn&& gradient) {
  config.validate();
  SLAB_REQUIRE(n >= 1, "training set is empty");
  const double decay = config.effective_optimizer() == Optimizer::kAdamW ? config.weight_decay : 0.0;
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total = per_epoch * config.epochs;

  auto params = blocks(model);
  std::vector<std::vector<double>> m1, m2;
  for (const auto& p : params) {
    m1.emplace_back(p.size(), 0.0);
    m2.emplace_back(p.size(), 0.0);
  }

  TrainResult result;
  Model snapshot = model;
  std::vector<std::size_t> order(n);
  const auto started = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < config.epochs && !result.diverged; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle) {
      RandomStream rng(config.seed, streams::kShuffle + epoch);
      rng.shuffle(std::span<std::size_t>(order));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < per_epoch; ++k) {
      const std::size_t begin = k * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const auto g = gradient(std::span<const std::size_t>(order.data() + begin, end - begin));
      const auto gb = blocks(g);
      if (!std::isfinite(g.loss) || !all_finite(gb)) {
        model = snapshot;
        result.diverged = true;
        break;
      }
      const double lr = learning_rate(config, result.steps, total);
      ++result.steps;
      for (std::size_t i = 0; i < params.size(); ++i) {
        adam_update(params[i], gb[i], m1[i], m2[i], lr, decay, result.steps);
      }
      sum += g.loss;
    }
    if (result.diverged) break;
    const double mean = sum / static_cast<double>(per_epoch);
    result.epoch_loss.push_back(mean);
    if (hook) result.eval.push_back(hook(epoch, mean));
    snapshot = model;
    if (config.verbose) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::fprintf(stderr, "epoch %zu/%zu loss %.6g%s (%.1fs)\n", epoch + 1, config.epochs, mean,
                   hook ? (" eval " + std::to_string(result.eval.back())).c_str() : "", secs);
    }
  }
  return result;
}

}  // namespace

TrainResult train(TiedAutoencoder& model, const SparseBinaryMatrix& data, const TrainConfig& config,
                  const EpochHook& hook) {
  return run_loop(model, data.rows(), config, hook, [&](std::span<const std::size_t> rows) {
    return ae_backward(model, data, rows);
  });
}

TrainResult train(TiedAutoencoder& model, const Matrix& samples_as_rows, const TrainConfig& config,
                  const EpochHook& hook) {
  if (samples_as_rows.cols() != model.features()) {
    throw DimensionError("sample width does not match the model");
  }
  Matrix batch;
  return run_loop(model, static_cast<std::size_t>(samples_as_rows.rows()), config, hook,
                  [&](std::span<const std::size_t> rows) {
                    batch.resize(model.features(), static_cast<Index>(rows.size()));
                    for (std::size_t j = 0; j < rows.size(); ++j) {
                      batch.col(static_cast<Index>(j)) =
                          samples_as_rows.row(static_cast<Index>(rows[j])).transpose();
                    }
                    return ae_backward(model, batch);
                  });
}

TrainResult train(MlpClassifier& model, std::span<const PairExample> data,
                  const TrainConfig& config, const EpochHook& hook) {
  std::vector<PairExample> batch;
  return run_loop(model, data.size(), config, hook, [&](std::span<const std::size_t> rows) {
    batch.clear();
    for (const auto r : rows) batch.push_back(data[r]);
    return mlp_backward(model, batch);
  });
}

}  // namespace slab::models
