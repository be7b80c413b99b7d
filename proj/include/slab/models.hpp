#pragma once

// Trainable models: the tied-weight autoencoder sigma(W^T W f + b) and an
// embedding + ReLU MLP classifier over token pairs. Gradients are analytic;
// the optimizer is Adam/AdamW with an optional cosine learning-rate schedule.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slab/matrix.hpp"
#include "slab/sparse.hpp"

namespace slab::models {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1 };

const char* to_string(Activation a);
Activation parse_activation(std::string_view text);

// ---------------------------------------------------------------------------
// Tied autoencoder

class TiedAutoencoder {
 public:
  TiedAutoencoder() = default;
  // Zero weights and bias.
  TiedAutoencoder(Index m, Index d, Activation activation);
  // W ~ N(0, 1/m) drawn from the seed's init stream, b = 0.
  static TiedAutoencoder random(Index m, Index d, Activation activation, std::uint64_t seed);

  Index latent() const { return w.rows(); }
  Index features() const { return w.cols(); }
  Matrix gram() const { return w.transpose() * w; }

  Matrix w;  // m x d, column i is the direction of feature i
  Vector b;  // d
  Activation activation = Activation::kRelu;
};

struct AeForward {
  Matrix hidden;          // m x B
  Matrix preactivation;   // d x B
  Matrix reconstruction;  // d x B
};

struct AeGradients {
  Matrix dw;
  Vector db;
  double loss = 0.0;
};

// Dense batches hold one sample per column (d x B).
AeForward ae_forward(const TiedAutoencoder& model, const Matrix& batch);
double ae_loss(const TiedAutoencoder& model, const Matrix& batch);
AeGradients ae_backward(const TiedAutoencoder& model, const Matrix& batch);

// Sparse batches are row subsets of a binary sample matrix; W f is the sum of
// the active columns.
Matrix ae_encode(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                 std::span<const std::size_t> rows);
AeForward ae_forward(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                     std::span<const std::size_t> rows);
double ae_loss(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
               std::span<const std::size_t> rows);
AeGradients ae_backward(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                        std::span<const std::size_t> rows);

// Mean loss over every row, evaluated in chunks.
double ae_dataset_loss(const TiedAutoencoder& model, const SparseBinaryMatrix& data,
                       std::size_t chunk = 1024);

// ---------------------------------------------------------------------------
// MLP classifier over token pairs

struct PairExample {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint32_t label = 0;
};

struct DenseLayer {
  Matrix w;  // out x in
  Vector b;  // out
};

class MlpClassifier {
 public:
  MlpClassifier() = default;
  // Zero parameters with the given shape.
  MlpClassifier(Index num_tokens, Index width, std::vector<Index> hidden_sizes, Index num_classes);
  // N(0, 1/fan_in) weights (embedding fan-in is taken as 1), zero biases.
  static MlpClassifier random(Index num_tokens, Index width, std::vector<Index> hidden_sizes,
                              Index num_classes, std::uint64_t seed);

  Index num_tokens() const { return embedding.cols(); }
  Index width() const { return embedding.rows(); }
  Index num_classes() const { return output.w.rows(); }
  std::vector<Index> hidden_sizes() const;

  // Same shape, all zeros.
  MlpClassifier zeros_like() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  Matrix embedding;  // width x num_tokens, column t is token t
  std::vector<DenseLayer> hidden;
  DenseLayer output;
};

// Logits (classes x B) for a batch of pairs. Throws ContractError on
// out-of-range token ids.
Matrix mlp_forward(const MlpClassifier& model, std::span<const PairExample> batch);
double mlp_loss(const MlpClassifier& model, std::span<const PairExample> batch);

struct MlpGradients {
  MlpClassifier grad;  // same shape as the model
  double loss = 0.0;
};

MlpGradients mlp_backward(const MlpClassifier& model, std::span<const PairExample> batch);

struct ClassifierMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

ClassifierMetrics evaluate(const MlpClassifier& model, std::span<const PairExample> data,
                           std::size_t chunk = 4096);

// ---------------------------------------------------------------------------
// Training

enum class Schedule { kCosine, kConstant };
enum class Optimizer { kAdam, kAdamW };

const char* to_string(Schedule s);
const char* to_string(Optimizer o);
Schedule parse_schedule(std::string_view text);
Optimizer parse_optimizer(std::string_view text);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 1024;
  double base_lr = 1e-3;
  Schedule schedule = Schedule::kCosine;
  double weight_decay = 0.0;
  Optimizer optimizer = Optimizer::kAdam;
  std::uint64_t seed = 42;
  bool shuffle = true;
  // Per-epoch progress lines on stderr.
  bool verbose = false;

  // Weight decay is always decoupled, so any positive decay means AdamW.
  Optimizer effective_optimizer() const {
    return weight_decay > 0.0 ? Optimizer::kAdamW : optimizer;
  }
  void validate() const;
};

// lr at step t of T.
double learning_rate(const TrainConfig& config, std::size_t step, std::size_t total_steps);

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam(W) update of a flat parameter block. `step` counts from 1.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, double lr, double weight_decay, std::size_t step,
                 const AdamConstants& c = {});

struct TrainResult {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> eval;        // optional per-epoch evaluation metric
  std::size_t steps = 0;
  // A non-finite loss stopped training; the model holds the last finite
  // end-of-epoch parameters.
  bool diverged = false;
};

// Called after each epoch with (epoch, mean loss); its return value is
// appended to TrainResult::eval.
using EpochHook = std::function<double(std::size_t, double)>;

TrainResult train(TiedAutoencoder& model, const SparseBinaryMatrix& data,
                  const TrainConfig& config, const EpochHook& hook = {});
TrainResult train(TiedAutoencoder& model, const Matrix& samples_as_rows,
                  const TrainConfig& config, const EpochHook& hook = {});
TrainResult train(MlpClassifier& model, std::span<const PairExample> data,
                  const TrainConfig& config, const EpochHook& hook = {});

// ---------------------------------------------------------------------------
// Checkpoints

template <typename Model>
struct Checkpoint {
  Model model;
  std::string config_echo;
  std::uint64_t seed = 0;
};

void save_checkpoint(const TiedAutoencoder& model, const std::filesystem::path& path,
                     std::string_view config_echo = {}, std::uint64_t seed = 0);
void save_checkpoint(const MlpClassifier& model, const std::filesystem::path& path,
                     std::string_view config_echo = {}, std::uint64_t seed = 0);
Checkpoint<TiedAutoencoder> load_autoencoder(const std::filesystem::path& path);
Checkpoint<MlpClassifier> load_classifier(const std::filesystem::path& path);

}  // namespace slab::models
