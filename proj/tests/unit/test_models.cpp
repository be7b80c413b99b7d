#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "slab/error.hpp"
#include "slab/models.hpp"
#include "slab/rng.hpp"
#include "slab/synthdata.hpp"
#include "../support/gradcheck.hpp"

using namespace slab;
using namespace slab::models;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "slab-unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

SparseBinaryMatrix random_sparse(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
  RandomStream rng(seed, 3);
  SparseBinaryMatrix out(cols);
  std::vector<std::uint32_t> active;
  for (std::size_t r = 0; r < rows; ++r) {
    active.clear();
    for (std::uint32_t c = 0; c < cols; ++c) {
      if (rng.uniform() < p) active.push_back(c);
    }
    out.append_row(active);
  }
  return out;
}

// Tolerance for a finite-difference comparison: a step of h = 1e-5 can move a
// pre-activation by O(1e-4), so only instances with a larger margin get the
// tight bound.
double grad_tolerance(double kink_margin) { return kink_margin > 1e-3 ? 1e-4 : 1e-3; }

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("autoencoder gradients match central differences") {
    for (const auto act : {Activation::kIdentity, Activation::kRelu}) {
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto r = testing::check_autoencoder(3 + seed % 4, 6 + seed % 5, 5, act, seed);
        INFO("seed " << seed << " activation " << to_string(act));
        CHECK(r.rel_error <= grad_tolerance(r.kink_margin));
      }
    }
  }

  TEST_CASE("classifier gradients match central differences") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      const auto r = testing::check_classifier(7, 3, {5, 4}, 7, 6, seed);
      INFO("seed " << seed);
      CHECK(r.rel_error <= grad_tolerance(r.kink_margin));
    }
  }

  TEST_CASE("sparse and dense autoencoder paths agree") {
    const auto data = random_sparse(40, 15, 0.3, 9);
    auto model = TiedAutoencoder::random(6, 15, Activation::kRelu, 4);
    model.b.setConstant(-0.1);
    std::vector<std::size_t> rows(data.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const Matrix dense = data.to_dense().transpose();
    const auto gs = ae_backward(model, data, rows);
    const auto gd = ae_backward(model, dense);
    CHECK(std::abs(gs.loss - gd.loss) <= 1e-12 * std::max(1.0, gd.loss));
    CHECK((gs.dw - gd.dw).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((gs.db - gd.db).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(ae_dataset_loss(model, data, 7) == doctest::Approx(gd.loss).epsilon(1e-12));
    const auto fs = ae_forward(model, data, rows);
    const auto fd = ae_forward(model, dense);
    CHECK((fs.reconstruction - fd.reconstruction).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("identity weights and bias -1 give zero reconstruction under ReLU") {
    TiedAutoencoder model(4, 4, Activation::kRelu);
    model.w = Matrix::Identity(4, 4);
    model.b.setConstant(-1.0);
    Matrix x = Matrix::Zero(4, 2);
    x(0, 0) = 1.0;
    x(1, 1) = 1.0;
    x(3, 1) = 1.0;
    const auto f = ae_forward(model, x);
    CHECK(f.reconstruction.cwiseAbs().maxCoeff() == 0.0);
    // With everything clipped the loss is the number of active bits per sample.
    CHECK(ae_loss(model, x) == doctest::Approx(1.5));
  }

  TEST_CASE("zero model loss is the mean active count and db is the mean residual") {
    TiedAutoencoder model(3, 5, Activation::kIdentity);
    Matrix x = Matrix::Zero(5, 4);
    x(0, 0) = x(1, 0) = x(2, 1) = x(4, 2) = x(3, 3) = x(4, 3) = x(0, 3) = 1.0;
    CHECK(ae_loss(model, x) == doctest::Approx(7.0 / 4.0));
    const auto g = ae_backward(model, x);
    // d/db of mean ||b - x||^2 at b = 0 is -2 mean(x).
    const Vector expect = -2.0 * x.rowwise().mean();
    CHECK((g.db - expect).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(g.dw.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("classifier output gradient is softmax minus one-hot") {
    MlpClassifier model(3, 2, {}, 3);
    model.embedding << 1, 0, 2, 0, 1, 1;
    model.output.w.setZero();
    model.output.b << 0.5, -0.5, 0.0;
    const std::vector<PairExample> batch = {{0, 1, 2}};
    const auto g = mlp_backward(model, batch);
    Vector p = model.output.b.array().exp();
    p /= p.sum();
    Vector expect = p;
    expect(2) -= 1.0;
    CHECK((g.grad.output.b - expect).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(g.loss == doctest::Approx(-std::log(p(2))).epsilon(1e-14));
    // Token 2 never appears in the batch.
    CHECK(g.grad.embedding.col(2).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("classifier rejects out-of-range tokens") {
    const auto model = MlpClassifier::random(5, 2, {3}, 5, 1);
    const std::vector<PairExample> bad = {{0, 5, 1}};
    CHECK_THROWS_AS(mlp_forward(model, bad), ContractError);
  }

  TEST_CASE("learning-rate schedule") {
    TrainConfig c;
    c.base_lr = 0.01;
    CHECK(learning_rate(c, 0, 100) == doctest::Approx(0.01));
    CHECK(learning_rate(c, 50, 100) == doctest::Approx(0.005));
    CHECK(learning_rate(c, 100, 100) == doctest::Approx(0.0).epsilon(1e-12));
    c.schedule = Schedule::kConstant;
    CHECK(learning_rate(c, 77, 100) == 0.01);
  }

  TEST_CASE("first Adam step moves each parameter by lr against the gradient sign") {
    std::vector<double> p = {1.0, -2.0, 0.5};
    const std::vector<double> g = {0.3, -4.0, 1e-3};
    std::vector<double> m(3, 0.0), v(3, 0.0);
    adam_update(p, g, m, v, 0.1, 0.0, 1);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx(0.4).epsilon(1e-4));

    // Decoupled decay shrinks before the moment update.
    std::vector<double> q = {2.0};
    std::vector<double> zero = {0.0}, mq = {0.0}, vq = {0.0};
    adam_update(q, zero, mq, vq, 0.1, 0.5, 1);
    CHECK(q[0] == doctest::Approx(2.0 * (1.0 - 0.05)));
  }

  TEST_CASE("training reduces the loss and adamw at zero decay equals adam") {
    synth::LatentCurveSpec spec;
    const auto data = synth::generate(spec, 100);
    TrainConfig c;
    c.epochs = 60;
    c.batch_size = 20;
    c.base_lr = 0.01;
    auto a = TiedAutoencoder::random(4, 12, Activation::kRelu, 1);
    const double before = ae_dataset_loss(a, data);
    auto b = a;
    const auto ra = train(a, data, c);
    CHECK(ra.steps == 300);
    CHECK_FALSE(ra.diverged);
    CHECK(ae_dataset_loss(a, data) < 0.6 * before);
    CHECK(ra.epoch_loss.back() < ra.epoch_loss.front());

    c.optimizer = Optimizer::kAdamW;
    train(b, data, c);
    CHECK(a.w == b.w);
    CHECK(a.b == b.b);
  }

  TEST_CASE("full-batch training with a small step decreases the loss monotonically") {
    synth::LatentCurveSpec spec;
    const auto data = synth::generate(spec, 200);
    TrainConfig c;
    c.epochs = 40;
    c.batch_size = 200;
    c.base_lr = 1e-3;
    c.schedule = Schedule::kConstant;
    auto model = TiedAutoencoder::random(3, 12, Activation::kIdentity, 2);
    const auto r = train(model, data, c);
    for (std::size_t k = 1; k < r.epoch_loss.size(); ++k) CHECK(r.epoch_loss[k] < r.epoch_loss[k - 1]);
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    synth::LatentCurveSpec spec;
    const auto data = synth::generate(spec, 300);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 32;
    auto a = TiedAutoencoder::random(4, 12, Activation::kRelu, 7);
    auto b = a;
    train(a, data, c);
    train(b, data, c);
    CHECK(a.w == b.w);
    c.seed = 8;
    auto d = TiedAutoencoder::random(4, 12, Activation::kRelu, 7);
    train(d, data, c);
    CHECK_FALSE(a.w == d.w);
  }

  TEST_CASE("classifier learns a small lookup table") {
    std::vector<PairExample> data;
    for (std::uint32_t a = 0; a < 5; ++a) {
      for (std::uint32_t b = 0; b < 5; ++b) data.push_back({a, b, (a + b) % 5});
    }
    auto model = MlpClassifier::random(5, 8, {32}, 5, 3);
    TrainConfig c;
    c.epochs = 400;
    c.batch_size = 25;
    c.base_lr = 0.01;
    train(model, data, c);
    const auto m = evaluate(model, data);
    CHECK(m.accuracy == 1.0);
    CHECK(m.loss < 0.1);
  }

  TEST_CASE("invalid training configurations are rejected") {
    TrainConfig c;
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = TrainConfig{};
    c.base_lr = -1.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = TrainConfig{};
    c.weight_decay = 0.1;
    CHECK(c.effective_optimizer() == Optimizer::kAdamW);
    CHECK(parse_schedule("constant") == Schedule::kConstant);
    CHECK_THROWS_AS(parse_optimizer("sgd"), ContractError);
    CHECK(parse_activation("relu") == Activation::kRelu);
  }

  TEST_CASE("checkpoint round trip") {
    const auto ae = TiedAutoencoder::random(5, 9, Activation::kRelu, 11);
    const auto path = temp_file("ae.slab");
    save_checkpoint(ae, path, "latent=5", 11);
    const auto back = load_autoencoder(path);
    CHECK(back.model.w == ae.w);
    CHECK(back.model.b == ae.b);
    CHECK(back.model.activation == Activation::kRelu);
    CHECK(back.config_echo == "latent=5");
    CHECK(back.seed == 11);
    CHECK_THROWS(load_classifier(path));

    const auto mlp = MlpClassifier::random(6, 3, {4, 5}, 6, 2);
    const auto mpath = temp_file("mlp.slab");
    save_checkpoint(mlp, mpath);
    const auto mback = load_classifier(mpath);
    CHECK(mback.model.embedding == mlp.embedding);
    CHECK(mback.model.hidden_sizes() == mlp.hidden_sizes());
    CHECK(mback.model.output.w == mlp.output.w);
  }

  TEST_CASE("corrupted checkpoints are rejected") {
    const auto ae = TiedAutoencoder::random(3, 4, Activation::kIdentity, 1);
    const auto path = temp_file("corrupt.slab");
    save_checkpoint(ae, path);
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << b;
    };
    write(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_autoencoder(path), Error);
    std::string bad = bytes;
    bad[0] = 'X';
    write(bad);
    CHECK_THROWS_AS(load_autoencoder(path), Error);
    CHECK_THROWS_AS(load_autoencoder(temp_file("missing.slab")), IoError);
  }
}
