#include "slab/binary_io.hpp"
#include "slab/error.hpp"
#include "slab/models.hpp"

namespace slab::models {

namespace {

constexpr char kMagic[] = "SLAB";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindAutoencoder = 1;
constexpr std::uint32_t kKindClassifier = 2;

// Row-major order, so the file layout does not depend on Eigen's storage.
void put_matrix(io::BinaryWriter& w, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
  }
}

void get_matrix(io::BinaryReader& r, Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  }
}

void put_vector(io::BinaryWriter& w, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

void get_vector(io::BinaryReader& r, Vector& v) {
  for (Index i = 0; i < v.size(); ++i) v(i) = r.f64();
}

io::BinaryWriter header(std::uint32_t kind) {
  io::BinaryWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(kind);
  return w;
}

io::BinaryReader open(const std::filesystem::path& path, std::uint32_t kind) {
  auto r = io::BinaryReader::from_file(path);
  if (r.bytes(4) != std::string_view(kMagic, 4)) r.fail("missing SLAB magic");
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported checkpoint version " + std::to_string(v));
  if (const auto k = r.u32(); k != kind) {
    r.fail("checkpoint holds model kind " + std::to_string(k) + ", expected " + std::to_string(kind));
  }
  return r;
}

Index dim(io::BinaryReader& r, std::uint64_t limit = std::uint64_t{1} << 31) {
  const auto v = r.u64();
  if (v == 0 || v > limit) r.fail("implausible dimension " + std::to_string(v));
  return static_cast<Index>(v);
}

// Rejects headers whose parameter blocks cannot fit in the file before
// anything is allocated.
void need_values(io::BinaryReader& r, double count) {
  if (count * 8.0 > static_cast<double>(r.remaining())) r.fail("parameter blocks extend past end of file");
}

template <typename Model>
Checkpoint<Model> finish(io::BinaryReader& r, Model model) {
  Checkpoint<Model> out;
  out.model = std::move(model);
  out.config_echo = r.string();
  out.seed = r.u64();
  if (!r.at_end()) r.fail("trailing bytes after checkpoint");
  return out;
}

}  // namespace

void save_checkpoint(const TiedAutoencoder& model, const std::filesystem::path& path,
                     std::string_view config_echo, std::uint64_t seed) {
  auto w = header(kKindAutoencoder);
  w.u64(static_cast<std::uint64_t>(model.latent()));
  w.u64(static_cast<std::uint64_t>(model.features()));
  w.u8(static_cast<std::uint8_t>(model.activation));
  put_matrix(w, model.w);
  put_vector(w, model.b);
  w.string(config_echo);
  w.u64(seed);
  w.save(path);
}

Checkpoint<TiedAutoencoder> load_autoencoder(const std::filesystem::path& path) {
  auto r = open(path, kKindAutoencoder);
  const Index m = dim(r);
  const Index d = dim(r);
  const auto act = r.u8();
  if (act > 1) r.fail("unknown activation tag " + std::to_string(act));
  need_values(r, static_cast<double>(m) * static_cast<double>(d) + static_cast<double>(d));
  TiedAutoencoder model(m, d, static_cast<Activation>(act));
  get_matrix(r, model.w);
  get_vector(r, model.b);
  return finish(r, std::move(model));
}

void save_checkpoint(const MlpClassifier& model, const std::filesystem::path& path,
                     std::string_view config_echo, std::uint64_t seed) {
  auto w = header(kKindClassifier);
  w.u64(static_cast<std::uint64_t>(model.num_tokens()));
  w.u64(static_cast<std::uint64_t>(model.width()));
  w.u64(model.hidden.size());
  for (const auto& layer : model.hidden) w.u64(static_cast<std::uint64_t>(layer.w.rows()));
  w.u64(static_cast<std::uint64_t>(model.num_classes()));
  // One row per token.
  put_matrix(w, model.embedding.transpose());
  for (const auto& layer : model.hidden) {
    put_matrix(w, layer.w);
    put_vector(w, layer.b);
  }
  put_matrix(w, model.output.w);
  put_vector(w, model.output.b);
  w.string(config_echo);
  w.u64(seed);
  w.save(path);
}

Checkpoint<MlpClassifier> load_classifier(const std::filesystem::path& path) {
  auto r = open(path, kKindClassifier);
  const Index tokens = dim(r);
  const Index width = dim(r);
  const auto depth = r.u64();
  if (depth > 64) r.fail("implausible hidden layer count");
  std::vector<Index> sizes;
  for (std::uint64_t i = 0; i < depth; ++i) sizes.push_back(dim(r));
  const Index classes = dim(r);
  if (classes < 2) r.fail("classifier needs at least two classes");
  double count = static_cast<double>(tokens) * static_cast<double>(width);
  double in = 2.0 * static_cast<double>(width);
  for (const Index h : sizes) {
    count += (in + 1.0) * static_cast<double>(h);
    in = static_cast<double>(h);
  }
  need_values(r, count + (in + 1.0) * static_cast<double>(classes));
  MlpClassifier model(tokens, width, sizes, classes);
  Matrix table(tokens, width);
  get_matrix(r, table);
  model.embedding = table.transpose();
  for (auto& layer : model.hidden) {
    get_matrix(r, layer.w);
    get_vector(r, layer.b);
  }
  get_matrix(r, model.output.w);
  get_vector(r, model.output.b);
  return finish(r, std::move(model));
}

}  // namespace slab::models
