#include "slab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <sstream>

#include "slab/binary_io.hpp"
#include "slab/corpus.hpp"
#include "slab/diagnostics.hpp"
#include "slab/error.hpp"
#include "slab/export.hpp"
#include "slab/linalg.hpp"
#include "slab/models.hpp"
#include "slab/rng.hpp"
#include "slab/synthdata.hpp"
#include "slab/tasks.hpp"

namespace slab::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& message) : Error("schema", message) {}
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Params

Params::Params(const std::vector<ParamSpec>& schema) {
  for (const auto& spec : schema) values_[spec.key] = spec.default_value;
}

void Params::set(const std::string& key, std::string value) {
  if (!has(key)) throw SchemaError("unknown key '" + key + "'");
  values_[key] = std::move(value);
}

const std::string& Params::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw SchemaError("unknown key '" + key + "'");
  return it->second;
}

double Params::real(const std::string& key) const {
  const auto& s = str(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw SchemaError("key '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

long long Params::integer(const std::string& key) const {
  const auto& s = str(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw SchemaError("key '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

std::size_t Params::count(const std::string& key) const {
  const long long v = integer(key);
  if (v < 0) throw SchemaError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool Params::flag(const std::string& key) const {
  const auto& s = str(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw SchemaError("key '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<std::string> Params::list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string Params::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void apply_config_text(Params& params, std::string_view text) {
  std::stringstream ss{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw SchemaError("config line " + std::to_string(number) + " is not key=value");
    }
    params.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

std::vector<long long> parse_int_list(std::string_view text) {
  std::vector<long long> out;
  auto number = [&](std::string_view s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw SchemaError("bad integer '" + std::string(s) + "' in list");
    }
    return v;
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string item = trim(text.substr(start, end - start));
    if (!item.empty()) {
      const auto dots = item.find("..");
      if (dots == std::string::npos) {
        out.push_back(number(item));
      } else {
        const long long lo = number(std::string_view(item).substr(0, dots));
        const long long hi = number(std::string_view(item).substr(dots + 2));
        if (hi < lo) throw SchemaError("empty range '" + item + "'");
        for (long long v = lo; v <= hi; ++v) out.push_back(v);
      }
    }
    start = end + 1;
  }
  if (out.empty()) throw SchemaError("empty integer list");
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

struct Run {
  std::string command;
  Params params;
  fs::path dir;
  json metrics = json::object();
  std::ostream* out = nullptr;

  fs::path file(const std::string& name) const { return dir / name; }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(params.integer("seed")); }
  unsigned workers() const {
    const auto w = params.count("workers");
    if (w == 0) throw SchemaError("workers must be at least 1");
    return static_cast<unsigned>(w);
  }
};

void write_text(const fs::path& path, std::string_view text) {
  io::BinaryWriter w;
  w.bytes(text);
  w.save(path);
}

fs::path make_run_dir(const std::string& command, std::uint64_t seed, const std::string& out_flag) {
  fs::path dir;
  if (!out_flag.empty()) {
    dir = out_flag;
  } else {
    const char* root = std::getenv("SLAB_OUTPUT_ROOT");
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const fs::path base = fs::path(root && *root ? root : "runs") /
                          (command + "-" + stamp + "-seed" + std::to_string(seed));
    dir = base;
    for (int k = 2; fs::exists(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  }
  fs::create_directories(dir);
  return dir;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const std::vector<std::string>& month_names() {
  static const std::vector<std::string> names = {
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  return names;
}

std::vector<Index> resolve_features(const std::vector<std::string>& items, const corpus::Vocab& vocab) {
  std::vector<Index> ids;
  auto add = [&](const std::string& item) {
    if (const auto id = vocab.index_of(item)) {
      ids.push_back(*id);
      return;
    }
    Index v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec == std::errc() && ptr == item.data() + item.size() && v >= 0 &&
        static_cast<std::size_t>(v) < vocab.size()) {
      ids.push_back(v);
      return;
    }
    throw DataError("feature '" + item + "' is not in the vocabulary");
  };
  for (const auto& item : items) {
    if (item == "months") {
      for (const auto& m : month_names()) add(m);
    } else if (item == "all") {
      for (std::size_t i = 0; i < vocab.size(); ++i) ids.push_back(static_cast<Index>(i));
    } else {
      add(item);
    }
  }
  if (ids.empty()) throw DataError("no features selected");
  return ids;
}

std::string label(const corpus::Vocab& vocab, Index i) {
  return static_cast<std::size_t>(i) < vocab.size() ? vocab.word(static_cast<std::size_t>(i))
                                                     : std::to_string(i);
}

models::TrainConfig train_config(const Params& p) {
  models::TrainConfig c;
  c.epochs = p.count("epochs");
  c.batch_size = p.count("batch");
  c.base_lr = p.real("lr");
  c.schedule = models::parse_schedule(p.str("schedule"));
  c.weight_decay = p.real("weight-decay");
  c.optimizer = models::parse_optimizer(p.str("optimizer"));
  c.seed = static_cast<std::uint64_t>(p.integer("seed"));
  c.shuffle = p.flag("shuffle");
  c.verbose = p.flag("verbose");
  c.validate();
  return c;
}

const std::vector<ParamSpec> kTrainKeys = {
    {"epochs", "20", "training epochs"},
    {"batch", "1024", "minibatch size"},
    {"lr", "0.001", "base learning rate"},
    {"schedule", "cosine", "cosine|constant"},
    {"weight-decay", "0", "decoupled weight decay (AdamW when > 0)"},
    {"optimizer", "adam", "adam|adamw"},
    {"shuffle", "true", "reshuffle every epoch"},
    {"verbose", "false", "per-epoch progress on stderr"},
};

std::vector<ParamSpec> with(std::vector<ParamSpec> a, const std::vector<ParamSpec>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string require_path(const Params& p, const std::string& key) {
  const auto& v = p.str(key);
  if (v.empty()) throw SchemaError("missing required key '" + key + "'");
  if (!fs::exists(v)) throw IoError("input not found: " + v);
  return v;
}

json history_json(const models::TrainResult& r) {
  return {{"epochs_completed", r.epoch_loss.size()},
          {"steps", r.steps},
          {"diverged", r.diverged},
          {"final_loss", r.epoch_loss.empty() ? json(nullptr) : num(r.epoch_loss.back())}};
}

// ---------------------------------------------------------------------------
// Commands

void cmd_build_corpus(Run& run) {
  const auto& p = run.params;
  const auto text = corpus::read_text(require_path(p, "input"));
  const auto mode = p.str("mode") == "paragraph" ? corpus::SegmentMode::kParagraph
                                                 : (p.str("mode") == "line"
                                                        ? corpus::SegmentMode::kLine
                                                        : throw SchemaError("mode must be line or paragraph"));
  auto records = corpus::segment_records(text, mode);
  if (const auto cap = p.count("max-records"); cap > 0 && records.size() > cap) records.resize(cap);

  corpus::StopwordList custom;
  const corpus::StopwordList* stop = &corpus::builtin_stopwords();
  if (p.str("stopwords") != "builtin") {
    custom = corpus::load_stopwords(p.str("stopwords"));
    stop = &custom;
  }
  corpus::Vocab vocab;
  if (!p.str("vocab-from").empty()) {
    vocab = corpus::load_dataset(require_path(p, "vocab-from")).vocab;
  } else {
    vocab = corpus::build_vocab(records, p.count("vocab"), *stop, run.workers());
  }
  const auto split = corpus::parse_split(p.str("split"));
  const auto ds = corpus::encode_bows(records, vocab, static_cast<std::uint32_t>(p.count("context")),
                                      static_cast<std::uint32_t>(p.count("stride")), split,
                                      run.workers());
  corpus::save_dataset(ds, run.file("dataset.bows"));

  const auto hist = corpus::word_frequency_histogram(ds);
  io::CsvWriter csv({"rank", "word", "count"});
  for (std::size_t r = 0; r < hist.size(); ++r) {
    csv.row({std::to_string(r + 1), hist[r].first, std::to_string(hist[r].second)});
  }
  csv.save(run.file("histogram.csv"));

  run.metrics["records"] = records.size();
  run.metrics["samples"] = ds.size();
  run.metrics["vocab_size"] = ds.vocab.size();
  run.metrics["short_vocab"] = vocab.short_vocab;
  run.metrics["dropped_windows"] = ds.dropped_windows;
  run.metrics["nnz"] = ds.samples.nnz();
  run.metrics["stopword_list"] = vocab.stopword_list_id().empty() ? stop->id : vocab.stopword_list_id();
  if (hist.size() >= 2) {
    const auto fit = corpus::fit_rank_frequency(hist, std::min<std::size_t>(1000, hist.size()));
    run.metrics["powerlaw_slope"] = num(fit.slope);
    run.metrics["powerlaw_r2"] = num(fit.r_squared);
  }
}

void cmd_gen_synth(Run& run) {
  const auto& p = run.params;
  synth::LatentCurveSpec spec;
  spec.kind = synth::parse_curve_kind(p.str("kind"));
  spec.num_features = p.count("features");
  spec.sharpness = p.real("beta");
  spec.base_logit = p.real("bias");
  spec.angle_noise = p.real("noise");
  spec.seed = run.seed();
  spec.cycle_positions = p.flag("cycle");
  auto samples = synth::generate(spec, p.count("n"), run.workers());
  const double mean_active = static_cast<double>(samples.nnz()) / static_cast<double>(samples.rows());
  const auto ds = synth::to_dataset(spec, std::move(samples));
  corpus::save_dataset(ds, run.file("dataset.bows"));
  run.metrics["samples"] = ds.size();
  run.metrics["features"] = spec.num_features;
  run.metrics["mean_active_bits"] = mean_active;
}

void cmd_gen_task(Run& run) {
  const auto& p = run.params;
  tasks::PairDataset data;
  if (p.str("task") == "modadd") {
    data = tasks::gen_modadd(static_cast<std::uint32_t>(p.count("modulus")), p.real("train-fraction"),
                             run.seed());
  } else if (p.str("task") == "map") {
    const auto table = tasks::load_cities(require_path(p, "cities"), p.count("top-k"));
    run.metrics["short_table"] = table.short_table;
    data = tasks::gen_map_pairs(table, p.count("n-train"), p.count("n-val"), run.seed());
  } else {
    throw SchemaError("task must be modadd or map");
  }
  tasks::save_pairs(data, run.file("pairs.bows"));
  std::vector<std::size_t> hist(data.num_classes, 0);
  for (const auto& ex : data.examples) ++hist[ex.label];
  run.metrics["tokens"] = data.num_tokens;
  run.metrics["classes"] = data.num_classes;
  run.metrics["train"] = data.train().size();
  run.metrics["validation"] = data.validation().size();
  run.metrics["class_histogram"] = hist;
}

void cmd_train_ae(Run& run) {
  const auto& p = run.params;
  const auto data = corpus::load_dataset(require_path(p, "data"));
  const auto config = train_config(p);
  auto model = models::TiedAutoencoder::random(static_cast<Index>(p.count("latent")),
                                               static_cast<Index>(data.vocab.size()),
                                               models::parse_activation(p.str("activation")),
                                               run.seed());
  std::optional<corpus::BowsDataset> val;
  if (!p.str("validation").empty()) val = corpus::load_dataset(require_path(p, "validation"));
  models::EpochHook hook;
  if (val) hook = [&](std::size_t, double) { return models::ae_dataset_loss(model, val->samples); };
  const auto result = models::train(model, data.samples, config, hook);
  models::save_checkpoint(model, run.file("model.slab"), p.echo(), run.seed());

  io::CsvWriter csv(val ? std::vector<std::string>{"epoch", "loss", "validation_loss"}
                        : std::vector<std::string>{"epoch", "loss"});
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::vector<std::string> row{std::to_string(e + 1), io::format_double(result.epoch_loss[e])};
    if (val) row.push_back(io::format_double(result.eval[e]));
    csv.row(std::move(row));
  }
  csv.save(run.file("history.csv"));
  run.metrics = history_json(result);
  run.metrics["w_frobenius_sq"] = num(model.w.squaredNorm());
  if (val && !result.eval.empty()) run.metrics["validation_loss"] = num(result.eval.back());
}

std::vector<Index> parse_hidden(const Params& p) {
  std::vector<Index> sizes;
  if (p.str("hidden").empty()) return sizes;
  for (const auto v : parse_int_list(p.str("hidden"))) {
    if (v < 1) throw SchemaError("hidden layer sizes must be positive");
    sizes.push_back(static_cast<Index>(v));
  }
  return sizes;
}

void cmd_train_task(Run& run) {
  const auto& p = run.params;
  const auto data = tasks::load_pairs(require_path(p, "data"));
  const auto train = data.train();
  const auto val = data.validation();
  if (train.empty()) throw DataError("pair dataset has no training examples");
  const auto config = train_config(p);
  auto model = models::MlpClassifier::random(data.num_tokens, static_cast<Index>(p.count("width")),
                                             parse_hidden(p), data.num_classes, run.seed());
  models::EpochHook hook;
  if (!val.empty()) hook = [&](std::size_t, double) { return models::evaluate(model, val).accuracy; };
  const auto result = models::train(model, train, config, hook);
  models::save_checkpoint(model, run.file("model.slab"), p.echo(), run.seed());

  io::CsvWriter csv(!val.empty() ? std::vector<std::string>{"epoch", "loss", "validation_accuracy"}
                                 : std::vector<std::string>{"epoch", "loss"});
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::vector<std::string> row{std::to_string(e + 1), io::format_double(result.epoch_loss[e])};
    if (!val.empty()) row.push_back(io::format_double(result.eval[e]));
    csv.row(std::move(row));
  }
  csv.save(run.file("history.csv"));
  run.metrics = history_json(result);
  const auto tm = models::evaluate(model, train);
  run.metrics["train_loss"] = num(tm.loss);
  run.metrics["train_accuracy"] = num(tm.accuracy);
  if (!val.empty()) {
    const auto vm = models::evaluate(model, val);
    run.metrics["validation_loss"] = num(vm.loss);
    run.metrics["validation_accuracy"] = num(vm.accuracy);
  }
}

// ---------------------------------------------------------------------------
// diagnose

diag::ProbeOptions probe_options(const Params& p) {
  diag::ProbeOptions o;
  if (p.str("probe") == "trained") {
    o.method = diag::ProbeMethod::kTrained;
    o.train.seed = static_cast<std::uint64_t>(p.integer("seed"));
  } else if (p.str("probe") != "closed") {
    throw SchemaError("probe must be closed or trained");
  }
  return o;
}

void export_geometry(const diag::GeometryReport& g, const corpus::Vocab& vocab, const Run& run,
                     const std::string& name) {
  io::CsvWriter csv({"feature", "word", "pc1", "pc2", "norm"});
  for (std::size_t k = 0; k < g.members.size(); ++k) {
    const auto i = static_cast<Index>(k);
    csv.row({std::to_string(g.members[k]), label(vocab, g.members[k]), io::format_double(g.coords(i, 0)),
             io::format_double(g.coords(i, 1)), io::format_double(g.norms(i))});
  }
  csv.save(run.file(name));
}

Matrix city_coordinates(const tasks::CityTable& table) {
  Matrix coords(static_cast<Index>(table.cities.size()), 2);
  for (std::size_t i = 0; i < table.cities.size(); ++i) {
    coords(static_cast<Index>(i), 0) = table.cities[i].latitude;
    coords(static_cast<Index>(i), 1) = table.cities[i].longitude;
  }
  return coords;
}

diag::CoordinateProbe city_probe(const Params& p, const models::MlpClassifier& model, json& metrics) {
  const auto table = tasks::load_cities(require_path(p, "cities"),
                                         static_cast<std::size_t>(model.num_tokens()));
  if (table.cities.size() != static_cast<std::size_t>(model.num_tokens())) {
    throw DataError("city table has " + std::to_string(table.cities.size()) +
                    " rows but the model embeds " + std::to_string(model.num_tokens()) + " tokens");
  }
  std::vector<std::uint32_t> ids(table.cities.size());
  std::iota(ids.begin(), ids.end(), 0u);
  RandomStream rng(static_cast<std::uint64_t>(p.integer("seed")), streams::kSplit + 1);
  rng.shuffle(std::span<std::uint32_t>(ids));
  const auto held = static_cast<std::size_t>(std::llround(p.real("heldout-fraction") * ids.size()));
  const std::span<const std::uint32_t> all(ids);
  const auto probe = diag::coordinate_probe(model.embedding, city_coordinates(table),
                                            all.subspan(held), all.first(held), p.real("ridge"));
  metrics["coordinate_r2_latitude"] = num(probe.r2_heldout(0));
  metrics["coordinate_r2_longitude"] = num(probe.r2_heldout(1));
  metrics["coordinate_r2_mean"] = num(probe.mean_r2);
  return probe;
}

void cmd_diagnose(Run& run, const std::string& name) {
  const auto& p = run.params;
  auto& m = run.metrics;
  m["diagnostic"] = name;

  if (name == "data-geometry" || name == "spectrum") {
    const auto data = corpus::load_dataset(require_path(p, "data"));
    const auto ids = resolve_features(p.list("features"), data.vocab);
    if (name == "data-geometry") {
      const auto g = diag::correlation_geometry(data.samples, ids, p.str("features"));
      export_geometry(g, data.vocab, run, "geometry.csv");
      m["ordering_score"] = g.ordering_score;
      m["offdiag_frobenius"] = g.offdiag_frobenius;
      m["degenerate"] = g.degenerate;
      return;
    }
    std::vector<std::uint32_t> cols(ids.begin(), ids.end());
    const auto mode = p.str("mode") == "raw" ? linalg::MomentMode::kRaw
                      : p.str("mode") == "correlation" ? linalg::MomentMode::kCorrelation
                                                       : linalg::MomentMode::kCentered;
    const auto moment = linalg::second_moment(data.samples, cols, mode);
    const auto eig = linalg::sym_eig(moment.values);
    Vector lam = eig.eigenvalues.cwiseMax(0.0);
    io::export_matrix(lam, run.file("eigenvalues.csv"), std::vector<std::string>{"eigenvalue"});
    m["mode"] = linalg::to_string(mode);
    m["effective_rank"] = linalg::effective_rank({lam.data(), static_cast<std::size_t>(lam.size())},
                                                 p.real("threshold"));
    m["threshold"] = p.real("threshold");
    return;
  }

  if (name == "fourier" || name == "coords" || name == "ablation") {
    const auto model = models::load_classifier(require_path(p, "model")).model;
    if (name == "fourier") {
      const auto modulus = p.count("modulus") ? p.count("modulus") : static_cast<std::size_t>(model.num_tokens());
      const auto fits = diag::fourier_projection(model.embedding, static_cast<std::uint32_t>(modulus));
      io::CsvWriter csv({"frequency", "r2", "r2_cos", "r2_sin", "radius_cv"});
      std::size_t strong = 0;
      for (const auto& f : fits) {
        csv.row({std::to_string(f.frequency), io::format_double(f.r2), io::format_double(f.r2_cos),
                 io::format_double(f.r2_sin), io::format_double(f.radius_cv)});
        if (f.r2 >= 0.9) ++strong;
      }
      csv.save(run.file("fourier.csv"));
      std::vector<std::size_t> order(fits.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fits[a].r2 > fits[b].r2; });
      const std::size_t top = std::min(p.count("frequencies"), fits.size());
      for (std::size_t k = 0; k < top; ++k) {
        const auto& f = fits[order[k]];
        io::export_matrix(f.projection, run.file("projection-q" + std::to_string(f.frequency) + ".csv"),
                          std::vector<std::string>{"cos", "sin"});
      }
      m["frequencies_r2_above_0.9"] = strong;
      m["best_frequency"] = fits[order[0]].frequency;
      m["best_r2"] = num(fits[order[0]].r2);
      return;
    }
    if (name == "coords") {
      const auto probe = city_probe(p, model, m);
      io::export_matrix(probe.weights, run.file("probe-weights.csv"),
                        std::vector<std::string>{"latitude", "longitude"});
      return;
    }
    // ablation
    const auto data = tasks::load_pairs(require_path(p, "data"));
    auto eval = data.validation();
    if (eval.empty()) eval = data.examples;
    Matrix dirs;
    if (p.str("directions") == "fourier") {
      const auto fits = diag::fourier_projection(model.embedding, static_cast<std::uint32_t>(model.num_tokens()));
      dirs = diag::top_frequency_directions(fits, std::min(p.count("frequencies"), fits.size()));
    } else if (p.str("directions") == "coords") {
      dirs = city_probe(p, model, m).encoding;
    } else {
      throw SchemaError("directions must be fourier or coords");
    }
    const auto base = models::evaluate(model, eval);
    const auto keep = diag::vc_ablation(model, dirs, diag::AblationMode::kKeep, eval);
    const auto remove = diag::vc_ablation(model, dirs, diag::AblationMode::kRemove, eval);
    m["vc_directions"] = dirs.cols();
    m["baseline"] = {{"loss", num(base.loss)}, {"accuracy", num(base.accuracy)}};
    m["keep"] = {{"loss", num(keep.loss)}, {"accuracy", num(keep.accuracy)}};
    m["remove"] = {{"loss", num(remove.loss)}, {"accuracy", num(remove.accuracy)}};
    return;
  }

  // Autoencoder diagnostics.
  const auto model = models::load_autoencoder(require_path(p, "model")).model;
  const auto data = corpus::load_dataset(require_path(p, "data"));
  const auto& vocab = data.vocab;
  auto validation = [&] {
    return p.str("validation").empty() ? data : corpus::load_dataset(require_path(p, "validation"));
  };

  if (name == "gram") {
    std::vector<std::string> labels(vocab.words());
    io::export_matrix(model.gram(), run.file("gram.csv"), labels, labels);
    m["w_frobenius_sq"] = model.w.squaredNorm();
  } else if (name == "r2") {
    const auto r2 = diag::ae_r2(model, data.samples);
    io::CsvWriter csv({"feature", "word", "r2", "undefined"});
    double sum = 0.0;
    std::size_t defined = 0;
    for (Index i = 0; i < r2.r2.size(); ++i) {
      const bool undef = r2.undefined[static_cast<std::size_t>(i)];
      csv.row({std::to_string(i), label(vocab, i), io::format_double(r2.r2(i)), undef ? "1" : "0"});
      if (!undef) {
        sum += r2.r2(i);
        ++defined;
      }
    }
    csv.save(run.file("r2.csv"));
    m["mean_r2"] = defined ? num(sum / static_cast<double>(defined)) : json(nullptr);
    m["undefined_features"] = r2.r2.size() - static_cast<Index>(defined);
  } else if (name == "verdict" || name == "fev") {
    const auto ids = resolve_features(p.list("features"), vocab);
    const auto val = validation();
    const auto v = diag::linear_superposition_test(model, data.samples, val.samples, ids,
                                                   p.real("eps"), probe_options(p));
    m["fev"] = num(v.probe_fev.value);
    m["fev_undefined"] = v.probe_fev.undefined;
    if (name == "verdict") {
      io::CsvWriter csv({"feature", "word", "r2_linear", "r2_nonlinear", "verdict", "interferes"});
      std::map<std::string, std::size_t> counts;
      for (const auto& f : v.features) {
        csv.row({std::to_string(f.feature), label(vocab, f.feature), io::format_double(f.r2_linear),
                 io::format_double(f.r2_nonlinear), diag::to_string(f.verdict), f.interferes ? "1" : "0"});
        ++counts[diag::to_string(f.verdict)];
      }
      csv.save(run.file("verdict.csv"));
      m["epsilon"] = v.epsilon;
      m["interference_condition"] = v.interference_condition;
      m["counts"] = counts;
    }
  } else if (name == "census") {
    const auto val = validation();
    const auto c = diag::census_superposition(model, data.samples, val.samples, p.real("eps"),
                                              p.count("min-occurrences"), probe_options(p));
    m["linear"] = c.linear;
    m["nonlinear"] = c.nonlinear;
    m["unrecovered"] = c.unrecovered;
    m["below_floor"] = c.below_floor;
    m["epsilon"] = c.epsilon;
    m["min_occurrences"] = c.min_occurrences;
  } else if (name == "interference") {
    const auto ids = resolve_features(p.list("features"), vocab);
    const auto sample = p.count("sample");
    if (sample >= data.size()) throw DataError("sample index out of range");
    io::CsvWriter csv({"feature", "word", "signal", "interference", "bias", "preactivation"});
    io::CsvWriter top({"feature", "rank", "contributor", "value"});
    for (const Index i : ids) {
      const auto b = diag::interference_breakdown(model, data.samples.row(sample), i, p.count("top-k"),
                                                  vocab.words());
      csv.row({std::to_string(i), label(vocab, i), io::format_double(b.signal),
               io::format_double(b.interference), io::format_double(b.bias),
               io::format_double(b.preactivation)});
      for (std::size_t k = 0; k < b.top.size(); ++k) {
        top.row({label(vocab, i), std::to_string(k + 1), b.top[k].label, io::format_double(b.top[k].value)});
      }
    }
    csv.save(run.file("interference.csv"));
    top.save(run.file("contributions.csv"));
    m["sample"] = sample;
  } else if (name == "onehot") {
    const auto ids = resolve_features(p.list("features"), vocab);
    const auto val = validation();
    io::CsvWriter csv({"feature", "word", "r2_onehot", "r2_context", "fraction_context_better",
                       "occurrences", "insufficient"});
    for (const Index i : ids) {
      const auto r = diag::onehot_vs_context(model, val.samples, i, p.count("min-occurrences"));
      csv.row({std::to_string(i), label(vocab, i), io::format_double(r.r2_onehot),
               io::format_double(r.r2_context),
               r.fraction_context_better ? io::format_double(*r.fraction_context_better) : "",
               std::to_string(r.occurrences), r.insufficient ? "1" : "0"});
    }
    csv.save(run.file("onehot.csv"));
    m["features"] = ids.size();
  } else if (name == "geometry") {
    const auto ids = resolve_features(p.list("features"), vocab);
    const auto g = diag::group_geometry(model, ids, p.str("features"));
    export_geometry(g, vocab, run, "geometry.csv");
    m["ordering_score"] = g.ordering_score;
    m["offdiag_frobenius"] = g.offdiag_frobenius;
    m["degenerate"] = g.degenerate;
  } else {
    throw SchemaError("unknown diagnostic '" + name + "'");
  }
}

// ---------------------------------------------------------------------------
// sweep and export

void cmd_sweep(Run& run) {
  const auto& p = run.params;
  corpus::BowsDataset data;
  if (!p.str("data").empty()) {
    data = corpus::load_dataset(require_path(p, "data"));
  } else {
    synth::LatentCurveSpec spec;
    spec.kind = synth::parse_curve_kind(p.str("kind"));
    spec.num_features = p.count("features-count");
    spec.seed = run.seed();
    data = synth::to_dataset(spec, synth::generate(spec, p.count("n"), run.workers()));
  }
  std::vector<Index> group;
  if (!p.str("features").empty()) group = resolve_features(p.list("features"), data.vocab);
  const auto activation = models::parse_activation(p.str("activation"));
  std::vector<double> decays;
  for (const auto& s : p.list("weight-decay")) {
    Params one({{"x", s, ""}});
    decays.push_back(one.real("x"));
  }
  if (decays.empty()) decays.push_back(0.0);

  io::CsvWriter summary({"latent", "weight_decay", "final_loss", "w_frobenius_sq",
                         "group_offdiag_frobenius", "antipodal_pairs", "diverged"});
  json rows = json::array();
  for (const auto m : parse_int_list(p.str("latent"))) {
    if (m < 1) throw SchemaError("latent sizes must be positive");
    for (const double wd : decays) {
      Params cfg = p;
      cfg.set("weight-decay", io::format_double(wd));
      auto config = train_config(cfg);
      auto model = models::TiedAutoencoder::random(m, static_cast<Index>(data.vocab.size()), activation,
                                                   run.seed());
      const auto result = models::train(model, data.samples, config);
      const std::string tag = "m" + std::to_string(m) + "-wd" + io::format_double(wd);
      const Matrix gram = model.gram();
      if (gram.rows() <= 256) {
        io::export_matrix(gram, run.file("gram-" + tag + ".csv"), data.vocab.words(), data.vocab.words());
      }
      if (p.flag("save-models")) models::save_checkpoint(model, run.file("model-" + tag + ".slab"), cfg.echo(), run.seed());
      double group_frob = std::nan("");
      if (!group.empty()) {
        Matrix sub(static_cast<Index>(group.size()), static_cast<Index>(group.size()));
        for (std::size_t i = 0; i < group.size(); ++i) {
          for (std::size_t j = 0; j < group.size(); ++j) {
            sub(static_cast<Index>(i), static_cast<Index>(j)) = gram(group[i], group[j]);
          }
        }
        group_frob = linalg::offdiag_frobenius(sub);
      }
      const auto pairs = diag::antipodal_pairs(gram);
      const double loss = result.epoch_loss.empty() ? std::nan("") : result.epoch_loss.back();
      summary.row({std::to_string(m), io::format_double(wd), io::format_double(loss),
                   io::format_double(model.w.squaredNorm()), io::format_double(group_frob),
                   std::to_string(pairs.count), result.diverged ? "1" : "0"});
      rows.push_back({{"latent", m},
                      {"weight_decay", wd},
                      {"final_loss", num(loss)},
                      {"w_frobenius_sq", num(model.w.squaredNorm())},
                      {"group_offdiag_frobenius", num(group_frob)},
                      {"antipodal_pairs", pairs.count}});
    }
  }
  summary.save(run.file("sweep.csv"));
  run.metrics["runs"] = rows;
}

void cmd_export_embeddings(Run& run) {
  const auto& p = run.params;
  const auto path = require_path(p, "model");
  std::vector<std::string> labels;
  if (!p.str("data").empty()) {
    const auto data = require_path(p, "data");
    try {
      labels = corpus::load_dataset(data).vocab.words();
    } catch (const FormatError&) {
      labels = tasks::load_pairs(data).token_names;
    }
  }
  Matrix table;
  try {
    table = models::load_autoencoder(path).model.w.transpose();
    run.metrics["kind"] = "autoencoder";
  } catch (const FormatError&) {
    table = models::load_classifier(path).model.embedding.transpose();
    run.metrics["kind"] = "classifier";
  }
  if (labels.empty()) {
    for (Index i = 0; i < table.rows(); ++i) labels.push_back(std::to_string(i));
  }
  if (labels.size() != static_cast<std::size_t>(table.rows())) {
    throw DataError("label count does not match the embedding table");
  }
  std::vector<std::string> cols;
  for (Index j = 0; j < table.cols(); ++j) cols.push_back("d" + std::to_string(j));
  io::export_matrix(table, run.file("embeddings.csv"), cols, labels);
  run.metrics["rows"] = table.rows();
  run.metrics["dims"] = table.cols();
}

// ---------------------------------------------------------------------------
// Command table

struct Command {
  std::string name;
  std::string help;
  std::vector<ParamSpec> schema;
};

std::vector<Command> commands() {
  const std::vector<ParamSpec> common = {{"seed", "42", "random seed"},
                                         {"workers", "1", "worker threads"}};
  return {
      {"build-corpus", "Build a bag-of-words dataset from text",
       with({{"input", "", "text file or directory"},
             {"mode", "line", "line|paragraph"},
             {"vocab", "2000", "vocabulary size"},
             {"context", "20", "records per window"},
             {"stride", "1", "window stride"},
             {"stopwords", "builtin", "builtin or a word-list file"},
             {"split", "train", "train|validation"},
             {"vocab-from", "", "reuse the vocabulary of an existing dataset"},
             {"max-records", "0", "keep only the first N records (0 = all)"}},
            common)},
      {"gen-synth", "Generate a synthetic latent-curve dataset",
       with({{"kind", "cyclic", "cyclic|figure8|sphere"},
             {"features", "12", "number of features"},
             {"n", "100000", "samples"},
             {"beta", "5", "sharpness"},
             {"bias", "-2", "base logit"},
             {"noise", "0.1", "angle noise"},
             {"cycle", "false", "cycle positions instead of sampling"}},
            common)},
      {"gen-task", "Generate a pair-classification dataset",
       with({{"task", "modadd", "modadd|map"},
             {"modulus", "113", "modulus for modadd"},
             {"train-fraction", "0.3", "training share for modadd"},
             {"cities", "", "city CSV for map"},
             {"top-k", "1000", "cities kept by population"},
             {"n-train", "100000", "training pairs for map"},
             {"n-val", "10000", "validation pairs for map"}},
            common)},
      {"train-ae", "Train a tied autoencoder",
       with(with({{"data", "", "training dataset"},
                  {"validation", "", "optional validation dataset"},
                  {"latent", "200", "latent size m"},
                  {"activation", "relu", "relu|linear"}},
                 kTrainKeys),
            common)},
      {"train-task", "Train a pair classifier",
       with(with({{"data", "", "pair dataset"},
                  {"width", "100", "embedding width per token"},
                  {"hidden", "200,200,200", "hidden layer sizes"}},
                 kTrainKeys),
            common)},
      {"diagnose", "Run a diagnostic on a trained model",
       with({{"model", "", "model checkpoint"},
             {"data", "", "dataset (training split for probes)"},
             {"validation", "", "validation dataset"},
             {"features", "months", "comma-separated words or ids; 'months' and 'all' expand"},
             {"eps", "0.5", "recoverability tolerance"},
             {"probe", "closed", "closed|trained"},
             {"min-occurrences", "10", "minimum validation occurrences"},
             {"sample", "0", "sample index for interference"},
             {"top-k", "10", "contributors to list"},
             {"modulus", "0", "modulus for fourier (0 = token count)"},
             {"frequencies", "5", "top frequencies used as value-coding directions"},
             {"directions", "fourier", "fourier|coords"},
             {"cities", "", "city CSV for coordinate probes"},
             {"heldout-fraction", "0.2", "share of cities held out from the probe"},
             {"ridge", "0.0001", "coordinate probe ridge"},
             {"mode", "centered", "raw|centered|correlation"},
             {"threshold", "0.95", "explained-variance threshold"}},
            common)},
      {"sweep", "Train a grid of autoencoders over latent size and weight decay",
       with(with({{"data", "", "dataset (default: synthetic)"},
                  {"kind", "cyclic", "synthetic kind when no data is given"},
                  {"features-count", "12", "synthetic feature count"},
                  {"n", "100000", "synthetic samples"},
                  {"latent", "2..12", "latent sizes"},
                  {"activation", "relu", "relu|linear"},
                  {"features", "", "feature group for the Frobenius curve"},
                  {"save-models", "false", "write a checkpoint per grid point"}},
                 kTrainKeys),
            common)},
      {"export-embeddings", "Write model feature directions as CSV",
       with({{"model", "", "model checkpoint"}, {"data", "", "dataset providing labels"}}, common)},
  };
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Superposition lab: corpora, autoencoders, pair tasks and diagnostics", "slab"};
  app.require_subcommand(1);
  const auto table = commands();
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, std::string> config_paths, out_dirs;
  std::string diagnostic;
  for (const auto& cmd : table) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    for (const auto& spec : cmd.schema) {
      sub->add_option("--" + spec.key, flag_values[cmd.name][spec.key],
                      spec.help + " (default: " + (spec.default_value.empty() ? "none" : spec.default_value) + ")");
    }
    sub->add_option("--config", config_paths[cmd.name], "key=value config file");
    sub->add_option("--out", out_dirs[cmd.name], "output directory");
    if (cmd.name == "diagnose") {
      sub->add_option("name", diagnostic,
                      "r2|verdict|census|fev|interference|onehot|geometry|gram|data-geometry|"
                      "spectrum|fourier|coords|ablation")
          ->required();
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: code=usage message=" << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    const Command* cmd = nullptr;
    CLI::App* sub = nullptr;
    for (const auto& c : table) {
      if (app.got_subcommand(c.name)) {
        cmd = &c;
        sub = app.get_subcommand(c.name);
      }
    }
    Run run;
    run.command = cmd->name;
    run.out = &out;
    run.params = Params(cmd->schema);
    if (const auto& cfg = config_paths[cmd->name]; !cfg.empty()) {
      std::ifstream in(cfg);
      if (!in) throw IoError("cannot open config " + cfg);
      std::stringstream ss;
      ss << in.rdbuf();
      apply_config_text(run.params, ss.str());
    }
    for (const auto& spec : cmd->schema) {
      if (sub->count("--" + spec.key) > 0) run.params.set(spec.key, flag_values[cmd->name][spec.key]);
    }
    if (cmd->name == "diagnose") {
      static const std::vector<std::string> names = {
          "r2",       "verdict", "census", "fev",      "interference", "onehot", "geometry",
          "gram",     "data-geometry", "spectrum", "fourier", "coords", "ablation"};
      if (std::find(names.begin(), names.end(), diagnostic) == names.end()) {
        throw SchemaError("unknown diagnostic '" + diagnostic + "'");
      }
    }
    const std::string label = cmd->name == "diagnose" ? "diagnose-" + diagnostic : cmd->name;
    run.seed();
    run.workers();
    run.dir = make_run_dir(label, run.seed(), out_dirs[cmd->name]);

    if (cmd->name == "build-corpus") cmd_build_corpus(run);
    else if (cmd->name == "gen-synth") cmd_gen_synth(run);
    else if (cmd->name == "gen-task") cmd_gen_task(run);
    else if (cmd->name == "train-ae") cmd_train_ae(run);
    else if (cmd->name == "train-task") cmd_train_task(run);
    else if (cmd->name == "diagnose") cmd_diagnose(run, diagnostic);
    else if (cmd->name == "sweep") cmd_sweep(run);
    else if (cmd->name == "export-embeddings") cmd_export_embeddings(run);

    std::string echo = "# slab " + label + "\n" + run.params.echo();
    write_text(run.file("config.txt"), echo);
    write_text(run.file("metrics.json"), run.metrics.dump(2) + "\n");
    out << run.dir.string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: code=" << e.code() << " message=" << one_line(e.what()) << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: code=io message=" << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: code=internal message=" << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace slab::cli
