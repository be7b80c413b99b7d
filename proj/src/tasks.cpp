#include "slab/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "slab/binary_io.hpp"
#include "slab/error.hpp"
#include "slab/rng.hpp"

namespace slab::tasks {

std::vector<PairExample> PairDataset::select(corpus::Split which) const {
  std::vector<PairExample> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (split[i] == which) out.push_back(examples[i]);
  }
  return out;
}

PairDataset gen_modadd(std::uint32_t p, double train_fraction, std::uint64_t seed) {
  SLAB_REQUIRE(p >= 2, "modulus must be at least 2");
  SLAB_REQUIRE(train_fraction > 0.0 && train_fraction < 1.0, "train fraction must lie in (0, 1)");
  PairDataset out;
  out.num_tokens = p;
  out.num_classes = p;
  for (std::uint32_t t = 0; t < p; ++t) out.token_names.push_back(std::to_string(t));
  for (std::uint32_t a = 0; a < p; ++a) {
    for (std::uint32_t b = 0; b < p; ++b) out.examples.push_back({a, b, (a + b) % p});
  }
  RandomStream rng(seed, streams::kSplit);
  rng.shuffle(std::span<PairExample>(out.examples));
  const auto total = static_cast<double>(out.examples.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * total));
  out.split.assign(out.examples.size(), corpus::Split::kValidation);
  std::fill_n(out.split.begin(), n_train, corpus::Split::kTrain);
  return out;
}

namespace {

// RFC 4180 records: quoted fields may hold commas, doubled quotes and line
// breaks. Returns (first line number, fields) per record.
std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;
  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(fields.size() == 1 && fields[0].empty())) records.emplace_back(record_line, std::move(fields));
    fields.clear();
    record_line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (ch == '\n') {
      ++line;
      end_record();
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted field starting on line " + std::to_string(record_line));
  if (!field.empty() || !fields.empty()) end_record();
  return records;
}

[[noreturn]] void bad_row(std::size_t line, const std::string& column, const std::string& why) {
  throw DataError("city row on line " + std::to_string(line) + ": column '" + column + "' " + why);
}

double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty() || !std::isfinite(v)) {
    bad_row(line, column, "is not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

CityTable parse_cities(std::string_view csv, std::size_t top_k) {
  SLAB_REQUIRE(top_k >= 1, "top_k must be positive");
  const auto records = parse_csv(csv);
  if (records.empty()) throw DataError("city file is empty");
  const auto& header = records.front().second;
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("city file lacks a '" + name + "' column");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_name = column("name");
  const std::size_t c_lat = column("latitude");
  const std::size_t c_lon = column("longitude");
  const std::size_t c_pop = column("population");

  std::vector<City> cities;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& [line, f] = records[r];
    if (f.size() != header.size()) {
      throw DataError("city row on line " + std::to_string(line) + " has " +
                      std::to_string(f.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    City c;
    c.name = f[c_name];
    if (c.name.empty()) bad_row(line, "name", "is empty");
    c.latitude = parse_double(f[c_lat], line, "latitude");
    if (c.latitude < -90.0 || c.latitude > 90.0) bad_row(line, "latitude", "is outside [-90, 90]");
    c.longitude = parse_double(f[c_lon], line, "longitude");
    if (c.longitude < -180.0 || c.longitude > 180.0) {
      bad_row(line, "longitude", "is outside [-180, 180]");
    }
    const auto& pop = f[c_pop];
    const auto [ptr, ec] = std::from_chars(pop.data(), pop.data() + pop.size(), c.population);
    if (ec != std::errc() || ptr != pop.data() + pop.size() || pop.empty()) {
      bad_row(line, "population", "is not a non-negative integer: '" + pop + "'");
    }
    if (c.population == 0) bad_row(line, "population", "must be positive");
    cities.push_back(std::move(c));
  }
  std::stable_sort(cities.begin(), cities.end(), [](const City& a, const City& b) {
    return a.population != b.population ? a.population > b.population : a.name < b.name;
  });
  CityTable table;
  table.short_table = cities.size() < top_k;
  if (cities.size() > top_k) cities.resize(top_k);
  table.cities = std::move(cities);
  return table;
}

CityTable load_cities(const std::filesystem::path& path, std::size_t top_k) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open city file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_cities(ss.str(), top_k);
}

const char* direction_name(std::uint32_t label) {
  static constexpr const char* kNames[] = {"N", "NE", "E", "SE", "S", "SW", "W", "NW"};
  SLAB_REQUIRE(label < kDirections, "direction label out of range");
  return kNames[label];
}

std::uint32_t bearing_label(double dlat, double dlon) {
  if (dlat == 0.0 && dlon == 0.0) throw DataError("bearing between identical coordinates");
  const double degrees = std::atan2(dlon, dlat) * 180.0 / std::numbers::pi;
  const auto sector = static_cast<long>(std::floor((degrees + 22.5) / 45.0));
  return static_cast<std::uint32_t>(((sector % 8) + 8) % 8);
}

std::uint32_t bearing_label(const City& a, const City& b) {
  return bearing_label(b.latitude - a.latitude, b.longitude - a.longitude);
}

PairDataset gen_map_pairs(const CityTable& table, std::size_t n_train, std::size_t n_val,
                          std::uint64_t seed) {
  const auto& cities = table.cities;
  SLAB_REQUIRE(cities.size() >= 2, "need at least two cities");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> universe;
  universe.reserve(cities.size() * (cities.size() - 1));
  for (std::uint32_t a = 0; a < cities.size(); ++a) {
    for (std::uint32_t b = 0; b < cities.size(); ++b) {
      if (a == b) continue;
      if (cities[a].latitude == cities[b].latitude && cities[a].longitude == cities[b].longitude) {
        continue;
      }
      universe.emplace_back(a, b);
    }
  }
  const std::size_t n = n_train + n_val;
  if (n > universe.size()) {
    throw ContractError("requested " + std::to_string(n) + " pairs but only " +
                        std::to_string(universe.size()) + " distinct pairs exist");
  }
  // Partial Fisher-Yates: the first n slots are a uniform sample without
  // replacement.
  RandomStream rng(seed, streams::kSplit);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.uniform_index(universe.size() - i);
    std::swap(universe[i], universe[j]);
  }
  PairDataset out;
  out.num_tokens = static_cast<std::uint32_t>(cities.size());
  out.num_classes = kDirections;
  for (const auto& c : cities) out.token_names.push_back(c.name);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [a, b] = universe[i];
    out.examples.push_back({a, b, bearing_label(cities[a], cities[b])});
    out.split.push_back(i < n_train ? corpus::Split::kTrain : corpus::Split::kValidation);
  }
  return out;
}

namespace {
constexpr char kMagic[] = "BOWS";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kPairTag = 2;
}  // namespace

void save_pairs(const PairDataset& data, const std::filesystem::path& path) {
  SLAB_REQUIRE(data.split.size() == data.examples.size(), "split tags must match examples");
  SLAB_REQUIRE(data.token_names.size() == data.num_tokens, "one name per token required");
  io::BinaryWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u64(data.num_tokens);
  w.u64(data.examples.size());
  w.u32(1);
  w.u32(1);
  w.u8(kPairTag);
  for (const auto& name : data.token_names) {
    w.string(name);
    w.u64(0);
  }
  w.u32(data.num_tokens);
  w.u32(data.num_classes);
  w.u64(data.examples.size());
  for (const auto& ex : data.examples) {
    w.u32(ex.a);
    w.u32(ex.b);
    w.u32(ex.label);
  }
  for (const auto s : data.split) w.u8(static_cast<std::uint8_t>(s));
  w.save(path);
}

PairDataset load_pairs(const std::filesystem::path& path) {
  auto r = io::BinaryReader::from_file(path);
  if (r.bytes(4) != std::string_view(kMagic, 4)) r.fail("missing BOWS magic");
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported BOWS version " + std::to_string(v));
  const auto tokens = r.u64();
  const auto count = r.u64();
  r.u32();
  r.u32();
  if (r.u8() != kPairTag) r.fail("not a pair-task dataset");
  if (tokens > r.remaining()) r.fail("vocabulary block extends past end of file");
  PairDataset out;
  for (std::uint64_t i = 0; i < tokens; ++i) {
    out.token_names.push_back(r.string());
    r.u64();
  }
  out.num_tokens = r.u32();
  out.num_classes = r.u32();
  if (out.num_tokens != tokens || r.u64() != count) r.fail("pair extension disagrees with header");
  if (count > r.remaining() / 13) r.fail("pair block extends past end of file");
  for (std::uint64_t i = 0; i < count; ++i) {
    PairExample ex;
    ex.a = r.u32();
    ex.b = r.u32();
    ex.label = r.u32();
    if (ex.a >= out.num_tokens || ex.b >= out.num_tokens || ex.label >= out.num_classes) {
      r.fail("pair " + std::to_string(i) + " is out of range");
    }
    out.examples.push_back(ex);
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto s = r.u8();
    if (s > 1) r.fail("bad split tag");
    out.split.push_back(static_cast<corpus::Split>(s));
  }
  if (!r.at_end()) r.fail("trailing bytes after pair block");
  return out;
}

}  // namespace slab::tasks
