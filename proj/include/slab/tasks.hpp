#pragma once

// Value-coding pair tasks: modular addition and relative compass direction
// between US cities.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "slab/corpus.hpp"
#include "slab/models.hpp"

namespace slab::tasks {

using models::PairExample;

struct PairDataset {
  std::vector<PairExample> examples;
  std::vector<corpus::Split> split;  // one entry per example
  std::uint32_t num_tokens = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::string> token_names;

  std::vector<PairExample> train() const { return select(corpus::Split::kTrain); }
  std::vector<PairExample> validation() const { return select(corpus::Split::kValidation); }
  std::vector<PairExample> select(corpus::Split which) const;
};

// All p^2 ordered pairs, shuffled by `seed`, the first round(fraction * p^2)
// going to train. Label (a + b) mod p.
PairDataset gen_modadd(std::uint32_t p, double train_fraction, std::uint64_t seed);

struct City {
  std::string name;
  double latitude = 0.0;
  double longitude = 0.0;
  std::uint64_t population = 0;
};

struct CityTable {
  std::vector<City> cities;  // population descending, then name
  bool short_table = false;  // fewer than top_k valid rows were available
};

// RFC 4180 CSV with a header naming at least name, latitude, longitude and
// population. A row with a missing or out-of-range value raises DataError
// naming the line and column.
CityTable parse_cities(std::string_view csv, std::size_t top_k);
CityTable load_cities(const std::filesystem::path& path, std::size_t top_k);

// Compass classes in clockwise order; the opposite class is (c + 4) mod 8.
enum Direction : std::uint32_t { kN = 0, kNE, kE, kSE, kS, kSW, kW, kNW };
inline constexpr std::uint32_t kDirections = 8;
const char* direction_name(std::uint32_t label);

// Sector of the flat lat/lon bearing atan2(dlon, dlat). Sectors are 45
// degrees wide and centred on the compass points; a bearing exactly on a
// boundary belongs to the clockwise-next sector.
std::uint32_t bearing_label(double dlat, double dlon);
// Position of b relative to a. Identical coordinates raise DataError.
std::uint32_t bearing_label(const City& a, const City& b);

// Distinct ordered pairs (a != b, different coordinates) sampled without
// replacement and split n_train / n_val.
PairDataset gen_map_pairs(const CityTable& cities, std::size_t n_train, std::size_t n_val,
                          std::uint64_t seed);

// Stored in the BOWS container with split tag 2 and a pair-task extension.
void save_pairs(const PairDataset& data, const std::filesystem::path& path);
PairDataset load_pairs(const std::filesystem::path& path);

}  // namespace slab::tasks
