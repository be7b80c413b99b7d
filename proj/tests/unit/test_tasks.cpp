#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <tuple>

#include "slab/error.hpp"
#include "slab/tasks.hpp"

using namespace slab;
using namespace slab::tasks;

namespace {

const std::filesystem::path kData = SLAB_TEST_DATA_DIR;

// Nearest compass point by circular angular distance.
std::uint32_t nearest_compass(double degrees) {
  std::uint32_t best = 0;
  double best_gap = 1e9;
  for (std::uint32_t c = 0; c < 8; ++c) {
    double gap = std::fmod(std::abs(degrees - 45.0 * c), 360.0);
    gap = std::min(gap, 360.0 - gap);
    if (gap < best_gap) {
      best_gap = gap;
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("tasks") {
  TEST_CASE("modular addition labels and split") {
    const auto small = gen_modadd(7, 0.5, 1);
    CHECK(small.examples.size() == 49);
    CHECK(small.num_classes == 7);
    for (const auto& ex : small.examples) CHECK(ex.label == (ex.a + ex.b) % 7);
    CHECK(small.train().size() == 25);  // round(24.5) rounds half away from zero

    const auto d = gen_modadd(113, 0.3, 42);
    CHECK(d.examples.size() == 12769);
    CHECK(d.train().size() == 3831);
    CHECK(d.validation().size() == 12769 - 3831);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const auto& ex : d.examples) seen.insert({ex.a, ex.b});
    CHECK(seen.size() == 12769);
    std::set<std::pair<std::uint32_t, std::uint32_t>> train;
    for (const auto& ex : d.train()) train.insert({ex.a, ex.b});
    for (const auto& ex : d.validation()) CHECK(train.count({ex.a, ex.b}) == 0);
    CHECK(gen_modadd(113, 0.3, 42).examples.size() == d.examples.size());
    CHECK_THROWS_AS(gen_modadd(1, 0.3, 1), ContractError);
    CHECK_THROWS_AS(gen_modadd(7, 1.5, 1), ContractError);
  }

  TEST_CASE("commutative pairs share a label") {
    const auto d = gen_modadd(13, 0.5, 2);
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> label;
    for (const auto& ex : d.examples) label[{ex.a, ex.b}] = ex.label;
    for (const auto& [key, value] : label) CHECK(label.at({key.second, key.first}) == value);
  }

  TEST_CASE("city table parsing") {
    const std::string csv =
        "name,latitude,longitude,population\n"
        "\"Alpha, AA\",10,20,500\n"
        "Beta,11,21,900\n"
        "Gamma,12,22,500\n"
        "Delta,13,23,100\n";
    const auto t = parse_cities(csv, 3);
    REQUIRE(t.cities.size() == 3);
    CHECK(t.cities[0].name == "Beta");
    // Equal populations fall back to name order.
    CHECK(t.cities[1].name == "Alpha, AA");
    CHECK(t.cities[2].name == "Gamma");
    CHECK_FALSE(t.short_table);
    CHECK(parse_cities(csv, 10).short_table);

    CHECK_THROWS_AS(parse_cities("name,latitude,longitude,population\nX,95,0,10\n", 5), DataError);
    CHECK_THROWS_AS(parse_cities("name,latitude,longitude,population\nX,0,181,10\n", 5), DataError);
    CHECK_THROWS_AS(parse_cities("name,latitude,population\nX,0,10\n", 5), DataError);

    const auto sample = load_cities(kData / "cities_sample.csv", 40);
    CHECK(sample.cities.size() == 40);
    CHECK(sample.cities.front().name == "New York City, NY");
  }

  TEST_CASE("bearing examples") {
    CHECK(bearing_label(1.0, 0.0) == kN);
    CHECK(bearing_label(0.0, 1.0) == kE);
    CHECK(bearing_label(-1.0, 0.0) == kS);
    CHECK(bearing_label(0.0, -1.0) == kW);
    CHECK(bearing_label(1.0, 1.0) == kNE);
    CHECK(bearing_label(-1.0, 1.0) == kSE);
    CHECK(bearing_label(-1.0, -1.0) == kSW);
    CHECK(bearing_label(1.0, -1.0) == kNW);
    CHECK(std::string(direction_name(kSE)) == "SE");

    City a{"a", 40.0, -100.0, 1};
    City b{"b", 45.0, -100.0, 1};
    CHECK(bearing_label(a, b) == kN);
    CHECK(bearing_label(b, a) == kS);
    CHECK_THROWS_AS(bearing_label(a, a), DataError);
  }

  TEST_CASE("bearing sweep matches nearest compass point") {
    for (int k = 0; k < 3600; ++k) {
      const double deg = 0.1 * k + 0.05;  // never on a sector boundary
      const double rad = deg * std::numbers::pi / 180.0;
      const double scale = 0.5 + (k % 7);
      INFO("bearing " << deg);
      CHECK(bearing_label(scale * std::cos(rad), scale * std::sin(rad)) == nearest_compass(deg));
      CHECK(bearing_label(-scale * std::cos(rad), -scale * std::sin(rad)) ==
            (nearest_compass(deg) + 4) % 8);
    }
  }

  TEST_CASE("map pairs") {
    const auto table = load_cities(kData / "cities_sample.csv", 40);

    const CityTable four{{table.cities.begin(), table.cities.begin() + 4}, false};
    const auto all = gen_map_pairs(four, 8, 4, 1);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const auto& ex : all.examples) {
      CHECK(ex.a != ex.b);
      seen.insert({ex.a, ex.b});
    }
    CHECK(seen.size() == 12);
    CHECK_THROWS(gen_map_pairs(four, 10, 4, 1));

    const auto d = gen_map_pairs(table, 1000, 200, 5);
    CHECK(d.num_tokens == 40);
    CHECK(d.num_classes == 8);
    CHECK(d.token_names.size() == 40);
    CHECK(d.train().size() == 1000);
    CHECK(d.validation().size() == 200);
    std::set<std::pair<std::uint32_t, std::uint32_t>> train;
    std::vector<int> hist(8, 0);
    for (const auto& ex : d.train()) {
      train.insert({ex.a, ex.b});
      ++hist[ex.label];
      CHECK(ex.label == bearing_label(table.cities[ex.a], table.cities[ex.b]));
    }
    CHECK(train.size() == 1000);
    for (const auto& ex : d.validation()) CHECK(train.count({ex.a, ex.b}) == 0);
    for (const int h : hist) CHECK(h > 0);

    // Reversing a pair flips the direction unless it sits on a sector edge.
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t j = 0; j < 40; ++j) {
        if (i == j) continue;
        const auto& a = table.cities[i];
        const auto& b = table.cities[j];
        const double deg = std::atan2(b.longitude - a.longitude, b.latitude - a.latitude) * 180.0 /
                           std::numbers::pi;
        const double edge = std::fmod(std::abs(deg) + 22.5, 45.0);
        if (edge < 1e-9 || edge > 45.0 - 1e-9) continue;
        CHECK(bearing_label(b, a) == (bearing_label(a, b) + 4) % 8);
      }
    }
  }

  TEST_CASE("pair datasets round trip through disk") {
    const auto d = gen_modadd(11, 0.4, 3);
    const auto path = std::filesystem::temp_directory_path() / "slab-unit-pairs.bows";
    save_pairs(d, path);
    const auto back = load_pairs(path);
    CHECK(back.num_tokens == d.num_tokens);
    CHECK(back.num_classes == d.num_classes);
    CHECK(back.split == d.split);
    CHECK(back.token_names == d.token_names);
    REQUIRE(back.examples.size() == d.examples.size());
    for (std::size_t i = 0; i < d.examples.size(); ++i) {
      CHECK(std::tie(back.examples[i].a, back.examples[i].b, back.examples[i].label) ==
            std::tie(d.examples[i].a, d.examples[i].b, d.examples[i].label));
    }
  }
}
