#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "slab/binary_io.hpp"
#include "slab/corpus.hpp"
#include "slab/error.hpp"

using namespace slab;
using namespace slab::corpus;
namespace fs = std::filesystem;

namespace {

StopwordList no_stopwords() { return StopwordList{"none", {}}; }

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "slab-unit";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("line and paragraph segmentation") {
    const std::string text = "alpha beta\r\n\n  \ngamma\ndelta\n\n\nepsilon";
    const auto lines = segment_records(text, SegmentMode::kLine);
    CHECK(lines == std::vector<std::string>{"alpha beta", "gamma", "delta", "epsilon"});
    const auto paras = segment_records(text, SegmentMode::kParagraph);
    CHECK(paras == std::vector<std::string>{"alpha beta", "gamma\ndelta", "epsilon"});
  }

  TEST_CASE("invalid UTF-8 reports the byte offset") {
    const std::string ok = "caf\xC3\xA9 ok";
    CHECK(segment_records(ok, SegmentMode::kLine).size() == 1);
    for (const std::string& bad : {std::string("ab\xC0\x80"), std::string("ab\xED\xA0\x80"),
                                  std::string("ab\xF4\x90\x80\x80"), std::string("ab\xE2\x82")}) {
      try {
        segment_records(bad, SegmentMode::kLine);
        FAIL("expected DecodeError");
      } catch (const DecodeError& e) {
        CHECK(e.byte_offset() == 2);
      }
    }
  }

  TEST_CASE("tokenizer lower-cases letter runs and splits on everything else") {
    CHECK(tokenize("The cat's 2nd-best @home") ==
          std::vector<std::string>{"the", "cat", "s", "nd", "best", "home"});
    CHECK(tokenize(" = = 1999 = = ").empty());
    CHECK(tokenize("caf\xC3\xA9") == std::vector<std::string>{"caf"});
  }

  TEST_CASE("built-in stopwords are pinned") {
    const auto& sw = builtin_stopwords();
    CHECK(sw.id == "en-basic-v1");
    for (const char* w : {"the", "and", "of", "in", "between", "s", "t"}) CHECK(sw.contains(w));
    for (const char* w : {"january", "may", "music"}) CHECK_FALSE(sw.contains(w));
  }

  TEST_CASE("stopword file parsing") {
    const auto p = temp_path("stop.txt");
    std::ofstream(p) << "# comment\nThe\n  of # trailing\n\nand\n";
    const auto sw = load_stopwords(p);
    CHECK(sw.words == std::unordered_set<std::string>{"the", "of", "and"});
    CHECK(sw.id == "file:stop.txt");
    CHECK_THROWS_AS(load_stopwords(temp_path("missing.txt")), IoError);
  }

  TEST_CASE("vocabulary examples") {
    const auto v1 = build_vocab({"cat dog", "cat"}, 1, no_stopwords());
    CHECK(v1.words() == std::vector<std::string>{"cat"});
    CHECK(v1.frequencies() == std::vector<std::uint64_t>{2});
    CHECK_FALSE(v1.short_vocab);

    StopwordList sw{"t", {"a"}};
    const auto v2 = build_vocab({"a b", "b a"}, 2, sw);
    CHECK(v2.words() == std::vector<std::string>{"b"});
    CHECK(v2.short_vocab);

    const auto v3 = build_vocab({"zebra", "apple"}, 1, no_stopwords());
    CHECK(v3.words() == std::vector<std::string>{"apple"});
  }

  TEST_CASE("vocabulary counts record presence, not tokens, for any worker count") {
    const std::vector<std::string> records = {"x x x x y", "y z", "z", "y"};
    const auto v = build_vocab(records, 3, no_stopwords());
    CHECK(v.words() == std::vector<std::string>{"y", "z", "x"});
    CHECK(v.frequencies() == std::vector<std::uint64_t>{3, 2, 1});
    CHECK(build_vocab(records, 3, no_stopwords(), 3) == v);
    CHECK(v.index_of("z") == 1u);
    CHECK_FALSE(v.index_of("w").has_value());
  }

  TEST_CASE("encode_bows examples") {
    const std::vector<std::string> records = {"cat sat", "dog ran"};
    const Vocab vocab({"cat", "sat", "dog", "ran"}, {1, 1, 1, 1});
    const auto both = encode_bows(records, vocab, 2, 1);
    REQUIRE(both.size() == 1);
    CHECK(both.samples.row(0).size() == 4);

    const auto single = encode_bows(records, vocab, 1, 1);
    REQUIRE(single.size() == 2);
    CHECK(std::vector<std::uint32_t>(single.samples.row(0).begin(), single.samples.row(0).end()) ==
          std::vector<std::uint32_t>{0, 1});
    CHECK(std::vector<std::uint32_t>(single.samples.row(1).begin(), single.samples.row(1).end()) ==
          std::vector<std::uint32_t>{2, 3});

    CHECK_THROWS_AS(encode_bows(records, vocab, 3, 1), DataError);
  }

  TEST_CASE("window enumeration matches a brute-force oracle") {
    std::vector<std::string> records;
    const std::vector<std::string> words = {"red", "green", "blue", "cyan", "pink"};
    for (int r = 0; r < 100; ++r) {
      // Every 7th record holds no vocabulary word so some windows are empty.
      records.push_back(r % 7 == 3 ? "zzz" : words[static_cast<std::size_t>(r * r % 5)]);
    }
    const Vocab vocab(words, {1, 1, 1, 1, 1});
    for (std::uint32_t c : {1u, 2u, 5u, 20u}) {
      for (std::uint32_t s : {1u, 3u, 10u}) {
        std::vector<std::set<std::uint32_t>> oracle;
        std::uint64_t total = 0;
        for (std::size_t start = 0; start + c <= records.size(); start += s) {
          ++total;
          std::set<std::uint32_t> bits;
          for (std::size_t r = start; r < start + c; ++r) {
            for (const auto& t : tokenize(records[r])) {
              if (const auto id = vocab.index_of(t)) bits.insert(*id);
            }
          }
          if (!bits.empty()) oracle.push_back(bits);
        }
        CHECK(window_count(records.size(), c, s) == total);
        CHECK(window_count(records.size(), c, s) == (records.size() - c) / s + 1);
        const auto ds = encode_bows(records, vocab, c, s, Split::kTrain, 2);
        REQUIRE(ds.size() == oracle.size());
        CHECK(ds.dropped_windows == total - oracle.size());
        for (std::size_t i = 0; i < oracle.size(); ++i) {
          const auto row = ds.samples.row(i);
          CHECK(std::set<std::uint32_t>(row.begin(), row.end()) == oracle[i]);
        }
      }
    }
  }

  TEST_CASE("c=1, s=1 re-encoding of a binary dataset is the identity") {
    const std::vector<std::string> records = {"a b", "c", "b c d", "d"};
    const Vocab vocab({"a", "b", "c", "d"}, {1, 2, 2, 2});
    const auto ds = encode_bows(records, vocab, 1, 1);
    std::vector<std::string> rebuilt;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::string rec;
      for (const auto c : ds.samples.row(i)) rec += vocab.word(c) + " ";
      rebuilt.push_back(rec);
    }
    CHECK(encode_bows(rebuilt, vocab, 1, 1).samples == ds.samples);
  }

  TEST_CASE("larger context never removes bits from a window with the same start") {
    const std::vector<std::string> records = {"a", "b", "c a", "d", "b e", "f", "a"};
    const Vocab vocab({"a", "b", "c", "d", "e", "f"}, {1, 1, 1, 1, 1, 1});
    const auto small = encode_bows(records, vocab, 2, 1);
    const auto large = encode_bows(records, vocab, 4, 1);
    for (std::size_t t = 0; t < large.size(); ++t) {
      const auto a = small.samples.row(t);
      const auto b = large.samples.row(t);
      CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
  }

  TEST_CASE("word frequency histogram") {
    SparseBinaryMatrix ones(2);
    const std::vector<std::uint32_t> both = {0, 1};
    for (int i = 0; i < 3; ++i) ones.append_row(both);
    BowsDataset ds{ones, Vocab({"x", "y"}, {3, 3}), 1, 1, Split::kTrain, 0};
    const auto h = word_frequency_histogram(ds);
    CHECK(h == std::vector<std::pair<std::string, std::uint64_t>>{{"x", 3}, {"y", 3}});

    SparseBinaryMatrix onehot(3);
    for (const std::uint32_t c : {2u, 0u, 2u, 1u, 2u, 0u}) onehot.append_row(std::span(&c, 1));
    BowsDataset ds2{onehot, Vocab({"p", "q", "r"}, {0, 0, 0}), 1, 1, Split::kTrain, 0};
    CHECK(word_frequency_histogram(ds2) ==
          std::vector<std::pair<std::string, std::uint64_t>>{{"r", 3}, {"p", 2}, {"q", 1}});
  }

  TEST_CASE("power-law fit recovers an exact Zipf slope") {
    std::vector<std::pair<std::string, std::uint64_t>> h;
    for (int r = 1; r <= 1000; ++r) {
      h.emplace_back("w" + std::to_string(r), static_cast<std::uint64_t>(std::llround(1e9 / r)));
    }
    const auto fit = fit_rank_frequency(h, 1000);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(fit.r_squared > 0.999999);
  }

  TEST_CASE("BOWS save/load round-trip and byte determinism") {
    const std::vector<std::string> records = {"one two", "three", "two four", "five one"};
    const auto vocab = build_vocab(records, 5, no_stopwords());
    const auto ds = encode_bows(records, vocab, 2, 1, Split::kValidation);
    const auto p1 = temp_path("a.bows");
    const auto p2 = temp_path("b.bows");
    save_dataset(ds, p1);
    save_dataset(encode_bows(records, vocab, 2, 1, Split::kValidation, 3), p2);
    CHECK(file_bytes(p1) == file_bytes(p2));
    const auto back = load_dataset(p1);
    CHECK(back.samples == ds.samples);
    CHECK(back.vocab == ds.vocab);
    CHECK(back.context_size == 2);
    CHECK(back.stride == 1);
    CHECK(back.split == Split::kValidation);
    const auto bytes = file_bytes(p1);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "BOWS");
  }

  TEST_CASE("corrupted BOWS files are rejected") {
    const std::vector<std::string> records = {"one two", "three"};
    const auto ds = encode_bows(records, build_vocab(records, 3, no_stopwords()), 1, 1);
    const auto p = temp_path("c.bows");
    save_dataset(ds, p);
    auto bytes = file_bytes(p);
    auto write = [&](const std::vector<char>& b) {
      std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    write(truncated);
    CHECK_THROWS_AS(load_dataset(p), FormatError);
    auto magic = bytes;
    magic[0] = 'X';
    write(magic);
    CHECK_THROWS_AS(load_dataset(p), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    write(trailing);
    CHECK_THROWS_AS(load_dataset(p), FormatError);
    CHECK_THROWS_AS(load_dataset(temp_path("nope.bows")), IoError);
  }

  TEST_CASE("split names") {
    CHECK(parse_split("train") == Split::kTrain);
    CHECK(parse_split("valid") == Split::kValidation);
    CHECK(parse_split("validation") == Split::kValidation);
    CHECK_THROWS_AS(parse_split("test"), ContractError);
  }

  TEST_CASE("rank-frequency slope of WikiText-2 lines" * doctest::skip(!fs::exists(
                  fs::path(SLAB_DATA_DIR) / "wikitext-2" / "wiki.train.raw"))) {
    const auto text = read_text(fs::path(SLAB_DATA_DIR) / "wikitext-2" / "wiki.train.raw");
    const auto records = segment_records(text, SegmentMode::kLine);
    // The power law describes raw word frequencies, so no stopwords are removed.
    const auto vocab = build_vocab(records, 2000, no_stopwords());
    const auto ds = encode_bows(records, vocab, 1, 1);
    const auto fit = fit_rank_frequency(word_frequency_histogram(ds), 1000);
    CHECK(fit.slope <= -0.7);
    CHECK(fit.slope >= -1.5);
  }
}
