#pragma once

// Bag-of-words corpus construction: text -> records -> tokens -> vocabulary
// -> windowed binary presence vectors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "slab/sparse.hpp"

namespace slab::corpus {

enum class SegmentMode { kLine, kParagraph };

// Splits `text` into records. Line mode: one record per line. Paragraph mode:
// records are separated by runs of blank lines. Whitespace-only records are
// dropped. Throws DecodeError on invalid UTF-8.
std::vector<std::string> segment_records(std::string_view text, SegmentMode mode);

// Lower-cased runs of ASCII letters; every other byte separates tokens.
std::vector<std::string> tokenize(std::string_view record);

struct StopwordList {
  std::string id;
  std::unordered_set<std::string> words;

  bool contains(std::string_view word) const { return words.count(std::string(word)) != 0; }
};

// Built-in English stop-word and preposition list, id "en-basic-v1".
const StopwordList& builtin_stopwords();
// One word per line; '#' starts a comment. Words are lower-cased. The id is
// "file:<filename>".
StopwordList load_stopwords(const std::filesystem::path& path);

class Vocab {
 public:
  Vocab() = default;
  Vocab(std::vector<std::string> words, std::vector<std::uint64_t> frequencies,
        std::string stopword_list_id = {});

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::uint64_t>& frequencies() const { return frequencies_; }
  const std::string& word(std::size_t i) const { return words_[i]; }
  const std::string& stopword_list_id() const { return stopword_list_id_; }
  std::optional<std::uint32_t> index_of(std::string_view word) const;

  // Set by build_vocab when fewer than the requested number of words exist.
  bool short_vocab = false;

  bool operator==(const Vocab& other) const {
    return words_ == other.words_ && frequencies_ == other.frequencies_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> frequencies_;
  std::string stopword_list_id_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Top-`size` non-stop-words by number of records containing them; ties are
// broken lexicographically.
Vocab build_vocab(const std::vector<std::string>& records, std::size_t size,
                  const StopwordList& stopwords, unsigned workers = 1);

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1 };

const char* to_string(Split split);
Split parse_split(std::string_view text);

struct BowsDataset {
  SparseBinaryMatrix samples;
  Vocab vocab;
  std::uint32_t context_size = 1;
  std::uint32_t stride = 1;
  Split split = Split::kTrain;
  // Windows whose union was empty (not persisted).
  std::uint64_t dropped_windows = 0;

  std::size_t size() const { return samples.rows(); }
};

// Number of windows ⌊(R - c)/s⌋ + 1 before empty windows are dropped.
std::uint64_t window_count(std::size_t records, std::uint32_t context, std::uint32_t stride);

// Window t covers records [t*s, t*s + c); each sample is the OR of the
// per-record presence vectors.
BowsDataset encode_bows(const std::vector<std::string>& records, const Vocab& vocab,
                        std::uint32_t context, std::uint32_t stride,
                        Split split = Split::kTrain, unsigned workers = 1);

// (word, active-sample count) sorted by count descending, then word.
std::vector<std::pair<std::string, std::uint64_t>> word_frequency_histogram(
    const BowsDataset& dataset);

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least squares fit of log(count) against log(rank) over the first `top`
// entries of a histogram with non-zero counts.
PowerLawFit fit_rank_frequency(const std::vector<std::pair<std::string, std::uint64_t>>& histogram,
                               std::size_t top);

// BOWS container (see README for the byte layout).
void save_dataset(const BowsDataset& dataset, const std::filesystem::path& path);
BowsDataset load_dataset(const std::filesystem::path& path);

// Reads a file, or every regular file below a directory in sorted path order.
std::string read_text(const std::filesystem::path& path);

}  // namespace slab::corpus
