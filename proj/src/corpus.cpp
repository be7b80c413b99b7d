#include "slab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "slab/binary_io.hpp"
#include "slab/error.hpp"
#include "slab/parallel.hpp"

namespace slab::corpus {

namespace {

// Returns the offset of the first invalid UTF-8 byte, or npos.
std::size_t first_invalid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::string_view::npos;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char ch) {
    return ch == ' ' || ch == '\t' || ch == '\r' || ch == '\f' || ch == '\v';
  });
}

// Sorted unique vocabulary ids present in one record.
std::vector<std::uint32_t> record_ids(const std::string& record, const Vocab& vocab) {
  std::vector<std::uint32_t> ids;
  for (const auto& token : tokenize(record)) {
    if (const auto id = vocab.index_of(token)) ids.push_back(*id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

constexpr char kMagic[] = "BOWS";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<std::string> segment_records(std::string_view text, SegmentMode mode) {
  if (const auto bad = first_invalid_utf8(text); bad != std::string_view::npos) {
    throw DecodeError(bad, "invalid UTF-8");
  }
  std::vector<std::string> records;
  std::string paragraph;
  bool paragraph_open = false;
  auto flush = [&] {
    if (paragraph_open && !is_blank(paragraph)) records.push_back(paragraph);
    paragraph.clear();
    paragraph_open = false;
  };

  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (mode == SegmentMode::kLine) {
      if (!is_blank(line)) records.emplace_back(line);
    } else if (is_blank(line)) {
      flush();
    } else {
      if (paragraph_open) paragraph.push_back('\n');
      paragraph.append(line);
      paragraph_open = true;
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  if (mode == SegmentMode::kParagraph) flush();
  return records;
}

std::vector<std::string> tokenize(std::string_view record) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : record) {
    if ((ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z')) {
      current.push_back(static_cast<char>(ch | 0x20));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

const StopwordList& builtin_stopwords() {
  static const StopwordList list = [] {
    StopwordList l;
    l.id = "en-basic-v1";
    // Common English function words followed by prepositions. Contraction
    // fragments ("s", "t", "ll", ...) are listed because the tokenizer splits
    // on apostrophes.
    static constexpr const char* kWords[] = {
        "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
        "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
        "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
        "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
        "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
        "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
        "for", "with", "about", "against", "between", "into", "through", "during", "before",
        "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
        "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
        "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
        "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
        "just", "don", "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren",
        "couldn", "didn", "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn",
        "needn", "shan", "shouldn", "wasn", "weren", "won", "wouldn",
        // prepositions
        "aboard", "across", "along", "amid", "among", "amongst", "around", "atop", "beneath",
        "beside", "besides", "beyond", "despite", "except", "inside", "near", "onto", "outside",
        "past", "per", "since", "throughout", "till", "toward", "towards", "underneath",
        "unlike", "unto", "upon", "via", "within", "without", "versus"};
    for (const char* w : kWords) l.words.insert(w);
    return l;
  }();
  return list;
}

StopwordList load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stopword file " + path.string());
  StopwordList list;
  list.id = "file:" + path.filename().string();
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    for (auto& token : tokenize(line)) list.words.insert(std::move(token));
  }
  return list;
}

Vocab::Vocab(std::vector<std::string> words, std::vector<std::uint64_t> frequencies,
             std::string stopword_list_id)
    : words_(std::move(words)),
      frequencies_(std::move(frequencies)),
      stopword_list_id_(std::move(stopword_list_id)) {
  SLAB_REQUIRE(words_.size() == frequencies_.size(), "vocab words and frequencies differ in length");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<std::uint32_t>(i)).second) {
      throw ContractError("duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

std::optional<std::uint32_t> Vocab::index_of(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocab build_vocab(const std::vector<std::string>& records, std::size_t size,
                  const StopwordList& stopwords, unsigned workers) {
  SLAB_REQUIRE(size >= 1, "vocabulary size must be at least 1");
  const std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(workers, records.size()));
  std::vector<std::unordered_map<std::string, std::uint64_t>> partial(shards);
  parallel_for_ranges(records.size(), static_cast<unsigned>(shards),
                      [&](std::size_t begin, std::size_t end, std::size_t shard) {
                        auto& counts = partial[shard];
                        std::vector<std::string> seen;
                        for (std::size_t r = begin; r < end; ++r) {
                          seen = tokenize(records[r]);
                          std::sort(seen.begin(), seen.end());
                          seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
                          for (auto& w : seen) {
                            if (!stopwords.contains(w)) ++counts[w];
                          }
                        }
                      });
  // Ordered merge: the totals are sums, so the result is independent of the
  // shard layout.
  std::map<std::string, std::uint64_t> totals;
  for (const auto& counts : partial) {
    for (const auto& [w, c] : counts) totals[w] += c;
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(totals.begin(), totals.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  const std::size_t kept = std::min(size, ranked.size());
  std::vector<std::string> words;
  std::vector<std::uint64_t> freqs;
  words.reserve(kept);
  freqs.reserve(kept);
  for (std::size_t i = 0; i < kept; ++i) {
    words.push_back(ranked[i].first);
    freqs.push_back(ranked[i].second);
  }
  Vocab vocab(std::move(words), std::move(freqs), stopwords.id);
  vocab.short_vocab = kept < size;
  return vocab;
}

const char* to_string(Split split) {
  return split == Split::kTrain ? "train" : "validation";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation" || text == "valid" || text == "val") return Split::kValidation;
  throw ContractError("unknown split '" + std::string(text) + "'");
}

std::uint64_t window_count(std::size_t records, std::uint32_t context, std::uint32_t stride) {
  SLAB_REQUIRE(context >= 1 && stride >= 1, "context size and stride must be positive");
  if (records < context) return 0;
  return (records - context) / stride + 1;
}

BowsDataset encode_bows(const std::vector<std::string>& records, const Vocab& vocab,
                        std::uint32_t context, std::uint32_t stride, Split split,
                        unsigned workers) {
  SLAB_REQUIRE(context >= 1 && stride >= 1, "context size and stride must be positive");
  if (records.size() < context) {
    throw DataError("context size " + std::to_string(context) + " exceeds record count " +
                    std::to_string(records.size()) + ": dataset would be empty");
  }
  std::vector<std::vector<std::uint32_t>> per_record(records.size());
  parallel_for_ranges(records.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t r = begin; r < end; ++r) per_record[r] = record_ids(records[r], vocab);
  });

  const std::uint64_t windows = window_count(records.size(), context, stride);
  std::vector<std::vector<std::uint32_t>> rows(windows);
  parallel_for_ranges(windows, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<std::uint32_t> merged;
    for (std::size_t t = begin; t < end; ++t) {
      merged.clear();
      const std::size_t first = t * stride;
      for (std::size_t r = first; r < first + context; ++r) {
        merged.insert(merged.end(), per_record[r].begin(), per_record[r].end());
      }
      std::sort(merged.begin(), merged.end());
      merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
      rows[t] = merged;
    }
  });

  BowsDataset out;
  out.samples = SparseBinaryMatrix(vocab.size());
  out.vocab = vocab;
  out.context_size = context;
  out.stride = stride;
  out.split = split;
  for (const auto& row : rows) {
    if (row.empty()) {
      ++out.dropped_windows;
    } else {
      out.samples.append_row(row);
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::uint64_t>> word_frequency_histogram(
    const BowsDataset& dataset) {
  SLAB_REQUIRE(dataset.size() > 0, "histogram of an empty dataset");
  const auto counts = dataset.samples.column_counts();
  std::vector<std::pair<std::string, std::uint64_t>> out;
  out.reserve(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) out.emplace_back(dataset.vocab.word(j), counts[j]);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

PowerLawFit fit_rank_frequency(const std::vector<std::pair<std::string, std::uint64_t>>& histogram,
                               std::size_t top) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < std::min(top, histogram.size()); ++i) {
    if (histogram[i].second == 0) break;
    xs.push_back(std::log(static_cast<double>(i + 1)));
    ys.push_back(std::log(static_cast<double>(histogram[i].second)));
  }
  SLAB_REQUIRE(xs.size() >= 2, "need at least two non-zero ranks to fit");
  const auto n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  PowerLawFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

void save_dataset(const BowsDataset& dataset, const std::filesystem::path& path) {
  io::BinaryWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u64(dataset.vocab.size());
  w.u64(dataset.samples.rows());
  w.u32(dataset.context_size);
  w.u32(dataset.stride);
  w.u8(static_cast<std::uint8_t>(dataset.split));
  for (std::size_t i = 0; i < dataset.vocab.size(); ++i) {
    w.string(dataset.vocab.word(i));
    w.u64(dataset.vocab.frequencies()[i]);
  }
  w.array(std::span<const std::uint64_t>(dataset.samples.row_ptr()));
  w.array(std::span<const std::uint32_t>(dataset.samples.col_idx()));
  w.save(path);
}

BowsDataset load_dataset(const std::filesystem::path& path) {
  auto r = io::BinaryReader::from_file(path);
  if (r.bytes(4) != std::string_view(kMagic, 4)) r.fail("missing BOWS magic");
  if (const auto version = r.u32(); version != kVersion) {
    r.fail("unsupported BOWS version " + std::to_string(version));
  }
  const std::uint64_t vocab_size = r.u64();
  const std::uint64_t rows = r.u64();
  BowsDataset out;
  out.context_size = r.u32();
  out.stride = r.u32();
  const auto split = r.u8();
  if (split > 1) r.fail("not a bag-of-words dataset (split tag " + std::to_string(split) + ")");
  out.split = static_cast<Split>(split);
  std::vector<std::string> words;
  std::vector<std::uint64_t> freqs;
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    words.push_back(r.string());
    freqs.push_back(r.u64());
  }
  out.vocab = Vocab(std::move(words), std::move(freqs));
  auto row_ptr = r.array<std::uint64_t>(rows + 1);
  auto col_idx = r.array<std::uint32_t>(row_ptr.back());
  if (!r.at_end()) r.fail("trailing bytes after column index array");
  out.samples = SparseBinaryMatrix(vocab_size, std::move(row_ptr), std::move(col_idx));
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  if (!fs::exists(path)) throw IoError("input not found: " + path.string());
  if (!fs::is_directory(path)) return slurp(path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string text;
  for (const auto& f : files) {
    text += slurp(f);
    if (!text.empty() && text.back() != '\n') text.push_back('\n');
  }
  return text;
}

}  // namespace slab::corpus
