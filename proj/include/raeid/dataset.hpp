#pragma once

// Supervised movement examples and preference pairs: labeling, prompt
// assembly, headline/tf-idf filtering, splitting, and JSONL serialization.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raeid/common.hpp"
#include "raeid/featurize.hpp"
#include "raeid/market_sim.hpp"

namespace raeid {

/// Fall below -threshold, Rise above +threshold, Neutral on the closed band.
Label assign_label(double pct, double threshold = 0.5);

/// Column order of a context row after its date.
inline constexpr std::array<const char*, 15> kContextColumns = {
    "open",   "high",    "low",   "close", "adj_close", "volume", "pct_change", "macd",
    "boll_up", "boll_low", "rsi30", "cci30", "dx30",     "sma30",  "sma60"};
inline constexpr std::size_t kNumContextColumns = kContextColumns.size();

struct ContextRecord {
  std::string date;
  std::array<std::optional<double>, kNumContextColumns> values{};

  bool operator==(const ContextRecord&) const = default;
};

std::vector<ContextRecord> to_context_records(const ContextWindow& window);

struct Example {
  std::string id;
  std::string date;
  std::string question;
  std::vector<ContextRecord> context;
  std::optional<std::string> news;
  std::optional<std::vector<double>> news_embedding;
  Label response = Label::Neutral;
  double pct_change = 0.0;

  bool operator==(const Example&) const = default;
};

struct PreferencePair {
  std::string prompt_id;
  Label chosen = Label::Rise;
  Label rejected = Label::Fall;

  bool operator==(const PreferencePair&) const = default;
};

/// Built-in instruction variations; each contains the DATE placeholder.
const std::vector<std::string>& default_instructions();
/// One template per non-empty line; every line must contain DATE.
std::vector<std::string> load_instructions(const std::filesystem::path& path);

/// Instruction (DATE substituted), then one line per context day, then the
/// news text when non-empty. Absent indicator values are omitted from lines.
std::string assemble_prompt(const std::string& question,
                            std::span<const ContextRecord> context,
                            const std::string& news, const std::string& date = {});

/// Indices of headlines whose best cosine similarity to any reference is at
/// least `threshold`.
std::vector<std::size_t> filter_headlines_by_similarity(
    std::span<const std::vector<double>> headlines,
    std::span<const std::vector<double>> references, double threshold = 0.2);

struct CorpusStats {
  std::size_t num_documents = 0;
  std::map<std::string, std::size_t> document_frequency;

  static CorpusStats from_corpus(std::span<const std::vector<std::string>> documents);
};

/// Leaves documents of at most `max_words` tokens untouched. Longer ones lose
/// every token whose tf-idf (tf = count/len, idf = ln(N/df)) is below
/// `threshold` and are then truncated to `max_words`, order preserved.
std::vector<std::string> prune_low_tfidf(std::span<const std::string> document,
                                         const CorpusStats& stats,
                                         double threshold = 0.2,
                                         std::size_t max_words = 3000);

/// Rejected label uniform over {Rise, Fall, Neutral, Surrender} minus chosen.
PreferencePair make_preference_pair(const Example& example, std::uint64_t seed);

struct SplitRatios {
  double train = 1477.0 / 2111.0;
  double test = 317.0 / 2111.0;
  double eval = 317.0 / 2111.0;
};

struct DatasetSplit {
  std::vector<Example> train, test, eval;
};

/// Test and eval sizes are floor(n * ratio); train takes the remainder.
/// Chronological blocks (train, test, eval) unless `shuffle` is set.
DatasetSplit split_dataset(std::vector<Example> examples, const SplitRatios& ratios,
                           std::uint64_t seed, bool shuffle = false);

void write_examples(std::ostream& out, std::span<const Example> examples);
std::vector<Example> read_examples(std::istream& in);
void write_preferences(std::ostream& out, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_preferences(std::istream& in);

std::string example_to_json_line(const Example& example);
Example example_from_json_line(const std::string& line);

/// Synthetic stand-in for the news channel: each day gets an embedding
///   signal * code[regime][label] + noise * N(0, I).
/// Codes are seeded unit vectors; regimes listed in `inverted_regimes` swap
/// the Rise and Fall codes, which inverts the news-to-label map.
struct NewsChannelConfig {
  int dim = 8;
  double signal = 1.5;
  double noise = 1.0;
  std::uint64_t seed = 7;
  std::vector<int> inverted_regimes;
};

struct WorldConfig {
  IndicatorConfig indicators;
  int context_depth = kDefaultContextDepth;
  double label_threshold = 0.5;
  NewsChannelConfig news;
  std::uint64_t seed = 0;
};

/// One example per day t >= 2: context ends at t-1, label is day t's move.
/// `regimes` (optional, same length as series) drives the news channel.
std::vector<Example> build_examples(const PriceSeries& series,
                                    std::span<const int> regimes,
                                    const WorldConfig& config,
                                    std::span<const std::string> instructions = {});

std::array<std::size_t, 3> label_counts(std::span<const Example> examples);

}  // namespace raeid
