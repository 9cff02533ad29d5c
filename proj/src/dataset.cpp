#include "raeid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "raeid/io.hpp"
#include "raeid/rng.hpp"

namespace raeid {

using nlohmann::json;

Label assign_label(double pct, double threshold) {
  if (std::isnan(pct)) throw DataError("assign_label: NaN percentage change");
  if (pct < -threshold) return Label::Fall;
  if (pct > threshold) return Label::Rise;
  return Label::Neutral;
}

std::vector<ContextRecord> to_context_records(const ContextWindow& window) {
  std::vector<ContextRecord> out;
  out.reserve(window.rows.size());
  for (const auto& r : window.rows) {
    const auto& ind = r.indicators;
    out.push_back({day_to_iso(r.date),
                   {r.open, r.high, r.low, r.close, r.adj_close, r.volume, ind.pct_change,
                    ind.macd, ind.bollinger_upper, ind.bollinger_lower, ind.rsi, ind.cci,
                    ind.dx, ind.sma_short, ind.sma_long}});
  }
  return out;
}

const std::vector<std::string>& default_instructions() {
  static const std::vector<std::string> kTemplates = {
      "Using the market data and headlines for DATE, predict whether the index will "
      "Rise, Fall, or stay Neutral. A move smaller than 0.5% counts as Neutral.",
      "Given the recent price history and today's news for DATE, will the index close "
      "higher, lower, or about flat? Answer Rise, Fall, or Neutral (Neutral if the move "
      "is within 0.5%).",
      "Forecast the index's closing move on DATE from the indicators and headlines "
      "below. Reply with one of Rise, Fall, Neutral; use Neutral for moves under 0.5%.",
      "Read the trailing market statistics and the news for DATE. Classify the next "
      "close as Rise, Fall, or Neutral, treating changes of at most 0.5% as Neutral.",
      "Based on the numbers and headlines provided for DATE, state whether the index "
      "rises, falls, or holds steady. Say Neutral when you expect less than 0.5% change.",
      "Predict the direction of the index on DATE. Options: Rise, Fall, Neutral. "
      "Neutral means an absolute change no greater than 0.5%.",
      "Consider the price table and the headlines dated DATE. Will the index move up "
      "by more than 0.5% (Rise), down by more than 0.5% (Fall), or neither (Neutral)?",
      "From the technical indicators and news coverage for DATE, decide if the index "
      "will Rise, Fall, or remain Neutral (within 0.5%). Give the label first.",
      "Assess today's headlines and the last trading days' metrics for DATE and "
      "output Rise, Fall, or Neutral for the index's close; Neutral covers +/-0.5%.",
      "Your task: label the index's move on DATE as Rise, Fall, or Neutral using the "
      "supplied market context and news. Moves inside 0.5% are Neutral.",
      "Here is market context and news for DATE. Does the index go up, go down, or "
      "stay within 0.5% of yesterday's close? Answer Rise, Fall, or Neutral.",
      "Examine the price and indicator history together with the headlines for DATE, "
      "then call the index's closing direction: Rise, Fall, or Neutral (under 0.5%).",
      "Estimate whether the index will gain more than 0.5%, lose more than 0.5%, or "
      "change less than that on DATE. Respond Rise, Fall, or Neutral.",
      "Taking the provided indicators and the day's news into account, what is your "
      "call for the index on DATE: Rise, Fall, or Neutral? Neutral if |move| <= 0.5%.",
      "Determine the likely closing move of the index for DATE from the data below. "
      "Use Rise or Fall for moves beyond 0.5%, otherwise Neutral.",
      "Look at the past days of market metrics and the headlines from DATE. Predict "
      "Rise, Fall, or Neutral for the index, with Neutral meaning within 0.5%.",
      "Analyze the context table and news for DATE and forecast the index: Rise, "
      "Fall, or Neutral. Changes of 0.5% or less should be labeled Neutral.",
      "With the given market history and DATE headlines, choose one label for the "
      "index's next close: Rise, Fall, or Neutral (the latter for moves up to 0.5%).",
      "Decide from the indicators and news whether the index closes up, down, or "
      "roughly unchanged on DATE. Reply Rise, Fall, or Neutral; 0.5% is the cutoff.",
      "Study the market snapshot and news items for DATE. Output Rise if the index "
      "should gain over 0.5%, Fall if it should lose over 0.5%, else Neutral."};
  return kTemplates;
}

std::vector<std::string> load_instructions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open instruction file " + path.string());
  std::vector<std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (line.find("DATE") == std::string::npos) {
      throw DataError("instruction line " + std::to_string(lineno) + " lacks DATE");
    }
    out.push_back(line);
  }
  if (out.empty()) throw DataError("instruction file is empty: " + path.string());
  return out;
}

std::string assemble_prompt(const std::string& question,
                            std::span<const ContextRecord> context,
                            const std::string& news, const std::string& date) {
  std::string instruction = question;
  if (!date.empty()) {
    for (auto pos = instruction.find("DATE"); pos != std::string::npos;
         pos = instruction.find("DATE", pos + date.size())) {
      instruction.replace(pos, 4, date);
    }
  }
  std::string out = instruction;
  out += '\n';
  for (const auto& row : context) {
    out += "date: ";
    out += row.date;
    for (std::size_t c = 0; c < kNumContextColumns; ++c) {
      if (!row.values[c]) continue;
      out += ", ";
      out += kContextColumns[c];
      out += ": ";
      out += fixed6(*row.values[c]);
    }
    out += '\n';
  }
  if (!news.empty()) {
    out += news;
    out += '\n';
  }
  return out;
}

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::vector<std::size_t> filter_headlines_by_similarity(
    std::span<const std::vector<double>> headlines,
    std::span<const std::vector<double>> references, double threshold) {
  std::vector<double> ref_norms;
  ref_norms.reserve(references.size());
  const std::size_t dim = headlines.empty()
                              ? (references.empty() ? 0 : references.front().size())
                              : headlines.front().size();
  for (const auto& r : references) {
    if (r.size() != dim) throw DataError("similarity filter: dimension mismatch");
    ref_norms.push_back(norm(r));
    if (ref_norms.back() == 0.0) throw DataError("similarity filter: zero-norm reference");
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < headlines.size(); ++i) {
    const auto& h = headlines[i];
    if (h.size() != dim) throw DataError("similarity filter: dimension mismatch");
    const double hn = norm(h);
    if (hn == 0.0) throw DataError("similarity filter: zero-norm headline");
    double best = -1.0;
    for (std::size_t j = 0; j < references.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += h[k] * references[j][k];
      best = std::max(best, dot / (hn * ref_norms[j]));
    }
    if (best >= threshold) kept.push_back(i);
  }
  return kept;
}

CorpusStats CorpusStats::from_corpus(std::span<const std::vector<std::string>> documents) {
  CorpusStats stats;
  stats.num_documents = documents.size();
  for (const auto& doc : documents) {
    std::vector<std::string> uniq(doc.begin(), doc.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (const auto& w : uniq) ++stats.document_frequency[w];
  }
  return stats;
}

std::vector<std::string> prune_low_tfidf(std::span<const std::string> document,
                                         const CorpusStats& stats, double threshold,
                                         std::size_t max_words) {
  if (stats.num_documents == 0) throw DataError("prune_low_tfidf: empty corpus");
  if (document.size() <= max_words) return {document.begin(), document.end()};

  std::map<std::string, std::size_t> counts;
  for (const auto& w : document) ++counts[w];
  const double len = static_cast<double>(document.size());
  const double n_docs = static_cast<double>(stats.num_documents);
  std::map<std::string, bool> keep;
  for (const auto& [word, count] : counts) {
    const auto it = stats.document_frequency.find(word);
    if (it == stats.document_frequency.end() || it->second == 0) {
      throw DataError("prune_low_tfidf: corpus statistics lack token '" + word + "'");
    }
    const double tfidf = (count / len) * std::log(n_docs / static_cast<double>(it->second));
    keep[word] = tfidf >= threshold;
  }
  std::vector<std::string> out;
  for (const auto& w : document) {
    if (out.size() == max_words) break;
    if (keep[w]) out.push_back(w);
  }
  return out;
}

PreferencePair make_preference_pair(const Example& example, std::uint64_t seed) {
  if (!is_policy_label(example.response)) {
    throw DataError("make_preference_pair: example response must be Rise/Fall/Neutral");
  }
  std::vector<Label> alternatives;
  for (Label l : kRewardLabels) {
    if (l != example.response) alternatives.push_back(l);
  }
  Rng rng = make_rng(seed);
  return {example.id, example.response,
          alternatives[uniform_index(rng, alternatives.size())]};
}

DatasetSplit split_dataset(std::vector<Example> examples, const SplitRatios& ratios,
                           std::uint64_t seed, bool shuffle) {
  if (examples.size() < 3) throw DataError("split_dataset: need at least 3 examples");
  if (!(ratios.train > 0 && ratios.test > 0 && ratios.eval > 0) ||
      std::abs(ratios.train + ratios.test + ratios.eval - 1.0) > 1e-6) {
    throw ConfigError("split_dataset: ratios must be positive and sum to 1");
  }
  const double n = static_cast<double>(examples.size());
  // The epsilon absorbs ratios like 317/2111 that are exact only on paper.
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
  const auto n_eval = static_cast<std::size_t>(std::floor(n * ratios.eval + 1e-9));
  const std::size_t n_train = examples.size() - n_test - n_eval;

  if (shuffle) {
    Rng rng = make_rng(seed);
    for (std::size_t i = examples.size(); i > 1; --i) {
      std::swap(examples[i - 1], examples[uniform_index(rng, i)]);
    }
  }
  DatasetSplit out;
  auto it = std::make_move_iterator(examples.begin());
  out.train.assign(it, it + n_train);
  out.test.assign(it + n_train, it + n_train + n_test);
  out.eval.assign(it + n_train + n_test, std::make_move_iterator(examples.end()));
  return out;
}

std::string example_to_json_line(const Example& e) {
  json ctx = json::array();
  for (const auto& row : e.context) {
    json r = json::array({row.date});
    for (const auto& v : row.values) {
      if (v) {
        r.push_back(*v);
      } else {
        r.push_back(nullptr);
      }
    }
    ctx.push_back(std::move(r));
  }
  json j = {{"id", e.id},
            {"date", e.date},
            {"question", e.question},
            {"context", std::move(ctx)},
            {"news", e.news ? json(*e.news) : json(nullptr)},
            {"news_embedding", e.news_embedding ? json(*e.news_embedding) : json(nullptr)},
            {"response", std::string(label_name(e.response))},
            {"pct_change", e.pct_change}};
  return j.dump();
}

Example example_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  Example e;
  e.id = j.at("id").get<std::string>();
  e.date = j.at("date").get<std::string>();
  e.question = j.at("question").get<std::string>();
  for (const auto& r : j.at("context")) {
    if (!r.is_array() || r.size() != kNumContextColumns + 1) {
      throw DataError("context row must have " + std::to_string(kNumContextColumns + 1) +
                      " entries");
    }
    ContextRecord rec;
    rec.date = r.at(0).get<std::string>();
    for (std::size_t c = 0; c < kNumContextColumns; ++c) {
      if (!r.at(c + 1).is_null()) rec.values[c] = r.at(c + 1).get<double>();
    }
    e.context.push_back(std::move(rec));
  }
  if (!j.at("news").is_null()) e.news = j.at("news").get<std::string>();
  if (!j.at("news_embedding").is_null()) {
    e.news_embedding = j.at("news_embedding").get<std::vector<double>>();
  }
  const auto label = parse_label(j.at("response").get<std::string>());
  if (!label || !is_policy_label(*label)) throw DataError("response must be Rise|Fall|Neutral");
  e.response = *label;
  e.pct_change = j.at("pct_change").get<double>();
  return e;
}

void write_examples(std::ostream& out, std::span<const Example> examples) {
  for (const auto& e : examples) out << example_to_json_line(e) << '\n';
}

std::vector<Example> read_examples(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(example_from_json_line(line));
    } catch (const std::exception& ex) {
      throw DataError("examples line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

void write_preferences(std::ostream& out, std::span<const PreferencePair> pairs) {
  for (const auto& p : pairs) {
    out << json{{"prompt_id", p.prompt_id},
                {"chosen", std::string(label_name(p.chosen))},
                {"rejected", std::string(label_name(p.rejected))}}
                .dump()
        << '\n';
  }
}

std::vector<PreferencePair> read_preferences(std::istream& in) {
  std::vector<PreferencePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const auto chosen = parse_label(j.at("chosen").get<std::string>());
      const auto rejected = parse_label(j.at("rejected").get<std::string>());
      if (!chosen || !rejected || !is_policy_label(*chosen) || *chosen == *rejected) {
        throw DataError("invalid chosen/rejected labels");
      }
      out.push_back({j.at("prompt_id").get<std::string>(), *chosen, *rejected});
    } catch (const std::exception& ex) {
      throw DataError("preferences line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<Example> build_examples(const PriceSeries& series,
                                    std::span<const int> regimes,
                                    const WorldConfig& config,
                                    std::span<const std::string> instructions) {
  if (!regimes.empty() && regimes.size() != series.size()) {
    throw DataError("build_examples: regime path length differs from series");
  }
  const auto& templates =
      instructions.empty() ? std::span<const std::string>(default_instructions()) : instructions;
  const auto indicators = compute_indicators(series, config.indicators);

  const NewsChannelConfig& news = config.news;
  std::vector<std::vector<double>> codes;
  if (news.dim > 0) {
    Rng code_rng = make_rng(derive_seed(news.seed, 0xC0DE));
    for (int l = 0; l < kNumPolicyLabels; ++l) {
      std::vector<double> c(static_cast<std::size_t>(news.dim));
      for (auto& x : c) x = standard_normal(code_rng);
      const double n = norm(c);
      for (auto& x : c) x /= n;
      codes.push_back(std::move(c));
    }
  }

  std::vector<Example> out;
  for (std::size_t t = 2; t < series.size(); ++t) {
    const auto window = build_context_window(series, indicators,
                                             static_cast<std::int64_t>(t - 1),
                                             config.context_depth);
    Example e;
    char id[32];
    std::snprintf(id, sizeof id, "ex-%06zu", t);
    e.id = id;
    e.date = day_to_iso(series.dates[t]);
    e.pct_change = *indicators[t].pct_change;
    e.response = assign_label(e.pct_change, config.label_threshold);
    Rng rng = make_rng(derive_seed(config.seed, t));
    e.question = templates[uniform_index(rng, templates.size())];
    const auto pos = e.question.find("DATE");
    if (pos != std::string::npos) e.question.replace(pos, 4, e.date);
    e.context = to_context_records(window);
    if (news.dim > 0) {
      const int regime = regimes.empty() ? 0 : regimes[t];
      int code = label_index(e.response);
      if (std::find(news.inverted_regimes.begin(), news.inverted_regimes.end(), regime) !=
          news.inverted_regimes.end()) {
        if (e.response == Label::Rise) code = label_index(Label::Fall);
        if (e.response == Label::Fall) code = label_index(Label::Rise);
      }
      std::vector<double> emb(static_cast<std::size_t>(news.dim));
      for (std::size_t k = 0; k < emb.size(); ++k) {
        emb[k] = news.signal * codes[code][k] + news.noise * standard_normal(rng);
      }
      e.news_embedding = std::move(emb);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::array<std::size_t, 3> label_counts(std::span<const Example> examples) {
  std::array<std::size_t, 3> counts{};
  for (const auto& e : examples) ++counts[label_index(e.response)];
  return counts;
}

}  // namespace raeid
