#include "raeid/igtools.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "raeid/common.hpp"
#include "raeid/io.hpp"
#include "raeid/rng.hpp"

namespace raeid {

static_assert(std::endian::native == std::endian::little, "binary embedding I/O assumes LE");

void EmbeddingSet::validate() const {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (!tags.empty() && tags.size() != n) throw DataError("embedding set: tag count differs from rows");
  if (!targets.empty() && targets.size() != n) {
    throw DataError("embedding set: target count differs from rows");
  }
  if (!rows.allFinite()) throw DataError("embedding set: non-finite embedding entry");
  for (double t : targets) {
    if (!std::isfinite(t)) throw DataError("embedding set: non-finite target");
  }
}

int Partition::cluster_count() const {
  std::vector<int> ids;
  for (int c : cluster) {
    if (c != kOutlier) ids.push_back(c);
  }
  std::sort(ids.begin(), ids.end());
  return static_cast<int>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

double Partition::outlier_fraction() const {
  if (cluster.empty()) return 0.0;
  const auto out = std::count(cluster.begin(), cluster.end(), kOutlier);
  return static_cast<double>(out) / static_cast<double>(cluster.size());
}

namespace {

double entropy_of_counts(const std::map<int, std::size_t>& counts, std::size_t total) {
  double h = 0.0;
  for (const auto& [tag, c] : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

void check_coverage(std::size_t n, const Partition& partition) {
  if (partition.cluster.size() != n) {
    throw DataError("partition covers " + std::to_string(partition.cluster.size()) +
                    " rows but the data has " + std::to_string(n));
  }
}

// Row indices grouped by cluster id, ordered by id; outliers optionally dropped.
std::map<int, std::vector<std::size_t>> groups(const Partition& partition, OutlierMode mode) {
  std::map<int, std::vector<std::size_t>> g;
  for (std::size_t i = 0; i < partition.cluster.size(); ++i) {
    const int c = partition.cluster[i];
    if (c == kOutlier && mode == OutlierMode::Exclude) continue;
    g[c].push_back(i);
  }
  return g;
}

double population_variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

}  // namespace

double entropy(std::span<const int> tags) {
  if (tags.empty()) throw DataError("entropy of an empty multiset");
  std::map<int, std::size_t> counts;
  for (int t : tags) ++counts[t];
  return entropy_of_counts(counts, tags.size());
}

double entropy(std::span<const std::string> tags) {
  const auto ids = encode_tags(tags);
  return entropy(std::span<const int>(ids));
}

double clustered_entropy(std::span<const int> tags, const Partition& partition,
                         OutlierMode mode) {
  check_coverage(tags.size(), partition);
  if (tags.empty()) throw DataError("clustered entropy of an empty multiset");
  const auto g = groups(partition, mode);
  std::size_t total = 0;
  for (const auto& [c, rows] : g) total += rows.size();
  if (total == 0) return 0.0;
  double h = 0.0;
  for (const auto& [c, rows] : g) {
    std::map<int, std::size_t> counts;
    for (auto i : rows) ++counts[tags[i]];
    h += static_cast<double>(rows.size()) / static_cast<double>(total) *
         entropy_of_counts(counts, rows.size());
  }
  return h;
}

double information_gain(std::span<const int> tags, const Partition& partition,
                        OutlierMode mode) {
  check_coverage(tags.size(), partition);
  if (tags.empty()) throw DataError("information gain of an empty multiset");
  std::vector<int> kept;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (mode == OutlierMode::Include || partition.cluster[i] != kOutlier) kept.push_back(tags[i]);
  }
  if (kept.empty()) return 0.0;
  const double base = entropy(std::span<const int>(kept));
  // Clamp the rounding residue of a pure or single-cluster partition.
  return std::clamp(base - clustered_entropy(tags, partition, mode), 0.0, base);
}

VarianceReduction variance_reduction(std::span<const double> values, const Partition& partition,
                                     OutlierMode mode) {
  if (values.empty()) throw DataError("variance reduction of an empty set");
  check_coverage(values.size(), partition);
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("variance reduction: non-finite value");
  }
  const auto g = groups(partition, mode);
  std::vector<double> kept;
  for (const auto& [c, rows] : g) {
    for (auto i : rows) kept.push_back(values[i]);
  }
  VarianceReduction out;
  if (kept.empty()) return out;
  out.base = population_variance(kept);
  for (const auto& [c, rows] : g) {
    std::vector<double> v;
    for (auto i : rows) v.push_back(values[i]);
    out.clustered += static_cast<double>(rows.size()) / static_cast<double>(kept.size()) *
                     population_variance(v);
  }
  out.reduction = std::max(0.0, out.base - out.clustered);
  return out;
}

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

// Conditional affinities with a per-row precision found by bisection so the
// row entropy matches log(perplexity), then symmetrized and normalized.
Eigen::MatrixXd joint_affinities(const Eigen::MatrixXd& x, double perplexity) {
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd d = squared_distances(x);
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) min_d = std::min(min_d, d(i, j));
    }
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        // Shifting by the nearest distance keeps exp() away from underflow.
        row(j) = j == i ? 0.0 : std::exp(-beta * (d(i, j) - min_d));
        sum += row(j);
        weighted += row(j) * (d(i, j) - min_d);
      }
      const double h = std::log(sum) + beta * weighted / sum;
      row /= sum;
      if (std::abs(h - target) < 1e-10) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.transpose();
  }
  Eigen::MatrixXd joint = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  return joint.cwiseMax(1e-12);
}

struct Objective {
  double kl = 0.0;
  Eigen::MatrixXd grad;
};

Objective tsne_objective(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y, double exaggeration,
                         bool want_grad) {
  const Eigen::Index n = y.rows();
  Eigen::MatrixXd num(n, n);
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    num(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      num(i, j) = v;
      num(j, i) = v;
      z += 2.0 * v;
    }
  }
  Objective out;
  if (want_grad) out.grad = Eigen::MatrixXd::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double q = std::max(num(i, j) / z, 1e-12);
      out.kl += p(i, j) * std::log(p(i, j) / q);
      if (want_grad) {
        out.grad.row(i) += 4.0 * (exaggeration * p(i, j) - q) * num(i, j) * (y.row(i) - y.row(j));
      }
    }
  }
  return out;
}

void center(Eigen::MatrixXd& y) { y.rowwise() -= y.colwise().mean(); }

}  // namespace

TsneResult project_2d(const Eigen::MatrixXd& embeddings, const TsneConfig& config) {
  const Eigen::Index n = embeddings.rows();
  if (!(config.perplexity > 0.0) || static_cast<double>(n) <= 3.0 * config.perplexity) {
    throw ConfigError("t-SNE perplexity " + std::to_string(config.perplexity) +
                      " is infeasible for " + std::to_string(n) + " points (need n > 3 * perplexity)");
  }
  if (config.iterations < 1 || config.exaggeration_iterations < 0) {
    throw ConfigError("t-SNE iteration counts must be positive");
  }
  if (!embeddings.allFinite()) throw DataError("t-SNE input has non-finite entries");

  const Eigen::MatrixXd p = joint_affinities(embeddings, config.perplexity);
  const double lr = config.learning_rate.value_or(static_cast<double>(n) / 12.0);

  Rng rng = make_rng(config.seed);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = 1e-4 * standard_normal(rng);
    y(i, 1) = 1e-4 * standard_normal(rng);
  }
  center(y);

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  // The final iterations drop momentum and backtrack so the objective
  // settles monotonically.
  const int polish_from = std::max(config.exaggeration_iterations, config.iterations - 50);
  TsneResult out;
  out.kl.reserve(static_cast<std::size_t>(config.iterations));
  double step = lr;
  for (int it = 0; it < config.iterations; ++it) {
    const bool exaggerated = it < config.exaggeration_iterations;
    const double ex = exaggerated ? config.exaggeration : 1.0;
    Objective obj = tsne_objective(p, y, ex, true);
    if (!obj.grad.allFinite()) throw NumericalError("t-SNE gradient became non-finite");
    if (it < polish_from) {
      const double momentum = exaggerated ? 0.5 : 0.8;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < 2; ++c) {
          const bool same = (obj.grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
          gains(i, c) = std::max(same ? gains(i, c) * 0.8 : gains(i, c) + 0.2, 0.01);
        }
      }
      velocity = momentum * velocity - lr * gains.cwiseProduct(obj.grad);
      y += velocity;
      center(y);
      out.kl.push_back(tsne_objective(p, y, 1.0, false).kl);
    } else {
      const double current = tsne_objective(p, y, 1.0, false).kl;
      Eigen::MatrixXd candidate = y;
      double kl = current;
      for (int tries = 0; tries < 40; ++tries) {
        candidate = y - step * obj.grad;
        center(candidate);
        kl = tsne_objective(p, candidate, 1.0, false).kl;
        if (kl <= current) break;
        step *= 0.5;
      }
      if (kl <= current) {
        y = candidate;
        step *= 1.2;
      } else {
        kl = current;
      }
      out.kl.push_back(kl);
    }
  }
  out.coords = std::move(y);
  return out;
}

double auto_radius(const Eigen::MatrixXd& coords, int k, double quantile) {
  const Eigen::Index n = coords.rows();
  if (n < 2) return 0.0;
  const auto kk = static_cast<std::size_t>(std::min<Eigen::Index>(k, n - 1));
  std::vector<double> kth;
  kth.reserve(static_cast<std::size_t>(n));
  std::vector<double> d;
  for (Eigen::Index i = 0; i < n; ++i) {
    d.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) d.push_back((coords.row(i) - coords.row(j)).norm());
    }
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk - 1), d.end());
    kth.push_back(d[kk - 1]);
  }
  std::sort(kth.begin(), kth.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(quantile * static_cast<double>(kth.size())));
  return kth[std::clamp<std::size_t>(rank, 1, kth.size()) - 1];
}

Partition density_cluster(const Eigen::MatrixXd& coords, const ClusterConfig& config) {
  const Eigen::Index n = coords.rows();
  if (n < 1) throw DataError("density clustering needs at least one point");
  if (config.min_cluster_size < 1) throw ConfigError("min_cluster_size must be >= 1");
  const double radius = config.radius.value_or(auto_radius(coords, config.min_cluster_size));
  const double r2 = radius * radius;

  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if ((coords.row(i) - coords.row(j)).squaredNorm() <= r2) {
        nbrs[static_cast<std::size_t>(i)].push_back(j);
        nbrs[static_cast<std::size_t>(j)].push_back(i);
      }
    }
  }
  const auto core = [&](Eigen::Index i) {
    return static_cast<int>(nbrs[static_cast<std::size_t>(i)].size()) >= config.min_cluster_size;
  };

  std::vector<int> label(static_cast<std::size_t>(n), kOutlier);
  int next = 0;
  for (Eigen::Index seed = 0; seed < n; ++seed) {
    if (label[static_cast<std::size_t>(seed)] != kOutlier || !core(seed)) continue;
    const int id = next++;
    std::vector<Eigen::Index> frontier{seed};
    label[static_cast<std::size_t>(seed)] = id;
    while (!frontier.empty()) {
      const Eigen::Index i = frontier.back();
      frontier.pop_back();
      if (!core(i)) continue;
      for (Eigen::Index j : nbrs[static_cast<std::size_t>(i)]) {
        if (label[static_cast<std::size_t>(j)] != kOutlier) continue;
        label[static_cast<std::size_t>(j)] = id;
        frontier.push_back(j);
      }
    }
  }

  std::vector<std::size_t> sizes(static_cast<std::size_t>(next), 0);
  for (int c : label) {
    if (c != kOutlier) ++sizes[static_cast<std::size_t>(c)];
  }
  std::vector<int> remap(static_cast<std::size_t>(next), kOutlier);
  int kept = 0;
  for (int c = 0; c < next; ++c) {
    if (sizes[static_cast<std::size_t>(c)] >= static_cast<std::size_t>(config.min_cluster_size)) {
      remap[static_cast<std::size_t>(c)] = kept++;
    }
  }
  Partition out;
  out.cluster.reserve(label.size());
  for (int c : label) out.cluster.push_back(c == kOutlier ? kOutlier : remap[static_cast<std::size_t>(c)]);
  return out;
}

double silhouette(const Eigen::MatrixXd& coords, std::span<const int> labels) {
  const Eigen::Index n = coords.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw DataError("silhouette: label count");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw DataError("silhouette needs at least two clusters");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, double> sum;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) sum[labels[static_cast<std::size_t>(j)]] += (coords.row(i) - coords.row(j)).norm();
    }
    const int own = labels[static_cast<std::size_t>(i)];
    if (sizes[own] < 2) continue;  // singleton clusters score 0
    const double a = sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sum) {
      if (l != own) b = std::min(b, s / static_cast<double>(sizes[l]));
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

std::vector<int> encode_tags(std::span<const std::string> tags) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  out.reserve(tags.size());
  for (const auto& t : tags) {
    auto [it, inserted] = ids.emplace(t, static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

IGReport ig_report(const EmbeddingSet& set, IgTask task, const IgPipelineConfig& config) {
  set.validate();
  if (task == IgTask::Categorical && set.tags.empty()) {
    throw DataError("categorical IG task requires per-row tags");
  }
  if (task == IgTask::Movement && set.targets.empty()) {
    throw DataError("movement IG task requires per-row target values");
  }
  const TsneResult proj = project_2d(set.rows, config.tsne);
  const Partition part = density_cluster(proj.coords, config.cluster);

  IGReport r;
  r.task = task;
  r.n = static_cast<std::size_t>(set.size());
  r.cluster_count = part.cluster_count();
  r.outlier_fraction = part.outlier_fraction();
  if (!set.tags.empty()) {
    const auto ids = encode_tags(set.tags);
    r.base_entropy = entropy(std::span<const int>(ids));
    r.clustered_entropy = clustered_entropy(ids, part, OutlierMode::Include);
    r.information_gain = information_gain(ids, part, OutlierMode::Include);
    r.clustered_entropy_excl = clustered_entropy(ids, part, OutlierMode::Exclude);
    r.information_gain_excl = information_gain(ids, part, OutlierMode::Exclude);
  }
  if (!set.targets.empty()) {
    const auto inc = variance_reduction(set.targets, part, OutlierMode::Include);
    const auto exc = variance_reduction(set.targets, part, OutlierMode::Exclude);
    r.base_variance = inc.base;
    r.clustered_variance = inc.clustered;
    r.variance_reduction = inc.reduction;
    r.clustered_variance_excl = exc.clustered;
    r.variance_reduction_excl = exc.reduction;
  }
  return r;
}

std::string ig_report_json(const IGReport& r) {
  nlohmann::ordered_json j;
  j["task"] = r.task == IgTask::Movement ? "movement" : "categorical";
  j["n"] = r.n;
  j["cluster_count"] = r.cluster_count;
  j["outlier_fraction"] = r.outlier_fraction;
  j["entropy_bits"] = r.base_entropy;
  j["clustered_entropy_bits"] = r.clustered_entropy;
  j["information_gain_bits"] = r.information_gain;
  j["clustered_entropy_bits_excl_outliers"] = r.clustered_entropy_excl;
  j["information_gain_bits_excl_outliers"] = r.information_gain_excl;
  j["variance"] = r.base_variance;
  j["clustered_variance"] = r.clustered_variance;
  j["variance_reduction"] = r.variance_reduction;
  j["clustered_variance_excl_outliers"] = r.clustered_variance_excl;
  j["variance_reduction_excl_outliers"] = r.variance_reduction_excl;
  return j.dump(2) + "\n";
}

namespace {

constexpr char kMagic[8] = {'R', 'A', 'E', 'I', 'D', 'E', 'M', 'B'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw DataError("truncated embedding file while reading " + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingSet& set) {
  set.validate();
  std::vector<std::string> vocab;
  std::map<std::string, std::int32_t> ids;
  for (const auto& t : set.tags) {
    if (ids.emplace(t, static_cast<std::int32_t>(vocab.size())).second) vocab.push_back(t);
  }
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(set.rows.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(set.rows.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.size()));
  for (const auto& v : vocab) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
    out += v;
  }
  for (Eigen::Index i = 0; i < set.rows.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    put<std::int32_t>(out, set.tags.empty() ? -1 : ids.at(set.tags[k]));
    put<double>(out, set.targets.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : set.targets[k]);
    for (Eigen::Index c = 0; c < set.rows.cols(); ++c) {
      put<float>(out, static_cast<float>(set.rows(i, c)));
    }
  }
  atomic_write_file(path, out);
}

EmbeddingSet read_embeddings_binary(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + ": not an embedding file");
  }
  std::size_t pos = sizeof(kMagic);
  if (take<std::uint32_t>(in, pos, "version") != 1) throw DataError("unsupported embedding version");
  const auto n = take<std::uint64_t>(in, pos, "n");
  const auto d = take<std::uint64_t>(in, pos, "d");
  const auto vocab_size = take<std::uint32_t>(in, pos, "vocab");
  std::vector<std::string> vocab;
  for (std::uint32_t v = 0; v < vocab_size; ++v) {
    const auto len = take<std::uint32_t>(in, pos, "vocab entry");
    if (pos + len > in.size()) throw DataError("truncated embedding vocabulary");
    vocab.emplace_back(in.substr(pos, len));
    pos += len;
  }
  const std::size_t row_bytes = 4 + 8 + 4 * d;
  if (n != 0 && (in.size() - pos) / n < row_bytes) throw DataError("truncated embedding rows");
  EmbeddingSet set;
  set.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  bool any_tag = false, any_target = false;
  std::vector<std::int32_t> tag_ids;
  std::vector<double> targets;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto tag = take<std::int32_t>(in, pos, "tag");
    const auto target = take<double>(in, pos, "target");
    if (tag >= 0) {
      if (static_cast<std::uint32_t>(tag) >= vocab_size) throw DataError("tag id out of vocabulary");
      any_tag = true;
    }
    if (!std::isnan(target)) any_target = true;
    tag_ids.push_back(tag);
    targets.push_back(target);
    for (std::uint64_t c = 0; c < d; ++c) {
      set.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          take<float>(in, pos, "row");
    }
  }
  if (pos != in.size()) throw DataError("trailing bytes in embedding file");
  if (any_tag) {
    for (auto t : tag_ids) {
      if (t < 0) throw DataError("embedding file mixes tagged and untagged rows");
      set.tags.push_back(vocab[static_cast<std::size_t>(t)]);
    }
  }
  if (any_target) set.targets = std::move(targets);
  set.validate();
  return set;
}

std::string embeddings_csv(const EmbeddingSet& set) {
  std::ostringstream out;
  out << "tag,target";
  for (Eigen::Index c = 0; c < set.rows.cols(); ++c) out << ",e" << c;
  out << '\n';
  for (Eigen::Index i = 0; i < set.rows.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << (set.tags.empty() ? "" : set.tags[k]) << ','
        << (set.targets.empty() ? "" : fixed6(set.targets[k]));
    for (Eigen::Index c = 0; c < set.rows.cols(); ++c) out << ',' << fixed6(set.rows(i, c));
    out << '\n';
  }
  return out.str();
}

EmbeddingSet read_embeddings_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty embedding CSV");
  const auto header = split(trim(line), ',');
  if (header.size() < 3 || header[0] != "tag" || header[1] != "target") {
    throw DataError(path.string() + ": header must start with tag,target,e0");
  }
  const std::size_t d = header.size() - 2;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> tags;
  std::vector<std::optional<double>> targets;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != d + 2) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(d + 2) + " cells");
    }
    try {
      tags.push_back(cells[0]);
      targets.push_back(cells[1].empty() ? std::nullopt
                                         : std::optional<double>(parse_double(cells[1])));
      std::vector<double> r;
      for (std::size_t c = 0; c < d; ++c) r.push_back(parse_double(cells[c + 2]));
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  EmbeddingSet set;
  set.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      set.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  const bool has_tags = std::any_of(tags.begin(), tags.end(), [](auto& t) { return !t.empty(); });
  const bool has_targets =
      std::any_of(targets.begin(), targets.end(), [](auto& t) { return t.has_value(); });
  if (has_tags) {
    if (std::any_of(tags.begin(), tags.end(), [](auto& t) { return t.empty(); })) {
      throw DataError(path.string() + ": some rows lack a tag");
    }
    set.tags = std::move(tags);
  }
  if (has_targets) {
    for (const auto& t : targets) {
      if (!t) throw DataError(path.string() + ": some rows lack a target");
      set.targets.push_back(*t);
    }
  }
  set.validate();
  return set;
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_embeddings_csv(path) : read_embeddings_binary(path);
}

}  // namespace raeid
