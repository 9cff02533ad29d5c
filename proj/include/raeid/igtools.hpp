#pragma once

// Embedding analysis: label entropy, clustered entropy, information gain,
// variance reduction, exact t-SNE and density clustering.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace raeid {

struct EmbeddingSet {
  Eigen::MatrixXd rows;                 // n x d
  std::vector<std::string> tags;        // empty when absent
  std::vector<double> targets;          // empty when absent
  std::string model_name;

  Eigen::Index size() const { return rows.rows(); }
  /// Throws DataError on inconsistent lengths or non-finite entries.
  void validate() const;
};

inline constexpr int kOutlier = -1;

struct Partition {
  std::vector<int> cluster;  // one id per row, kOutlier for outliers

  int cluster_count() const;  // excluding the outlier id
  double outlier_fraction() const;
};

enum class OutlierMode { Include, Exclude };

/// Entropy in bits of a multiset of tags.
double entropy(std::span<const std::string> tags);
double entropy(std::span<const int> tags);

/// Size-weighted within-cluster entropy. With OutlierMode::Exclude the
/// outlier rows are dropped before weighting.
double clustered_entropy(std::span<const int> tags, const Partition& partition,
                         OutlierMode mode = OutlierMode::Include);

/// H(T) - H_C(P). In exclude mode both terms use the non-outlier rows only.
double information_gain(std::span<const int> tags, const Partition& partition,
                        OutlierMode mode = OutlierMode::Include);

struct VarianceReduction {
  double base = 0.0;
  double clustered = 0.0;
  double reduction = 0.0;
};

/// Population variances throughout.
VarianceReduction variance_reduction(std::span<const double> values, const Partition& partition,
                                     OutlierMode mode = OutlierMode::Include);

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double exaggeration = 12.0;
  int exaggeration_iterations = 250;
  std::optional<double> learning_rate;  // default n / 12
  std::uint64_t seed = 0;
};

struct TsneResult {
  Eigen::MatrixXd coords;    // n x 2, column means zero
  std::vector<double> kl;    // KL(P || Q) after each iteration
};

TsneResult project_2d(const Eigen::MatrixXd& embeddings, const TsneConfig& config = {});

struct ClusterConfig {
  int min_cluster_size = 10;
  std::optional<double> radius;  // default: 90th percentile of 10-NN distances
};

/// DBSCAN with core threshold min_cluster_size neighbours; clusters smaller
/// than min_cluster_size dissolve into the outlier id.
Partition density_cluster(const Eigen::MatrixXd& coords, const ClusterConfig& config = {});

double auto_radius(const Eigen::MatrixXd& coords, int k = 10, double quantile = 0.9);

/// Mean silhouette over all points with the given labels (Euclidean).
double silhouette(const Eigen::MatrixXd& coords, std::span<const int> labels);

enum class IgTask { Movement, Categorical };

struct IGReport {
  IgTask task = IgTask::Categorical;
  double base_entropy = 0.0;
  double clustered_entropy = 0.0;
  double information_gain = 0.0;
  double clustered_entropy_excl = 0.0;
  double information_gain_excl = 0.0;
  double base_variance = 0.0;
  double clustered_variance = 0.0;
  double variance_reduction = 0.0;
  double clustered_variance_excl = 0.0;
  double variance_reduction_excl = 0.0;
  int cluster_count = 0;
  double outlier_fraction = 0.0;
  std::size_t n = 0;
};

struct IgPipelineConfig {
  TsneConfig tsne;
  ClusterConfig cluster;
};

IGReport ig_report(const EmbeddingSet& set, IgTask task, const IgPipelineConfig& config = {});

/// Tag strings mapped to dense ids in first-seen order.
std::vector<int> encode_tags(std::span<const std::string> tags);

std::string ig_report_json(const IGReport& report);

// Binary layout (little-endian):
//   "RAEIDEMB" | u32 version=1 | u64 n | u64 d | u32 vocab
//   vocab x (u32 length, bytes)
//   n x (i32 tag id or -1, f64 target or NaN, d x f32)
EmbeddingSet read_embeddings_binary(const std::filesystem::path& path);
void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingSet& set);
/// CSV `tag,target,e0,...` with empty cells for absent tag/target.
EmbeddingSet read_embeddings_csv(const std::filesystem::path& path);
std::string embeddings_csv(const EmbeddingSet& set);
/// Dispatches on the ".csv" extension.
EmbeddingSet read_embeddings(const std::filesystem::path& path);

}  // namespace raeid
