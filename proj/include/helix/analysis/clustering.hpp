#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::analysis {

using numerics::Matrix;

struct KMeansOptions {
  std::uint64_t seed = 0;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
  /// Restarts run on this many threads; 0 picks the hardware count. The
  /// result does not depend on it.
  std::size_t threads = 1;
};

struct ClusterModel {
  std::size_t k = 0;
  /// k×d.
  Matrix centroids;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  std::optional<double> silhouette;
  std::uint64_t seed = 0;
  std::size_t n_init = 0;
  /// Lloyd iterations of the winning restart.
  std::size_t iterations = 0;
  /// Inertia after each assignment step of the winning restart.
  std::vector<double> inertia_trace;
};

/// D²-weighted seeding followed by Lloyd iterations until the assignment is
/// stable or max_iter is reached; best of n_init restarts by inertia. Restart
/// r draws from Rng::derive(seed, r). A cluster left empty is re-seeded with
/// the point farthest from its current centroid. A point equidistant from
/// several centroids keeps its current cluster (initially the lowest index).
ClusterModel kmeans_pp(const Matrix& x, std::size_t k, const KMeansOptions& options = {});

/// Within-cluster sum of squared distances to the given centroids.
double inertia(const Matrix& x, const Matrix& centroids, const std::vector<std::size_t>& assignments);

struct ElbowResult {
  /// inertia[k-1] for k = 1..k_max.
  std::vector<double> inertia;
  /// curvature[k-1] = (D_k - D_{k+1}) / D_k with D_k = inertia(k-1) - inertia(k),
  /// defined for 2 <= k <= k_max-1 and zero elsewhere.
  std::vector<double> curvature;
  std::size_t suggested_k = 1;
  /// No elbow yet (peak curvature below 0.5) while less than 80% of the
  /// variance is explained at k_max; the suggestion is then k_max and a larger
  /// k may be better.
  bool boundary = false;
  /// Peak curvature below 0.5 or less than 80% of the variance explained at
  /// the suggestion.
  bool low_confidence = false;
};

/// Requires k_max >= 3 and at least k_max rows.
ElbowResult elbow_select(const Matrix& x, std::size_t k_max, const KMeansOptions& options = {});

/// Mean silhouette in Euclidean distance. Labels must cover 0..K-1 with
/// K >= 2 and every cluster nonempty. Singletons score 0, as do points
/// with a = b = 0.
double silhouette(const Matrix& x, const std::vector<std::size_t>& assignments);

struct TwoStageResult {
  ClusterModel stage1;
  /// Stage-1 cluster that was split.
  std::size_t verboid = 0;
  /// Rows of the input belonging to the verboid cluster.
  std::vector<std::size_t> members;
  ClusterModel stage2;
};

/// Stage 1: k = 3 on all rows. Stage 2: k = 2 on the verboid cluster, chosen
/// as the cluster with the largest fraction of `marker` labels when labels
/// are given, otherwise `verboid`. Throws if that cluster has fewer than 4
/// members.
TwoStageResult two_stage_clustering(const Matrix& x, const KMeansOptions& options,
                                    const std::vector<int>* labels = nullptr, int marker = 0,
                                    std::optional<std::size_t> verboid = std::nullopt);

struct ClusterScores {
  double purity = 0.0;
  double ari = 0.0;
};

/// Standard purity and adjusted Rand index against ground-truth classes.
ClusterScores cluster_eval(const std::vector<std::size_t>& assignments, const std::vector<int>& truth);

}  // namespace helix::analysis
