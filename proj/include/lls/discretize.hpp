#pragma once

#include <cstdint>
#include <vector>

#include "lls/core.hpp"

namespace lls {

// ---------------------------------------------------------------------------
// Discretization of the discriminator pushforward: cluster the posterior
// vectors into m cells, then tabulate the cluster-given-domain matrix that the
// factorization stage consumes. A grouping oracle for exact point masses
// mirrors the construction used by the identifiability argument: values
// carrying mass at least epsilon become labeled groups, everything else falls
// into one residual group.
// ---------------------------------------------------------------------------

struct KmeansOptions {
  int niter = 100;
  int nredo = 5;
  std::uint64_t seed = 0;
};

struct ClusterModel {
  Matrix centroids;  // m x dim
  double inertia = 0.0;

  int clusters() const { return static_cast<int>(centroids.rows()); }
  // Nearest centroid in Euclidean distance; ties break to the lowest index.
  int assign(const Vector& x) const;
  std::vector<int> assign_rows(const Matrix& x) const;
};

// Lloyd iterations from k-means++ seeding, best inertia over nredo restarts
// (ties keep the earliest restart). Empty clusters are reseeded to the point
// farthest from its centroid. Deterministic given opts.seed. Requires at
// least m distinct points.
ClusterModel kmeans(const Matrix& points, int m, const KmeansOptions& opts);

struct GroupingResult {
  std::vector<int> group_ids;  // labeled groups 0..labeled-1; residual id = labeled
  Vector masses;               // length labeled + 1, residual mass last
  Matrix representatives;      // labeled x dim, the first point seen in each group
  int labeled = 0;
};

// Groups points that are equal within match_tol (max norm) and labels the
// groups whose empirical mass (count / n_total) reaches epsilon, in order of
// first appearance.
GroupingResult oracle_point_mass_groups(const Matrix& points, double epsilon, int n_total,
                                        double match_tol = 1e-9);

struct TabularizeResult {
  Eigen::MatrixXi counts;  // m x r
  StochasticMatrix q_cd;   // counts with each domain column normalized
};

// Histogram of (cluster, domain) pairs. Every domain must appear at least once.
TabularizeResult tabularize(const std::vector<int>& cluster_ids,
                            const std::vector<int>& domains, int m, int r);

}  // namespace lls
