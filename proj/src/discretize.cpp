#include "lls/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "lls/rng.hpp"

namespace lls {

namespace {

int nearest_centroid(const Matrix& centroids, const Vector& x, double* dist2_out) {
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d2 = (centroids.row(c).transpose() - x).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(c);
    }
  }
  if (dist2_out) *dist2_out = best_d2;
  return best;
}

Matrix kmeanspp_seed(const Matrix& points, int m, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix centroids(m, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < m; ++c) {
    const double total = d2.sum();
    const double target = u(rng) * total;
    double acc = 0.0;
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2(i);
      if (target < acc) {
        pick = i;
        break;
      }
    }
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

struct LloydRun {
  Matrix centroids;
  std::vector<int> assignment;
  double inertia = 0.0;
};

LloydRun lloyd(const Matrix& points, Matrix centroids, int niter) {
  const Eigen::Index n = points.rows();
  const int m = static_cast<int>(centroids.rows());
  std::vector<int> assignment(static_cast<size_t>(n), -1);
  std::vector<int> counts(static_cast<size_t>(m));
  Vector dist2(n);

  for (int iter = 0; iter < niter; ++iter) {
    bool changed = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      double d2 = 0.0;
      const int c = nearest_centroid(centroids, points.row(i).transpose(), &d2);
      if (c != assignment[i]) {
        assignment[i] = c;
        changed = true;
      }
      dist2(i) = d2;
      counts[c] += 1;
    }

    // Reseed empty clusters to the farthest point from its centroid; each
    // reseed claims its point so two empty clusters never collide.
    for (int c = 0; c < m; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index far = -1;
      double far_d2 = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[assignment[i]] <= 1) continue;  // do not orphan another cluster
        if (dist2(i) > far_d2) {
          far_d2 = dist2(i);
          far = i;
        }
      }
      if (far < 0) break;
      counts[assignment[far]] -= 1;
      centroids.row(c) = points.row(far);
      assignment[far] = c;
      counts[c] = 1;
      dist2(far) = 0.0;
      changed = true;
    }

    if (!changed && iter > 0) break;

    // Means in fixed point order.
    Matrix sums = Matrix::Zero(m, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(assignment[i]) += points.row(i);
    for (int c = 0; c < m; ++c)
      if (counts[c] > 0) centroids.row(c) = sums.row(c) / counts[c];
  }

  LloydRun run;
  run.centroids = std::move(centroids);
  run.inertia = 0.0;
  run.assignment.resize(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double d2 = 0.0;
    run.assignment[i] = nearest_centroid(run.centroids, points.row(i).transpose(), &d2);
    run.inertia += d2;
  }
  return run;
}

int count_distinct_rows(const Matrix& points) {
  std::vector<Eigen::Index> order(static_cast<size_t>(points.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (points(a, j) < points(b, j)) return true;
      if (points(a, j) > points(b, j)) return false;
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  int distinct = points.rows() > 0 ? 1 : 0;
  for (size_t i = 1; i < order.size(); ++i)
    if (less(order[i - 1], order[i])) distinct += 1;
  return distinct;
}

}  // namespace

int ClusterModel::assign(const Vector& x) const {
  if (x.size() != centroids.cols()) fail(errc::shape_mismatch, "point dimension differs");
  return nearest_centroid(centroids, x, nullptr);
}

std::vector<int> ClusterModel::assign_rows(const Matrix& x) const {
  std::vector<int> ids(static_cast<size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) ids[i] = assign(x.row(i).transpose());
  return ids;
}

ClusterModel kmeans(const Matrix& points, int m, const KmeansOptions& opts) {
  if (m < 1) fail(errc::invalid_input, "cluster count must be >= 1");
  if (points.rows() < 1) fail(errc::invalid_input, "no points to cluster");
  if (opts.niter < 1 || opts.nredo < 1) fail(errc::invalid_input, "bad k-means options");
  if (count_distinct_rows(points) < m)
    fail(errc::insufficient_distinct_points,
         "need at least " + std::to_string(m) + " distinct points");

  ClusterModel best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int redo = 0; redo < opts.nredo; ++redo) {
    auto rng = make_rng(derive_seed(opts.seed, static_cast<std::uint64_t>(redo)));
    LloydRun run = lloyd(points, kmeanspp_seed(points, m, rng), opts.niter);
    if (run.inertia < best_inertia) {
      best_inertia = run.inertia;
      best.centroids = std::move(run.centroids);
      best.inertia = run.inertia;
    }
  }
  return best;
}

GroupingResult oracle_point_mass_groups(const Matrix& points, double epsilon, int n_total,
                                        double match_tol) {
  if (points.rows() < 1) fail(errc::invalid_input, "no points to group");
  if (n_total < 1) fail(errc::invalid_input, "n_total must be >= 1");
  if (epsilon <= 0.0) fail(errc::invalid_input, "epsilon must be > 0");

  std::vector<Eigen::Index> rep_row;  // first occurrence per raw group
  std::vector<int> raw(static_cast<size_t>(points.rows()));
  std::vector<int> count;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int found = -1;
    for (size_t g = 0; g < rep_row.size(); ++g) {
      if ((points.row(i) - points.row(rep_row[g])).cwiseAbs().maxCoeff() <= match_tol) {
        found = static_cast<int>(g);
        break;
      }
    }
    if (found < 0) {
      found = static_cast<int>(rep_row.size());
      rep_row.push_back(i);
      count.push_back(0);
    }
    raw[i] = found;
    count[found] += 1;
  }

  // Raw groups clearing the mass threshold become labeled groups in first-seen
  // order; the rest collapse into the residual group.
  std::vector<int> relabel(rep_row.size(), -1);
  GroupingResult out;
  for (size_t g = 0; g < rep_row.size(); ++g)
    if (static_cast<double>(count[g]) / n_total >= epsilon) relabel[g] = out.labeled++;

  out.representatives.resize(out.labeled, points.cols());
  out.masses = Vector::Zero(out.labeled + 1);
  for (size_t g = 0; g < rep_row.size(); ++g) {
    const double mass = static_cast<double>(count[g]) / n_total;
    if (relabel[g] >= 0) {
      out.representatives.row(relabel[g]) = points.row(rep_row[g]);
      out.masses(relabel[g]) = mass;
    } else {
      out.masses(out.labeled) += mass;
    }
  }
  out.group_ids.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i)
    out.group_ids[i] = relabel[raw[i]] >= 0 ? relabel[raw[i]] : out.labeled;
  return out;
}

TabularizeResult tabularize(const std::vector<int>& cluster_ids,
                            const std::vector<int>& domains, int m, int r) {
  if (cluster_ids.size() != domains.size())
    fail(errc::shape_mismatch, "cluster and domain lists differ in length");
  if (cluster_ids.empty()) fail(errc::invalid_input, "nothing to tabulate");
  if (m < 1 || r < 1) fail(errc::invalid_input, "bad table shape");

  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(m, r);
  for (size_t i = 0; i < cluster_ids.size(); ++i) {
    const int c = cluster_ids[i];
    const int d = domains[i];
    if (c < 0 || c >= m) fail(errc::invalid_input, "cluster id out of range");
    if (d < 0 || d >= r) fail(errc::invalid_input, "domain index out of range");
    counts(c, d) += 1;
  }
  for (int d = 0; d < r; ++d)
    if (counts.col(d).sum() == 0)
      fail(errc::empty_domain, "domain " + std::to_string(d) + " has no points", d);
  return {counts, StochasticMatrix::proportional_columns(counts.cast<double>())};
}

}  // namespace lls
