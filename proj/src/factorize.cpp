#include "lls/factorize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <thread>

#include "lls/rng.hpp"

namespace lls {

namespace {

constexpr double kDenomGuard = 1e-12;

void check_rank(int k, Eigen::Index m, Eigen::Index r, bool allow_overcomplete) {
  if (k < 1) fail(errc::invalid_rank, "rank must be >= 1");
  if (!allow_overcomplete && k > std::min(m, r))
    fail(errc::invalid_rank,
         "rank " + std::to_string(k) + " exceeds min(" + std::to_string(m) + ", " +
             std::to_string(r) + ")");
}

}  // namespace

NormalizedFactors normalize_factors(const Matrix& w_raw, const Matrix& h_raw) {
  if (w_raw.cols() != h_raw.rows()) fail(errc::shape_mismatch, "inner factor dims differ");
  auto wn = column_normalize(w_raw);
  Matrix h_mid = wn.scales.asDiagonal() * h_raw;
  Vector prenorm = h_mid.colwise().sum().transpose();
  auto hn = column_normalize(h_mid);
  return {std::move(wn.matrix), std::move(hn.matrix), std::move(prenorm)};
}

namespace {

struct Restart {
  Matrix w, h;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::vector<double> curve;
};

// Runs multiplicative updates in place for up to `budget` more iterations;
// stops early at tol or when a stall window shows no relative progress.
void mu_iterate(const Matrix& vm, Restart& s, const NmfOptions& opts, int budget) {
  const Eigen::Index m = vm.rows();
  const Eigen::Index r = vm.cols();
  const int k = static_cast<int>(s.w.cols());
  Matrix& w = s.w;
  Matrix& h = s.h;
  double window_start = s.residual;
  for (int it = 1; it <= budget; ++it) {
    ++s.iterations;
    h.array() *= (w.transpose() * vm).array() /
                 ((w.transpose() * w) * h + Matrix::Constant(k, r, kDenomGuard)).array();
    w.array() *= (vm * h.transpose()).array() /
                 (w * (h * h.transpose()) + Matrix::Constant(m, k, kDenomGuard)).array();
    s.residual = (vm - w * h).norm();
    if (opts.record_curve) s.curve.push_back(s.residual);
    if (s.residual <= opts.tol) break;
    if (it % opts.stall_window == 0) {
      // A flat residual over a whole window means a local plateau this restart
      // will not leave; stop burning iterations on it.
      if (window_start - s.residual <= opts.stall_rtol * std::max(s.residual, 1e-300))
        break;
      window_start = s.residual;
    }
  }
}

Restart run_restart(const Matrix& vm, int k, const NmfOptions& opts, int init, int budget) {
  const Eigen::Index m = vm.rows();
  const Eigen::Index r = vm.cols();
  const double init_scale = std::sqrt(vm.mean() / k);
  auto rng = make_rng(derive_seed(opts.seed, static_cast<std::uint64_t>(init)));
  std::uniform_real_distribution<double> u(0.0, 1.0);

  Restart out;
  out.w.resize(m, k);
  out.h.resize(k, r);
  for (Eigen::Index i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) out.w(i, j) = init_scale * u(rng);
  for (int i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < r; ++j) out.h(i, j) = init_scale * u(rng);

  out.residual = (vm - out.w * out.h).norm();
  if (opts.record_curve) out.curve.push_back(out.residual);
  mu_iterate(vm, out, opts, budget);
  return out;
}

}  // namespace

FactorizationResult nmf(const StochasticMatrix& v, int k, const NmfOptions& opts) {
  check_rank(k, v.rows(), v.cols(), opts.allow_overcomplete);
  if (opts.max_iter < 1 || opts.n_init < 1 || opts.tol < 0.0 || opts.jobs < 1 ||
      opts.stall_window < 1 || opts.stall_rtol < 0.0)
    fail(errc::invalid_input, "bad factorization options");

  const Matrix& vm = v.mat();
  const int screen =
      opts.screen_iter > 0 ? std::min(opts.screen_iter, opts.max_iter) : opts.max_iter;
  std::vector<Restart> restarts(static_cast<size_t>(opts.n_init));
  const int jobs = std::min(opts.jobs, opts.n_init);
  if (jobs == 1) {
    for (int init = 0; init < opts.n_init; ++init)
      restarts[static_cast<size_t>(init)] = run_restart(vm, k, opts, init, screen);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(jobs));
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (int init = next.fetch_add(1); init < opts.n_init; init = next.fetch_add(1))
          restarts[static_cast<size_t>(init)] = run_restart(vm, k, opts, init, screen);
      });
    for (auto& th : pool) th.join();
  }

  size_t best = 0;
  for (size_t i = 1; i < restarts.size(); ++i)
    if (restarts[i].residual < restarts[best].residual) best = i;

  Restart& winner = restarts[best];
  if (winner.iterations >= screen && winner.residual > opts.tol &&
      opts.max_iter > winner.iterations)
    mu_iterate(vm, winner, opts, opts.max_iter - winner.iterations);

  auto norm = normalize_factors(winner.w, winner.h);
  return {std::move(norm.w),
          std::move(norm.h),
          winner.residual,
          winner.residual <= opts.tol,
          winner.iterations,
          std::move(norm.h_col_sums_prenorm),
          std::move(winner.curve)};
}

Vector nnls(const Matrix& a, const Vector& y) {
  if (a.rows() != y.size()) fail(errc::shape_mismatch, "rows of a differ from y");
  const Eigen::Index p = a.cols();
  Vector x = Vector::Zero(p);
  std::vector<bool> passive(static_cast<size_t>(p), false);
  Vector w = a.transpose() * y;
  const double tol = 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff());

  auto solve_passive = [&](const std::vector<bool>& mask) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < p; ++i)
      if (mask[static_cast<size_t>(i)]) idx.push_back(i);
    Matrix sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
    Vector z = sub.colPivHouseholderQr().solve(y);
    Vector full = Vector::Zero(p);
    for (size_t j = 0; j < idx.size(); ++j) full(idx[j]) = z(static_cast<Eigen::Index>(j));
    return full;
  };

  const int max_outer = 3 * static_cast<int>(p) + 10;
  for (int outer = 0; outer < max_outer; ++outer) {
    // Most violated KKT multiplier among the active (zero) coordinates.
    Eigen::Index j = -1;
    double wmax = tol;
    for (Eigen::Index i = 0; i < p; ++i)
      if (!passive[static_cast<size_t>(i)] && w(i) > wmax) {
        wmax = w(i);
        j = i;
      }
    if (j < 0) break;
    passive[static_cast<size_t>(j)] = true;

    for (int inner = 0; inner < max_outer; ++inner) {
      Vector z = solve_passive(passive);
      bool feasible = true;
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < p; ++i) {
        if (!passive[static_cast<size_t>(i)] || z(i) > 1e-14) continue;
        feasible = false;
        alpha = std::min(alpha, x(i) / (x(i) - z(i)));
      }
      if (feasible) {
        x = z;
        break;
      }
      x += alpha * (z - x);
      for (Eigen::Index i = 0; i < p; ++i)
        if (passive[static_cast<size_t>(i)] && x(i) <= 1e-14) {
          passive[static_cast<size_t>(i)] = false;
          x(i) = 0.0;
        }
    }
    w = a.transpose() * (y - a * x);
  }
  return x;
}

FactorizationResult spa_anchor_nmf(const StochasticMatrix& v, int k) {
  const Eigen::Index m = v.rows();
  const Eigen::Index r = v.cols();
  check_rank(k, m, r, false);
  const Matrix& vm = v.mat();

  // Row-normalize; zero rows stay zero and can never be anchors.
  Matrix rows = vm;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double s = rows.row(i).sum();
    if (s > 0.0) rows.row(i) /= s;
  }

  std::vector<Eigen::Index> anchors;
  Matrix work = rows;
  for (int t = 0; t < k; ++t) {
    Eigen::Index pick = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double n2 = work.row(i).squaredNorm();
      if (n2 > best) {
        best = n2;
        pick = i;
      }
    }
    if (std::sqrt(best) < 1e-10)
      fail(errc::anchor_deficient,
           "projection residual vanished after " + std::to_string(t) + " anchors", t);
    anchors.push_back(pick);
    const Vector u = work.row(pick).transpose() / std::sqrt(best);
    work -= (work * u) * u.transpose();
  }

  Matrix h_raw(k, r);
  for (int t = 0; t < k; ++t) h_raw.row(t) = vm.row(anchors[t]);

  Matrix w_raw(m, k);
  const Matrix ht = h_raw.transpose();
  for (Eigen::Index i = 0; i < m; ++i)
    w_raw.row(i) = nnls(ht, vm.row(i).transpose()).transpose();

  const double residual = (vm - w_raw * h_raw).norm();
  auto norm = normalize_factors(w_raw, h_raw);
  return {std::move(norm.w), std::move(norm.h), residual, true, k,
          std::move(norm.h_col_sums_prenorm), {}};
}

}  // namespace lls
