#include "rbmsem/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace rbmsem {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;

struct Pair {
  Vector s;
  Vector y;
  double rho;
};

Vector project(const Vector& z, const Vector& lo, const Vector& hi) { return z.cwiseMax(lo).cwiseMin(hi); }

// Two-loop recursion applied to the free components only.
Vector lbfgs_direction(const std::deque<Pair>& hist, const Vector& g, const Eigen::Array<bool, Eigen::Dynamic, 1>& free) {
  auto mask = [&](Vector v) {
    for (Eigen::Index a = 0; a < v.size(); ++a)
      if (!free[a]) v[a] = 0.0;
    return v;
  };
  Vector q = mask(g);
  std::vector<double> alpha(hist.size());
  for (std::size_t k = hist.size(); k-- > 0;) {
    alpha[k] = hist[k].rho * mask(hist[k].s).dot(q);
    q -= alpha[k] * mask(hist[k].y);
  }
  double gamma = 1.0;
  if (!hist.empty()) {
    const Pair& last = hist.back();
    const Vector ys = mask(last.y);
    const double yy = ys.squaredNorm();
    if (yy > 0.0) gamma = mask(last.s).dot(ys) / yy;
    if (!(gamma > 0.0) || !std::isfinite(gamma)) gamma = 1.0;
  }
  Vector r = gamma * q;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    const double beta = hist[k].rho * mask(hist[k].y).dot(r);
    r += (alpha[k] - beta) * mask(hist[k].s);
  }
  return -mask(r);
}

}  // namespace

OptimResult minimize_box(const Objective& f, const Vector& x0, const Vector& lower, const Vector& upper,
                         const OptimOptions& options) {
  const Eigen::Index m = x0.size();
  OptimResult res;
  Vector scale = options.scale;
  if (scale.size() != m) scale = x0.cwiseAbs().cwiseMax(1.0);

  const Vector lo = lower.cwiseQuotient(scale);
  const Vector hi = upper.cwiseQuotient(scale);
  auto eval = [&](const Vector& z, Vector* gz) {
    ++res.evaluations;
    Vector gx;
    const double v = f(z.cwiseProduct(scale), gz ? &gx : nullptr);
    if (gz && std::isfinite(v)) *gz = gx.cwiseProduct(scale);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  auto finish = [&](const Vector& z, double v, const Vector& g, bool ok, std::string msg) {
    res.x = z.cwiseProduct(scale);
    res.value = v;
    res.gradient = g.cwiseQuotient(scale);
    res.converged = ok;
    res.message = std::move(msg);
    return res;
  };

  Vector z = project(x0.cwiseQuotient(scale), lo, hi);
  Vector g;
  double fz = eval(z, &g);
  if (!std::isfinite(fz) || !g.allFinite()) return finish(z, fz, Vector::Zero(m), false, "infeasible start");

  std::deque<Pair> hist;
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    // Projected gradient and the free set.
    const Vector pg = z - project(z - g, lo, hi);
    const double fscale = std::max(1.0, std::abs(fz));
    double crit = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) crit = std::max(crit, std::abs(pg[a]) * std::max(1.0, std::abs(z[a])) / fscale);
    if (crit < options.gradient_tolerance) return finish(z, fz, g, true, "gradient below tolerance");

    Eigen::Array<bool, Eigen::Dynamic, 1> free(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      const bool at_lo = z[a] <= lo[a] && g[a] > 0.0;
      const bool at_hi = z[a] >= hi[a] && g[a] < 0.0;
      free[a] = !(at_lo || at_hi);
    }

    Vector d = lbfgs_direction(hist, g, free);
    double slope = g.dot(d);
    if (!(slope < -1e-14 * d.norm() * g.norm())) {
      hist.clear();
      d = lbfgs_direction(hist, g, free);
      slope = g.dot(d);
    }
    if (!(slope < 0.0)) return finish(z, fz, g, false, "no descent direction");

    double t = 1.0;
    if (hist.empty()) t = std::min(1.0, 1.0 / std::max(1e-300, d.cwiseAbs().maxCoeff()));
    Vector z_new, g_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < kMaxBacktracks; ++k) {
      z_new = project(z + t * d, lo, hi);
      f_new = eval(z_new, nullptr);
      if (std::isfinite(f_new) && f_new <= fz + kArmijo * g.dot(z_new - z)) {
        accepted = true;
        break;
      }
      t *= (std::isfinite(f_new) ? 0.5 : 0.1);
    }
    if (!accepted) {
      if (!hist.empty()) {
        hist.clear();
        continue;
      }
      return finish(z, fz, g, false, "line search failed");
    }
    f_new = eval(z_new, &g_new);
    if (!std::isfinite(f_new) || !g_new.allFinite()) return finish(z, fz, g, false, "gradient evaluation failed");

    const Vector s = z_new - z;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      hist.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(hist.size()) > options.memory) hist.pop_front();
    }

    double rel_step = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) rel_step = std::max(rel_step, std::abs(s[a]) / std::max(1.0, std::abs(z_new[a])));
    const double decrease = fz - f_new;
    z = z_new;
    g = g_new;
    fz = f_new;
    if (rel_step < options.step_tolerance) {
      ++res.iterations;
      return finish(z, fz, g, true, "step below tolerance");
    }
    if (decrease >= 0.0 && decrease <= options.relative_function_tolerance * std::max(1.0, std::abs(fz))) {
      ++res.iterations;
      return finish(z, fz, g, true, "relative function change below tolerance");
    }
  }
  return finish(z, fz, g, false, "iteration limit reached");
}

}  // namespace rbmsem
