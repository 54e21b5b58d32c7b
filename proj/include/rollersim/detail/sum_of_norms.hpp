#pragma once

// Minimizer for f(x) = sum_j c_j |a_j + P_j x| over x in R^3.
//
// Both equilibrium problems have this form: rotation with P_j = [p_j]x and
// a_j = v_j (slip v_j - omega x p_j), translation with P_j = -I. A zero
// residual is a sticking contact; f is non-smooth there, which is where
// plain IRLS slows to a crawl. After IRLS we guess the sticking set, solve
// the smooth problem restricted to that set with Newton, and accept the point
// only if a subgradient certificate shows 0 is in the subdifferential.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "rollersim/types.hpp"

namespace rollersim::detail {

struct NormTerm {
  Vec3 offset = Vec3::Zero();
  Mat3 map = Mat3::Identity();
  double weight = 0.0;
};

struct SumOfNormsOptions {
  double tol_step = 1e-10;
  int max_iters = 500;
  double damping = 1.0;
  double eps_reg = 1e-9;
  double tol_grad = 1e-8;
};

struct SumOfNormsResult {
  Vec3 x = Vec3::Zero();
  double objective = 0.0;
  double certificate_residual = 0.0;  // |0 - nearest subgradient|
  int iterations = 0;
  bool converged = false;
};

inline double objective(const std::vector<NormTerm>& terms, const Vec3& x) {
  double f = 0.0;
  for (const auto& t : terms) f += t.weight * (t.offset + t.map * x).norm();
  return f;
}

/// Moore-Penrose solve of a symmetric PSD 3x3 system; null directions get 0.
inline Vec3 psd_solve(const Mat3& m, const Vec3& b, double rel_tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(m);
  const Vec3 evals = es.eigenvalues();
  const double top = std::max(std::abs(evals.maxCoeff()), std::abs(evals.minCoeff()));
  if (!(top > 0.0)) return Vec3::Zero();
  Vec3 out = Vec3::Zero();
  for (int k = 0; k < 3; ++k) {
    if (evals(k) > rel_tol * top) {
      const Vec3 e = es.eigenvectors().col(k);
      out += e * (e.dot(b) / evals(k));
    }
  }
  return out;
}

/// Orthonormal basis of directions along which every term's residual is
/// constant: f is exactly flat along them.
inline Eigen::MatrixXd flat_directions(const std::vector<NormTerm>& terms) {
  Mat3 gram = Mat3::Zero();
  double scale = 0.0;
  for (const auto& t : terms) {
    gram += t.map.transpose() * t.map;
    scale = std::max(scale, t.map.squaredNorm());
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(gram);
  std::vector<int> cols;
  for (int k = 0; k < 3; ++k) {
    if (es.eigenvalues()(k) <= 1e-12 * std::max(scale, 1e-300)) cols.push_back(k);
  }
  Eigen::MatrixXd basis(3, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) basis.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(cols[i]);
  return basis;
}

/// Multipliers u (3-blocks) with B u = -g and |u_j| <= caps[j], or the
/// closest attempt. Newton on sum_j (|u_j| / cap_j)^p over the affine set
/// with p doubling up to 64, then alternating projections onto the caps.
inline Eigen::VectorXd capped_multipliers(const Eigen::MatrixXd& b, const Vec3& g, const std::vector<double>& caps,
                                          const Eigen::VectorXd& u0, double tol) {
  const auto m = static_cast<Eigen::Index>(caps.size());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeFullV);
  svd.setThreshold(1e-10);
  const Eigen::MatrixXd null = svd.matrixV().rightCols(3 * m - svd.rank());
  auto ratios = [&](const Eigen::VectorXd& u) {
    Eigen::VectorXd s(m);
    for (Eigen::Index j = 0; j < m; ++j) s(j) = u.segment(3 * j, 3).squaredNorm() / (caps[j] * caps[j]);
    return s;
  };
  auto inside = [&](const Eigen::VectorXd& u) { return ratios(u).maxCoeff() <= 1.0 + 1e-9; };

  Eigen::VectorXd u = u0;
  if (null.cols() > 0) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(null.cols());
    for (double q : {2.0, 4.0, 8.0, 16.0, 32.0}) {
      for (int it = 0; it < 40; ++it) {
        const Eigen::VectorXd cur = u0 + null * z;
        const Eigen::VectorXd s = ratios(cur);
        const double top = std::max(s.maxCoeff(), 1e-300);
        auto scaled_phi = [&](const Eigen::VectorXd& ss) { return (ss / top).array().pow(q).sum(); };
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(z.size());
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(z.size(), z.size());
        for (Eigen::Index j = 0; j < m; ++j) {
          const double c2 = caps[static_cast<std::size_t>(j)] * caps[static_cast<std::size_t>(j)];
          const Eigen::MatrixXd nj = null.middleRows(3 * j, 3);
          const Eigen::VectorXd a = 2.0 * nj.transpose() * cur.segment(3 * j, 3) / c2;
          const double r = s(j) / top;
          grad += q * std::pow(r, q - 1.0) * a;
          hess += q * (q - 1.0) * std::pow(r, q - 2.0) / top * a * a.transpose() +
                  q * std::pow(r, q - 1.0) * 2.0 * nj.transpose() * nj / c2;
        }
        const Eigen::VectorXd step = -hess.ldlt().solve(grad);
        if (!step.allFinite()) break;
        const double f0 = scaled_phi(s);
        double t = 1.0;
        while (t > 1e-10 && !(scaled_phi(ratios(u0 + null * (z + t * step))) < f0)) t *= 0.5;
        if (t <= 1e-10) break;
        z += t * step;
        if (t * step.norm() <= 1e-14 * (1.0 + z.norm())) break;
      }
      u = u0 + null * z;
      if (inside(u)) return u;
    }
  }
  // Tight caps: finish with alternating projections.
  auto to_balls = [&](Eigen::VectorXd w) {
    for (Eigen::Index j = 0; j < m; ++j) {
      auto blk = w.segment(3 * j, 3);
      const double n = blk.norm();
      if (n > caps[static_cast<std::size_t>(j)]) blk *= caps[static_cast<std::size_t>(j)] / n;
    }
    return w;
  };
  Eigen::VectorXd best = to_balls(u);
  double best_res = (b * best + g).norm();
  Eigen::VectorXd w = u;
  for (int it = 0; it < 2000 && best_res > tol; ++it) {
    const Eigen::VectorXd c = to_balls(w);
    const double res = (b * c + g).norm();
    if (res < best_res) {
      best_res = res;
      best = c;
    }
    w = c - svd.solve(Eigen::VectorXd(b * c + g));
  }
  return best;
}

// Heap-free storage for the (at most 3-dimensional) restricted problem.
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using BasisMat = Eigen::Matrix<double, 3, Eigen::Dynamic, 0, 3, 3>;

class SumOfNormsSolver {
 public:
  SumOfNormsSolver(std::vector<NormTerm> terms, SumOfNormsOptions opts) : opts_(opts) {
    for (auto& t : terms) {
      if (t.weight > 0.0) terms_.push_back(std::move(t));
    }
    flat_ = flat_directions(terms_);
    for (const auto& t : terms_) {
      offset_scale_ = std::max(offset_scale_, t.offset.norm());
      map_scale_ = std::max(map_scale_, t.map.norm());
      weight_scale_ += t.weight * t.map.norm();
    }
  }

  SumOfNormsResult solve(const Vec3& init) {
    SumOfNormsResult res;
    if (terms_.empty()) {
      res.converged = true;
      return res;
    }
    near_miss_.reset();
    Vec3 x = remove_flat(init);
    int iters = 0;

    // Coarse then loose IRLS, each followed by an active-set polish; then the
    // full IRLS budget, then pattern search.
    x = irls(x, std::min(opts_.max_iters, 12), 1e-3, iters);
    if (auto p = polish(x, iters)) return finish(*p, iters);
    x = irls(x, std::min(opts_.max_iters, 100), 1e-6, iters);
    if (auto p = polish(x, iters)) return finish(*p, iters);

    x = irls(x, std::max(0, opts_.max_iters - iters), opts_.tol_step, iters);
    if (auto p = polish(x, iters)) return finish(*p, iters);

    x = compass_search(x, iters);
    if (auto p = polish(x, iters)) return finish(*p, iters);

    // Optimum within rounding of a kink: take the best point seen if it
    // meets the loose tolerance.
    if (const auto cert = certificate(x); cert && (!near_miss_ || *cert < near_miss_->residual))
      near_miss_ = Candidate{x, *cert};
    if (near_miss_ && near_miss_->residual <= 100.0 * gradient_tolerance()) return finish(*near_miss_, iters);

    res.x = remove_flat(x);
    res.objective = objective(terms_, res.x);
    res.certificate_residual = certificate(res.x).value_or(std::numeric_limits<double>::infinity());
    res.iterations = iters;
    res.converged = false;
    return res;
  }

  double gradient_tolerance() const { return std::max(opts_.tol_grad, 1e-11 * weight_scale_); }

 private:
  struct Candidate {
    Vec3 x;
    double residual;
  };

  SumOfNormsResult finish(const Candidate& c, int iters) const {
    SumOfNormsResult res;
    res.x = remove_flat(c.x);
    res.objective = objective(terms_, res.x);
    res.certificate_residual = c.residual;
    res.iterations = iters;
    res.converged = true;
    return res;
  }

  Vec3 remove_flat(const Vec3& x) const {
    if (flat_.cols() == 0) return x;
    return x - flat_ * (flat_.transpose() * x);
  }

  double scale_at(const Vec3& x) const { return std::max({offset_scale_, map_scale_ * x.norm(), 1e-300}); }

  Vec3 irls(Vec3 x, int budget, double rel_step, int& iters) const {
    double f = objective(terms_, x);
    for (int it = 0; it < budget; ++it) {
      ++iters;
      Mat3 m = Mat3::Zero();
      Vec3 b = Vec3::Zero();
      for (const auto& t : terms_) {
        const double r = (t.offset + t.map * x).norm();
        const double w = t.weight / std::max(r, opts_.eps_reg);
        m += w * t.map.transpose() * t.map;
        b -= w * t.map.transpose() * t.offset;
      }
      const Vec3 step = psd_solve(m, b) - x;
      double lambda = opts_.damping;
      Vec3 next = x;
      double f_next = f;
      while (lambda >= 1e-8) {
        const Vec3 trial = x + lambda * step;
        const double f_trial = objective(terms_, trial);
        if (f_trial <= f + 1e-15 * (1.0 + std::abs(f))) {
          next = trial;
          f_next = f_trial;
          break;
        }
        lambda *= 0.5;
      }
      const double moved = (next - x).norm();
      x = next;
      f = f_next;
      if (moved <= rel_step * (1.0 + x.norm())) break;
    }
    return x;
  }

  // Derivative-free fallback: pattern search over coordinate and diagonal
  // directions with a shrinking step.
  Vec3 compass_search(Vec3 x, int& iters) const {
    static const std::vector<Vec3> dirs = [] {
      std::vector<Vec3> d;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
          for (int k = -1; k <= 1; ++k)
            if (i || j || k) d.push_back(Vec3(i, j, k).normalized());
      return d;
    }();
    double f = objective(terms_, x);
    double h = 1e-2 * (1.0 + x.norm());
    while (h > 1e-13 * (1.0 + x.norm()) && iters < 50 * opts_.max_iters) {
      ++iters;
      bool improved = false;
      for (const auto& d : dirs) {
        const Vec3 trial = x + h * d;
        const double ft = objective(terms_, trial);
        if (ft < f) {
          x = trial;
          f = ft;
          improved = true;
        }
      }
      if (!improved) h *= 0.5;
    }
    return x;
  }

  std::optional<Candidate> polish(const Vec3& x, int& iters) const {
    const double scale = scale_at(x);
    std::vector<double> rel(terms_.size());
    for (std::size_t j = 0; j < terms_.size(); ++j) rel[j] = (terms_[j].offset + terms_[j].map * x).norm() / scale;
    std::vector<std::size_t> order(terms_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rel[a] < rel[b]; });

    const int n = static_cast<int>(terms_.size());
    const int guess = static_cast<int>(std::count_if(rel.begin(), rel.end(), [](double r) { return r <= 1e-6; }));
    std::vector<int> sizes;
    sizes.push_back(guess);
    for (int d = 1; d <= n; ++d) {
      if (guess - d >= 0) sizes.push_back(guess - d);
      if (guess + d <= n) sizes.push_back(guess + d);
    }
    for (int k : sizes) {
      std::vector<std::size_t> active(order.begin(), order.begin() + k);
      Vec3 end = x;
      auto c = restricted_solve(active, x, iters, &end);
      if (!c) {
        // Newton stopped next to a kink: retry with those residuals pinned.
        std::vector<std::size_t> pinned = active;
        const double kink_tol = 1e-7 * scale_at(end);
        for (std::size_t j = 0; j < terms_.size(); ++j) {
          if (std::find(active.begin(), active.end(), j) == active.end() &&
              (terms_[j].offset + terms_[j].map * end).norm() <= kink_tol)
            pinned.push_back(j);
        }
        if (pinned.size() > active.size()) c = restricted_solve(pinned, end, iters);
        // The optimum itself may sit just off the kink.
        if (!c) c = restricted_solve(active, end, iters, nullptr, false);
        if (!c) continue;
      }
      // Landed on a kink outside the active set: re-solve with it pinned.
      const double zero_tol = 1e-12 * scale_at(c->x);
      std::vector<std::size_t> pinned;
      for (std::size_t j = 0; j < terms_.size(); ++j)
        if ((terms_[j].offset + terms_[j].map * c->x).norm() <= zero_tol) pinned.push_back(j);
      if (pinned.size() > active.size()) {
        if (auto refined = restricted_solve(pinned, c->x, iters)) return refined;
      }
      return c;
    }
    return std::nullopt;
  }

  // Minimize over {x : a_i + P_i x = 0 for i in active}; nullopt if the
  // constraints are inconsistent or the result fails the certificate.
  std::optional<Candidate> restricted_solve(const std::vector<std::size_t>& active, const Vec3& start, int& iters,
                                            Vec3* end_point = nullptr, bool stop_at_kink = true) const {
    const double scale = scale_at(start);
    Vec3 x0 = Vec3::Zero();
    BasisMat null_basis = Mat3::Identity();
    if (!active.empty()) {
      const auto rows = static_cast<Eigen::Index>(3 * active.size());
      Eigen::MatrixXd a(rows, 3);
      Eigen::VectorXd rhs(rows);
      for (std::size_t i = 0; i < active.size(); ++i) {
        const auto r0 = static_cast<Eigen::Index>(3 * i);
        a.block(r0, 0, 3, 3) = terms_[active[i]].map;
        rhs.segment(r0, 3) = -terms_[active[i]].offset;
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV | Eigen::ComputeThinU);
      const double smax = svd.singularValues()(0);
      if (!(smax > 0.0)) return std::nullopt;
      svd.setThreshold(1e-10);
      x0 = svd.solve(rhs);
      if ((a * x0 - rhs).norm() > 1e-9 * scale) return std::nullopt;
      const auto rank = svd.rank();
      null_basis = svd.matrixV().rightCols(3 - rank);
    }
    const Eigen::Index dim = null_basis.cols();

    std::vector<char> is_active(terms_.size(), 0);
    for (auto i : active) is_active[i] = 1;

    auto restricted_f = [&](const SmallVec& z) {
      const Vec3 x = x0 + null_basis * z;
      double f = 0.0;
      for (std::size_t j = 0; j < terms_.size(); ++j)
        if (!is_active[j]) f += terms_[j].weight * (terms_[j].offset + terms_[j].map * x).norm();
      return f;
    };

    SmallVec z = null_basis.transpose() * (start - x0);
    if (dim > 0) {
      double f = restricted_f(z);
      const double tiny = 1e-300;
      auto derivatives = [&](const SmallVec& zz, SmallVec& g, SmallMat& h) {
        const Vec3 x = x0 + null_basis * zz;
        g = SmallVec::Zero(dim);
        h = SmallMat::Zero(dim, dim);
        for (std::size_t j = 0; j < terms_.size(); ++j) {
          if (is_active[j]) continue;
          const auto& t = terms_[j];
          const Vec3 r = t.offset + t.map * x;
          const double rn = r.norm();
          if (rn <= tiny) continue;
          const BasisMat pn = t.map * null_basis;
          const Vec3 u = r / rn;
          g += t.weight * pn.transpose() * u;
          const Mat3 proj = Mat3::Identity() - u * u.transpose();
          h += (t.weight / rn) * pn.transpose() * proj * pn;
        }
      };
      SmallVec g, h_trial_g;
      SmallMat h, h_trial;
      for (int it = 0; it < 100; ++it) {
        ++iters;
        derivatives(z, g, h);
        if (g.norm() <= 1e-15 * std::max(weight_scale_, 1e-300)) break;
        Eigen::SelfAdjointEigenSolver<SmallMat> es(h);
        const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
        SmallVec step = SmallVec::Zero(dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
          if (es.eigenvalues()(k) > 1e-13 * top) {
            const SmallVec e = es.eigenvectors().col(k);
            step -= e * (e.dot(g) / es.eigenvalues()(k));
          }
        }
        if (step.dot(g) >= 0.0 || step.norm() == 0.0) step = -g / std::max(top, g.norm());
        if (step.norm() <= 1e-15 * (1.0 + z.norm())) {
          z += step;
          break;
        }
        double t = 1.0;
        bool accepted = false;
        while (t > 1e-14) {
          const SmallVec trial = z + t * step;
          const double ft = restricted_f(trial);
          bool ok = ft <= f + 1e-4 * t * step.dot(g);
          // Near the optimum f is flat to rounding; fall back to the gradient.
          if (!ok && t == 1.0 && std::abs(ft - f) <= 1e-13 * std::max(std::abs(f), 1e-300)) {
            derivatives(trial, h_trial_g, h_trial);
            ok = h_trial_g.norm() < g.norm();
          }
          if (ok) {
            z = trial;
            f = ft;
            accepted = true;
            break;
          }
          t *= 0.5;
        }
        if (!accepted || t * step.norm() <= 1e-15 * (1.0 + z.norm())) break;
        if (stop_at_kink && near_kink(x0 + null_basis * z, is_active, scale)) break;
      }
    }
    const Vec3 x = x0 + null_basis * z;
    if (end_point) *end_point = x;
    const auto cert = certificate(x);
    if (!cert) return std::nullopt;
    if (*cert > gradient_tolerance()) {
      if (!near_miss_ || *cert < near_miss_->residual) near_miss_ = Candidate{x, *cert};
      return std::nullopt;
    }
    return Candidate{x, *cert};
  }

  bool near_kink(const Vec3& x, const std::vector<char>& is_active, double scale) const {
    for (std::size_t j = 0; j < terms_.size(); ++j)
      if (!is_active[j] && (terms_[j].offset + terms_[j].map * x).norm() <= 1e-8 * scale) return true;
    return false;
  }

  // Distance from 0 to the subdifferential of f at x (approximate when more
  // than one residual is zero: uses the min-norm static multipliers).
  std::optional<double> certificate(const Vec3& x) const {
    const double zero_tol = 1e-12 * scale_at(x);
    Vec3 g = Vec3::Zero();
    std::vector<std::size_t> stat;
    for (std::size_t j = 0; j < terms_.size(); ++j) {
      const Vec3 r = terms_[j].offset + terms_[j].map * x;
      const double rn = r.norm();
      if (rn <= zero_tol) {
        stat.push_back(j);
      } else {
        g += terms_[j].weight * terms_[j].map.transpose() * (r / rn);
      }
    }
    if (stat.empty()) return g.norm();
    Eigen::MatrixXd b(3, static_cast<Eigen::Index>(3 * stat.size()));
    for (std::size_t i = 0; i < stat.size(); ++i)
      b.block(0, static_cast<Eigen::Index>(3 * i), 3, 3) = terms_[stat[i]].map.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    const Eigen::VectorXd u = svd.solve(Eigen::VectorXd(-g));
    auto capped_excess = [&](const Eigen::VectorXd& uu) {
      double excess = (b * uu + g).norm();
      for (std::size_t i = 0; i < stat.size(); ++i) {
        const double un = uu.segment(static_cast<Eigen::Index>(3 * i), 3).norm();
        const double cap = terms_[stat[i]].weight;
        if (un > cap * (1.0 + 1e-9)) excess += (un - cap) * terms_[stat[i]].map.norm();
      }
      return excess;
    };
    double best = capped_excess(u);
    if (stat.size() < 2 || best <= gradient_tolerance()) return best;

    // Several kinks at once: the min-norm multipliers may break a cap that
    // other multipliers satisfy.
    std::vector<double> caps;
    for (auto j : stat) caps.push_back(terms_[j].weight);
    const Eigen::VectorXd alt = capped_multipliers(b, g, caps, u, gradient_tolerance());
    best = std::min(best, capped_excess(alt));
    return best;
  }

  std::vector<NormTerm> terms_;
  SumOfNormsOptions opts_;
  mutable std::optional<Candidate> near_miss_;
  Eigen::MatrixXd flat_;
  double offset_scale_ = 0.0;
  double map_scale_ = 0.0;
  double weight_scale_ = 0.0;
};

}  // namespace rollersim::detail
