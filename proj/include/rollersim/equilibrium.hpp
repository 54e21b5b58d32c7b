#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "rollersim/contact.hpp"
#include "rollersim/detail/sum_of_norms.hpp"

namespace rollersim {

enum class SolveMode { PinnedCenter, FreeTranslation };

struct SolverOptions {
  double tol_torque = 1e-8;  // N*m
  double tol_step = 1e-10;
  int max_iters = 500;
  double damping = 1.0;    // (0, 1]
  double eps_reg = 1e-9;   // IRLS weight floor on |slip|
  double eps_slip = kDefaultSlipEpsilon;
  double tol_omega = 1e-6;  // rad/s, "rotation cancelled" threshold for translation
  SolveMode mode = SolveMode::PinnedCenter;

  bool operator==(const SolverOptions&) const = default;
};

inline void validate(const SolverOptions& o) {
  if (!(o.tol_torque > 0.0) || !(o.tol_step > 0.0) || o.max_iters <= 0 || !(o.eps_reg > 0.0) ||
      !(o.eps_slip > 0.0) || !(o.tol_omega > 0.0)) {
    throw Error(ErrorCode::ValidationError, "solver options must all be positive");
  }
  if (!(o.damping > 0.0) || o.damping > 1.0) throw Error(ErrorCode::ValidationError, "damping must lie in (0, 1]");
}

struct EquilibriumSolution {
  Vec3 omega = Vec3::Zero();
  Vec3 v_obj = Vec3::Zero();
  std::vector<ContactKinematics> per_contact;
  std::vector<double> radius_weights;
  Vec3 torque_residual = Vec3::Zero();
  Vec3 force_residual = Vec3::Zero();
  double dissipation = 0.0;
  bool converged = false;
  int iterations = 0;

  bool all_slipping() const {
    for (const auto& k : per_contact)
      if (k.state != SlipState::Slipping) return false;
    return !per_contact.empty();
  }
};

namespace detail {

inline void check_lengths(std::span<const RollerContact> contacts, std::span<const double> speeds,
                          std::span<const double> weights) {
  if (contacts.empty()) throw Error(ErrorCode::NoContacts, "at least one contact is required");
  if (speeds.size() != contacts.size())
    throw Error(ErrorCode::BadLength, "command length does not match the contact count");
  if (weights.size() != contacts.size())
    throw Error(ErrorCode::BadLength, "radius weight count does not match the contact count");
}

inline SumOfNormsOptions to_inner(const SolverOptions& o) {
  SumOfNormsOptions s;
  s.tol_step = o.tol_step;
  s.max_iters = o.max_iters;
  s.damping = o.damping;
  s.eps_reg = o.eps_reg;
  s.tol_grad = o.tol_torque;
  return s;
}

inline EquilibriumSolution assemble(std::span<const RollerContact> contacts, std::span<const double> speeds,
                                    std::span<const double> weights, const Vec3& omega, const Vec3& v_obj,
                                    double eps_slip) {
  EquilibriumSolution sol;
  sol.omega = omega;
  sol.v_obj = v_obj;
  sol.radius_weights.assign(weights.begin(), weights.end());
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    auto kin = contact_kinematics(contacts[i], speeds[i], omega, v_obj, eps_slip);
    if (kin.state == SlipState::Slipping) {
      sol.torque_residual += contact_torque(contacts[i], kin, weights[i]).torque;
      sol.force_residual += contacts[i].friction_limit() * kin.slip / kin.slip_speed;
    }
    sol.per_contact.push_back(kin);
  }
  sol.dissipation = dissipation(contacts, speeds, omega, v_obj, weights);
  return sol;
}

}  // namespace detail

/// Object angular velocity at friction-torque balance with the center
/// pinned: the minimizer of the weighted slip power over omega. Sticking
/// families resolve to their minimal-norm member.
inline EquilibriumSolution equilibrium_omega(std::span<const RollerContact> contacts, std::span<const double> speeds,
                                             std::span<const double> radius_weights, const SolverOptions& opts = {}) {
  detail::check_lengths(contacts, speeds, radius_weights);
  std::vector<detail::NormTerm> terms;
  terms.reserve(contacts.size());
  Vec3 init = Vec3::Zero();
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const Vec3 v = speeds[i] * contacts[i].belt_dir;
    const Vec3& p = contacts[i].position;
    terms.push_back({v, skew(p), radius_weights[i] * contacts[i].friction_limit()});
    const double r2 = p.squaredNorm();
    if (r2 > 0.0) init += p.cross(v) / r2;
  }
  init /= static_cast<double>(contacts.size());

  detail::SumOfNormsSolver solver(std::move(terms), detail::to_inner(opts));
  const auto res = solver.solve(init);
  auto sol = detail::assemble(contacts, speeds, radius_weights, res.x, Vec3::Zero(), opts.eps_slip);
  sol.iterations = res.iterations;
  sol.converged = res.converged || (sol.all_slipping() && sol.torque_residual.norm() <= opts.tol_torque);
  if (!sol.converged) {
    throw Error(ErrorCode::NonConvergence,
                "rotation equilibrium did not converge (certificate residual " +
                    std::to_string(res.certificate_residual) + ")");
  }
  return sol;
}

inline EquilibriumSolution equilibrium_omega(std::span<const RollerContact> contacts, const BeltCommand& command,
                                             std::span<const double> radius_weights, const SolverOptions& opts = {}) {
  return equilibrium_omega(contacts, std::span<const double>(command.speeds), radius_weights, opts);
}

/// Object velocity that balances the tangential friction forces for a given
/// object rotation rate: the weighted geometric median of v_i - omega x p_i.
inline Vec3 drift_velocity(std::span<const RollerContact> contacts, std::span<const double> speeds, const Vec3& omega,
                           const SolverOptions& opts = {}) {
  if (contacts.empty()) throw Error(ErrorCode::NoContacts, "at least one contact is required");
  std::vector<detail::NormTerm> terms;
  Vec3 init = Vec3::Zero();
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const Vec3 a = speeds[i] * contacts[i].belt_dir - omega.cross(contacts[i].position);
    terms.push_back({a, -Mat3::Identity(), contacts[i].friction_limit()});
    init += a;
  }
  init /= static_cast<double>(contacts.size());
  detail::SumOfNormsSolver solver(std::move(terms), detail::to_inner(opts));
  const auto res = solver.solve(init);
  if (!res.converged) throw Error(ErrorCode::NonConvergence, "translation equilibrium did not converge");
  return res.x;
}

/// Pure-translation equilibrium. Requires the rotation solve to cancel
/// (|omega| <= tol_omega); then v* balances all tangential friction forces.
inline EquilibriumSolution translation_equilibrium(std::span<const RollerContact> contacts,
                                                   std::span<const double> speeds,
                                                   std::span<const double> radius_weights,
                                                   const SolverOptions& opts = {}) {
  const auto rot = equilibrium_omega(contacts, speeds, radius_weights, opts);
  if (rot.omega.norm() > opts.tol_omega) {
    throw Error(ErrorCode::RotationNotCancelled,
                "commanded belts produce |omega| = " + std::to_string(rot.omega.norm()) + " rad/s");
  }
  const Vec3 v = drift_velocity(contacts, speeds, rot.omega, opts);
  auto sol = detail::assemble(contacts, speeds, radius_weights, rot.omega, v, opts.eps_slip);
  sol.iterations = rot.iterations;
  sol.converged = true;
  return sol;
}

inline EquilibriumSolution translation_equilibrium(std::span<const RollerContact> contacts,
                                                   const BeltCommand& command, const SolverOptions& opts = {}) {
  const auto w = unit_weights(contacts.size());
  return translation_equilibrium(contacts, std::span<const double>(command.speeds), w, opts);
}

/// Diagnostic for the orthogonal force balance of pure translation: the
/// magnitude of the summed friction-force components perpendicular to v*.
/// Each term projects the slip direction onto the unit vector orthogonal to
/// v* in the plane of (v_i, v*). Sticking contacts and belts parallel to v*
/// contribute nothing.
inline double eq9_residual(std::span<const RollerContact> contacts, std::span<const double> speeds,
                           const Vec3& v_star, double eps_slip = kDefaultSlipEpsilon) {
  if (contacts.size() != speeds.size()) throw Error(ErrorCode::BadLength, "command length mismatch");
  const double vs = v_star.norm();
  if (!(vs > 0.0)) throw Error(ErrorCode::DegenerateDirection, "v* must be non-zero");
  const Vec3 dir = v_star / vs;
  Vec3 sum = Vec3::Zero();
  int slipping = 0;
  int used = 0;
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const Vec3 v = speeds[i] * contacts[i].belt_dir;
    const Vec3 slip = v - v_star;
    const double sn = slip.norm();
    if (sn <= eps_slip) continue;
    ++slipping;
    const Vec3 normal = v.cross(v_star);
    const double nn = normal.norm();
    if (nn <= 1e-12 * std::max(v.norm() * vs, 1e-300)) continue;
    const Vec3 ortho = (normal / nn).cross(dir);
    sum += contacts[i].friction_limit() * (slip / sn).dot(ortho) * ortho;
    ++used;
  }
  if (slipping > 0 && used == 0) {
    throw Error(ErrorCode::DegenerateDirection, "every slipping belt is parallel to v*");
  }
  return sum.norm();
}

inline double eq9_residual(std::span<const RollerContact> contacts, const BeltCommand& command, const Vec3& v_star) {
  return eq9_residual(contacts, std::span<const double>(command.speeds), v_star);
}

struct PaperWeightedResult {
  Vec3 omega = Vec3::Zero();
  std::vector<Vec3> induced;         // omega_i per contact
  std::vector<double> coefficients;  // convex weights, omega = sum c_i omega_i
  int iterations = 0;
};

/// Fixed point of the weighted-sum motion model
///   omega = sum r_i k_i omega_i / sum r_i k_i,  k_i = mu_i |F_i^n| / |slip_i|,
/// iterated with damping from the unweighted mean. Every iterate is a convex
/// combination of the induced omega_i; the coefficients are tracked
/// explicitly.
inline PaperWeightedResult paper_weighted_solve(std::span<const RollerContact> contacts,
                                                std::span<const double> speeds,
                                                std::span<const double> radius_weights,
                                                const SolverOptions& opts = {}) {
  detail::check_lengths(contacts, speeds, radius_weights);
  const std::size_t n = contacts.size();
  PaperWeightedResult out;
  out.induced.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.induced.push_back(induced_omega(contacts[i], speeds[i]));

  auto combine = [&](const std::vector<double>& c) {
    Vec3 w = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) w += c[i] * out.induced[i];
    return w;
  };

  auto weights_at = [&](const Vec3& omega) {
    std::vector<double> k(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 slip = speeds[i] * contacts[i].belt_dir - omega.cross(contacts[i].position);
      k[i] = radius_weights[i] * contacts[i].friction_limit() / std::max(slip.norm(), opts.eps_reg);
      total += k[i];
    }
    if (total > 0.0)
      for (auto& v : k) v /= total;
    return std::make_pair(k, total > 0.0);
  };

  // Damped iteration on the coefficients; the step size shrinks while the
  // fixed-point residual grows and recovers while it falls.
  auto run = [&](std::vector<double> coef, double lambda, int budget) -> bool {
    Vec3 omega = combine(coef);
    double last = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= budget; ++it) {
      ++out.iterations;
      auto [target, ok] = weights_at(omega);
      if (!ok) {
        out.omega = omega;
        out.coefficients = coef;
        return true;
      }
      const Vec3 mapped = combine(target);
      const double residual = (mapped - omega).norm();
      if (residual <= opts.tol_step * (1.0 + omega.norm())) {
        out.omega = mapped;
        out.coefficients = std::move(target);
        return true;
      }
      if (residual > last)
        lambda = std::max(0.5 * lambda, 1e-4);
      else
        lambda = std::min(1.1 * lambda, opts.damping);
      last = residual;
      for (std::size_t i = 0; i < n; ++i) coef[i] = (1.0 - lambda) * coef[i] + lambda * target[i];
      omega = combine(coef);
    }
    return false;
  };

  if (run(std::vector<double>(n, 1.0 / static_cast<double>(n)), opts.damping, opts.max_iters)) return out;
  // Fixed points pinned at one contact's rolling motion attract slowly from
  // the mean; restart from each vertex of the hull.
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> vertex(n, 0.0);
    vertex[j] = 1.0;
    if (run(std::move(vertex), opts.damping, opts.max_iters)) return out;
  }
  if (run(std::vector<double>(n, 1.0 / static_cast<double>(n)), 0.05, 40 * opts.max_iters)) return out;
  throw Error(ErrorCode::NonConvergence, "weighted-sum fixed point did not converge");
}

inline Vec3 paper_weighted_omega(std::span<const RollerContact> contacts, std::span<const double> speeds,
                                 std::span<const double> radius_weights, const SolverOptions& opts = {}) {
  return paper_weighted_solve(contacts, speeds, radius_weights, opts).omega;
}

inline Vec3 paper_weighted_omega(std::span<const RollerContact> contacts, const BeltCommand& command,
                                 std::span<const double> radius_weights, const SolverOptions& opts = {}) {
  return paper_weighted_omega(contacts, std::span<const double>(command.speeds), radius_weights, opts);
}

struct SolverComparison {
  Vec3 balance_omega;
  Vec3 weighted_omega;
  double divergence;  // rad/s
};

/// Runs both rotation models on the same inputs and reports their gap.
inline SolverComparison compare_solvers(std::span<const RollerContact> contacts, std::span<const double> speeds,
                                        std::span<const double> radius_weights, const SolverOptions& opts = {}) {
  const Vec3 a = equilibrium_omega(contacts, speeds, radius_weights, opts).omega;
  const Vec3 b = paper_weighted_omega(contacts, speeds, radius_weights, opts);
  return {a, b, (a - b).norm()};
}

namespace detail {

/// Minimizer of D(omega) + reg |omega|^2 by grid search over [-b, b]^3,
/// coordinate descent with a shrinking step, an ellipsoid-method refinement
/// driven by friction-torque subgradients (coordinate moves alone stall on
/// the sticking kinks), then a pattern search along the ellipsoid's axes.
inline Vec3 regularized_minimizer(std::span<const RollerContact> contacts, std::span<const double> speeds,
                                  std::span<const double> radius_weights, double eps, double box_halfwidth,
                                  int grid_n) {
  const Vec3 zero = Vec3::Zero();
  auto f = [&](const Vec3& w) { return dissipation(contacts, speeds, w, zero, radius_weights) + eps * w.squaredNorm(); };

  Vec3 best = Vec3::Zero();
  double fbest = f(best);
  const double h = 2.0 * box_halfwidth / (grid_n - 1);
  for (int i = 0; i < grid_n; ++i)
    for (int j = 0; j < grid_n; ++j)
      for (int k = 0; k < grid_n; ++k) {
        const Vec3 w(-box_halfwidth + i * h, -box_halfwidth + j * h, -box_halfwidth + k * h);
        const double fw = f(w);
        // Ties (flat minimizing sets) go to the smaller-norm grid point.
        if (fw < fbest - 1e-12 || (fw <= fbest + 1e-12 && w.norm() < best.norm())) {
          fbest = std::min(fw, fbest);
          best = w;
        }
      }

  for (double step = h; step > 1e-6; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int axis = 0; axis < 3; ++axis)
        for (double sgn : {-1.0, 1.0}) {
          Vec3 trial = best;
          trial(axis) += sgn * step;
          const double ft = f(trial);
          if (ft < fbest) {
            fbest = ft;
            best = trial;
            improved = true;
          }
        }
    }
  }

  auto subgradient = [&](const Vec3& w) {
    Vec3 g = 2.0 * eps * w;
    for (std::size_t i = 0; i < contacts.size(); ++i) {
      const Vec3 slip = speeds[i] * contacts[i].belt_dir - w.cross(contacts[i].position);
      const double sn = slip.norm();
      if (sn > 0.0) g -= radius_weights[i] * contacts[i].friction_limit() * contacts[i].position.cross(slip / sn);
    }
    return g;
  };
  constexpr double n = 3.0;
  Vec3 center = best;
  const double radius = 2.0 * std::sqrt(3.0) * box_halfwidth;
  Mat3 shape = radius * radius * Mat3::Identity();
  for (int it = 0; it < 20000; ++it) {
    const Vec3 g = subgradient(center);
    const double gpg = g.dot(shape * g);
    if (!(gpg > 0.0)) break;
    const double width = std::sqrt(gpg);
    if (width <= 1e-13 * (1.0 + fbest)) break;
    const Vec3 pg = shape * g / width;
    center -= pg / (n + 1.0);
    shape = (n * n / (n * n - 1.0)) * (shape - (2.0 / (n + 1.0)) * pg * pg.transpose());
    shape = 0.5 * (shape + shape.transpose());
    const double fc = f(center);
    if (fc < fbest) {
      fbest = fc;
      best = center;
    }
  }

  // The long axes of the final ellipsoid follow flat valleys, where the
  // cuts above make little progress.
  const Eigen::SelfAdjointEigenSolver<Mat3> axes(shape);
  for (double step = h; step > 1e-10; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int axis = 0; axis < 3; ++axis)
        for (double sgn : {-1.0, 1.0}) {
          const Vec3 trial = best + sgn * step * axes.eigenvectors().col(axis);
          const double ft = f(trial);
          if (ft < fbest) {
            fbest = ft;
            best = trial;
            improved = true;
          }
        }
    }
  }
  return best;
}

}  // namespace detail

/// Test oracle, independent of the IRLS path. A flat minimizing set (the
/// spin line of a single sticking contact) is resolved to its minimal-norm
/// point: a second search adds eps |omega|^2, and its result is kept when it
/// still minimizes the dissipation.
inline Vec3 brute_force_omega(std::span<const RollerContact> contacts, std::span<const double> speeds,
                              std::span<const double> radius_weights, double box_halfwidth = 4.0, int grid_n = 41) {
  if (grid_n < 11) throw Error(ErrorCode::ValidationError, "grid_n must be >= 11");
  detail::check_lengths(contacts, speeds, radius_weights);
  double scale = 0.0;
  for (std::size_t i = 0; i < contacts.size(); ++i)
    scale += radius_weights[i] * contacts[i].friction_limit() * contacts[i].position.norm();
  const Vec3 plain = detail::regularized_minimizer(contacts, speeds, radius_weights, 0.0, box_halfwidth, grid_n);
  const Vec3 reg = detail::regularized_minimizer(contacts, speeds, radius_weights, 1e-3 * scale, box_halfwidth, grid_n);
  const double d_plain = dissipation(contacts, speeds, plain, Vec3::Zero(), radius_weights);
  const double d_reg = dissipation(contacts, speeds, reg, Vec3::Zero(), radius_weights);
  return d_reg <= d_plain + 1e-9 * (scale + d_plain) ? reg : plain;
}

}  // namespace rollersim
