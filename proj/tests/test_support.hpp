#pragma once

// Seeded generators shared by the unit and acceptance suites.

#include <random>
#include <vector>

#include "rollersim/types.hpp"

namespace rollersim::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }

  Vec3 unit_vector() {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v;
    do {
      v = Vec3(n(gen_), n(gen_), n(gen_));
    } while (v.norm() < 1e-6);
    return v.normalized();
  }

  Vec3 tangent_at(const Vec3& p) {
    const Vec3 n = p.normalized();
    Vec3 t;
    do {
      const Vec3 u = unit_vector();
      t = u - u.dot(n) * n;
    } while (t.norm() < 1e-3);
    return t.normalized();
  }

  Orientation orientation() {
    std::normal_distribution<double> n(0.0, 1.0);
    return Orientation(n(gen_), n(gen_), n(gen_), n(gen_));
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

struct RandomCase {
  std::vector<RollerContact> contacts;
  std::vector<double> speeds;
  std::vector<double> weights;
};

/// 1-4 contacts on the unit sphere with random tangent belts, speeds in
/// [-1, 1], and distinct friction limits so minimizers are generically unique.
inline RandomCase random_unit_sphere_case(Rng& rng, int min_contacts = 1, int max_contacts = 4) {
  RandomCase c;
  const int n = rng.integer(min_contacts, max_contacts);
  for (int i = 0; i < n; ++i) {
    RollerContact k;
    k.position = rng.unit_vector();
    k.belt_dir = rng.tangent_at(k.position);
    k.normal_force = rng.uniform(0.5, 2.0);
    k.friction = rng.uniform(0.3, 1.0);
    c.contacts.push_back(k);
    c.speeds.push_back(rng.uniform(-1.0, 1.0));
    c.weights.push_back(1.0);
  }
  return c;
}

}  // namespace rollersim::testing
