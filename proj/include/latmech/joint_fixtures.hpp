#pragma once

// Small discrete joints used to exercise influence-matrix computations.

#include <cmath>
#include <string>
#include <vector>

#include "latmech/concentration.hpp"
#include "latmech/random.hpp"

namespace latmech {

struct JointFixture {
  std::string name;
  FiniteJoint joint;
  bool product = false;
};

namespace detail {

inline std::vector<double> normalized(std::vector<double> w) {
  double s = 0.0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
  return w;
}

inline std::vector<double> grid_values(int size) {
  std::vector<double> v(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) v[static_cast<std::size_t>(i)] = size == 1 ? 0.0 : -1.0 + 2.0 * i / (size - 1);
  return v;
}

inline FiniteJoint random_joint(std::vector<int> sizes, std::uint64_t seed, double zero_fraction = 0.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> values;
  std::size_t total = 1;
  for (int s : sizes) {
    values.push_back(grid_values(s));
    total *= static_cast<std::size_t>(s);
  }
  std::vector<double> w(total);
  for (auto& x : w) x = rng.uniform() < zero_fraction ? 0.0 : 0.05 + rng.uniform();
  return FiniteJoint(std::move(values), normalized(std::move(w)));
}

/// Ising-type chain on {-1,+1}^d with nearest-neighbour coupling J and field h.
inline FiniteJoint ising_chain(int d, double coupling, double field) {
  std::vector<std::vector<double>> values(static_cast<std::size_t>(d), {-1.0, 1.0});
  std::vector<double> w(std::size_t{1} << d);
  for (std::size_t f = 0; f < w.size(); ++f) {
    double energy = 0.0;
    for (int i = 0; i < d; ++i) {
      const double si = ((f >> (d - 1 - i)) & 1) ? 1.0 : -1.0;
      energy += field * si;
      if (i + 1 < d) energy += coupling * si * (((f >> (d - 2 - i)) & 1) ? 1.0 : -1.0);
    }
    w[f] = std::exp(energy);
  }
  return FiniteJoint(std::move(values), normalized(std::move(w)));
}

/// Potts-type model on {0..q-1}^d with all-pairs agreement bonus beta.
inline FiniteJoint potts(int d, int q, double beta) {
  std::vector<std::vector<double>> values(static_cast<std::size_t>(d), grid_values(q));
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(q);
  std::vector<double> w(total);
  for (std::size_t f = 0; f < total; ++f) {
    std::vector<int> x(static_cast<std::size_t>(d));
    std::size_t rem = f;
    for (int i = d; i-- > 0;) {
      x[static_cast<std::size_t>(i)] = static_cast<int>(rem % static_cast<std::size_t>(q));
      rem /= static_cast<std::size_t>(q);
    }
    int agree = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) agree += x[static_cast<std::size_t>(i)] == x[static_cast<std::size_t>(j)];
    w[f] = std::exp(beta * agree);
  }
  return FiniteJoint(std::move(values), normalized(std::move(w)));
}

}  // namespace detail

/// The 20 shipped fixtures; every joint has at most 4 coordinates so two
/// independent copies remain exhaustively enumerable.
inline std::vector<JointFixture> joint_fixtures() {
  using detail::grid_values;
  const std::vector<double> bit{0.0, 1.0};
  const std::vector<double> sign{-1.0, 1.0};
  std::vector<JointFixture> f;

  f.push_back({"product_fair_bits_2", FiniteJoint::product({bit, bit}, {{0.5, 0.5}, {0.5, 0.5}}), true});
  f.push_back({"product_biased_bits_3",
               FiniteJoint::product({bit, bit, bit}, {{0.2, 0.8}, {0.6, 0.4}, {0.9, 0.1}}), true});
  f.push_back({"product_ternary_2",
               FiniteJoint::product({grid_values(3), grid_values(3)}, {{0.2, 0.5, 0.3}, {0.1, 0.1, 0.8}}), true});
  f.push_back({"product_binary_4",
               FiniteJoint::product({sign, sign, sign, sign}, {{0.5, 0.5}, {0.3, 0.7}, {0.5, 0.5}, {0.45, 0.55}}), true});
  f.push_back({"product_with_constant",
               FiniteJoint::product({sign, {0.0}, grid_values(3)}, {{0.5, 0.5}, {1.0}, {0.25, 0.5, 0.25}}), true});
  f.push_back({"product_mixed_3",
               FiniteJoint::product({grid_values(3), sign, grid_values(4)},
                                    {{0.3, 0.4, 0.3}, {0.5, 0.5}, {0.1, 0.4, 0.4, 0.1}}),
               true});
  f.push_back({"copied_bits", FiniteJoint({bit, bit}, {0.5, 0.0, 0.0, 0.5}), false});
  f.push_back({"correlated_bits_0.6", FiniteJoint({bit, bit}, {0.4, 0.1, 0.1, 0.4}), false});
  f.push_back({"correlated_signs_0.2", FiniteJoint({sign, sign}, {0.3, 0.2, 0.2, 0.3}), false});
  f.push_back({"ising_chain_3_weak", detail::ising_chain(3, 0.15, 0.0), false});
  f.push_back({"ising_chain_4_weak", detail::ising_chain(4, 0.1, 0.05), false});
  f.push_back({"ising_chain_3_strong", detail::ising_chain(3, 1.0, 0.2), false});
  f.push_back({"potts_3x3", detail::potts(3, 3, 0.3), false});
  f.push_back({"random_3x3", detail::random_joint({3, 3}, 101), false});
  f.push_back({"random_bits_3", detail::random_joint({2, 2, 2}, 202), false});
  f.push_back({"random_bits_4", detail::random_joint({2, 2, 2, 2}, 303), false});
  f.push_back({"random_4x4", detail::random_joint({4, 4}, 404), false});
  f.push_back({"sparse_random_3x2x3", detail::random_joint({3, 2, 3}, 505, 0.3), false});
  {
    // X3 = X1 xor X2, flipped with probability 0.1
    std::vector<double> p(8);
    for (std::size_t x = 0; x < 8; ++x) {
      const int a = (x >> 2) & 1, b = (x >> 1) & 1, c = x & 1;
      p[x] = 0.25 * (((a ^ b) == c) ? 0.9 : 0.1);
    }
    f.push_back({"noisy_xor_3", FiniteJoint({bit, bit, bit}, std::move(p)), false});
  }
  {
    // Mixture of two product measures on {-1,1}^3.
    const FiniteJoint a = FiniteJoint::product({sign, sign, sign}, {{0.8, 0.2}, {0.7, 0.3}, {0.8, 0.2}});
    const FiniteJoint b = FiniteJoint::product({sign, sign, sign}, {{0.2, 0.8}, {0.3, 0.7}, {0.2, 0.8}});
    std::vector<double> p(8);
    for (std::size_t x = 0; x < 8; ++x) p[x] = 0.5 * a.probs()[x] + 0.5 * b.probs()[x];
    f.push_back({"mixture_of_products_3", FiniteJoint({sign, sign, sign}, std::move(p)), false});
  }
  return f;
}

}  // namespace latmech
