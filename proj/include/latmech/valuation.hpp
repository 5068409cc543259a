#pragma once

// Constrained-additive valuations: v(t, S) = max over feasible T within S of
// sum_{j in T} (mu_j + t_j), for a downward-closed feasibility family.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <variant>
#include <vector>

#include "latmech/error.hpp"
#include "latmech/latent_model.hpp"
#include "latmech/random.hpp"

namespace latmech {

/// Sorted, duplicate-free set of item indices (0-based).
class Bundle {
 public:
  Bundle() = default;
  explicit Bundle(std::vector<int> items) : items_(std::move(items)) {
    std::sort(items_.begin(), items_.end());
    require(std::adjacent_find(items_.begin(), items_.end()) == items_.end(), ErrorKind::InvalidArgument,
            "bundle has duplicate items");
  }

  static Bundle all(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return Bundle(std::move(v));
  }

  void check_range(Eigen::Index n) const {
    require(items_.empty() || (items_.front() >= 0 && items_.back() < n), ErrorKind::InvalidArgument,
            "bundle item out of range");
  }

  const std::vector<int>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool contains(int j) const { return std::binary_search(items_.begin(), items_.end(), j); }
  friend bool operator==(const Bundle&, const Bundle&) = default;

 private:
  std::vector<int> items_;
};

/// All sets of size at most c ("c-demand").
struct CardinalityFamily {
  int c = 1;
};

/// Item j belongs to part part_of_item[j]; at most capacity[p] items per part.
struct PartitionFamily {
  std::vector<int> part_of_item;
  std::vector<int> capacity;
};

/// Arbitrary downward-closed family given by a membership test on sorted index sets.
struct OracleFamily {
  std::function<bool(const std::vector<int>&)> contains;
};

using FeasibilityFamily = std::variant<CardinalityFamily, PartitionFamily, OracleFamily>;

inline constexpr std::size_t kMaxExactSubsetSize = 20;

struct BestBundle {
  double value = 0.0;
  Bundle bundle;
};

namespace detail {

inline BestBundle best_cardinality(int c, const Vec& w, const std::vector<int>& s) {
  std::vector<int> pos;
  for (int j : s)
    if (w(j) > 0.0) pos.push_back(j);
  std::stable_sort(pos.begin(), pos.end(), [&](int a, int b) { return w(a) > w(b) || (w(a) == w(b) && a < b); });
  if (static_cast<int>(pos.size()) > c) pos.resize(static_cast<std::size_t>(std::max(c, 0)));
  double v = 0.0;
  for (int j : pos) v += w(j);
  return {v, Bundle(std::move(pos))};
}

inline BestBundle best_partition(const PartitionFamily& f, const Vec& w, const std::vector<int>& s) {
  std::vector<std::vector<int>> per_part(f.capacity.size());
  for (int j : s)
    if (w(j) > 0.0) per_part[static_cast<std::size_t>(f.part_of_item[static_cast<std::size_t>(j)])].push_back(j);
  std::vector<int> chosen;
  double v = 0.0;
  for (std::size_t p = 0; p < per_part.size(); ++p) {
    BestBundle b = best_cardinality(f.capacity[p], w, per_part[p]);
    v += b.value;
    chosen.insert(chosen.end(), b.bundle.items().begin(), b.bundle.items().end());
  }
  return {v, Bundle(std::move(chosen))};
}

inline BestBundle best_oracle(const OracleFamily& f, const Vec& w, const std::vector<int>& s) {
  require(s.size() <= kMaxExactSubsetSize, ErrorKind::TooLargeForExact,
          "oracle family over |S| = " + std::to_string(s.size()) + " > 20");
  const std::uint32_t n = static_cast<std::uint32_t>(s.size());
  double best = 0.0;
  std::vector<int> best_set;
  std::vector<int> cur;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    cur.clear();
    double v = 0.0;
    for (std::uint32_t b = 0; b < n; ++b)
      if (mask & (1u << b)) {
        cur.push_back(s[b]);
        v += w(s[b]);
      }
    if (v > best && f.contains(cur)) {
      best = v;
      best_set = cur;
    }
  }
  return {best, Bundle(std::move(best_set))};
}

}  // namespace detail

/// Exact max of sum_{j in T} w_j over feasible T within S. The empty set is
/// always feasible, so the result is >= 0 and never uses nonpositive weights.
inline BestBundle best_feasible_subset(const FeasibilityFamily& family, const Vec& w, const Bundle& s) {
  s.check_range(w.size());
  return std::visit(
      [&](const auto& f) -> BestBundle {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, CardinalityFamily>) return detail::best_cardinality(f.c, w, s.items());
        else if constexpr (std::is_same_v<F, PartitionFamily>) return detail::best_partition(f, w, s.items());
        else return detail::best_oracle(f, w, s.items());
      },
      family);
}

inline bool family_contains(const FeasibilityFamily& family, const std::vector<int>& set) {
  return std::visit(
      [&](const auto& f) -> bool {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, CardinalityFamily>) {
          return static_cast<int>(set.size()) <= f.c;
        } else if constexpr (std::is_same_v<F, PartitionFamily>) {
          std::vector<int> used(f.capacity.size(), 0);
          for (int j : set)
            if (++used[static_cast<std::size_t>(f.part_of_item[static_cast<std::size_t>(j)])] >
                f.capacity[static_cast<std::size_t>(f.part_of_item[static_cast<std::size_t>(j)])])
              return false;
          return true;
        } else {
          return f.contains(set);
        }
      },
      family);
}

class ConstrainedAdditiveValuation {
 public:
  ConstrainedAdditiveValuation() = default;

  /// `lipschitz` may be supplied for oracle families too large to enumerate.
  ConstrainedAdditiveValuation(Vec mu, FeasibilityFamily family, std::optional<int> lipschitz = std::nullopt)
      : mu_(std::move(mu)), family_(std::move(family)) {
    require(mu_.size() >= 1 && mu_.allFinite(), ErrorKind::InvalidArgument, "valuation needs a finite mu of size N >= 1");
    validate_family();
    lipschitz_ = lipschitz ? *lipschitz : compute_lipschitz();
  }

  static ConstrainedAdditiveValuation c_demand(Eigen::Index n, int c, double mu = 0.0) {
    return {Vec::Constant(n, mu), CardinalityFamily{c}};
  }

  Eigen::Index items() const { return mu_.size(); }
  const Vec& mu() const { return mu_; }
  const FeasibilityFamily& family() const { return family_; }
  int lipschitz() const { return lipschitz_; }

  BestBundle best(const Vec& t, const Bundle& s) const {
    require(t.size() == mu_.size(), ErrorKind::DimensionMismatch, "type dimension does not match valuation");
    return best_feasible_subset(family_, mu_ + t, s);
  }

 private:
  void validate_family() {
    const auto n = static_cast<int>(mu_.size());
    if (auto* c = std::get_if<CardinalityFamily>(&family_)) {
      require(c->c >= 0, ErrorKind::InvalidArgument, "cardinality bound must be >= 0");
    } else if (auto* p = std::get_if<PartitionFamily>(&family_)) {
      require(static_cast<int>(p->part_of_item.size()) == n, ErrorKind::DimensionMismatch, "partition must label every item");
      for (int part : p->part_of_item)
        require(part >= 0 && part < static_cast<int>(p->capacity.size()), ErrorKind::InvalidArgument, "partition label out of range");
      for (int cap : p->capacity) require(cap >= 0, ErrorKind::InvalidArgument, "partition capacity must be >= 0");
    } else {
      const auto& o = std::get<OracleFamily>(family_);
      require(static_cast<bool>(o.contains), ErrorKind::InvalidArgument, "oracle family needs a membership test");
      require(o.contains({}), ErrorKind::InvalidArgument, "feasibility family must contain the empty set");
      check_downward_closed(o, n);
    }
  }

  // Exhaustive for N <= 12, sampled probes above.
  static void check_downward_closed(const OracleFamily& o, int n) {
    auto probe = [&](const std::vector<int>& set) {
      if (!o.contains(set)) return;
      for (std::size_t drop = 0; drop < set.size(); ++drop) {
        std::vector<int> sub;
        for (std::size_t i = 0; i < set.size(); ++i)
          if (i != drop) sub.push_back(set[i]);
        require(o.contains(sub), ErrorKind::InvalidArgument, "feasibility family is not downward closed");
      }
    };
    std::vector<int> set;
    if (n <= 12) {
      for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        set.clear();
        for (int b = 0; b < n; ++b)
          if (mask & (1u << b)) set.push_back(b);
        probe(set);
      }
      return;
    }
    Rng rng(0x5eed);
    for (int trial = 0; trial < 1000; ++trial) {
      set.clear();
      for (int j = 0; j < n; ++j)
        if (rng.uniform() < 0.5 * static_cast<double>(trial % 8 + 1) / static_cast<double>(n)) set.push_back(j);
      probe(set);
    }
  }

  int compute_lipschitz() const {
    const auto n = static_cast<int>(mu_.size());
    if (auto* c = std::get_if<CardinalityFamily>(&family_)) return std::min(c->c, n);
    if (auto* p = std::get_if<PartitionFamily>(&family_)) {
      std::vector<int> count(p->capacity.size(), 0);
      for (int part : p->part_of_item) ++count[static_cast<std::size_t>(part)];
      int l = 0;
      for (std::size_t i = 0; i < count.size(); ++i) l += std::min(count[i], p->capacity[i]);
      return l;
    }
    // Max feasible cardinality: best subset under unit weights.
    return static_cast<int>(std::lround(best_feasible_subset(family_, Vec::Ones(n), Bundle::all(n)).value));
  }

  Vec mu_;
  FeasibilityFamily family_;
  int lipschitz_ = 0;
};

inline double value(const ConstrainedAdditiveValuation& val, const Vec& t, const Bundle& s) { return val.best(t, s).value; }

inline int lipschitz_constant(const ConstrainedAdditiveValuation& val) { return val.lipschitz(); }

/// v^A(z, S) := v(Az, S)
inline double induced_latent_value(const ConstrainedAdditiveValuation& val, const DesignMatrix& a, const Vec& z,
                                   const Bundle& s) {
  require(a.items() == val.items(), ErrorKind::DimensionMismatch, "design and valuation disagree on N");
  return value(val, apply_design(a, z), s);
}

}  // namespace latmech
