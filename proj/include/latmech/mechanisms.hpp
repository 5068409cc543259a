#pragma once

// Direct mechanisms over latent profiles, reachable only through execute().

#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "latmech/error.hpp"
#include "latmech/latent_model.hpp"
#include "latmech/random.hpp"
#include "latmech/valuation.hpp"

namespace latmech {

using Profile = std::vector<Vec>;

/// One draw of a (possibly randomized) allocation and payment rule.
struct Outcome {
  std::vector<Bundle> bundles;  // per bidder
  Vec payments;

  static Outcome empty(std::size_t m) { return {std::vector<Bundle>(m), Vec::Zero(static_cast<Eigen::Index>(m))}; }

  double revenue() const { return payments.sum(); }

  /// Dense 0/1 allocation x in {0,1}^{m x N}.
  Eigen::MatrixXi allocation(Eigen::Index n) const {
    Eigen::MatrixXi x = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(bundles.size()), n);
    for (std::size_t i = 0; i < bundles.size(); ++i)
      for (int j : bundles[i].items()) x(static_cast<Eigen::Index>(i), j) = 1;
    return x;
  }
};

/// Throws unless no item goes to two bidders and all payments are finite.
inline void check_feasible(const Outcome& o, Eigen::Index n) {
  require(static_cast<Eigen::Index>(o.bundles.size()) == o.payments.size(), ErrorKind::InvalidArgument,
          "outcome bundles/payments size mismatch");
  require(o.payments.allFinite(), ErrorKind::InvalidArgument, "outcome has non-finite payment");
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  for (const auto& b : o.bundles)
    for (int j : b.items()) {
      require(j >= 0 && j < n, ErrorKind::InvalidArgument, "allocated item out of range");
      require(!taken[static_cast<std::size_t>(j)], ErrorKind::InvalidArgument,
              "item " + std::to_string(j) + " allocated twice");
      taken[static_cast<std::size_t>(j)] = 1;
    }
}

/// Public market data a latent mechanism needs: the design matrix and each
/// bidder's valuation (so v^A_i(z, S) = v_i(Az, S)).
struct MarketModel {
  DesignMatrix design;
  std::vector<ConstrainedAdditiveValuation> valuations;

  std::size_t bidders() const { return valuations.size(); }
  Eigen::Index items() const { return design.items(); }
};

/// Ex-post utility v_i(t, bundle_i) - p_i.
inline double utility(const ConstrainedAdditiveValuation& val, const Vec& t, const Outcome& o, std::size_t i) {
  return value(val, t, o.bundles[i]) - o.payments(static_cast<Eigen::Index>(i));
}

class LatentMechanism {
 public:
  using Executor = std::function<Outcome(const Profile&, Rng&)>;

  LatentMechanism() = default;
  LatentMechanism(std::string name, Eigen::Index items, Executor exec, bool claims_bic, bool claims_ir)
      : name_(std::move(name)), items_(items), exec_(std::move(exec)), claims_bic_(claims_bic), claims_ir_(claims_ir) {}

  Outcome execute(const Profile& profile, Rng& rng) const {
    Outcome o = exec_(profile, rng);
    require(o.bundles.size() == profile.size(), ErrorKind::InvalidArgument, "mechanism returned wrong bidder count");
    check_feasible(o, items_);
    return o;
  }

  const std::string& name() const { return name_; }
  Eigen::Index items() const { return items_; }
  bool claims_bic() const { return claims_bic_; }
  bool claims_ir() const { return claims_ir_; }

 private:
  std::string name_;
  Eigen::Index items_ = 0;
  Executor exec_;
  bool claims_bic_ = false;
  bool claims_ir_ = false;
};

inline Outcome execute(const LatentMechanism& m, const Profile& profile, Rng& rng) { return m.execute(profile, rng); }

/// Bidders arrive in `order`; each buys the feasible bundle of remaining items
/// maximizing sum (mu_j + (Az)_j - price_j), or nothing if that optimum is <= 0.
/// DSIC (hence BIC under any prior) and IR for nonnegative prices.
inline LatentMechanism sequential_posted_price(std::shared_ptr<const MarketModel> model, Vec prices,
                                               std::vector<int> order) {
  require(prices.size() == model->items(), ErrorKind::DimensionMismatch, "one price per item required");
  require(prices.allFinite() && (prices.array() >= 0.0).all(), ErrorKind::InvalidArgument,
          "posted prices must be finite and nonnegative");
  const auto m = static_cast<int>(model->bidders());
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> ident(static_cast<std::size_t>(m));
  std::iota(ident.begin(), ident.end(), 0);
  require(sorted == ident, ErrorKind::InvalidArgument, "bidder order must be a permutation of [m]");

  const Eigen::Index n = model->items();
  auto exec = [model, prices = std::move(prices), order = std::move(order)](const Profile& z, Rng&) {
    require(z.size() == model->bidders(), ErrorKind::DimensionMismatch, "profile size does not match bidder count");
    Outcome out = Outcome::empty(z.size());
    std::vector<char> sold(static_cast<std::size_t>(model->items()), 0);
    for (int i : order) {
      const auto& val = model->valuations[static_cast<std::size_t>(i)];
      const Vec surplus = val.mu() + apply_design(model->design, z[static_cast<std::size_t>(i)]) - prices;
      std::vector<int> remaining;
      for (Eigen::Index j = 0; j < model->items(); ++j)
        if (!sold[static_cast<std::size_t>(j)]) remaining.push_back(static_cast<int>(j));
      const BestBundle pick = best_feasible_subset(val.family(), surplus, Bundle(std::move(remaining)));
      if (!(pick.value > 0.0)) continue;
      double pay = 0.0;
      for (int j : pick.bundle.items()) {
        sold[static_cast<std::size_t>(j)] = 1;
        pay += prices(j);
      }
      out.bundles[static_cast<std::size_t>(i)] = pick.bundle;
      out.payments(i) = pay;
    }
    return out;
  };
  return LatentMechanism("sequential_posted_price", n, std::move(exec), true, true);
}

/// Single bidder gets all items iff v^A(z, [N]) >= price, paying price.
inline LatentMechanism grand_bundle_price(std::shared_ptr<const MarketModel> model, double price) {
  require(price >= 0.0 && std::isfinite(price), ErrorKind::InvalidArgument, "grand bundle price must be finite and >= 0");
  require(model->bidders() == 1, ErrorKind::MultiBidderUnsupported, "grand bundle pricing supports one bidder");
  const Eigen::Index n = model->items();
  auto exec = [model, price](const Profile& z, Rng&) {
    require(z.size() == 1, ErrorKind::MultiBidderUnsupported, "grand bundle pricing supports one bidder");
    Outcome out = Outcome::empty(1);
    const Bundle all = Bundle::all(static_cast<int>(model->items()));
    if (induced_latent_value(model->valuations[0], model->design, z[0], all) >= price) {
      out.bundles[0] = all;
      out.payments(0) = price;
    }
    return out;
  };
  return LatentMechanism("grand_bundle_price", n, std::move(exec), true, true);
}

}  // namespace latmech
