#pragma once

// Random-grid robustification of a latent mechanism and the query-based
// indirect mechanism built on top of it.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "latmech/error.hpp"
#include "latmech/latent_model.hpp"
#include "latmech/mechanisms.hpp"
#include "latmech/query_protocol.hpp"
#include "latmech/random.hpp"

namespace latmech {

inline constexpr double kMinGridWidth = 0x1.0p-20;

struct RandomGrid {
  Vec shift;  // each coordinate in [0, delta)
  double delta = 1.0;
};

inline RandomGrid build_random_grid(double delta, Eigen::Index k, Rng& rng) {
  require(delta > 0.0 && delta <= 1.0, ErrorKind::InvalidArgument, "grid width must lie in (0, 1]");
  RandomGrid g{Vec(k), delta};
  for (Eigen::Index j = 0; j < k; ++j) g.shift(j) = delta * rng.uniform();
  return g;
}

/// Corner of the grid cell containing z, after clamping z into [0,1]^k.
/// A cell that would meet [0,1] only in the point 1 is merged into the cell below it.
inline Vec round_to_grid(const Vec& z, const RandomGrid& grid) {
  require(z.size() == grid.shift.size(), ErrorKind::DimensionMismatch, "grid dimension mismatch");
  const double d = grid.delta;
  Vec x(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double zc = std::clamp(z(j), 0.0, 1.0);
    const double u = grid.shift(j);
    double c = u + d * std::floor((zc - u) / d);
    if (c > zc) c -= d;
    if (c + d <= zc) c += d;
    if (c >= 1.0) c -= d;
    x(j) = c;
  }
  return x;
}

/// Uniform amount subtracted from every positive payment (floored at 0).
struct RebateTerms {
  double lipschitz = 0.0;
  double eps1 = 0.0;
  double eps = 0.0;
  double design_norm = 0.0;

  /// r = L (eps1 + ||A||_inf (eps + delta))
  double amount(double delta) const { return lipschitz * (eps1 + design_norm * (eps + delta)); }
};

enum class RebateMode { Off, On };

struct RobustOutcome {
  Outcome outcome;
  Profile resampled;
  int empty_mass = 0;
  double rebate_paid = 0.0;
};

/// Rounds each report to the grid cell, resamples from that bidder's prior
/// conditioned on the cell, runs the wrapped mechanism, and applies the rebate.
class RobustifiedMechanism {
 public:
  using SharedBase = std::shared_ptr<const LatentMechanism>;
  using SharedPriors = std::shared_ptr<const std::vector<LatentPrior>>;

  RobustifiedMechanism(LatentMechanism base, std::vector<LatentPrior> priors, RandomGrid grid, double rebate)
      : RobustifiedMechanism(std::make_shared<const LatentMechanism>(std::move(base)),
                             std::make_shared<const std::vector<LatentPrior>>(std::move(priors)), std::move(grid),
                             rebate) {}

  RobustifiedMechanism(SharedBase base, SharedPriors priors, RandomGrid grid, double rebate)
      : base_(std::move(base)), priors_(std::move(priors)), grid_(std::move(grid)), rebate_(rebate) {
    require(rebate_ >= 0.0, ErrorKind::InvalidArgument, "rebate must be >= 0");
    for (const auto& p : *priors_)
      require(p.dim() == grid_.shift.size(), ErrorKind::DimensionMismatch, "prior and grid dimensions differ");
  }

  RobustOutcome execute(const Profile& reports, Rng& rng) const {
    const auto& priors = *priors_;
    require(reports.size() == priors.size(), ErrorKind::DimensionMismatch, "profile size does not match prior count");
    RobustOutcome r;
    r.resampled.resize(reports.size());
    std::vector<char> excluded(reports.size(), 0);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const Vec corner = round_to_grid(reports[i], grid_);
      try {
        r.resampled[i] = priors[i].conditional_cube_sample(corner, grid_.delta, rng);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyMass) throw;
        // No-trade for this bidder; a placeholder draw keeps the profile well formed.
        r.resampled[i] = priors[i].sample(rng);
        excluded[i] = 1;
        ++r.empty_mass;
      }
    }
    r.outcome = base_->execute(r.resampled, rng);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (excluded[i]) {
        r.outcome.bundles[i] = Bundle();
        r.outcome.payments(ii) = 0.0;
        continue;
      }
      const double p = r.outcome.payments(ii);
      if (p > 0.0) {
        const double reduced = std::max(0.0, p - rebate_);
        r.rebate_paid += p - reduced;
        r.outcome.payments(ii) = reduced;
      }
    }
    return r;
  }

  LatentMechanism as_mechanism() const {
    auto self = std::make_shared<RobustifiedMechanism>(*this);
    return LatentMechanism(
        "robustified_" + base_->name(), base_->items(),
        [self](const Profile& b, Rng& rng) { return self->execute(b, rng).outcome; }, false, true);
  }

  const RandomGrid& grid() const { return grid_; }
  double rebate() const { return rebate_; }
  const LatentMechanism& base() const { return *base_; }

 private:
  SharedBase base_;
  SharedPriors priors_;
  RandomGrid grid_;
  double rebate_ = 0.0;
};

inline RobustifiedMechanism robustify(const LatentMechanism& base, const std::vector<LatentPrior>& priors,
                                      double delta_grid, RebateMode mode, const RebateTerms& terms, Rng& rng) {
  require(!priors.empty(), ErrorKind::InvalidArgument, "robustify needs at least one prior");
  RandomGrid grid = build_random_grid(delta_grid, priors.front().dim(), rng);
  const double r = mode == RebateMode::On ? terms.amount(delta_grid) : 0.0;
  return RobustifiedMechanism(base, priors, std::move(grid), r);
}

// ---------------------------------------------------------------------------

/// Incentive and revenue budget of the query-based indirect mechanism.
struct BoundBudget {
  double lipschitz = 0.0;
  double design_norm = 0.0;
  double bidders = 0.0;
  double eps = 0.0;
  double eps1 = 0.0;
  double delta_grid = 0.0;
  double max_value = 0.0;  // H
  double c0 = 1.0;

  /// kappa = c0 (L eps1 + ||A|| L m eps + ||A|| L sqrt(m eps))
  double kappa() const {
    return c0 * (lipschitz * eps1 + design_norm * lipschitz * bidders * eps +
                 design_norm * lipschitz * std::sqrt(bidders * eps));
  }
};

struct KappaBudget {
  double kappa = 0.0;
  double revenue_loss_budget = 0.0;  // c0 m kappa + m^2 eps1 H
};

inline KappaBudget kappa_budget(const BoundBudget& b) {
  const double kappa = b.kappa();
  return {kappa, b.c0 * b.bidders * kappa + b.bidders * b.bidders * b.eps1 * b.max_value};
}

/// H = L (max_j mu_j + ||A||_inf + J)
inline double max_bidder_value(int lipschitz, double max_mu, double design_norm, double jump_cap) {
  return static_cast<double>(lipschitz) * (max_mu + design_norm + jump_cap);
}

inline double algorithm1_grid_width(std::size_t bidders, double eps) {
  return std::clamp(std::sqrt(static_cast<double>(bidders) * eps), kMinGridWidth, 1.0);
}

struct IndirectOutcome {
  RobustOutcome robust;
  std::vector<RecoveryResult> recoveries;
  std::vector<std::size_t> queries_answered;  // per bidder, from the oracle ledger
};

/// Query every bidder once with the protocol, then run the robustified
/// mechanism (fresh random grid per execution) on the recovered latents.
class IndirectMechanism {
 public:
  IndirectMechanism(LatentMechanism base, std::vector<LatentPrior> priors, const DesignMatrix& design, QueryPlan plan,
                    double eps1, double eps, int lipschitz, double c0 = 1.0, double max_value = 0.0)
      : base_(std::make_shared<const LatentMechanism>(std::move(base))),
        priors_(std::make_shared<const std::vector<LatentPrior>>(std::move(priors))),
        protocol_(design, std::move(plan)) {
    require(eps >= eps1, ErrorKind::InvalidArgument, "indirect mechanism needs eps >= eps1");
    const std::size_t m = priors_->size();
    delta_grid_ = algorithm1_grid_width(m, eps);
    terms_ = {static_cast<double>(lipschitz), eps1, eps, design.inf_norm()};
    budget_ = {static_cast<double>(lipschitz), design.inf_norm(), static_cast<double>(m), eps, eps1, delta_grid_,
               max_value, c0};
  }

  IndirectOutcome execute(std::vector<BidderOracle>& bidders, Rng& rng) const {
    require(bidders.size() == priors_->size(), ErrorKind::DimensionMismatch, "one oracle per bidder required");
    IndirectOutcome out;
    Profile reports;
    for (auto& oracle : bidders) {
      const std::size_t before = oracle.query_count();
      out.recoveries.push_back(protocol_.run(oracle));
      out.queries_answered.push_back(oracle.query_count() - before);
      reports.push_back(out.recoveries.back().z_hat);
    }
    RandomGrid grid = build_random_grid(delta_grid_, (*priors_)[0].dim(), rng);
    const RobustifiedMechanism tilde(base_, priors_, std::move(grid), terms_.amount(delta_grid_));
    out.robust = tilde.execute(reports, rng);
    return out;
  }

  double delta_grid() const { return delta_grid_; }
  double rebate() const { return terms_.amount(delta_grid_); }
  const BoundBudget& budget() const { return budget_; }
  const QueryProtocol& protocol() const { return protocol_; }

 private:
  RobustifiedMechanism::SharedBase base_;
  RobustifiedMechanism::SharedPriors priors_;
  QueryProtocol protocol_;
  double delta_grid_ = 1.0;
  RebateTerms terms_;
  BoundBudget budget_;
};

inline IndirectMechanism compose_algorithm1(const LatentMechanism& base, const std::vector<LatentPrior>& priors,
                                            const DesignMatrix& design, const QueryPlan& plan, double eps1, double eps,
                                            int lipschitz, double c0 = 1.0, double max_value = 0.0) {
  return IndirectMechanism(base, priors, design, plan, eps1, eps, lipschitz, c0, max_value);
}

}  // namespace latmech
