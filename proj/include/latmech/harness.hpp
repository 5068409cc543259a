#pragma once

// Monte Carlo estimation of revenue, interim incentive violations and ex-post
// individual rationality for latent mechanisms and their compositions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "latmech/error.hpp"
#include "latmech/latent_model.hpp"
#include "latmech/mechanisms.hpp"
#include "latmech/query_protocol.hpp"
#include "latmech/random.hpp"
#include "latmech/robustify.hpp"
#include "latmech/stats.hpp"
#include "latmech/valuation.hpp"

namespace latmech {

struct AuctionEnvironment {
  DesignMatrix design;
  std::vector<LatentPrior> priors;
  std::vector<ProkhorovKernel> kernels;
  std::vector<ConstrainedAdditiveValuation> valuations;
  std::uint64_t seed = 0;

  std::size_t bidders() const { return priors.size(); }
  Eigen::Index items() const { return design.items(); }
  Eigen::Index latent_dim() const { return design.latent_dim(); }

  void validate() const {
    const std::size_t m = bidders();
    require(kernels.size() == m && valuations.size() == m, ErrorKind::DimensionMismatch,
            "environment needs one prior, kernel and valuation per bidder");
    for (std::size_t i = 0; i < m; ++i) {
      const std::string who = "bidder " + std::to_string(i);
      require(priors[i].dim() == latent_dim(), ErrorKind::DimensionMismatch, who + ": prior dimension != k");
      require(valuations[i].items() == items(), ErrorKind::DimensionMismatch, who + ": valuation item count != N");
      kernels[i].validate();
    }
  }

  std::shared_ptr<const MarketModel> market() const {
    return std::make_shared<const MarketModel>(MarketModel{design, valuations});
  }
};

/// What one bidder tells the mechanism: a latent report for direct
/// mechanisms and an answering type for query-based ones.
struct BidderReport {
  Vec latent;
  Vec answering;
};

/// Uniform interface over direct, robustified and indirect mechanisms.
class Auction {
 public:
  using Play = std::function<Outcome(const std::vector<BidderReport>&, Rng&)>;

  Auction(std::string name, Play play) : name_(std::move(name)), play_(std::move(play)) {}

  static Auction direct(LatentMechanism mech) {
    auto shared = std::make_shared<const LatentMechanism>(std::move(mech));
    return Auction(shared->name(), [shared](const std::vector<BidderReport>& r, Rng& rng) {
      return shared->execute(latents(r), rng);
    });
  }

  static Auction robustified(RobustifiedMechanism mech) {
    auto shared = std::make_shared<const RobustifiedMechanism>(std::move(mech));
    return Auction("robustified_" + shared->base().name(), [shared](const std::vector<BidderReport>& r, Rng& rng) {
      return shared->execute(latents(r), rng).outcome;
    });
  }

  static Auction indirect(std::shared_ptr<const IndirectMechanism> mech) {
    return Auction("indirect", [mech](const std::vector<BidderReport>& r, Rng& rng) {
      std::vector<BidderOracle> oracles;
      oracles.reserve(r.size());
      for (const auto& b : r) oracles.push_back(BidderOracle::truthful(b.answering));
      return mech->execute(oracles, rng).robust.outcome;
    });
  }

  Outcome play(const std::vector<BidderReport>& reports, Rng& rng) const { return play_(reports, rng); }
  const std::string& name() const { return name_; }

 private:
  static Profile latents(const std::vector<BidderReport>& r) {
    Profile z;
    z.reserve(r.size());
    for (const auto& b : r) z.push_back(b.latent);
    return z;
  }

  std::string name_;
  Play play_;
};

struct TypeProfile {
  std::vector<CoupledPair> types;  // per bidder: latent z and true t

  std::vector<BidderReport> truthful() const {
    std::vector<BidderReport> r;
    r.reserve(types.size());
    for (const auto& p : types) r.push_back({p.z, p.t});
    return r;
  }
};

inline CoupledPair draw_type(const AuctionEnvironment& env, std::size_t i, Rng& rng) {
  return sample_coupled(env.design, env.priors[i], env.kernels[i], rng);
}

inline TypeProfile draw_profile(const AuctionEnvironment& env, Rng& rng) {
  TypeProfile p;
  p.types.reserve(env.bidders());
  for (std::size_t i = 0; i < env.bidders(); ++i) p.types.push_back(draw_type(env, i, rng));
  return p;
}

/// Per-trial streams: types and mechanism randomness are derived separately
/// from (base, trial) so that two auctions estimated from the same base see
/// identical type draws.
struct TrialStreams {
  std::uint64_t base = 0;
  Rng types(std::uint64_t trial) const { return Rng(base, Stream::Harness, trial); }
  Rng mechanism(std::uint64_t trial) const { return Rng(base, Stream::Mechanism, trial); }
};

inline EstimateWithCI estimate_revenue(const Auction& auction, const AuctionEnvironment& env, std::size_t trials,
                                       Rng& rng) {
  require(trials >= 2, ErrorKind::InvalidArgument, "revenue estimation needs at least 2 trials");
  const TrialStreams streams{rng()};
  std::vector<double> revenue(trials);
  for (std::size_t s = 0; s < trials; ++s) {
    Rng type_rng = streams.types(s);
    Rng mech_rng = streams.mechanism(s);
    const TypeProfile profile = draw_profile(env, type_rng);
    revenue[s] = auction.play(profile.truthful(), mech_rng).revenue();
  }
  return estimate_from_samples(revenue);
}

// ---------------------------------------------------------------------------
// Interim incentive violations

struct BicOptions {
  std::size_t deviations = 16;
  std::size_t opponent_draws = 256;
  double perturbation_scale = 0.0;  // usually the grid width
};

/// Sorted per-type maximal interim utility gains. Deviations are a finite
/// set, so delta(eps) is a lower bound on the true violation mass.
class BICViolationCurve {
 public:
  BICViolationCurve() = default;
  explicit BICViolationCurve(std::vector<double> gains) : gains_(std::move(gains)) {
    std::sort(gains_.begin(), gains_.end());
  }

  /// Fraction of sampled types whose best deviation gains more than eps.
  double delta(double eps) const {
    if (gains_.empty()) return 0.0;
    const auto above = gains_.end() - std::upper_bound(gains_.begin(), gains_.end(), eps);
    return static_cast<double>(above) / static_cast<double>(gains_.size());
  }

  double max_gain() const { return gains_.empty() ? 0.0 : gains_.back(); }
  const std::vector<double>& gains() const { return gains_; }
  std::size_t types() const { return gains_.size(); }

 private:
  std::vector<double> gains_;
};

/// Substitute report for deviation index d of sampled type s. The first half
/// are fresh prior draws; the rest perturb the latent by +-scale or
/// +-2 scale, either on all coordinates or on coordinate s mod k.
inline BidderReport deviation_report(const AuctionEnvironment& env, std::size_t bidder, const CoupledPair& truth,
                                     std::size_t d, std::size_t count, std::size_t s, double scale, Rng& rng) {
  const std::size_t fresh = (count + 1) / 2;
  if (d < fresh) {
    CoupledPair alt = draw_type(env, bidder, rng);
    return {std::move(alt.z), std::move(alt.t)};
  }
  const std::size_t p = (d - fresh) % 8;
  const double size = (p >= 4 ? 2.0 : 1.0) * scale * (((p / 2) % 2) ? -1.0 : 1.0);
  const Eigen::Index k = truth.z.size();
  Vec delta = Vec::Zero(k);
  if (p % 2 == 0)
    delta.setConstant(size);
  else
    delta(static_cast<Eigen::Index>(s % static_cast<std::size_t>(k))) = size;
  return {truth.z + delta, truth.t + apply_design(env.design, delta)};
}

inline BICViolationCurve estimate_bic_violation(const Auction& auction, const AuctionEnvironment& env,
                                                const BicOptions& opt, std::size_t trials, Rng& rng) {
  require(opt.deviations >= 1, ErrorKind::InvalidArgument, "BIC estimation needs at least one deviation");
  require(opt.opponent_draws >= 1, ErrorKind::InvalidArgument, "BIC estimation needs at least one opponent draw");
  const std::size_t m = env.bidders();
  if (m == 0 || trials == 0) return BICViolationCurve();
  const TrialStreams streams{rng()};
  std::vector<double> gains(trials);
  std::vector<double> truthful(opt.opponent_draws);
  std::vector<double> deviating(opt.opponent_draws);

  for (std::size_t s = 0; s < trials; ++s) {
    const std::size_t i = s % m;
    Rng type_rng = streams.types(s);
    const CoupledPair own = draw_type(env, i, type_rng);
    std::vector<BidderReport> devs;
    for (std::size_t d = 0; d < opt.deviations; ++d)
      devs.push_back(deviation_report(env, i, own, d, opt.deviations, s, opt.perturbation_scale, type_rng));

    // Opponent profiles and mechanism seeds shared by every report of this type.
    std::vector<TypeProfile> opponents(opt.opponent_draws);
    std::vector<std::uint64_t> seeds(opt.opponent_draws);
    for (std::size_t o = 0; o < opt.opponent_draws; ++o) {
      opponents[o] = draw_profile(env, type_rng);
      opponents[o].types[i] = own;
      seeds[o] = type_rng();
    }
    const auto interim = [&](const BidderReport* deviation, std::vector<double>& out) {
      for (std::size_t o = 0; o < opt.opponent_draws; ++o) {
        std::vector<BidderReport> reports = opponents[o].truthful();
        if (deviation) reports[i] = *deviation;
        Rng mech_rng(seeds[o]);
        const Outcome outcome = auction.play(reports, mech_rng);
        out[o] = utility(env.valuations[i], own.t, outcome, i);
      }
      return pairwise_sum(out) / static_cast<double>(out.size());
    };
    const double base = interim(nullptr, truthful);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& dev : devs) best = std::max(best, interim(&dev, deviating) - base);
    gains[s] = best;
  }
  return BICViolationCurve(std::move(gains));
}

// ---------------------------------------------------------------------------
// Ex-post individual rationality

/// Utilities above -kIrTolerance count as nonnegative (floating-point slack).
inline constexpr double kIrTolerance = 1e-12;

struct IRReport {
  std::size_t violations = 0;
  std::size_t observations = 0;
  double max_deficit = 0.0;

  double rate() const {
    return observations == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(observations);
  }
};

inline IRReport check_ir(const Auction& auction, const AuctionEnvironment& env, std::size_t trials, Rng& rng) {
  IRReport r;
  if (env.bidders() == 0) return r;
  const TrialStreams streams{rng()};
  for (std::size_t s = 0; s < trials; ++s) {
    Rng type_rng = streams.types(s);
    Rng mech_rng = streams.mechanism(s);
    const TypeProfile profile = draw_profile(env, type_rng);
    const Outcome outcome = auction.play(profile.truthful(), mech_rng);
    for (std::size_t i = 0; i < env.bidders(); ++i) {
      const double u = utility(env.valuations[i], profile.types[i].t, outcome, i);
      ++r.observations;
      if (u < -kIrTolerance) {
        ++r.violations;
        r.max_deficit = std::max(r.max_deficit, -u);
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Exhaustive dominant-strategy check on a finite latent grid

struct DsicReport {
  std::size_t profiles = 0;
  std::size_t deviations_checked = 0;
  std::size_t profitable = 0;
  double max_gain = -std::numeric_limits<double>::infinity();
};

/// Every latent profile with coordinates in `grid`, every bidder, every grid
/// misreport; the true type is Az. A deviation is profitable if it gains
/// more than tol. The mechanism must be deterministic.
inline DsicReport exhaustive_dsic_check(const LatentMechanism& mech, const MarketModel& market,
                                        const std::vector<double>& grid, double tol = 1e-12) {
  require(!grid.empty(), ErrorKind::InvalidArgument, "DSIC check needs a nonempty grid");
  const auto k = market.design.latent_dim();
  const std::size_t m = market.bidders();
  std::size_t per_bidder = 1;
  for (Eigen::Index j = 0; j < k; ++j) {
    per_bidder *= grid.size();
    require(per_bidder <= 4096, ErrorKind::TooLarge, "latent grid too large for exhaustive check");
  }
  std::vector<Vec> points(per_bidder, Vec(k));
  for (std::size_t p = 0; p < per_bidder; ++p) {
    std::size_t rem = p;
    for (Eigen::Index j = k; j-- > 0;) {
      points[p](j) = grid[rem % grid.size()];
      rem /= grid.size();
    }
  }
  std::size_t total = 1;
  for (std::size_t i = 0; i < m; ++i) {
    total *= per_bidder;
    require(total <= 1'000'000, ErrorKind::TooLarge, "profile space too large for exhaustive check");
  }

  DsicReport r;
  Rng unused(0);
  std::vector<std::size_t> idx(m, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = m; i-- > 0;) {
      idx[i] = rem % per_bidder;
      rem /= per_bidder;
    }
    Profile truth(m);
    for (std::size_t i = 0; i < m; ++i) truth[i] = points[idx[i]];
    const Outcome honest = mech.execute(truth, unused);
    ++r.profiles;
    for (std::size_t i = 0; i < m; ++i) {
      const Vec t = apply_design(market.design, truth[i]);
      const double u0 = utility(market.valuations[i], t, honest, i);
      Profile lie = truth;
      for (std::size_t q = 0; q < per_bidder; ++q) {
        if (q == idx[i]) continue;
        lie[i] = points[q];
        const double gain = utility(market.valuations[i], t, mech.execute(lie, unused), i) - u0;
        ++r.deviations_checked;
        r.max_gain = std::max(r.max_gain, gain);
        if (gain > tol) ++r.profitable;
      }
    }
  }
  return r;
}

}  // namespace latmech
