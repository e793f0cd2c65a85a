// Monte Carlo transmission sessions and post-hoc passive decoy selection:
// slots become decoy or signal only after the TMD outcomes are recorded.

#ifndef QKDSIM_PASSIVE_DECOY_HPP
#define QKDSIM_PASSIVE_DECOY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qkdsim/photon_stats.hpp"
#include "qkdsim/rng.hpp"
#include "qkdsim/tmd.hpp"

namespace qkdsim {

struct plan_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SessionRecord {
  std::vector<std::int64_t> counts;  // #n per TMD outcome
  std::int64_t n_total = 0;
  std::uint64_t seed = 0;
  std::optional<PhotonDistribution> source_truth;  // simulation only

  // Simulation-only slot detail; dropped by text serialization. For subset
  // records, `slots` holds the parent-session slot indices.
  std::vector<std::uint8_t> slot_outcomes;
  std::vector<std::int64_t> slots;
};

struct DecoyPlan {
  std::int64_t m_subset = 0;
  std::vector<std::int64_t> offsets;  // delta_n per outcome
  std::string label;
};

namespace detail {

inline int sample_index(const std::vector<double>& cdf, double u) {
  const int n = static_cast<int>(cdf.size());
  int lo = 0, hi = n - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (u < cdf[static_cast<std::size_t>(mid)])
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

inline std::vector<double> cumulative(const std::vector<double>& p) {
  std::vector<double> cdf(p.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s += p[i];
    cdf[i] = s;
  }
  cdf.back() = 1.0;
  return cdf;
}

}  // namespace detail

// Each slot draws a true photon number from the source and a TMD outcome
// from the corresponding column of C*L. Per-slot counter RNG makes the
// result independent of the worker count.
inline SessionRecord simulate_session(const PhotonDistribution& source,
                                      const TMDModel& tmd,
                                      std::int64_t n_total, std::uint64_t seed,
                                      int workers = 1) {
  if (n_total < 1) throw std::invalid_argument("n_total must be >= 1");
  const TriangularMatrix M = composite_matrix(tmd);
  const int d = tmd.n_max + 1;

  const std::vector<double> source_cdf = detail::cumulative(source.probs());
  std::vector<std::vector<double>> outcome_cdf(static_cast<std::size_t>(d));
  for (int n = 0; n < d; ++n) {
    std::vector<double> col(static_cast<std::size_t>(d));
    for (int m = 0; m < d; ++m) col[static_cast<std::size_t>(m)] = M.entries[m][n];
    outcome_cdf[static_cast<std::size_t>(n)] = detail::cumulative(col);
  }

  SessionRecord rec;
  rec.n_total = n_total;
  rec.seed = seed;
  rec.source_truth = source;
  rec.slot_outcomes.assign(static_cast<std::size_t>(n_total), 0);

  auto run_range = [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      CounterRng rng(seed, static_cast<std::uint64_t>(i));
      const int n = detail::sample_index(source_cdf, rng.next_double());
      const int m = detail::sample_index(outcome_cdf[static_cast<std::size_t>(n)],
                                         rng.next_double());
      rec.slot_outcomes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(m);
    }
  };

  workers = std::max(1, workers);
  if (workers == 1) {
    run_range(0, n_total);
  } else {
    std::vector<std::thread> pool;
    const std::int64_t chunk = (n_total + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::int64_t lo = w * chunk;
      const std::int64_t hi = std::min<std::int64_t>(n_total, lo + chunk);
      if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    for (auto& t : pool) t.join();
  }

  rec.counts.assign(static_cast<std::size_t>(d), 0);
  for (std::uint8_t m : rec.slot_outcomes) ++rec.counts[m];
  return rec;
}

// #n_decoy = round_half_even(#n * M / N_tot) + delta_n per outcome; the
// decoy slots are drawn uniformly among the slots with that outcome.
inline std::pair<SessionRecord, SessionRecord> select_decoy_subset(
    const SessionRecord& rec, const DecoyPlan& plan, std::uint64_t seed) {
  const std::size_t d = rec.counts.size();
  if (plan.offsets.size() > d) throw plan_error("offset vector longer than outcome range");

  SessionRecord decoy, signal;
  decoy.seed = signal.seed = seed;
  decoy.source_truth = signal.source_truth = rec.source_truth;
  decoy.counts.assign(d, 0);
  signal.counts.assign(d, 0);

  for (std::size_t n = 0; n < d; ++n) {
    const double share = static_cast<double>(rec.counts[n]) *
                         static_cast<double>(plan.m_subset) /
                         static_cast<double>(rec.n_total);
    std::int64_t take = static_cast<std::int64_t>(std::nearbyint(share));
    if (n < plan.offsets.size()) take += plan.offsets[n];
    if (take < 0 || take > rec.counts[n])
      throw plan_error("plan '" + plan.label + "' infeasible at outcome " +
                       std::to_string(n) + ": wants " + std::to_string(take) +
                       " of " + std::to_string(rec.counts[n]));
    decoy.counts[n] = take;
    signal.counts[n] = rec.counts[n] - take;
    decoy.n_total += take;
    signal.n_total += rec.counts[n] - take;
  }

  // Slot-level assignment (partial Fisher-Yates per outcome class), only
  // available when the parent record retains slot outcomes.
  if (!rec.slot_outcomes.empty()) {
    std::vector<std::vector<std::int64_t>> by_outcome(d);
    for (std::int64_t i = 0; i < rec.n_total; ++i)
      by_outcome[rec.slot_outcomes[static_cast<std::size_t>(i)]].push_back(i);
    for (std::size_t n = 0; n < d; ++n) {
      auto& pool = by_outcome[n];
      CounterRng rng(seed, 0x5eed0000ULL + n);
      const std::int64_t take = decoy.counts[n];
      for (std::int64_t k = 0; k < take; ++k) {
        const std::uint64_t j =
            k + rng.next_below(static_cast<std::uint64_t>(pool.size() - k));
        std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
      }
      decoy.slots.insert(decoy.slots.end(), pool.begin(), pool.begin() + take);
      signal.slots.insert(signal.slots.end(), pool.begin() + take, pool.end());
    }
    std::sort(decoy.slots.begin(), decoy.slots.end());
    std::sort(signal.slots.begin(), signal.slots.end());
  }
  return {std::move(decoy), std::move(signal)};
}

inline PhotonDistribution empirical_distribution(const SessionRecord& rec,
                                                 int n_max) {
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1, 0.0);
  if (rec.n_total <= 0) throw std::invalid_argument("empty session record");
  for (std::size_t n = 0; n < rec.counts.size() && n < p.size(); ++n)
    p[n] = static_cast<double>(rec.counts[n]) / static_cast<double>(rec.n_total);
  double s = 0.0;
  for (double v : p) s += v;
  return PhotonDistribution(std::move(p), std::clamp(1.0 - s, 0.0, 1.0));
}

inline PhotonDistribution subset_source_distribution(const SessionRecord& rec,
                                                     const TMDModel& tmd,
                                                     InversionMethod method) {
  return invert(tmd, empirical_distribution(rec, tmd.n_max), method).distribution;
}

// Three standard subsets: a vacuum-outcome-only one, and two of equal size
// with opposite mean tilts delta_n ~ +-(n - nbar).
inline std::vector<DecoyPlan> make_standard_plans(const SessionRecord& rec,
                                                  std::int64_t m,
                                                  double delta_scale) {
  const std::size_t d = rec.counts.size();
  if (m < 1 || m > rec.n_total) throw plan_error("subset size out of range");

  double nbar = 0.0;
  for (std::size_t n = 0; n < d; ++n)
    nbar += static_cast<double>(n) * static_cast<double>(rec.counts[n]);
  nbar /= static_cast<double>(rec.n_total);

  std::vector<std::int64_t> base(d, 0);
  std::size_t n_star = 0;
  for (std::size_t n = 0; n < d; ++n) {
    base[n] = static_cast<std::int64_t>(std::nearbyint(
        static_cast<double>(rec.counts[n]) * static_cast<double>(m) /
        static_cast<double>(rec.n_total)));
    if (rec.counts[n] > rec.counts[n_star]) n_star = n;
  }
  const std::int64_t base_total = [&] {
    std::int64_t s = 0;
    for (auto b : base) s += b;
    return s;
  }();

  DecoyPlan vac;
  vac.label = "vacuum";
  vac.m_subset = m;
  vac.offsets.assign(d, 0);
  if (rec.counts[0] < m)
    throw plan_error("not enough vacuum outcomes for the vacuum plan");
  vac.offsets[0] = m - base[0];
  for (std::size_t n = 1; n < d; ++n) vac.offsets[n] = -base[n];

  auto tilted = [&](double sign, const std::string& label) {
    DecoyPlan p;
    p.label = label;
    p.m_subset = m;
    p.offsets.assign(d, 0);
    // raw tilt, clamped to the counts actually available per outcome
    std::vector<std::int64_t> take(d, 0);
    std::int64_t total = 0;
    for (std::size_t n = 0; n < d; ++n) {
      const auto delta = static_cast<std::int64_t>(std::nearbyint(
          sign * delta_scale * static_cast<double>(base[n]) *
          (static_cast<double>(n) - nbar)));
      take[n] = std::clamp<std::int64_t>(base[n] + delta, 0, rec.counts[n]);
      total += take[n];
    }
    // push the rounding/clamping residue into outcomes with slack, largest
    // count first, so the subset size stays exactly m
    std::int64_t residue = m - total;
    std::vector<std::size_t> order(d);
    for (std::size_t n = 0; n < d; ++n) order[n] = n;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rec.counts[a] > rec.counts[b];
    });
    for (std::size_t n : order) {
      if (residue == 0) break;
      if (residue > 0) {
        const std::int64_t room = rec.counts[n] - take[n];
        const std::int64_t add = std::min(residue, room);
        take[n] += add;
        residue -= add;
      } else {
        const std::int64_t drop = std::min(-residue, take[n]);
        take[n] -= drop;
        residue += drop;
      }
    }
    if (residue != 0)
      throw plan_error("tilt plan '" + label + "' infeasible at outcome " +
                       std::to_string(order.front()));
    for (std::size_t n = 0; n < d; ++n) p.offsets[n] = take[n] - base[n];
    return p;
  };

  return {vac, tilted(+1.0, "tilt-up"), tilted(-1.0, "tilt-down")};
}

// Text form: header `ntotal=<int> seed=<int>`, then `<outcome> <count>`
// lines. Slot-level detail and ground truth are simulation-only and are
// not serialized.
inline std::string to_text(const SessionRecord& rec) {
  std::ostringstream os;
  os << "ntotal=" << rec.n_total << " seed=" << rec.seed << "\n";
  for (std::size_t n = 0; n < rec.counts.size(); ++n)
    os << n << " " << rec.counts[n] << "\n";
  return os.str();
}

inline SessionRecord session_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string header;
  if (!std::getline(is, header)) throw std::invalid_argument("empty session record");
  SessionRecord rec;
  if (std::sscanf(header.c_str(), "ntotal=%lld seed=%llu",
                  reinterpret_cast<long long*>(&rec.n_total),
                  reinterpret_cast<unsigned long long*>(&rec.seed)) != 2)
    throw std::invalid_argument("malformed session header: " + header);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    long long outcome = 0, count = 0;
    if (std::sscanf(line.c_str(), "%lld %lld", &outcome, &count) != 2)
      throw std::invalid_argument("malformed session line: " + line);
    if (outcome < 0 || count < 0)
      throw std::invalid_argument("negative outcome or count: " + line);
    if (static_cast<std::size_t>(outcome) >= rec.counts.size())
      rec.counts.resize(static_cast<std::size_t>(outcome) + 1, 0);
    rec.counts[static_cast<std::size_t>(outcome)] = count;
  }
  std::int64_t sum = 0;
  for (auto c : rec.counts) sum += c;
  if (sum != rec.n_total)
    throw std::invalid_argument("session counts do not sum to ntotal");
  return rec;
}

}  // namespace qkdsim

#endif  // QKDSIM_PASSIVE_DECOY_HPP
