#pragma once

// Nonparametric fragment-length PMF and relative-start CDF, with truncation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "splicequant/error.hpp"
#include "splicequant/genome_model.hpp"
#include "splicequant/pathing.hpp"
#include "splicequant/tsv.hpp"

namespace splicequant {

/// Empirical probability mass function over fragment lengths (bp).
struct LengthPMF {
  std::vector<Pos> support;  // strictly increasing
  std::vector<double> probs;

  static LengthPMF from_counts(const std::map<Pos, std::int64_t>& counts) {
    std::int64_t n = 0;
    for (const auto& [_, c] : counts) n += c;
    if (n <= 0) throw InsufficientDataError("length PMF needs at least one observation");
    LengthPMF p;
    for (const auto& [l, c] : counts) {
      if (c == 0) continue;
      p.support.push_back(l);
      p.probs.push_back(static_cast<double>(c) / static_cast<double>(n));
    }
    return p;
  }

  /// Builds from (length, weight) pairs with weights renormalized to sum 1.
  static LengthPMF from_weights(std::vector<std::pair<Pos, double>> w) {
    std::sort(w.begin(), w.end());
    LengthPMF p;
    double total = 0;
    for (const auto& [l, x] : w) {
      if (l < 1) throw InputError("fragment lengths must be >= 1");
      if (!(x >= 0) || !std::isfinite(x)) throw InputError("length probabilities must be finite and >= 0");
      if (!p.support.empty() && p.support.back() == l) throw InputError("duplicate length " + std::to_string(l));
      if (x == 0) continue;
      p.support.push_back(l);
      p.probs.push_back(x);
      total += x;
    }
    if (total <= 0) throw InputError("length PMF has no mass");
    for (auto& x : p.probs) x /= total;
    return p;
  }

  bool empty() const { return support.empty(); }
  Pos max_length() const { return support.back(); }
  Pos min_length() const { return support.front(); }
  double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }
};

/// Right-continuous step CDF of the relative start S/T. Knots lie in (0, 1],
/// so the CDF is 0 for z below the first knot and at z = 0.
class StartCDF {
 public:
  StartCDF() = default;

  StartCDF(std::vector<double> knots, std::vector<double> values) : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.empty() || knots_.size() != values_.size()) throw InputError("start CDF needs matching, nonempty knots/values");
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      if (!(knots_[i] > 0.0 && knots_[i] <= 1.0)) throw InputError("start CDF knots must lie in (0, 1]");
      if (i && !(knots_[i] > knots_[i - 1])) throw InputError("start CDF knots must be strictly increasing");
      if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) throw InputError("start CDF values must lie in [0, 1]");
      if (i && values_[i] < values_[i - 1]) throw InputError("start CDF values must be nondecreasing");
    }
    if (values_.back() != 1.0) throw InputError("start CDF must reach 1 at its last knot");
  }

  /// Step CDF of a discrete uniform over {1/m, 2/m, ..., 1}.
  static StartCDF uniform(int m) {
    std::vector<double> k, v;
    for (int i = 1; i <= m; ++i) {
      k.push_back(static_cast<double>(i) / m);
      v.push_back(static_cast<double>(i) / m);
    }
    v.back() = 1.0;
    return {std::move(k), std::move(v)};
  }

  double operator()(double z) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), z);
    if (it == knots_.begin()) return 0.0;
    return values_[static_cast<std::size_t>(it - knots_.begin()) - 1];
  }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }
  bool empty() const { return knots_.empty(); }

  friend bool operator==(const StartCDF&, const StartCDF&) = default;

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Product-limit estimator under right truncation
// ---------------------------------------------------------------------------

/// A relative start z observed only because it did not exceed its bound.
struct TruncatedObservation {
  double value;  // z_i
  double bound;  // c_i, with z_i <= c_i
};

/// Product-limit estimate of the untruncated CDF from right-truncated data:
/// phi(z) = prod_{t > z} (1 - d_t / R_t) with R_t = #{i : z_i <= t <= c_i}.
/// With every bound at 1 the product telescopes to the empirical CDF; the
/// evaluation cancels consecutive factors exactly so that case is bit-exact.
inline StartCDF km_estimator(std::span<const TruncatedObservation> obs) {
  if (obs.empty()) throw InsufficientDataError("product-limit estimator needs at least one observation");
  for (const auto& o : obs)
    if (!(o.value > 0.0 && o.value <= o.bound && o.bound <= 1.0))
      throw InputError("product-limit observation needs 0 < z <= bound <= 1");

  std::vector<double> times;
  times.reserve(obs.size());
  for (const auto& o : obs) times.push_back(o.value);
  std::sort(times.begin(), times.end());
  std::vector<double> knots;
  std::vector<std::int64_t> events;
  for (double t : times) {
    if (knots.empty() || knots.back() != t) {
      knots.push_back(t);
      events.push_back(0);
    }
    ++events.back();
  }

  // R_j = #{z_i <= t_j} - #{c_i < t_j}
  std::vector<double> bounds;
  bounds.reserve(obs.size());
  for (const auto& o : obs) bounds.push_back(o.bound);
  std::sort(bounds.begin(), bounds.end());
  const std::size_t m = knots.size();
  std::vector<std::int64_t> at_risk(m);
  std::int64_t cum_events = 0;
  for (std::size_t j = 0; j < m; ++j) {
    cum_events += events[j];
    const auto below = std::lower_bound(bounds.begin(), bounds.end(), knots[j]) - bounds.begin();
    at_risk[j] = cum_events - below;
  }

  std::vector<double> values(m);
  values[m - 1] = 1.0;
  double base = 1.0;
  std::int64_t num = 1, den = 1;  // pending factor num/den, not yet folded into base
  bool pending = false;
  for (std::size_t j = m - 1; j >= 1; --j) {
    const std::int64_t r = at_risk[j], next = at_risk[j] - events[j];
    if (pending && r == num) {
      num = next;
    } else {
      if (pending) base *= static_cast<double>(num) / static_cast<double>(den);
      num = next;
      den = r;
      pending = true;
    }
    values[j - 1] = num == 0 ? 0.0 : base * (static_cast<double>(num) / static_cast<double>(den));
  }
  return {std::move(knots), std::move(values)};
}

// ---------------------------------------------------------------------------
// Truncation
// ---------------------------------------------------------------------------

/// P(L = l | T) = P(L = l) I(l <= T) / P(L <= T).
inline LengthPMF truncated_length_pmf(const LengthPMF& pmf, Pos T, const std::string& context = {}) {
  LengthPMF out;
  double kept = 0;
  for (std::size_t i = 0; i < pmf.support.size() && pmf.support[i] <= T; ++i) {
    out.support.push_back(pmf.support[i]);
    out.probs.push_back(pmf.probs[i]);
    kept += pmf.probs[i];
  }
  if (out.empty() || kept <= 0)
    throw ModelError((context.empty() ? std::string("transcript") : context) + " of length " + std::to_string(T) +
                     " bp is shorter than every fragment length");
  for (auto& p : out.probs) p /= kept;
  return out;
}

/// Relative truncation point S_T = (T - l + 1) / T.
inline double start_truncation(Pos T, Pos l) { return static_cast<double>(T - l + 1) / static_cast<double>(T); }

/// Lengths that fit in T and leave at least one admissible start under phi,
/// renormalized. This is the length law the simulator samples from.
inline LengthPMF admissible_length_pmf(const LengthPMF& pmf, const StartCDF& phi, Pos T,
                                       const std::string& context = {}) {
  LengthPMF out;
  double kept = 0;
  for (std::size_t i = 0; i < pmf.support.size() && pmf.support[i] <= T; ++i) {
    if (phi(start_truncation(T, pmf.support[i])) <= 0.0) continue;
    out.support.push_back(pmf.support[i]);
    out.probs.push_back(pmf.probs[i]);
    kept += pmf.probs[i];
  }
  if (out.empty() || kept <= 0)
    throw ModelError((context.empty() ? std::string("transcript") : context) + " of length " + std::to_string(T) +
                     " bp admits no fragment length under the start distribution");
  for (auto& p : out.probs) p /= kept;
  return out;
}

/// P(z_lo < S/T <= z_hi | T, L = l) under the truncated start law.
inline double start_prob_interval(const StartCDF& phi, Pos T, Pos l, double z_lo, double z_hi) {
  const double st = start_truncation(T, l);
  const double denom = phi(st);
  if (!(denom > 0.0))
    throw ModelError("no admissible start for fragment length " + std::to_string(l) + " in transcript of length " +
                     std::to_string(T));
  const double v = (phi(std::min(z_hi, st)) - phi(std::min(z_lo, st))) / denom;
  return v > 0.0 ? v : 0.0;
}

// ---------------------------------------------------------------------------
// Gene-length bins
// ---------------------------------------------------------------------------

struct DistributionBin {
  Pos lo = 0;                                  // inclusive
  Pos hi = std::numeric_limits<Pos>::max();    // exclusive; max() means unbounded
  LengthPMF length;
  StartCDF start;

  bool unbounded() const { return hi == std::numeric_limits<Pos>::max(); }
  bool contains(Pos T) const { return lo <= T && T < hi; }
};

struct FragmentDistributions {
  std::vector<DistributionBin> bins;  // contiguous, covering [0, inf)

  static FragmentDistributions single(LengthPMF length, StartCDF start) {
    FragmentDistributions d;
    d.bins.push_back({0, std::numeric_limits<Pos>::max(), std::move(length), std::move(start)});
    return d;
  }

  /// Empty bins over the given interior edges: [0,e1), [e1,e2), ..., [ek, inf).
  static FragmentDistributions with_edges(std::vector<Pos> edges) {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    FragmentDistributions d;
    Pos lo = 0;
    for (Pos e : edges) {
      if (e <= 0) throw InputError("bin edges must be positive");
      d.bins.push_back({lo, e, {}, {}});
      lo = e;
    }
    d.bins.push_back({lo, std::numeric_limits<Pos>::max(), {}, {}});
    return d;
  }

  std::size_t bin_index(Pos T) const {
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (bins[i].contains(T)) return i;
    throw std::logic_error("distribution bins do not cover length " + std::to_string(T));
  }

  const DistributionBin& lookup(Pos T) const { return bins[bin_index(T)]; }
};

// ---------------------------------------------------------------------------
// Estimation from fragments
// ---------------------------------------------------------------------------

/// Fragment lengths observed exactly: both ends inside one exon piece longer
/// than `min_exon_len`. Feed fragments one at a time.
class LengthAccumulator {
 public:
  LengthAccumulator(const IslandIndex& index, Pos min_exon_len) : index_(&index), min_exon_len_(min_exon_len) {}

  bool add(const FragmentAlignment& f) {
    auto a = index_->locate(f.chrom, f.first_bp());
    if (!a) return false;
    const auto& e = index_->islands()[a->island].exon(a->exon_id);
    if (e.length() <= min_exon_len_ || f.last_bp() > e.end) return false;
    ++counts_[f.last_bp() - f.first_bp() + 1];
    return true;
  }

  void merge(const LengthAccumulator& o) {
    for (const auto& [l, c] : o.counts_) counts_[l] += c;
  }

  const std::map<Pos, std::int64_t>& counts() const { return counts_; }

  LengthPMF finish() const {
    if (counts_.empty())
      throw InsufficientDataError(
          "no fragment has both ends inside one exon longer than " + std::to_string(min_exon_len_) +
          " bp; lower --min-exon-len or supply a precomputed length distribution file");
    return LengthPMF::from_counts(counts_);
  }

 private:
  const IslandIndex* index_;
  Pos min_exon_len_;
  std::map<Pos, std::int64_t> counts_;
};

inline LengthPMF estimate_length_pmf(std::span<const FragmentAlignment> frags, std::span<const GeneIsland> islands,
                                     Pos min_exon_len = 1000) {
  IslandIndex index(islands);
  LengthAccumulator acc(index, min_exon_len);
  for (const auto& f : frags) acc.add(f);
  return acc.finish();
}

/// Relative start z = S/T and truncation bound (T - L + 1)/T of a fragment
/// under the sole variant of a single-variant island.
inline std::optional<TruncatedObservation> start_observation(const FragmentAlignment& f, const GeneIsland& island,
                                                             const SplicedLayout& lay) {
  if (!fragment_to_path(f, island).mapped()) return std::nullopt;
  const bool plus = island.strand == Strand::Plus;
  const Pos five = plus ? f.first_bp() : f.last_bp();
  const Pos three = plus ? f.last_bp() : f.first_bp();
  auto s = to_transcript(island, lay, five);
  auto e = to_transcript(island, lay, three);
  if (!s || !e || *e < *s) return std::nullopt;
  const Pos T = lay.length;
  const Pos L = *e - *s + 1;
  return TruncatedObservation{static_cast<double>(*s) / static_cast<double>(T), start_truncation(T, L)};
}

/// Collects start observations from single-variant islands.
class StartAccumulator {
 public:
  explicit StartAccumulator(const IslandIndex& index) : index_(&index) {
    const auto islands = index.islands();
    layouts_.resize(islands.size());
    for (std::size_t i = 0; i < islands.size(); ++i)
      if (islands[i].variants.size() == 1) layouts_[i] = spliced_layout(islands[i], islands[i].variants.front());
  }

  bool add(const FragmentAlignment& f) {
    auto hit = index_->locate(f.chrom, f.first_bp());
    if (!hit || !layouts_[hit->island]) return false;
    auto obs = start_observation(f, index_->islands()[hit->island], *layouts_[hit->island]);
    if (!obs) return false;
    by_island_[hit->island].push_back(*obs);
    return true;
  }

  void merge(const StartAccumulator& o) {
    for (const auto& [i, v] : o.by_island_) by_island_[i].insert(by_island_[i].end(), v.begin(), v.end());
  }

  /// Observations from islands with at least `min_frags` fragments whose
  /// transcript length falls in [lo, hi).
  std::vector<TruncatedObservation> observations(std::int64_t min_frags = 0, Pos lo = 0,
                                                 Pos hi = std::numeric_limits<Pos>::max()) const {
    std::vector<TruncatedObservation> out;
    for (const auto& [i, v] : by_island_) {
      const Pos T = layouts_[i]->length;
      if (static_cast<std::int64_t>(v.size()) < min_frags || T < lo || T >= hi) continue;
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }

  std::size_t islands_with_data() const { return by_island_.size(); }

 private:
  const IslandIndex* index_;
  std::vector<std::optional<SplicedLayout>> layouts_;
  std::map<std::size_t, std::vector<TruncatedObservation>> by_island_;
};

inline StartCDF estimate_start_cdf(std::span<const FragmentAlignment> frags, std::span<const GeneIsland> islands,
                                   std::int64_t min_frags = 0) {
  IslandIndex index(islands);
  StartAccumulator acc(index);
  for (const auto& f : frags) acc.add(f);
  auto obs = acc.observations(min_frags);
  if (obs.empty())
    throw InsufficientDataError(
        "no single-variant gene has mapped fragments; the start distribution cannot be estimated "
        "(supply a precomputed start distribution file)");
  return km_estimator(obs);
}

struct DistributionFitReport {
  std::vector<std::string> warnings;
  std::int64_t length_fragments = 0;
  std::int64_t start_fragments = 0;
};

/// P_L pooled across all bins; phi per transcript-length bin, falling back to
/// the pooled phi for bins without single-variant data.
inline FragmentDistributions fit_distributions(const LengthAccumulator& len, const StartAccumulator& start,
                                               const std::vector<Pos>& bin_edges, std::int64_t min_frags,
                                               DistributionFitReport* report = nullptr) {
  auto pmf = len.finish();
  auto pooled_obs = start.observations(min_frags);
  if (pooled_obs.empty())
    throw InsufficientDataError(
        "no single-variant gene has enough mapped fragments; the start distribution cannot be estimated "
        "(supply a precomputed start distribution file)");
  auto pooled = km_estimator(pooled_obs);
  auto dist = FragmentDistributions::with_edges(bin_edges);
  for (auto& bin : dist.bins) {
    bin.length = pmf;
    auto obs = start.observations(min_frags, bin.lo, bin.hi);
    if (obs.empty()) {
      bin.start = pooled;
      if (report && dist.bins.size() > 1)
        report->warnings.push_back("bin [" + std::to_string(bin.lo) + ", " +
                                   (bin.unbounded() ? std::string("inf") : std::to_string(bin.hi)) +
                                   ") has no single-variant data; using the pooled start distribution");
    } else {
      bin.start = km_estimator(obs);
    }
  }
  if (report) {
    for (const auto& [_, c] : len.counts()) report->length_fragments += c;
    report->start_fragments = static_cast<std::int64_t>(pooled_obs.size());
  }
  return dist;
}

// ---------------------------------------------------------------------------
// TSV I/O:  length  prob   /   z  cdf   with optional "#bin lo hi" block lines
// ---------------------------------------------------------------------------

namespace detail {

inline std::string bin_line(const DistributionBin& b) {
  return "#bin\t" + std::to_string(b.lo) + "\t" + (b.unbounded() ? std::string("inf") : std::to_string(b.hi));
}

template <typename Row>
std::vector<std::pair<std::pair<Pos, Pos>, std::vector<Row>>> read_blocks(std::istream& in,
                                                                          std::vector<std::string_view> header,
                                                                          auto&& parse_row) {
  tsv::LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw InputError("distribution file is empty");
  tsv::expect_header(line, header, reader.line_no());
  std::vector<std::pair<std::pair<Pos, Pos>, std::vector<Row>>> blocks;
  bool explicit_bins = false;
  while (reader.next(line)) {
    const auto ln = reader.line_no();
    auto f = tsv::split(line);
    if (f[0] == "#bin") {
      if (f.size() != 3) throw InputError("bin line must be '#bin<TAB>lo<TAB>hi'", ln);
      if (!explicit_bins && !blocks.empty()) throw InputError("rows before the first #bin line", ln);
      explicit_bins = true;
      const Pos lo = tsv::parse_int(f[1], ln, "bin lo");
      const Pos hi = f[2] == "inf" ? std::numeric_limits<Pos>::max() : tsv::parse_int(f[2], ln, "bin hi");
      if (hi <= lo) throw InputError("empty bin", ln);
      const Pos expect_lo = blocks.empty() ? 0 : blocks.back().first.second;
      if (lo != expect_lo) throw InputError("bins must be contiguous starting at 0", ln);
      blocks.push_back({{lo, hi}, {}});
      continue;
    }
    if (!line.empty() && line[0] == '#') continue;
    if (f.size() != 2) throw InputError("expected 2 tab-separated columns", ln);
    if (blocks.empty()) blocks.push_back({{0, std::numeric_limits<Pos>::max()}, {}});
    blocks.back().second.push_back(parse_row(f[0], f[1], ln));
  }
  if (blocks.empty()) throw InputError("distribution file has no rows");
  if (blocks.back().first.second != std::numeric_limits<Pos>::max())
    throw InputError("last bin must extend to inf");
  for (const auto& b : blocks)
    if (b.second.empty()) throw InputError("bin starting at " + std::to_string(b.first.first) + " has no rows");
  return blocks;
}

}  // namespace detail

inline void write_length_pmf(std::ostream& out, const FragmentDistributions& d, int precision = 6) {
  out << "length\tprob\n";
  out << std::setprecision(precision);
  for (const auto& b : d.bins) {
    if (d.bins.size() > 1) out << detail::bin_line(b) << '\n';
    for (std::size_t i = 0; i < b.length.support.size(); ++i) out << b.length.support[i] << '\t' << b.length.probs[i] << '\n';
  }
}

inline void write_start_cdf(std::ostream& out, const FragmentDistributions& d, int precision = 6) {
  out << "z\tcdf\n";
  for (const auto& b : d.bins) {
    if (d.bins.size() > 1) out << detail::bin_line(b) << '\n';
    const auto& k = b.start.knots();
    const auto& v = b.start.values();
    for (std::size_t i = 0; i < k.size(); ++i)
      out << std::setprecision(17) << k[i] << '\t' << std::setprecision(precision) << v[i] << '\n';
  }
}

inline FragmentDistributions read_distributions(std::istream& length_in, std::istream& start_in) {
  using LRow = std::pair<Pos, double>;
  using SRow = std::pair<double, double>;
  auto lblocks = detail::read_blocks<LRow>(length_in, {"length", "prob"}, [](auto a, auto b, auto ln) {
    return LRow{tsv::parse_int(a, ln, "length"), tsv::parse_double(b, ln, "prob")};
  });
  auto sblocks = detail::read_blocks<SRow>(start_in, {"z", "cdf"}, [](auto a, auto b, auto ln) {
    return SRow{tsv::parse_double(a, ln, "z"), tsv::parse_double(b, ln, "cdf")};
  });
  if (lblocks.size() != sblocks.size())
    throw InputError("length and start distribution files have different bin layouts");
  FragmentDistributions d;
  for (std::size_t i = 0; i < lblocks.size(); ++i) {
    if (lblocks[i].first != sblocks[i].first)
      throw InputError("length and start distribution files have different bin layouts");
    DistributionBin bin;
    bin.lo = lblocks[i].first.first;
    bin.hi = lblocks[i].first.second;
    bin.length = LengthPMF::from_weights(lblocks[i].second);
    std::vector<double> k, v;
    for (const auto& [z, c] : sblocks[i].second) {
      k.push_back(z);
      v.push_back(c);
    }
    bin.start = StartCDF(std::move(k), std::move(v));
    d.bins.push_back(std::move(bin));
  }
  return d;
}

}  // namespace splicequant
