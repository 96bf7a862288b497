#pragma once

// Synthetic paired-end fragments from known proportions and distributions,
// and scoring of the estimator against the truth.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "splicequant/distributions.hpp"
#include "splicequant/error.hpp"
#include "splicequant/genome_model.hpp"
#include "splicequant/inference.hpp"
#include "splicequant/parallel.hpp"
#include "splicequant/path_prob.hpp"
#include "splicequant/pathing.hpp"
#include "splicequant/quantify.hpp"

namespace splicequant {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct SimConfig {
  std::string annotation;  // empty: generate random genes
  int random_islands = 0;
  int random_min_variants = 2;
  int random_max_variants = 4;
  int single_variant_islands = 0;
  std::string chrom = "sim1";

  std::map<std::string, std::vector<double>> true_pi;
  double pi_dirichlet_alpha = 1.0;

  std::string length_pmf_file;
  std::string start_cdf_file;
  double length_mean = 200.0;
  double length_sd = 20.0;
  std::string start_shape = "uniform";  // uniform | power:<a>
  int start_grid = 100;

  Pos read_length = 75;
  std::int64_t n_frags = 1000;
  int n_replicates = 1;
  std::uint64_t seed = 1;

  double prior_q = 2.0;
  double ci_level = 0.95;
  double tol = 1e-5;
  bool counts_only = false;
  bool estimate_distributions = false;
  bool rpkm_filter = true;
  double rpkm_min = 10.0;
  Pos min_exon_len = 1000;
};

namespace detail {

inline bool parse_bool(const std::string& v, std::int64_t ln) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError("expected a boolean, got '" + v + "'", ln);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Flat `key = value` file; `#` starts a comment. Relative file paths are
/// resolved against `base_dir`.
inline SimConfig parse_sim_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  SimConfig c;
  std::string raw;
  std::int64_t ln = 0;
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    return (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
  };
  while (std::getline(in, raw)) {
    ++ln;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("expected key = value", ln);
    const std::string key = detail::trim(line.substr(0, eq)), val = detail::trim(line.substr(eq + 1));
    if (val.empty()) throw InputError("empty value for " + key, ln);
    auto as_int = [&] { return tsv::parse_int(val, ln, key); };
    auto as_double = [&] { return tsv::parse_double(val, ln, key); };

    if (key == "annotation") c.annotation = path_of(val);
    else if (key == "random_islands") c.random_islands = static_cast<int>(as_int());
    else if (key == "random_min_variants") c.random_min_variants = static_cast<int>(as_int());
    else if (key == "random_max_variants") c.random_max_variants = static_cast<int>(as_int());
    else if (key == "single_variant_islands") c.single_variant_islands = static_cast<int>(as_int());
    else if (key == "chrom") c.chrom = val;
    else if (key.rfind("pi.", 0) == 0) {
      std::vector<double> pi;
      for (auto part : tsv::split(val, ',')) pi.push_back(tsv::parse_double(detail::trim(part), ln, key));
      c.true_pi[key.substr(3)] = pi;
    } else if (key == "pi_dirichlet_alpha") c.pi_dirichlet_alpha = as_double();
    else if (key == "length_pmf") c.length_pmf_file = path_of(val);
    else if (key == "start_cdf") c.start_cdf_file = path_of(val);
    else if (key == "length_mean") c.length_mean = as_double();
    else if (key == "length_sd") c.length_sd = as_double();
    else if (key == "start_shape") c.start_shape = val;
    else if (key == "start_grid") c.start_grid = static_cast<int>(as_int());
    else if (key == "read_length") c.read_length = as_int();
    else if (key == "n_frags") c.n_frags = as_int();
    else if (key == "n_replicates") c.n_replicates = static_cast<int>(as_int());
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int());
    else if (key == "prior_q") c.prior_q = as_double();
    else if (key == "ci_level") c.ci_level = as_double();
    else if (key == "tol") c.tol = as_double();
    else if (key == "counts_only") c.counts_only = detail::parse_bool(val, ln);
    else if (key == "estimate_distributions") c.estimate_distributions = detail::parse_bool(val, ln);
    else if (key == "rpkm_filter") c.rpkm_filter = detail::parse_bool(val, ln);
    else if (key == "rpkm_min") c.rpkm_min = as_double();
    else if (key == "min_exon_len") c.min_exon_len = as_int();
    else throw InputError("unknown config key '" + key + "'", ln);
  }

  if (c.annotation.empty() && c.random_islands + c.single_variant_islands <= 0)
    throw InputError("config needs either annotation or random_islands/single_variant_islands");
  if (c.random_min_variants < 1 || c.random_max_variants < c.random_min_variants)
    throw InputError("need 1 <= random_min_variants <= random_max_variants");
  if (c.n_frags < 0) throw InputError("n_frags must be >= 0");
  if (c.n_replicates < 1) throw InputError("n_replicates must be >= 1");
  if (c.read_length < 1) throw InputError("read_length must be >= 1");
  if (c.prior_q < 1.0) throw InputError("prior_q must be >= 1");
  if (!(c.ci_level > 0 && c.ci_level < 1)) throw InputError("ci_level must lie in (0, 1)");
  if (!(c.length_sd > 0)) throw InputError("length_sd must be > 0");
  if (c.start_grid < 1) throw InputError("start_grid must be >= 1");
  if (!(c.pi_dirichlet_alpha > 0)) throw InputError("pi_dirichlet_alpha must be > 0");
  for (const auto& [id, pi] : c.true_pi) {
    double s = 0;
    for (double x : pi) {
      if (!(x >= 0)) throw InputError("pi." + id + " has a negative entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InputError("pi." + id + " does not sum to 1");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic inputs
// ---------------------------------------------------------------------------

/// Discretized normal on [mean - 4 sd, mean + 4 sd], restricted to lengths >= min_len.
inline LengthPMF discretized_normal_pmf(double mean, double sd, Pos min_len = 1) {
  std::vector<std::pair<Pos, double>> w;
  const Pos lo = std::max<Pos>(min_len, static_cast<Pos>(std::floor(mean - 4 * sd)));
  const Pos hi = static_cast<Pos>(std::ceil(mean + 4 * sd));
  for (Pos l = lo; l <= hi; ++l) {
    const double z = (static_cast<double>(l) - mean) / sd;
    w.push_back({l, std::exp(-0.5 * z * z)});
  }
  return LengthPMF::from_weights(std::move(w));
}

/// Step CDF on the grid {1/m, ..., 1} with phi(z) = z^a (a > 1 gives a 3' bias).
inline StartCDF power_start_cdf(double a, int m) {
  std::vector<double> k, v;
  for (int i = 1; i <= m; ++i) {
    const double z = static_cast<double>(i) / m;
    k.push_back(z);
    v.push_back(i == m ? 1.0 : std::pow(z, a));
  }
  return {std::move(k), std::move(v)};
}

inline StartCDF start_cdf_from_shape(const std::string& shape, int grid) {
  if (shape == "uniform") return StartCDF::uniform(grid);
  if (shape.rfind("power:", 0) == 0) {
    const double a = tsv::parse_double(shape.substr(6), 0, "start_shape exponent");
    if (!(a > 0)) throw InputError("start_shape power exponent must be > 0");
    return power_start_cdf(a, grid);
  }
  throw InputError("unknown start_shape '" + shape + "' (use uniform or power:<a>)");
}

namespace detail {

inline std::string padded(const std::string& prefix, int i, int width = 5) {
  std::string n = std::to_string(i);
  return prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(n.size()))), '0') + n;
}

}  // namespace detail

/// Random gene structures laid out without overlap along one chromosome.
/// Multi-variant genes have `min_variants..max_variants` distinct exon subsets
/// (with occasional alternative exon ends); single-variant genes carry one
/// exon longer than 1500 bp so fragment lengths can be observed directly.
template <typename Rng>
std::vector<GeneRecord> random_genes(int n_multi, int n_single, int min_variants, int max_variants,
                                     const std::string& chrom, Rng& rng) {
  std::uniform_int_distribution<int> n_exons(3, 7), n_var(min_variants, max_variants);
  std::uniform_int_distribution<Pos> exon_len(120, 600), intron_len(300, 3000), long_len(1500, 3000),
      shift(20, 80);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<GeneRecord> genes;
  Pos cursor = 1000;

  for (int g = 0; g < n_multi + n_single; ++g) {
    const bool single = g >= n_multi;
    GeneRecord gene;
    gene.gene_id = detail::padded(single ? "S" : "G", g + 1);
    gene.chrom = chrom;
    gene.strand = unif(rng) < 0.5 ? Strand::Plus : Strand::Minus;

    const Pos gene_start = cursor;
    for (;;) {
      std::vector<Interval> exons;
      const int ne = single ? 3 : n_exons(rng);
      const int long_idx = single ? std::uniform_int_distribution<int>(0, ne - 1)(rng) : -1;
      Pos pos = gene_start;
      for (int e = 0; e < ne; ++e) {
        const Pos len = e == long_idx ? long_len(rng) : exon_len(rng);
        exons.push_back({pos, pos + len - 1});
        pos += len + intron_len(rng);
      }
      cursor = pos + 5000;

      if (single) {
        gene.transcripts.push_back({gene.gene_id + ".1", exons});
        break;
      }

      // Some exon layouts admit too few distinct variants; redraw the gene then.
      const int nv = n_var(rng);
      std::set<std::vector<Interval>> seen;
      gene.transcripts.clear();
      for (int attempt = 0; attempt < 200 && static_cast<int>(gene.transcripts.size()) < nv; ++attempt) {
        std::vector<Interval> tx;
        for (int e = 0; e < ne; ++e) {
          const bool edge = e == 0 || e == ne - 1;
          if (unif(rng) < (edge ? 0.85 : 0.6)) tx.push_back(exons[static_cast<std::size_t>(e)]);
        }
        if (tx.size() < 2) continue;
        if (unif(rng) < 0.2) tx.front().start += shift(rng);  // alternative exon boundary
        Pos T = 0;
        for (const auto& iv : tx) T += iv.length();
        if (T < 600 || !seen.insert(tx).second) continue;
        gene.transcripts.push_back({gene.gene_id + "." + std::to_string(gene.transcripts.size() + 1), tx});
      }
      if (static_cast<int>(gene.transcripts.size()) == nv) break;
    }
    genes.push_back(std::move(gene));
  }
  return genes;
}

inline void write_annotation(std::ostream& out, const std::vector<GeneRecord>& genes) {
  out << "gene_id\ttranscript_id\tchrom\tstrand\texon_start\texon_end\n";
  for (const auto& g : genes)
    for (const auto& tx : g.transcripts)
      for (const auto& e : tx.exons)
        out << g.gene_id << '\t' << tx.id << '\t' << g.chrom << '\t' << static_cast<char>(g.strand) << '\t'
            << e.start << '\t' << e.end << '\n';
}

template <typename Rng>
Eigen::VectorXd dirichlet_draw(std::size_t n, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = gamma(rng);
  return v / v.sum();
}

// ---------------------------------------------------------------------------
// Fragment generation
// ---------------------------------------------------------------------------

struct SimulatedFragment {
  std::size_t variant;
  Pos start;   // S, transcript space
  Pos length;  // L
};

/// Draws (variant, length, start) triples and renders them as genomic
/// alignments or exon paths for one island.
class IslandSimulator {
 public:
  IslandSimulator(const GeneIsland&, FragmentDistributions&&, Pos) = delete;

  IslandSimulator(const GeneIsland& island, const FragmentDistributions& dist, Pos read_length)
      : island_(&island), r_(read_length) {
    for (const auto& v : island.variants) {
      auto lay = spliced_layout(island, v);
      const auto& bin = dist.lookup(lay.length);
      if (bin.length.min_length() < r_)
        throw InputError("fragment lengths below the read length (" + std::to_string(r_) + ") cannot be simulated");
      Column c{lay, {}, &bin.start, {}};
      try {
        c.length = truncated_length_pmf(bin.length, lay.length, "variant " + v.id + " of island " + island.island_id);
        c.sampler = std::discrete_distribution<std::size_t>(c.length.probs.begin(), c.length.probs.end());
      } catch (const ModelError&) {
        c.length = {};
      }
      columns_.push_back(std::move(c));
    }
  }

  template <typename Rng>
  SimulatedFragment draw(std::discrete_distribution<std::size_t>& variant_dist, Rng& rng) {
    const std::size_t d = variant_dist(rng);
    auto& c = columns_[d];
    if (c.length.empty())
      throw ModelError("variant " + c.layout.variant_id + " is shorter than every fragment length");
    const Pos T = c.layout.length;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const Pos l = c.length.support[c.sampler(rng)];
      const double st = start_truncation(T, l);
      const double top = (*c.start)(st);
      if (!(top > 0.0)) continue;
      // inverse CDF over integer starts: smallest s with phi(s/T) >= u
      const double u = top * (1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng));
      Pos lo = 1, hi = T - l + 1;
      while (lo < hi) {
        const Pos mid = lo + (hi - lo) / 2;
        if ((*c.start)(static_cast<double>(mid) / static_cast<double>(T)) >= u)
          hi = mid;
        else
          lo = mid + 1;
      }
      return {d, lo, l};
    }
    throw ModelError("no admissible fragment start for variant " + c.layout.variant_id + " after 1000 draws");
  }

  FragmentAlignment to_alignment(const SimulatedFragment& f, std::string id) const {
    const auto& lay = columns_[f.variant].layout;
    auto tl = to_genomic_blocks(*island_, lay, f.start, f.start + r_ - 1);
    auto tr = to_genomic_blocks(*island_, lay, f.start + f.length - r_, f.start + f.length - 1);
    FragmentAlignment a;
    a.fragment_id = std::move(id);
    a.chrom = island_->chrom;
    if (island_->strand == Strand::Plus) {
      a.left_blocks = std::move(tl);
      a.right_blocks = std::move(tr);
    } else {
      a.left_blocks = std::move(tr);
      a.right_blocks = std::move(tl);
    }
    return a;
  }

  ExonPath to_path(const SimulatedFragment& f) const {
    const auto& lay = columns_[f.variant].layout;
    auto touched = [&lay](Pos a, Pos b) {
      std::vector<int> ids;
      for (std::size_t k = 1; k <= lay.exon_ids.size(); ++k)
        if (lay.start_at(k) <= b && a <= lay.start_at(k + 1) - 1) ids.push_back(lay.exon_ids[k - 1]);
      return ids;
    };
    return {touched(f.start, f.start + r_ - 1), touched(f.start + f.length - r_, f.start + f.length - 1)};
  }

 private:
  struct Column {
    SplicedLayout layout;
    LengthPMF length;
    const StartCDF* start;
    std::discrete_distribution<std::size_t> sampler;
  };
  const GeneIsland* island_;
  Pos r_;
  std::vector<Column> columns_;
};

inline std::mt19937_64 replicate_rng(std::uint64_t seed, int replicate, std::string_view island_id) {
  const std::uint64_t h = fnv1a(island_id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

/// Fragments for one island; deterministic given the generator state.
template <typename Rng>
std::vector<FragmentAlignment> simulate_fragments(IslandSimulator& sim, const Eigen::VectorXd& pi, std::int64_t n,
                                                  Rng& rng, const std::string& id_prefix) {
  std::discrete_distribution<std::size_t> variant(pi.data(), pi.data() + pi.size());
  std::vector<FragmentAlignment> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    out.push_back(sim.to_alignment(sim.draw(variant, rng), id_prefix + std::to_string(i + 1)));
  return out;
}

template <typename Rng>
PathCountTable simulate_path_counts(IslandSimulator& sim, const std::string& island_id, const Eigen::VectorXd& pi,
                                    std::int64_t n, Rng& rng) {
  std::discrete_distribution<std::size_t> variant(pi.data(), pi.data() + pi.size());
  PathCountTable t;
  t.island_id = island_id;
  for (std::int64_t i = 0; i < n; ++i) t.add(sim.to_path(sim.draw(variant, rng)));
  return t;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct ReplicateEstimate {
  std::string island_id;
  std::string variant_id;
  int replicate = 0;
  double truth = 0;
  double estimate = 0;
  double ci_lo = 0;
  double ci_hi = 1;
};

struct VariantMetrics {
  std::string island_id;
  std::string variant_id;
  double truth = 0;
  double mean_estimate = 0;
  double mae = 0;
  double mse = 0;
  double bias2 = 0;
  double variance = 0;
  double coverage = 0;
  std::int64_t n = 0;
};

struct SimReport {
  std::vector<VariantMetrics> variants;
  double mae = 0, mse = 0, bias2 = 0, variance = 0, coverage = 0;
  std::int64_t n_estimates = 0;
  int replicates = 0;
  int islands_scored = 0;
  int islands_excluded = 0;
  double ci_level = 0.95;
};

using TruthTable = std::map<std::string, std::map<std::string, double>>;  // island -> variant -> pi

/// Errors averaged over variants and replicates; bias^2 and variance use the
/// per-variant mean estimate so that MSE = bias^2 + variance.
inline SimReport score(const std::vector<ReplicateEstimate>& estimates, const TruthTable& truth) {
  std::map<std::pair<std::string, std::string>, std::vector<const ReplicateEstimate*>> groups;
  std::int64_t covered = 0;
  SimReport rep;
  std::set<std::string> islands;
  for (const auto& e : estimates) {
    auto it = truth.find(e.island_id);
    if (it == truth.end() || !it->second.count(e.variant_id))
      throw InputError("estimate for " + e.island_id + "/" + e.variant_id + " has no true value");
    if (it->second.at(e.variant_id) != e.truth)
      throw InputError("estimate for " + e.island_id + "/" + e.variant_id + " carries a different true value");
    groups[{e.island_id, e.variant_id}].push_back(&e);
    if (e.ci_lo <= e.truth && e.truth <= e.ci_hi) ++covered;
    rep.mae += std::abs(e.estimate - e.truth);
    rep.mse += (e.estimate - e.truth) * (e.estimate - e.truth);
    islands.insert(e.island_id);
    rep.replicates = std::max(rep.replicates, e.replicate);
  }
  rep.n_estimates = static_cast<std::int64_t>(estimates.size());
  rep.islands_scored = static_cast<int>(islands.size());
  if (estimates.empty()) return rep;

  for (const auto& [key, v] : groups) {
    VariantMetrics m;
    m.island_id = key.first;
    m.variant_id = key.second;
    m.truth = v.front()->truth;
    m.n = static_cast<std::int64_t>(v.size());
    std::int64_t cov = 0;
    for (const auto* e : v) {
      m.mean_estimate += e->estimate;
      m.mae += std::abs(e->estimate - m.truth);
      m.mse += (e->estimate - m.truth) * (e->estimate - m.truth);
      if (e->ci_lo <= m.truth && m.truth <= e->ci_hi) ++cov;
    }
    const double n = static_cast<double>(m.n);
    m.mean_estimate /= n;
    m.mae /= n;
    m.mse /= n;
    for (const auto* e : v) m.variance += (e->estimate - m.mean_estimate) * (e->estimate - m.mean_estimate);
    m.variance /= n;
    m.bias2 = (m.mean_estimate - m.truth) * (m.mean_estimate - m.truth);
    m.coverage = static_cast<double>(cov) / n;
    rep.bias2 += m.bias2;
    rep.variance += m.variance;
    rep.variants.push_back(m);
  }
  const double ne = static_cast<double>(estimates.size());
  rep.mae /= ne;
  rep.mse /= ne;
  rep.bias2 /= static_cast<double>(groups.size());
  rep.variance /= static_cast<double>(groups.size());
  rep.coverage = static_cast<double>(covered) / ne;
  return rep;
}

inline void write_sim_report(std::ostream& out, const SimReport& r, int precision = 6) {
  out << std::setprecision(precision);
  out << "# simulation report\n";
  out << "# replicates\t" << r.replicates << '\n';
  out << "# islands_scored\t" << r.islands_scored << '\n';
  out << "# islands_excluded_rpkm\t" << r.islands_excluded << '\n';
  out << "# estimates\t" << r.n_estimates << '\n';
  out << "# MAE\t" << r.mae << '\n';
  out << "# MSE\t" << r.mse << '\n';
  out << "# bias2\t" << r.bias2 << '\n';
  out << "# variance\t" << r.variance << '\n';
  out << "# ci_coverage\t" << r.coverage << "\t(nominal " << r.ci_level << ")\n";
  out << "island_id\ttranscript_id\ttrue_pi\tmean_estimate\tmae\tmse\tbias2\tvariance\tcoverage\tn\n";
  for (const auto& m : r.variants)
    out << m.island_id << '\t' << m.variant_id << '\t' << m.truth << '\t' << m.mean_estimate << '\t' << m.mae << '\t'
        << m.mse << '\t' << m.bias2 << '\t' << m.variance << '\t' << m.coverage << '\t' << m.n << '\n';
}

inline void write_estimates(std::ostream& out, const std::vector<ReplicateEstimate>& est, int precision = 6) {
  out << std::setprecision(precision);
  out << "island_id\ttranscript_id\treplicate\ttrue_pi\testimate\tci_lo\tci_hi\n";
  for (const auto& e : est)
    out << e.island_id << '\t' << e.variant_id << '\t' << e.replicate << '\t' << e.truth << '\t' << e.estimate << '\t'
        << e.ci_lo << '\t' << e.ci_hi << '\n';
}

// ---------------------------------------------------------------------------
// Full simulation run
// ---------------------------------------------------------------------------

struct SimRun {
  std::vector<GeneRecord> genes;
  std::vector<GeneIsland> islands;
  FragmentDistributions truth_distributions;
  TruthTable truth;
  std::vector<ReplicateEstimate> estimates;
  SimReport report;
  std::vector<std::string> warnings;
};

struct SimHooks {
  /// Receives replicate-1 fragments in island order (full mode only).
  std::function<void(const FragmentAlignment&)> on_fragment;
  unsigned threads = 1;
};

inline FragmentDistributions simulation_distributions(const SimConfig& cfg) {
  if (!cfg.length_pmf_file.empty() || !cfg.start_cdf_file.empty()) {
    if (cfg.length_pmf_file.empty() || cfg.start_cdf_file.empty())
      throw InputError("length_pmf and start_cdf must be given together");
    std::ifstream l(cfg.length_pmf_file), s(cfg.start_cdf_file);
    if (!l) throw InputError("cannot open " + cfg.length_pmf_file);
    if (!s) throw InputError("cannot open " + cfg.start_cdf_file);
    return read_distributions(l, s);
  }
  return FragmentDistributions::single(discretized_normal_pmf(cfg.length_mean, cfg.length_sd, cfg.read_length),
                                       start_cdf_from_shape(cfg.start_shape, cfg.start_grid));
}

inline SimRun run_simulation(const SimConfig& cfg, const SimHooks& hooks = {}) {
  SimRun run;
  if (!cfg.annotation.empty()) {
    run.genes = load_annotation(cfg.annotation);
  } else {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x67656eu};
    std::mt19937_64 rng(seq);
    run.genes = random_genes(cfg.random_islands, cfg.single_variant_islands, cfg.random_min_variants,
                             cfg.random_max_variants, cfg.chrom, rng);
  }
  run.islands = make_islands(run.genes);
  run.truth_distributions = simulation_distributions(cfg);
  const std::size_t ni = run.islands.size();

  std::vector<Eigen::VectorXd> pi(ni);
  for (std::size_t i = 0; i < ni; ++i) {
    const auto& isl = run.islands[i];
    const std::size_t nv = isl.variants.size();
    if (auto it = cfg.true_pi.find(isl.island_id); it != cfg.true_pi.end()) {
      if (it->second.size() != nv)
        throw InputError("pi." + isl.island_id + " has " + std::to_string(it->second.size()) + " entries, island has " +
                         std::to_string(nv) + " variants");
      pi[i] = Eigen::Map<const Eigen::VectorXd>(it->second.data(), static_cast<Eigen::Index>(nv));
    } else {
      auto rng = island_rng(cfg.seed ^ 0x7472757468ULL, isl.island_id);
      pi[i] = dirichlet_draw(nv, cfg.pi_dirichlet_alpha, rng);
    }
    for (std::size_t d = 0; d < nv; ++d) run.truth[isl.island_id][isl.variants[d].id] = pi[i][static_cast<Eigen::Index>(d)];
  }
  for (const auto& [id, _] : cfg.true_pi)
    if (!run.truth.count(id)) throw InputError("pi." + id + " names an island that does not exist");

  std::vector<std::unique_ptr<IslandSimulator>> sims(ni);
  for (std::size_t i = 0; i < ni; ++i)
    sims[i] = std::make_unique<IslandSimulator>(run.islands[i], run.truth_distributions, cfg.read_length);

  // RPKM uses the island's exon-union length and the replicate's total fragments.
  std::vector<bool> scored(ni, false);
  const double total_frags = static_cast<double>(cfg.n_frags) * static_cast<double>(ni);
  for (std::size_t i = 0; i < ni; ++i) {
    if (run.islands[i].variants.size() < 2) continue;
    const double kb = static_cast<double>(run.islands[i].covered_length()) / 1000.0;
    const double rpkm = total_frags > 0 ? static_cast<double>(cfg.n_frags) / kb / (total_frags / 1e6) : 0.0;
    if (cfg.rpkm_filter && rpkm < cfg.rpkm_min) {
      ++run.report.islands_excluded;
      continue;
    }
    scored[i] = true;
  }
  const int excluded = run.report.islands_excluded;

  QuantifyOptions qopt;
  qopt.prior_q = cfg.prior_q;
  qopt.inference.tol = cfg.tol;
  qopt.inference.ci_level = cfg.ci_level;

  std::vector<std::unique_ptr<IslandPathModel>> cached(ni);
  const unsigned threads = std::max(1u, hooks.threads);

  for (int rep = 1; rep <= cfg.n_replicates; ++rep) {
    std::vector<PathCountTable> tables(ni);
    std::vector<std::vector<FragmentAlignment>> frags(ni);
    const bool keep_frags = !cfg.counts_only && (cfg.estimate_distributions || (rep == 1 && hooks.on_fragment));

    parallel_for(ni, threads, [&](std::size_t i) {
      const auto& isl = run.islands[i];
      auto rng = replicate_rng(cfg.seed, rep, isl.island_id);
      tables[i].island_id = isl.island_id;
      if (cfg.counts_only) {
        tables[i] = simulate_path_counts(*sims[i], isl.island_id, pi[i], cfg.n_frags, rng);
        return;
      }
      auto f = simulate_fragments(*sims[i], pi[i], cfg.n_frags, rng,
                                  isl.island_id + ":" + std::to_string(rep) + ":");
      for (const auto& fr : f) {
        auto out = fragment_to_path(fr, isl);
        if (!out.mapped()) throw std::logic_error("simulated fragment " + fr.fragment_id + " does not map");
        tables[i].add(*out.path);
      }
      if (keep_frags) frags[i] = std::move(f);
    });

    if (rep == 1 && hooks.on_fragment)
      for (const auto& v : frags)
        for (const auto& f : v) hooks.on_fragment(f);

    const FragmentDistributions* est_dist = &run.truth_distributions;
    FragmentDistributions fitted;
    if (cfg.estimate_distributions && !cfg.counts_only) {
      IslandIndex index(run.islands);
      LengthAccumulator la(index, cfg.min_exon_len);
      StartAccumulator sa(index);
      for (const auto& v : frags)
        for (const auto& f : v) {
          la.add(f);
          sa.add(f);
        }
      fitted = fit_distributions(la, sa, {}, 0);
      est_dist = &fitted;
    }

    std::vector<IslandResult> results(ni);
    parallel_for(ni, threads, [&](std::size_t i) {
      if (!scored[i]) return;
      std::unique_ptr<IslandPathModel> fresh;
      IslandPathModel* model = nullptr;
      if (est_dist == &run.truth_distributions) {
        if (!cached[i]) cached[i] = std::make_unique<IslandPathModel>(run.islands[i], *est_dist, cfg.read_length);
        model = cached[i].get();
      } else {
        fresh = std::make_unique<IslandPathModel>(run.islands[i], *est_dist, cfg.read_length);
        model = fresh.get();
      }
      results[i] = quantify_island(*model, &tables[i], qopt);
    });

    for (std::size_t i = 0; i < ni; ++i) {
      if (!scored[i]) continue;
      const auto& r = results[i];
      if (r.failed) {
        run.warnings.push_back("replicate " + std::to_string(rep) + ": " + r.island_id + ": " + r.error);
        continue;
      }
      for (std::size_t d = 0; d < r.variant_ids.size(); ++d) {
        const auto di = static_cast<Eigen::Index>(d);
        run.estimates.push_back({r.island_id, r.variant_ids[d], rep, pi[i][di], r.summary.pi_mode[di],
                                 r.summary.ci[d].lo, r.summary.ci[d].hi});
      }
    }
  }

  TruthTable scored_truth;
  for (std::size_t i = 0; i < ni; ++i)
    if (scored[i]) scored_truth[run.islands[i].island_id] = run.truth[run.islands[i].island_id];
  run.report = score(run.estimates, scored_truth);
  run.report.islands_excluded = excluded;
  run.report.replicates = cfg.n_replicates;
  run.report.ci_level = cfg.ci_level;
  return run;
}

}  // namespace splicequant
