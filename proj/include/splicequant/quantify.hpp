#pragma once

// Per-island quantification: path counts -> probability matrix -> posterior.

#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "splicequant/inference.hpp"
#include "splicequant/path_prob.hpp"
#include "splicequant/pathing.hpp"

namespace splicequant {

struct QuantifyOptions {
  double prior_q = 2.0;
  InferenceOptions inference;
  int mcmc = 0;  // 0 = off, else total MH iterations
  int burnin = 1000;
  double proposal_scale = 1.0;
  std::uint64_t seed = 0;
};

struct IslandResult {
  std::string island_id;
  std::vector<std::string> variant_ids;
  PosteriorSummary summary;
  std::optional<MHChain> chain;
  std::vector<std::string> flags;
  bool failed = false;
  std::string error;
};

inline IslandResult quantify_island(IslandPathModel& model, const PathCountTable* table, const QuantifyOptions& opt) {
  const auto& island = model.island();
  IslandResult res;
  res.island_id = island.island_id;
  for (const auto& v : island.variants) res.variant_ids.push_back(v.id);
  if (island.mixed_strand) res.flags.push_back("mixed-strand");

  try {
    std::vector<ExonPath> paths;
    if (table)
      for (const auto& [p, _] : table->counts) paths.push_back(p);
    auto m = model.matrix(paths);
    for (const auto& [vid, _] : m.bad_columns) res.flags.push_back("variant-too-short:" + vid);
    if (m.bad_columns.size() == island.variants.size())
      throw ModelError("no variant of island " + island.island_id + " admits any fragment length");

    PathCountTable empty;
    const auto data = usable_data(table ? *table : empty, m);
    if (data.dropped_paths > 0)
      res.flags.push_back("zero-prob-paths=" + std::to_string(data.dropped_paths) + "(" +
                          std::to_string(data.dropped_fragments) + " frags)");
    if (m.clamped > 0) res.flags.push_back("clamped=" + std::to_string(m.clamped));

    const auto prior = PriorSpec::symmetric(island.variants.size(), opt.prior_q);
    res.summary = infer_posterior(data.counts, data.probs, prior, opt.inference);
    res.flags.insert(res.flags.end(), res.summary.flags.begin(), res.summary.flags.end());

    if (opt.mcmc > 0) {
      auto rng = island_rng(opt.seed, island.island_id);
      MHOptions mh{opt.mcmc, opt.burnin, opt.proposal_scale, false};
      res.chain = mh_sample(res.summary, data.counts, data.probs, prior, rng, mh, opt.seed);
      if (res.chain->low_acceptance) res.flags.push_back("low-acceptance");
    }
  } catch (const ModelError& e) {
    res.failed = true;
    res.error = e.what();
    res.flags.push_back("failed");
  }
  return res;
}

inline std::string join_flags(const std::vector<std::string>& flags) {
  if (flags.empty()) return ".";
  std::string s;
  for (const auto& f : flags) s += (s.empty() ? "" : ";") + f;
  return s;
}

/// island_id  transcript_id  pi_mode  se  ci_lo  ci_hi  em_iters  converged  flags
inline void write_results(std::ostream& out, const std::vector<IslandResult>& results, int precision = 6) {
  out << "island_id\ttranscript_id\tpi_mode\tse\tci_lo\tci_hi\tem_iters\tconverged\tflags\n";
  out << std::setprecision(precision);
  for (const auto& r : results) {
    const auto flags = join_flags(r.flags);
    for (std::size_t d = 0; d < r.variant_ids.size(); ++d) {
      out << r.island_id << '\t' << r.variant_ids[d] << '\t';
      if (r.failed) {
        out << "NA\tNA\tNA\tNA\t0\t0\t" << flags << '\n';
        continue;
      }
      const auto i = static_cast<Eigen::Index>(d);
      const auto& s = r.summary;
      out << s.pi_mode[i] << '\t' << std::sqrt(std::max(0.0, s.pi_cov(i, i))) << '\t' << s.ci[d].lo << '\t'
          << s.ci[d].hi << '\t' << s.em_iters << '\t' << (s.converged ? 1 : 0) << '\t' << flags << '\n';
    }
  }
}

/// island_id  transcript_id  draw_index  pi
inline void write_samples(std::ostream& out, const std::vector<IslandResult>& results, int precision = 6) {
  out << "island_id\ttranscript_id\tdraw_index\tpi\n";
  out << std::setprecision(precision);
  for (const auto& r : results) {
    if (!r.chain) continue;
    for (std::size_t d = 0; d < r.variant_ids.size(); ++d)
      for (std::size_t j = 0; j < r.chain->samples.size(); ++j)
        out << r.island_id << '\t' << r.variant_ids[d] << '\t' << j + 1 << '\t'
            << r.chain->samples[j][static_cast<Eigen::Index>(d)] << '\n';
  }
}

}  // namespace splicequant
