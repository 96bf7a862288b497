#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "splicequant/manifest.hpp"
#include "splicequant/splicequant.hpp"

namespace sq = splicequant;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNoData = 3;
constexpr int kExitInferenceFailed = 4;

// Rethrows InputError with the offending file name prepended.
template <typename Fn>
auto with_file(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const sq::InputError& e) {
    throw sq::InputError(path + ": " + e.what());
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sq::InputError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw sq::InputError("cannot write " + path);
  return out;
}

std::vector<sq::GeneIsland> load_islands(const std::string& path) {
  return with_file(path, [&] { return sq::make_islands(sq::load_annotation(path)); });
}

std::string first_line(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return line;
  }
  return {};
}

std::vector<sq::Pos> parse_edges(const std::string& s) {
  std::vector<sq::Pos> edges;
  if (s.empty()) return edges;
  for (auto part : sq::tsv::split(s, ',')) edges.push_back(sq::tsv::parse_int(part, 0, "--bins edge"));
  return edges;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// --------------------------------------------------------------------------
// count-paths
// --------------------------------------------------------------------------

struct CountPathsArgs {
  std::string annotation, fragments, out;
};

int cmd_count_paths(const CountPathsArgs& a) {
  sq::RunManifest man("count-paths");
  man.input("annotation", a.annotation);
  man.input("fragments", a.fragments);
  const auto islands = load_islands(a.annotation);
  const sq::IslandIndex index(islands);
  sq::PathCounter counter(index);
  std::map<sq::Pos, std::int64_t> read_lengths;

  const std::string unmapped_path = a.out + ".unmapped.tsv";
  auto unmapped = open_out(unmapped_path);
  unmapped << "fragment_id\treason\n";
  with_file(a.fragments, [&] {
    auto in = open_in(a.fragments);
    sq::FragmentReader reader(in);
    sq::FragmentAlignment f;
    while (reader.next(f)) {
      ++read_lengths[f.left_length()];
      ++read_lengths[f.right_length()];
      auto res = counter.add(f);
      if (!res.mapped()) unmapped << f.fragment_id << '\t' << sq::to_string(res.reason) << '\n';
    }
    return 0;
  });

  if (read_lengths.size() > 1) {
    auto modal = std::max_element(read_lengths.begin(), read_lengths.end(),
                                  [](const auto& x, const auto& y) { return x.second < y.second; });
    std::int64_t off = 0;
    for (const auto& [l, n] : read_lengths)
      if (l != modal->first) off += n;
    std::cerr << "warning: " << off << " read end(s) differ from the modal read length " << modal->first
              << " bp; quantify needs a single read length\n";
  }

  auto out = open_out(a.out);
  sq::write_path_counts(out, counter.tables());
  const auto& u = counter.unmapped();
  std::cerr << "fragments: " << counter.seen() << ", mapped: " << counter.mapped() << ", unmapped: " << u.total()
            << " (no-exon " << u[sq::UnmappedReason::NoExon] << ", off-exon " << u[sq::UnmappedReason::OffExon]
            << ", orientation " << u[sq::UnmappedReason::Orientation] << ")\n";

  man.output("counts", a.out);
  man.output("unmapped", unmapped_path);
  man.note("fragments", counter.seen());
  man.note("unmapped", u.total());
  man.write(a.out + ".manifest.json");
  return 0;
}

// --------------------------------------------------------------------------
// fit-dist
// --------------------------------------------------------------------------

struct FitDistArgs {
  std::string annotation, fragments, out_length, out_start, bins;
  sq::Pos min_exon_len = 1000;
  std::int64_t min_frags = 0;
  int precision = 6;
};

int cmd_fit_dist(const FitDistArgs& a) {
  sq::RunManifest man("fit-dist");
  man.input("annotation", a.annotation);
  man.input("fragments", a.fragments);
  man.flag("min-exon-len", std::to_string(a.min_exon_len));
  man.flag("bins", a.bins);
  man.flag("min-frags", std::to_string(a.min_frags));
  man.flag("precision", std::to_string(a.precision));

  const auto edges = parse_edges(a.bins);
  const auto islands = load_islands(a.annotation);
  const sq::IslandIndex index(islands);
  sq::LengthAccumulator len(index, a.min_exon_len);
  sq::StartAccumulator start(index);
  with_file(a.fragments, [&] {
    auto in = open_in(a.fragments);
    sq::FragmentReader reader(in);
    sq::FragmentAlignment f;
    while (reader.next(f)) {
      len.add(f);
      start.add(f);
    }
    return 0;
  });

  sq::DistributionFitReport report;
  const auto dist = sq::fit_distributions(len, start, edges, a.min_frags, &report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cerr << "length fragments: " << report.length_fragments << ", start fragments: " << report.start_fragments
            << '\n';

  auto lo = open_out(a.out_length);
  sq::write_length_pmf(lo, dist, a.precision);
  auto so = open_out(a.out_start);
  sq::write_start_cdf(so, dist, a.precision);
  man.output("length", a.out_length);
  man.output("start", a.out_start);
  man.note("length_fragments", report.length_fragments);
  man.note("start_fragments", report.start_fragments);
  man.write(a.out_length + ".manifest.json");
  return 0;
}

// --------------------------------------------------------------------------
// quantify
// --------------------------------------------------------------------------

struct QuantifyArgs {
  std::string annotation, input, length_dist, start_dist, out, samples_out, dump_probs;
  double prior_q = 2.0, tol = 1e-5, ci_level = 0.95, proposal_scale = 1.0;
  int mcmc = 0, burnin = 1000, precision = 6, threads = 0;
  std::uint64_t seed = 1;
  sq::Pos read_length = 0;
};

int cmd_quantify(const QuantifyArgs& a) {
  sq::RunManifest man("quantify");
  man.input("annotation", a.annotation);
  man.input("input", a.input);
  man.input("length_dist", a.length_dist);
  man.input("start_dist", a.start_dist);
  man.flag("prior-q", fmt_double(a.prior_q));
  man.flag("tol", fmt_double(a.tol));
  man.flag("ci-level", fmt_double(a.ci_level));
  man.flag("mcmc", std::to_string(a.mcmc));
  man.flag("burnin", std::to_string(a.burnin));
  man.flag("proposal-scale", fmt_double(a.proposal_scale));
  man.flag("precision", std::to_string(a.precision));
  if (a.read_length > 0) man.flag("read-length", std::to_string(a.read_length));
  man.seed(a.seed);

  if (a.prior_q < 1.0) throw sq::InputError("--prior-q must be >= 1");
  if (!(a.ci_level > 0 && a.ci_level < 1)) throw sq::InputError("--ci-level must lie in (0, 1)");
  if (a.mcmc > 0 && a.burnin >= a.mcmc) throw sq::InputError("--burnin must be smaller than --mcmc");

  const auto islands = load_islands(a.annotation);
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < islands.size(); ++i) by_id[islands[i].island_id] = i;

  const auto dist = with_file(a.length_dist + " / " + a.start_dist, [&] {
    auto l = open_in(a.length_dist);
    auto s = open_in(a.start_dist);
    return sq::read_distributions(l, s);
  });

  // Input is either a path-counts table or raw fragments; the header decides.
  std::vector<sq::PathCountTable> tables;
  sq::Pos r = a.read_length;
  const std::string head = first_line(a.input);
  if (head.rfind("island_id\t", 0) == 0) {
    tables = with_file(a.input, [&] {
      auto in = open_in(a.input);
      return sq::read_path_counts(in);
    });
    if (r <= 0) throw sq::InputError("--read-length is required when quantifying from path counts");
  } else {
    const sq::IslandIndex index(islands);
    sq::PathCounter counter(index);
    std::set<sq::Pos> lengths;
    with_file(a.input, [&] {
      auto in = open_in(a.input);
      sq::FragmentReader reader(in);
      sq::FragmentAlignment f;
      while (reader.next(f)) {
        lengths.insert(f.left_length());
        lengths.insert(f.right_length());
        counter.add(f);
      }
      return 0;
    });
    if (r <= 0) {
      if (lengths.size() > 1) {
        std::string seen;
        for (auto l : lengths) seen += (seen.empty() ? "" : ", ") + std::to_string(l);
        throw sq::InputError(a.input + ": mixed read lengths (" + seen +
                             "); the model assumes one read length, pass --read-length to override");
      }
      if (lengths.empty()) throw sq::InputError(a.input + ": no fragments; pass --read-length");
      r = *lengths.begin();
    }
    tables = counter.tables();
    man.note("unmapped", counter.unmapped().total());
  }
  man.note("read_length", r);

  std::vector<const sq::PathCountTable*> table_of(islands.size(), nullptr);
  for (const auto& t : tables) {
    auto it = by_id.find(t.island_id);
    if (it == by_id.end()) throw sq::InputError(a.input + ": island '" + t.island_id + "' is not in the annotation");
    table_of[it->second] = &t;
  }

  sq::QuantifyOptions qopt;
  qopt.prior_q = a.prior_q;
  qopt.inference.tol = a.tol;
  qopt.inference.ci_level = a.ci_level;
  qopt.mcmc = a.mcmc;
  qopt.burnin = a.burnin;
  qopt.proposal_scale = a.proposal_scale;
  qopt.seed = a.seed;

  std::vector<sq::IslandResult> results(islands.size());
  std::vector<sq::PathProbMatrix> matrices(a.dump_probs.empty() ? 0 : islands.size());
  const unsigned threads = sq::resolve_threads(a.threads);
  sq::parallel_for(islands.size(), threads, [&](std::size_t i) {
    sq::IslandPathModel model(islands[i], dist, r);
    results[i] = sq::quantify_island(model, table_of[i], qopt);
    if (!matrices.empty()) {
      std::vector<sq::ExonPath> paths;
      if (table_of[i])
        for (const auto& [p, _] : table_of[i]->counts) paths.push_back(p);
      matrices[i] = model.matrix(paths);
    }
  });

  std::vector<std::size_t> order(islands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return islands[x].island_id < islands[y].island_id; });
  std::vector<sq::IslandResult> sorted;
  std::size_t failed = 0;
  for (auto i : order) {
    if (results[i].failed) {
      ++failed;
      std::cerr << "warning: island " << results[i].island_id << ": " << results[i].error << '\n';
    }
    if (results[i].chain && results[i].chain->low_acceptance)
      std::cerr << "warning: island " << results[i].island_id << ": MH acceptance rate "
                << results[i].chain->acceptance_rate << " is low\n";
    sorted.push_back(std::move(results[i]));
  }

  auto out = open_out(a.out);
  sq::write_results(out, sorted, a.precision);
  man.output("results", a.out);
  if (!a.samples_out.empty()) {
    auto so = open_out(a.samples_out);
    sq::write_samples(so, sorted, a.precision);
    man.output("samples", a.samples_out);
  }
  if (!a.dump_probs.empty()) {
    auto po = open_out(a.dump_probs);
    bool header = true;
    for (auto i : order) {
      sq::write_prob_matrix(po, matrices[i], header);
      header = false;
    }
    man.output("probs", a.dump_probs);
  }

  const int code = (!islands.empty() && 2 * failed > islands.size()) ? kExitInferenceFailed : 0;
  man.note("islands", islands.size());
  man.note("islands_failed", failed);
  man.exit_code(code);
  man.write(a.out + ".manifest.json");
  if (code != 0)
    std::cerr << "error: inference failed on " << failed << " of " << islands.size()
              << " islands; check the distributions and read length\n";
  return code;
}

// --------------------------------------------------------------------------
// simulate
// --------------------------------------------------------------------------

struct SimulateArgs {
  std::string config, out, fragments_out, annotation_out, estimates_out;
  int threads = 0;
  int precision = 6;
};

int cmd_simulate(const SimulateArgs& a) {
  sq::RunManifest man("simulate");
  man.input("config", a.config);
  man.flag("precision", std::to_string(a.precision));
  const auto cfg = with_file(a.config, [&] {
    auto in = open_in(a.config);
    return sq::parse_sim_config(in, std::filesystem::path(a.config).parent_path());
  });
  if (!cfg.annotation.empty()) man.input("annotation", cfg.annotation);
  if (!cfg.length_pmf_file.empty()) man.input("length_pmf", cfg.length_pmf_file);
  if (!cfg.start_cdf_file.empty()) man.input("start_cdf", cfg.start_cdf_file);
  man.seed(cfg.seed);

  std::optional<std::ofstream> frag_out;
  sq::SimHooks hooks;
  hooks.threads = sq::resolve_threads(a.threads);
  if (!a.fragments_out.empty()) {
    if (cfg.counts_only) throw sq::InputError("--fragments-out cannot be used with counts_only = true");
    frag_out.emplace(open_out(a.fragments_out));
    sq::write_fragments_header(*frag_out);
    hooks.on_fragment = [&](const sq::FragmentAlignment& f) { sq::write_fragment(*frag_out, f); };
    man.output("fragments", a.fragments_out);
  }

  const auto run = sq::run_simulation(cfg, hooks);
  for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';

  auto out = open_out(a.out);
  sq::write_sim_report(out, run.report, a.precision);
  man.output("report", a.out);
  if (!a.annotation_out.empty()) {
    auto ao = open_out(a.annotation_out);
    sq::write_annotation(ao, run.genes);
    man.output("annotation", a.annotation_out);
  }
  if (!a.estimates_out.empty()) {
    auto eo = open_out(a.estimates_out);
    sq::write_estimates(eo, run.estimates, a.precision);
    man.output("estimates", a.estimates_out);
  }
  man.note("coverage", run.report.coverage);
  man.note("mae", run.report.mae);
  man.write(a.out + ".manifest.json");
  std::cerr << "islands scored: " << run.report.islands_scored << ", MAE " << run.report.mae << ", coverage "
            << run.report.coverage << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Splice-variant expression from paired-end exon-path counts"};
  app.set_version_flag("--version", std::string(sq::kVersion));
  app.require_subcommand(1);

  CountPathsArgs cp;
  auto* c1 = app.add_subcommand("count-paths", "Tabulate exon-path counts from fragment alignments");
  c1->add_option("--annotation", cp.annotation, "Annotation TSV")->required()->check(CLI::ExistingFile);
  c1->add_option("--fragments", cp.fragments, "Fragments TSV")->required()->check(CLI::ExistingFile);
  c1->add_option("--out", cp.out, "Output path-counts TSV")->required();

  FitDistArgs fd;
  auto* c2 = app.add_subcommand("fit-dist", "Estimate fragment-length and relative-start distributions");
  c2->add_option("--annotation", fd.annotation, "Annotation TSV")->required()->check(CLI::ExistingFile);
  c2->add_option("--fragments", fd.fragments, "Fragments TSV")->required()->check(CLI::ExistingFile);
  c2->add_option("--out-length", fd.out_length, "Output length PMF TSV")->required();
  c2->add_option("--out-start", fd.out_start, "Output start CDF TSV")->required();
  c2->add_option("--min-exon-len", fd.min_exon_len, "Exons longer than this give exact lengths")
      ->capture_default_str();
  c2->add_option("--bins", fd.bins, "Comma-separated transcript-length bin edges, e.g. 3000,5000");
  c2->add_option("--min-frags", fd.min_frags, "Minimum fragments for a gene to inform the start CDF")
      ->capture_default_str();
  c2->add_option("--precision", fd.precision, "Significant digits for probabilities")->capture_default_str();

  QuantifyArgs q;
  auto* c3 = app.add_subcommand("quantify", "Estimate variant proportions per gene island");
  c3->add_option("--annotation", q.annotation, "Annotation TSV")->required()->check(CLI::ExistingFile);
  c3->add_option("--input", q.input, "Path-counts TSV or fragments TSV")->required()->check(CLI::ExistingFile);
  c3->add_option("--length-dist", q.length_dist, "Length PMF TSV")->required()->check(CLI::ExistingFile);
  c3->add_option("--start-dist", q.start_dist, "Start CDF TSV")->required()->check(CLI::ExistingFile);
  c3->add_option("--out", q.out, "Output results TSV")->required();
  c3->add_option("--read-length", q.read_length, "Read length (inferred from fragments when omitted)");
  c3->add_option("--prior-q", q.prior_q, "Symmetric Dirichlet parameter")->capture_default_str();
  c3->add_option("--tol", q.tol, "EM convergence tolerance")->capture_default_str();
  c3->add_option("--ci-level", q.ci_level, "Credibility level")->capture_default_str();
  c3->add_option("--mcmc", q.mcmc, "Metropolis-Hastings iterations (0 = off)")->capture_default_str();
  c3->add_option("--burnin", q.burnin, "MH burn-in iterations")->capture_default_str();
  c3->add_option("--proposal-scale", q.proposal_scale, "Multiplier on the proposal covariance")
      ->capture_default_str();
  c3->add_option("--seed", q.seed, "RNG seed for MH")->capture_default_str();
  c3->add_option("--samples-out", q.samples_out, "Posterior draws TSV");
  c3->add_option("--dump-probs", q.dump_probs, "Write the path-probability matrices");
  c3->add_option("--precision", q.precision, "Significant digits for probabilities")->capture_default_str();
  c3->add_option("--threads", q.threads, "Worker threads (default: SPLICEQUANT_THREADS or all cores)");

  SimulateArgs s;
  auto* c4 = app.add_subcommand("simulate", "Simulate fragments and score the estimator");
  c4->add_option("--config", s.config, "Simulation config (key = value)")->required()->check(CLI::ExistingFile);
  c4->add_option("--out", s.out, "Output report TSV")->required();
  c4->add_option("--fragments-out", s.fragments_out, "Write replicate-1 fragments");
  c4->add_option("--annotation-out", s.annotation_out, "Write the simulated annotation");
  c4->add_option("--estimates-out", s.estimates_out, "Write per-replicate estimates");
  c4->add_option("--precision", s.precision, "Significant digits")->capture_default_str();
  c4->add_option("--threads", s.threads, "Worker threads (default: SPLICEQUANT_THREADS or all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*c1) return cmd_count_paths(cp);
    if (*c2) return cmd_fit_dist(fd);
    if (*c3) return cmd_quantify(q);
    if (*c4) return cmd_simulate(s);
  } catch (const sq::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const sq::InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
