// Acceptance harness: one PASS/FAIL line per criterion with the measured values.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "splicequant/quantify.hpp"
#include "splicequant/simulate.hpp"
#include "test_util.hpp"

using namespace splicequant;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Every path each (length, integer start) pair produces, weighted by its probability.
std::map<ExonPath, double> enumerate_paths(const SplicedLayout& lay, const LengthPMF& len, const StartCDF& phi, Pos r) {
  std::map<ExonPath, double> out;
  const Pos T = lay.length;
  auto touched = [&lay](Pos a, Pos b) {
    std::vector<int> ids;
    for (std::size_t k = 1; k <= lay.exon_ids.size(); ++k)
      if (lay.start_at(k) <= b && a <= lay.start_at(k + 1) - 1) ids.push_back(lay.exon_ids[k - 1]);
    return ids;
  };
  for (std::size_t i = 0; i < len.support.size(); ++i) {
    const Pos l = len.support[i];
    const double denom = phi(static_cast<double>(T - l + 1) / T);
    for (Pos s = 1; s <= T - l + 1; ++s) {
      const double ps = (phi(static_cast<double>(s) / T) - phi(static_cast<double>(s - 1) / T)) / denom;
      if (ps == 0.0) continue;
      out[{touched(s, s + r - 1), touched(s + l - r, s + l - 1)}] += ps * len.probs[i];
    }
  }
  return out;
}

// Two-variant island data drawn from the simulator on randomly generated genes.
struct IslandCounts {
  std::string id;
  VectorXd counts;
  MatrixXd probs;
};

std::vector<IslandCounts> two_variant_datasets(int n_islands, std::uint64_t seed, int min_frags, int max_frags) {
  std::mt19937_64 rng(seed);
  const auto genes = random_genes(n_islands, 0, 2, 2, "acc", rng);
  const auto islands = make_islands(genes);
  const auto dist = FragmentDistributions::single(discretized_normal_pmf(200, 25, 75), power_start_cdf(1.5, 100));
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_int_distribution<int> nf(min_frags, max_frags);
  std::vector<IslandCounts> out;
  for (const auto& isl : islands) {
    IslandSimulator sim(isl, dist, 75);
    IslandPathModel model(isl, dist, 75);
    VectorXd pi(2);
    pi[0] = u(rng);
    pi[1] = 1 - pi[0];
    const auto table = simulate_path_counts(sim, isl.island_id, pi, nf(rng), rng);
    std::vector<ExonPath> paths;
    for (const auto& [p, _] : table.counts) paths.push_back(p);
    const auto data = usable_data(table, model.matrix(paths));
    out.push_back({isl.island_id, data.counts, data.probs});
  }
  return out;
}

double grid_argmax(const IslandCounts& d, const PriorSpec& prior, double step) {
  double best = -std::numeric_limits<double>::infinity(), arg = 0;
  const int n = static_cast<int>(std::lround(1.0 / step));
  for (int i = 1; i < n; ++i) {
    const double p = i * step;
    VectorXd pi(2);
    pi << p, 1 - p;
    const double lp = log_posterior(pi, d.counts, d.probs, prior);
    if (lp > best) {
      best = lp;
      arg = p;
    }
  }
  return arg;
}

// ---------------------------------------------------------------------------

Outcome ci_coverage() {
  std::istringstream cfg_text(
      "seed = 20240501\nrandom_islands = 500\nrandom_min_variants = 2\nrandom_max_variants = 4\n"
      "n_frags = 2000\nn_replicates = 1\nprior_q = 2\nstart_shape = power:1.5\nstart_grid = 20\n"
      "counts_only = true\n");
  const auto cfg = parse_sim_config(cfg_text);
  SimHooks hooks;
  hooks.threads = worker_threads();
  const auto run = run_simulation(cfg, hooks);
  const double c = run.report.coverage;
  return {c >= 0.92 && c <= 0.98, fmt("coverage %.4f over %lld intervals (%d islands scored, %d excluded)", c,
                                      static_cast<long long>(run.report.n_estimates), run.report.islands_scored,
                                      run.report.islands_excluded)};
}

Outcome path_probability_oracle() {
  std::mt19937_64 rng(4242);
  double worst = 0, worst_sum = 0;
  int columns = 0, skipped = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto isl = testutil::random_small_island(rng, 4, 2000);
    const Pos r = rep % 2 ? 40 : 75;
    const auto pmf = rep % 2 ? LengthPMF::from_weights({{160, 1.0}})
                             : LengthPMF::from_weights({{120, 0.25}, {180, 0.5}, {260, 0.25}});
    const auto phi = rep % 3 == 0 ? StartCDF::uniform(40)
                                  : StartCDF({0.1, 0.3, 0.6, 0.85, 1.0}, {0.02, 0.15, 0.45, 0.8, 1.0});
    const auto dist = FragmentDistributions::single(pmf, phi);
    IslandPathModel model(isl, dist, r);
    for (std::size_t d = 0; d < isl.variants.size(); ++d) {
      if (!model.column_ok(d)) {
        ++skipped;
        continue;
      }
      ++columns;
      const auto& lay = model.layout(d);
      const auto brute = enumerate_paths(lay, model.length_given_T(d), phi, r);
      // Every pair of consecutive runs along the variant is a candidate path.
      const auto& ids = lay.exon_ids;
      std::vector<std::vector<int>> runs;
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i; j < ids.size(); ++j) runs.emplace_back(ids.begin() + i, ids.begin() + j + 1);
      double total = 0;
      for (const auto& a : runs)
        for (const auto& b : runs) {
          const ExonPath p{a, b};
          const double got = model.row(p)[d];
          const auto it = brute.find(p);
          worst = std::max(worst, std::abs(got - (it == brute.end() ? 0.0 : it->second)));
          total += got;
        }
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }
  }
  return {columns > 0 && worst <= 1e-12 && worst_sum <= 1e-9,
          fmt("%d variant columns, max |closed form - enumeration| %.3g, max |sum - 1| %.3g, %d columns without "
              "admissible lengths",
              columns, worst, worst_sum, skipped)};
}

Outcome em_correctness() {
  const auto data = two_variant_datasets(100, 77, 50, 3000);
  const auto prior = PriorSpec::symmetric(2, 2.0);
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  double worst_grid = 0, worst_restart = 0, worst_drop = 0;
  for (const auto& d : data) {
    EmOptions opt;
    opt.record_trace = true;
    const auto em = em_estimate(d.counts, d.probs, prior, opt);
    worst_grid = std::max(worst_grid, std::abs(em.pi[0] - grid_argmax(d, prior, 1e-4)));
    for (std::size_t i = 1; i < em.trace.size(); ++i) worst_drop = std::max(worst_drop, em.trace[i - 1] - em.trace[i]);
    for (int k = 0; k < 10; ++k) {
      EmOptions o;
      VectorXd init(2);
      init[0] = u(rng);
      init[1] = 1 - init[0];
      o.init = init;
      worst_restart = std::max(worst_restart, std::abs(em_estimate(d.counts, d.probs, prior, o).pi[0] - em.pi[0]));
    }
  }
  return {worst_grid <= 2e-4 && worst_drop <= 1e-10 && worst_restart <= 1e-4,
          fmt("%zu islands: max |EM - grid| %.3g, max log-posterior decrease %.3g, max restart spread %.3g",
              data.size(), worst_grid, worst_drop, worst_restart)};
}

double rel_err(const MatrixXd& got, const MatrixXd& want) {
  const double scale = want.cwiseAbs().maxCoeff();
  return (got - want).cwiseAbs().maxCoeff() / (scale > 0 ? scale : 1.0);
}

// Gradient of the log-posterior in theta, written out by the chain rule
// through log pi_d = theta_{d-1} - log(1 + sum exp theta) independently of G.
VectorXd grad_theta(const VectorXd& th, const VectorXd& counts, const MatrixXd& probs, const PriorSpec& prior) {
  const VectorXd pi = pi_from_theta(th);
  const Eigen::Index D = pi.size();
  VectorXd g = VectorXd::Zero(D - 1);
  for (Eigen::Index l = 0; l < D - 1; ++l) {
    for (Eigen::Index k = 0; k < counts.size(); ++k) {
      const double w = probs.row(k).dot(pi);
      double dw = 0;
      for (Eigen::Index d = 0; d < D; ++d) dw += probs(k, d) * pi[d] * ((d == l + 1 ? 1.0 : 0.0) - pi[l + 1]);
      g[l] += counts[k] * dw / w;
    }
    for (Eigen::Index d = 0; d < D; ++d) g[l] += (prior.q[d] - 1) * ((d == l + 1 ? 1.0 : 0.0) - pi[l + 1]);
  }
  return g;
}

Outcome derivative_checks() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.0, 1.0);
  std::mt19937_64 genes_rng(32);
  const auto genes = random_genes(30, 0, 2, 4, "fd", genes_rng);
  const auto islands = make_islands(genes);
  const auto dist = FragmentDistributions::single(discretized_normal_pmf(200, 25, 75), power_start_cdf(1.5, 100));
  double eg = 0, eh = 0, es = 0;
  int points = 0;
  for (const auto& isl : islands) {
    const Eigen::Index D = static_cast<Eigen::Index>(isl.variants.size());
    IslandSimulator sim(isl, dist, 75);
    IslandPathModel model(isl, dist, 75);
    const auto table = simulate_path_counts(sim, isl.island_id, VectorXd::Constant(D, 1.0 / D), 1500, rng);
    std::vector<ExonPath> paths;
    for (const auto& [p, _] : table.counts) paths.push_back(p);
    const auto data = usable_data(table, model.matrix(paths));
    const auto prior = PriorSpec::symmetric(static_cast<std::size_t>(D), 2.0);
    VectorXd th(D - 1);
    for (auto& x : th) x = z(rng);
    ++points;

    const double h = 1e-5;
    const MatrixXd G = jacobian_G(th);
    const auto H = hessian_H(th);
    const MatrixXd S = log_posterior_hessian(th, data.counts, data.probs, prior);
    MatrixXd fdG(D, D - 1), fdS(D - 1, D - 1);
    std::vector<MatrixXd> fdH(static_cast<std::size_t>(D), MatrixXd(D - 1, D - 1));
    for (Eigen::Index m = 0; m < D - 1; ++m) {
      VectorXd e = VectorXd::Zero(D - 1);
      e[m] = h;
      fdG.col(m) = (pi_from_theta(th + e) - pi_from_theta(th - e)) / (2 * h);
      const MatrixXd dG = (jacobian_G(th + e) - jacobian_G(th - e)) / (2 * h);
      for (Eigen::Index d = 0; d < D; ++d) fdH[static_cast<std::size_t>(d)].col(m) = dG.row(d).transpose();
      fdS.col(m) = (grad_theta(th + e, data.counts, data.probs, prior) -
                    grad_theta(th - e, data.counts, data.probs, prior)) /
                   (2 * h);
    }
    eg = std::max(eg, rel_err(G, fdG));
    for (Eigen::Index d = 0; d < D; ++d)
      eh = std::max(eh, rel_err(H[static_cast<std::size_t>(d)], fdH[static_cast<std::size_t>(d)]));
    es = std::max(es, rel_err(S, fdS));
  }
  return {points >= 20 && eg < 1e-6 && eh < 1e-6 && es < 1e-4,
          fmt("%d points: max relative error G %.3g, H %.3g, Hessian %.3g", points, eg, eh, es)};
}

// Posterior mean of pi_1 by midpoint quadrature of the unnormalized density on (0, 1).
double quadrature_mean(const IslandCounts& d, const PriorSpec& prior, int n = 200000) {
  std::vector<double> lp(static_cast<std::size_t>(n));
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double p = (i + 0.5) / n;
    VectorXd pi(2);
    pi << p, 1 - p;
    lp[static_cast<std::size_t>(i)] = log_posterior(pi, d.counts, d.probs, prior);
    mx = std::max(mx, lp[static_cast<std::size_t>(i)]);
  }
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(lp[static_cast<std::size_t>(i)] - mx);
    num += w * (i + 0.5) / n;
    den += w;
  }
  return num / den;
}

// Batch-means standard error of the chain mean of pi_1.
double batch_means_se(const std::vector<VectorXd>& s, int batches = 30) {
  const std::size_t b = s.size() / static_cast<std::size_t>(batches);
  std::vector<double> m(static_cast<std::size_t>(batches), 0.0);
  for (int i = 0; i < batches; ++i) {
    for (std::size_t j = 0; j < b; ++j) m[static_cast<std::size_t>(i)] += s[static_cast<std::size_t>(i) * b + j][0];
    m[static_cast<std::size_t>(i)] /= static_cast<double>(b);
  }
  double mean = 0;
  for (double x : m) mean += x;
  mean /= batches;
  double var = 0;
  for (double x : m) var += (x - mean) * (x - mean);
  var /= batches - 1;
  return std::sqrt(var / batches);
}

Outcome mh_validity() {
  const auto data = two_variant_datasets(20, 55, 20, 300);
  const auto prior = PriorSpec::symmetric(2, 2.0);
  double worst_z = 0, worst_seed = 0, min_acc = 1;
  for (const auto& d : data) {
    const auto summary = infer_posterior(d.counts, d.probs, prior, {});
    std::mt19937_64 r1 = island_rng(101, d.id), r2 = island_rng(202, d.id);
    const auto c1 = mh_sample(summary, d.counts, d.probs, prior, r1, {}, 101);
    const auto c2 = mh_sample(summary, d.counts, d.probs, prior, r2, {}, 202);
    const double truth = quadrature_mean(d, prior);
    worst_z = std::max(worst_z, std::abs(c1.mean()[0] - truth) / batch_means_se(c1.samples));
    worst_seed = std::max(worst_seed, (c1.mean() - c2.mean()).cwiseAbs().maxCoeff());
    min_acc = std::min(min_acc, c1.acceptance_rate);
  }
  return {worst_z <= 3.0 && worst_seed < 0.01,
          fmt("%zu islands: max |chain mean - quadrature| / MC SE %.2f, max seed disagreement %.4f, min acceptance %.2f",
              data.size(), worst_z, worst_seed, min_acc)};
}

Outcome estimator_consistency() {
  const auto isl = testutil::toy_island();
  const auto dist = FragmentDistributions::single(discretized_normal_pmf(200, 25, 75), power_start_cdf(1.5, 50));
  IslandSimulator sim(isl, dist, 75);
  IslandPathModel model(isl, dist, 75);
  VectorXd truth(3);
  truth << 0.6, 0.3, 0.1;
  auto estimate = [&](const PathCountTable& t, double q) {
    QuantifyOptions opt;
    opt.prior_q = q;
    return quantify_island(model, &t, opt).summary.pi_mode;
  };

  const int reps = 20;
  std::vector<double> mae;
  for (std::int64_t n : {1000, 10000, 100000}) {
    double sum = 0;
    for (int rep = 1; rep <= reps; ++rep) {
      auto rng = replicate_rng(606, rep, "toy-n" + std::to_string(n));
      sum += (estimate(simulate_path_counts(sim, "toy", truth, n, rng), 2.0) - truth).cwiseAbs().sum();
    }
    mae.push_back(sum / (reps * 3.0));
  }

  const int low_reps = 100;
  std::vector<VectorXd> e1, e2;
  for (int rep = 1; rep <= low_reps; ++rep) {
    auto rng = replicate_rng(707, rep, "toy-low");
    const auto t = simulate_path_counts(sim, "toy", truth, 20, rng);
    e1.push_back(estimate(t, 1.0));
    e2.push_back(estimate(t, 2.0));
  }
  auto total_variance = [](const std::vector<VectorXd>& e) {
    VectorXd m = VectorXd::Zero(e.front().size());
    for (const auto& x : e) m += x;
    m /= static_cast<double>(e.size());
    double v = 0;
    for (const auto& x : e) v += (x - m).squaredNorm();
    return v / static_cast<double>(e.size());
  };
  const double v1 = total_variance(e1), v2 = total_variance(e2);
  const bool monotone = mae[0] > mae[1] && mae[1] > mae[2];
  return {monotone && mae[2] < 0.02 && v2 < v1,
          fmt("MAE %.4f / %.4f / %.4f at 1k / 10k / 100k fragments; variance q=1 %.4f, q=2 %.4f (20 fragments, "
              "%d replicates)",
              mae[0], mae[1], mae[2], v1, v2, low_reps)};
}

Outcome kaplan_meier() {
  bool ok = true;
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> n_dist(1, 500), grid(1, 113);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = n_dist(rng);
    std::vector<TruncatedObservation> obs;
    for (int i = 0; i < n; ++i) obs.push_back({grid(rng) / 113.0, 1.0});
    const auto phi = km_estimator(obs);
    for (double z : phi.knots()) {
      int le = 0;
      for (const auto& o : obs) le += o.value <= z;
      ok = ok && phi(z) == static_cast<double>(le) / n;
      ++checked;
    }
  }
  const auto hand = km_estimator(std::vector<TruncatedObservation>{{0.2, 1.0}, {0.5, 1.0}, {0.3, 0.3}});
  const bool hand_ok =
      hand.knots() == std::vector<double>{0.2, 0.3, 0.5} && hand.values() == std::vector<double>{0.25, 0.5, 1.0};
  return {ok && hand_ok, fmt("%d knots compared with the empirical CDF (%s); truncated hand table %s", checked,
                             ok ? "all equal" : "mismatch", hand_ok ? "matches" : "differs")};
}

int sh(const std::string& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir + "' && " + std::string(SPLICEQUANT_BIN) + " " + args + " 2>/dev/null";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome pipeline_determinism() {
  namespace fs = std::filesystem;
  testutil::TempDir tmp;
  const std::string work = tmp.file("work");
  fs::create_directories(work);
  testutil::spit(work + "/sim.cfg",
                 "seed = 99\nrandom_islands = 12\nsingle_variant_islands = 6\nn_frags = 3000\nn_replicates = 1\n"
                 "start_shape = power:1.5\n");
  const std::vector<std::string> steps{
      "simulate --config sim.cfg --out sim_report.tsv --fragments-out frags.tsv --annotation-out ann.tsv "
      "--estimates-out sim_estimates.tsv --threads 2",
      "count-paths --annotation ann.tsv --fragments frags.tsv --out counts.tsv",
      "fit-dist --annotation ann.tsv --fragments frags.tsv --out-length length.tsv --out-start start.tsv",
      "quantify --annotation ann.tsv --input counts.tsv --read-length 75 --length-dist length.tsv --start-dist "
      "start.tsv --out quant.tsv --mcmc 3000 --burnin 300 --seed 5 --samples-out draws.tsv --threads 2"};

  std::vector<std::map<std::string, std::string>> runs;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& p : fs::directory_iterator(work))
      if (p.path().filename() != "sim.cfg") fs::remove(p.path());
    for (const auto& s : steps)
      if (const int rc = sh(work, s); rc != 0)
        return {false, fmt("pass %d: step '%s' exited %d", pass + 1, s.substr(0, s.find(' ')).c_str(), rc)};
    std::map<std::string, std::string> files;
    for (const auto& p : fs::directory_iterator(work)) {
      const auto name = p.path().filename().string();
      std::string body = testutil::slurp(p.path().string());
      if (name.ends_with(".manifest.json")) {
        auto j = nlohmann::json::parse(body);
        j.erase("run");
        body = j.dump();
      }
      files[name] = body;
    }
    runs.push_back(std::move(files));
  }
  std::vector<std::string> differ;
  for (const auto& [name, body] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != body) differ.push_back(name);
  }
  const bool nonempty = runs[0].count("quant.tsv") && runs[0]["quant.tsv"].size() > 100;
  std::string names;
  for (const auto& d : differ) names += " " + d;
  return {differ.empty() && runs[0].size() == runs[1].size() && nonempty,
          differ.empty() ? fmt("%zu files identical across two runs", runs[0].size()) : "differing:" + names};
}

Outcome toy_fragment_paths() {
  const std::string demo = SPLICEQUANT_DEMO;
  const auto islands = make_islands(load_annotation(demo + "/toy_annotation.tsv"));
  std::ifstream in(demo + "/toy_fragments.tsv");
  const auto frags = read_fragments(in);
  const auto res = count_paths(frags, islands);
  std::map<std::string, std::int64_t> got;
  for (const auto& t : res.tables)
    for (const auto& [p, c] : t.counts) got[serialize_path(p)] += c;
  const std::map<std::string, std::int64_t> want{{"{1}|{1}", 1}, {"{1,2}|{3}", 1}, {"{1}|{2}", 1}};
  std::string seen;
  for (const auto& [p, c] : got) seen += " " + p + "=" + std::to_string(c);
  return {got == want && res.total == 3, "paths:" + seen};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"ci-coverage", ci_coverage},
      {"path-probability-oracle", path_probability_oracle},
      {"em-correctness", em_correctness},
      {"derivative-checks", derivative_checks},
      {"mh-validity", mh_validity},
      {"estimator-consistency", estimator_consistency},
      {"kaplan-meier", kaplan_meier},
      {"pipeline-determinism", pipeline_determinism},
      {"toy-fragment-paths", toy_fragment_paths},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << (i + 1) << ' ' << criteria[i].first << " (" << fmt("%.1f", secs)
              << " s): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
