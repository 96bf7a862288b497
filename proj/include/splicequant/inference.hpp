#pragma once

// Posterior inference on the variant proportions pi of one island:
// EM posterior mode, normal approximation in the additive-log-ratio space with
// delta-method intervals, and an independence Metropolis-Hastings sampler.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "splicequant/error.hpp"
#include "splicequant/path_prob.hpp"
#include "splicequant/pathing.hpp"

namespace splicequant {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Dirichlet(q) prior on pi. q_d >= 1 keeps the posterior log-concave.
struct PriorSpec {
  VectorXd q;

  static PriorSpec symmetric(std::size_t n, double q) {
    PriorSpec p{VectorXd::Constant(static_cast<Eigen::Index>(n), q)};
    p.validate();
    return p;
  }

  void validate() const {
    for (Eigen::Index d = 0; d < q.size(); ++d)
      if (!(q[d] >= 1.0) || !std::isfinite(q[d]))
        throw InputError("Dirichlet prior parameters must be finite and >= 1 (got " + std::to_string(q[d]) + ")");
  }

  VectorXd mean() const { return q / q.sum(); }
};

/// Counts and path probabilities restricted to paths with a nonzero row.
struct IslandData {
  VectorXd counts;  // x_k
  MatrixXd probs;   // p_kd
  std::int64_t dropped_paths = 0;
  std::int64_t dropped_fragments = 0;
};

inline IslandData usable_data(const PathCountTable& table, const PathProbMatrix& m) {
  IslandData out;
  std::vector<Eigen::Index> keep;
  for (std::size_t k = 0; k < m.paths.size(); ++k) {
    const auto it = table.counts.find(m.paths[k]);
    const double x = it == table.counts.end() ? 0.0 : static_cast<double>(it->second);
    if (m.probs.row(static_cast<Eigen::Index>(k)).maxCoeff() > 0.0) {
      if (x > 0) keep.push_back(static_cast<Eigen::Index>(k));
    } else {
      out.dropped_paths += 1;
      out.dropped_fragments += static_cast<std::int64_t>(x);
    }
  }
  out.counts.resize(static_cast<Eigen::Index>(keep.size()));
  out.probs.resize(static_cast<Eigen::Index>(keep.size()), m.probs.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto k = keep[i];
    out.counts[static_cast<Eigen::Index>(i)] =
        static_cast<double>(table.counts.at(m.paths[static_cast<std::size_t>(k)]));
    out.probs.row(static_cast<Eigen::Index>(i)) = m.probs.row(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Log-posterior
// ---------------------------------------------------------------------------

/// sum_k x_k log(sum_d p_kd pi_d) + sum_d (q_d - 1) log pi_d, up to a constant.
/// Returns -inf when an observed path has zero probability under pi.
inline double log_posterior(const VectorXd& pi, const VectorXd& counts, const MatrixXd& probs, const PriorSpec& prior) {
  double lp = 0.0;
  if (counts.size() > 0) {
    const VectorXd w = probs * pi;
    for (Eigen::Index k = 0; k < counts.size(); ++k) {
      if (counts[k] == 0) continue;
      if (!(w[k] > 0.0)) return kNegInf;
      lp += counts[k] * std::log(w[k]);
    }
  }
  for (Eigen::Index d = 0; d < pi.size(); ++d) {
    const double a = prior.q[d] - 1.0;
    if (a == 0.0) continue;
    if (!(pi[d] > 0.0)) return kNegInf;
    lp += a * std::log(pi[d]);
  }
  return lp;
}

// ---------------------------------------------------------------------------
// EM
// ---------------------------------------------------------------------------

struct EmOptions {
  double tol = 1e-5;
  int max_iter = 100000;
  double floor = 1e-12;
  bool record_trace = false;
  std::optional<VectorXd> init;  // defaults to q / sum(q)
};

struct EmResult {
  VectorXd pi;
  int iterations = 0;
  bool converged = false;
  double log_posterior = 0.0;
  std::vector<double> trace;  // log-posterior at the start and after each iteration
};

/// pi_d' ∝ q_d - 1 + sum_k x_k p_kd pi_d / sum_i p_ki pi_i, iterated until
/// max_d |pi_d' - pi_d| < tol and the geometric tail bound delta * rho / (1 - rho)
/// is also below tol, where rho is the ratio of successive step sizes. Near a
/// flat mode EM contracts with rho close to 1, and a small step alone can leave
/// the iterate many tolerances away from the fixed point.
inline EmResult em_estimate(const VectorXd& counts, const MatrixXd& probs, const PriorSpec& prior,
                            const EmOptions& opt = {}) {
  const Eigen::Index D = prior.q.size();
  EmResult res;
  res.pi = opt.init ? *opt.init : prior.mean();
  if (D == 1) {
    res.pi = VectorXd::Ones(1);
    res.iterations = 1;
    res.converged = true;
    res.log_posterior = log_posterior(res.pi, counts, probs, prior);
    if (opt.record_trace) res.trace = {res.log_posterior, res.log_posterior};
    return res;
  }
  if (opt.record_trace) res.trace.push_back(log_posterior(res.pi, counts, probs, prior));

  const VectorXd a = (prior.q.array() - 1.0).matrix();
  double prev_delta = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= opt.max_iter; ++it) {
    const VectorXd w = probs * res.pi;
    VectorXd resp = VectorXd::Zero(D);
    for (Eigen::Index k = 0; k < counts.size(); ++k)
      if (counts[k] > 0 && w[k] > 0) resp += (counts[k] / w[k]) * probs.row(k).transpose();
    VectorXd next = a + res.pi.cwiseProduct(resp);
    const double s = next.sum();
    if (!(s > 0.0)) throw ModelError("EM update has no mass (no usable counts and flat prior)");
    next /= s;
    next = next.cwiseMax(opt.floor);
    next /= next.sum();
    const double delta = (next - res.pi).cwiseAbs().maxCoeff();
    res.pi = next;
    res.iterations = it;
    if (opt.record_trace) res.trace.push_back(log_posterior(res.pi, counts, probs, prior));
    const double rho = delta / prev_delta;  // NaN on the first step
    prev_delta = delta;
    if (delta < opt.tol && (delta == 0.0 || (rho < 1.0 && delta * rho / (1.0 - rho) < opt.tol))) {
      res.converged = true;
      break;
    }
  }
  res.log_posterior = log_posterior(res.pi, counts, probs, prior);
  return res;
}

// ---------------------------------------------------------------------------
// theta_d = log(pi_{d+1} / pi_1), d = 1..D-1
// ---------------------------------------------------------------------------

inline VectorXd theta_from_pi(const VectorXd& pi) {
  VectorXd th(pi.size() - 1);
  for (Eigen::Index d = 0; d + 1 < pi.size(); ++d) th[d] = std::log(pi[d + 1] / pi[0]);
  return th;
}

inline VectorXd pi_from_theta(const VectorXd& theta) {
  const double m = theta.size() ? std::max(0.0, theta.maxCoeff()) : 0.0;
  VectorXd pi(theta.size() + 1);
  pi[0] = std::exp(-m);
  for (Eigen::Index d = 0; d < theta.size(); ++d) pi[d + 1] = std::exp(theta[d] - m);
  return pi / pi.sum();
}

/// log pi_d(theta), computed without forming pi.
inline VectorXd log_pi_from_theta(const VectorXd& theta) {
  const double m = theta.size() ? std::max(0.0, theta.maxCoeff()) : 0.0;
  double s = std::exp(-m);
  for (Eigen::Index d = 0; d < theta.size(); ++d) s += std::exp(theta[d] - m);
  const double log_pi1 = -(m + std::log(s));
  VectorXd out(theta.size() + 1);
  out[0] = log_pi1;
  for (Eigen::Index d = 0; d < theta.size(); ++d) out[d + 1] = theta[d] + log_pi1;
  return out;
}

/// G_dl = d pi_d / d theta_l (D x (D-1)). With e^{theta_j}/s = pi_{j+1} and
/// 1/s = pi_1:  G_1l = -pi_1 pi_{l+1};  G_dl = pi_d (I(l = d-1) - pi_{l+1}).
inline MatrixXd jacobian_G(const VectorXd& theta) {
  const VectorXd pi = pi_from_theta(theta);
  const Eigen::Index D = pi.size();
  MatrixXd G(D, D - 1);
  for (Eigen::Index d = 0; d < D; ++d)
    for (Eigen::Index l = 0; l < D - 1; ++l) G(d, l) = pi[d] * ((d >= 1 && l == d - 1 ? 1.0 : 0.0) - pi[l + 1]);
  return G;
}

/// H_dlm = d^2 pi_d / d theta_l d theta_m; element d of the result is the
/// (D-1) x (D-1) matrix for pi_d. For d >= 2 with c = d-1:
///   pi_d [ I(l=c)I(m=c) - I(l=c) pi_{m+1} - I(m=c) pi_{l+1} - I(l=m) pi_{l+1} + 2 pi_{l+1} pi_{m+1} ]
/// and for d = 1:  pi_1 [ 2 pi_{l+1} pi_{m+1} - I(l=m) pi_{l+1} ].
inline std::vector<MatrixXd> hessian_H(const VectorXd& theta) {
  const VectorXd pi = pi_from_theta(theta);
  const Eigen::Index D = pi.size(), P = D - 1;
  std::vector<MatrixXd> H(static_cast<std::size_t>(D), MatrixXd::Zero(P, P));
  for (Eigen::Index l = 0; l < P; ++l)
    for (Eigen::Index m = 0; m < P; ++m) {
      const double el = pi[l + 1], em = pi[m + 1], lm = l == m ? 1.0 : 0.0;
      H[0](l, m) = pi[0] * (2.0 * el * em - lm * el);
      for (Eigen::Index d = 1; d < D; ++d) {
        const Eigen::Index c = d - 1;
        const double ilc = l == c ? 1.0 : 0.0, imc = m == c ? 1.0 : 0.0;
        H[static_cast<std::size_t>(d)](l, m) =
            pi[d] * (ilc * imc - ilc * em - imc * el - lm * el + 2.0 * el * em);
      }
    }
  return H;
}

/// log |G(theta)|: |det| of G with the pi_1 row removed, which equals prod_d pi_d.
inline double log_abs_det_G(const VectorXd& theta) { return log_pi_from_theta(theta).sum(); }

/// Hessian of log_posterior(pi(theta)) with respect to theta.
inline MatrixXd log_posterior_hessian(const VectorXd& theta, const VectorXd& counts, const MatrixXd& probs,
                                      const PriorSpec& prior) {
  const VectorXd pi = pi_from_theta(theta);
  const MatrixXd G = jacobian_G(theta);
  const auto H = hessian_H(theta);
  const Eigen::Index D = pi.size(), P = D - 1;
  MatrixXd S = MatrixXd::Zero(P, P);
  for (Eigen::Index k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    const auto row = probs.row(k);
    const double w = row.dot(pi);
    const Eigen::RowVectorXd pg = row * G;  // sum_d p_kd G_dl
    MatrixXd ph = MatrixXd::Zero(P, P);     // sum_d p_kd H_dlm
    for (Eigen::Index d = 0; d < D; ++d)
      if (row[d] != 0.0) ph += row[d] * H[static_cast<std::size_t>(d)];
    S += counts[k] * (ph * w - pg.transpose() * pg) / (w * w);
  }
  for (Eigen::Index d = 0; d < D; ++d) {
    const double a = prior.q[d] - 1.0;
    if (a == 0.0) continue;
    const Eigen::RowVectorXd g = G.row(d);
    S += a * (H[static_cast<std::size_t>(d)] * pi[d] - g.transpose() * g) / (pi[d] * pi[d]);
  }
  return S;
}

// ---------------------------------------------------------------------------
// Normal approximation + delta method
// ---------------------------------------------------------------------------

inline constexpr double kSingularEigen = 1e-10;

struct AsymptoticPosterior {
  VectorXd mu;      // theta at the mode
  MatrixXd S;       // Hessian at mu
  MatrixXd sigma;   // (-S)^{-1}, or its pseudo-inverse when singular
  MatrixXd pi_cov;  // G sigma G'
  bool singular = false;
};

/// Inverse of a symmetric positive semidefinite matrix via its
/// eigendecomposition; eigenvalues below kSingularEigen are dropped.
inline MatrixXd spd_inverse(const MatrixXd& A, bool* singular = nullptr) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
  const VectorXd& ev = es.eigenvalues();
  bool sing = false;
  VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < kSingularEigen) {
      sing = true;
      inv[i] = 0.0;
    } else {
      inv[i] = 1.0 / ev[i];
    }
  }
  if (singular) *singular = sing;
  MatrixXd out = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

inline AsymptoticPosterior asymptotic_posterior(const VectorXd& pi_mode, const VectorXd& counts,
                                                const MatrixXd& probs, const PriorSpec& prior) {
  AsymptoticPosterior a;
  a.mu = theta_from_pi(pi_mode);
  a.S = log_posterior_hessian(a.mu, counts, probs, prior);
  const MatrixXd neg = -0.5 * (a.S + a.S.transpose());
  a.sigma = spd_inverse(neg, &a.singular);
  const MatrixXd G = jacobian_G(a.mu);
  a.pi_cov = G * a.sigma * G.transpose();
  a.pi_cov = 0.5 * (a.pi_cov + a.pi_cov.transpose());
  return a;
}

struct Interval01 {
  double lo = 0.0;
  double hi = 1.0;
};

/// pi_d ± z_{(1-level)/2} sqrt(pi_cov_dd), clipped to [0, 1].
inline std::vector<Interval01> credibility_intervals(const VectorXd& pi_mode, const MatrixXd& pi_cov,
                                                     double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("credibility level must lie in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
  std::vector<Interval01> out;
  for (Eigen::Index d = 0; d < pi_mode.size(); ++d) {
    const double se = std::sqrt(std::max(0.0, pi_cov(d, d)));
    out.push_back({std::clamp(pi_mode[d] - z * se, 0.0, 1.0), std::clamp(pi_mode[d] + z * se, 0.0, 1.0)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-island summary
// ---------------------------------------------------------------------------

struct InferenceOptions {
  double tol = 1e-5;
  int max_iter = 100000;
  double ci_level = 0.95;
};

struct PosteriorSummary {
  VectorXd pi_mode;
  VectorXd theta_mode;
  MatrixXd theta_cov;
  MatrixXd pi_cov;
  std::vector<Interval01> ci;
  int em_iters = 0;
  bool converged = true;
  double logpost_at_mode = 0.0;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }
  VectorXd se() const { return pi_cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Variant pairs with identical probability columns (not identifiable).
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> duplicate_columns(const MatrixXd& probs) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  if (probs.rows() == 0) return out;
  for (Eigen::Index a = 0; a < probs.cols(); ++a)
    for (Eigen::Index b = a + 1; b < probs.cols(); ++b)
      if (probs.col(a) == probs.col(b)) out.push_back({a, b});
  return out;
}

inline PosteriorSummary infer_posterior(const VectorXd& counts, const MatrixXd& probs, const PriorSpec& prior,
                                        const InferenceOptions& opt = {}) {
  const Eigen::Index D = prior.q.size();
  PosteriorSummary s;
  if (D == 1) {
    s.pi_mode = VectorXd::Ones(1);
    s.theta_mode = VectorXd(0);
    s.theta_cov = MatrixXd(0, 0);
    s.pi_cov = MatrixXd::Zero(1, 1);
    s.ci = {{1.0, 1.0}};
    s.em_iters = 1;
    s.logpost_at_mode = log_posterior(s.pi_mode, counts, probs, prior);
    if (counts.sum() == 0) s.flags.push_back("no-data");
    return s;
  }

  const bool no_data = counts.size() == 0 || counts.sum() == 0;
  if (no_data) {
    s.flags.push_back("no-data");
    s.pi_mode = prior.mean();
    s.em_iters = 0;
    s.converged = true;
  } else {
    auto em = em_estimate(counts, probs, prior, {opt.tol, opt.max_iter, 1e-12, false, std::nullopt});
    s.pi_mode = em.pi;
    s.em_iters = em.iterations;
    s.converged = em.converged;
    if (!em.converged) s.flags.push_back("not-converged");
    if (!duplicate_columns(probs).empty()) s.flags.push_back("duplicate-variants");
  }
  s.logpost_at_mode = log_posterior(s.pi_mode, counts, probs, prior);

  auto asym = asymptotic_posterior(s.pi_mode, counts, probs, prior);
  s.theta_mode = asym.mu;
  s.theta_cov = asym.sigma;
  s.pi_cov = asym.pi_cov;
  if (asym.singular) s.flags.push_back("singular-hessian");
  s.ci = credibility_intervals(s.pi_mode, s.pi_cov, opt.ci_level);
  return s;
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings with a multivariate t proposal
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Independent generator stream for one island, derived from the global seed.
inline std::mt19937_64 island_rng(std::uint64_t seed, std::string_view island_id) {
  const std::uint64_t h = fnv1a(island_id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

class MultivariateT {
 public:
  MultivariateT(VectorXd mu, const MatrixXd& sigma, double df = 3.0) : mu_(std::move(mu)), df_(df) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (sigma + sigma.transpose()));
    const VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    root_ = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
    VectorXd inv(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) inv[i] = ev[i] > kSingularEigen ? 1.0 / ev[i] : 0.0;
    precision_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  }

  template <typename Rng>
  VectorXd sample(Rng& rng) const {
    std::normal_distribution<double> normal;
    std::chi_squared_distribution<double> chi2(df_);
    VectorXd z(mu_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    const double w = std::sqrt(chi2(rng) / df_);
    return mu_ + root_ * z / w;
  }

  /// Log density up to an additive constant.
  double log_density(const VectorXd& x) const {
    const VectorXd d = x - mu_;
    const double delta = d.dot(precision_ * d);
    return -0.5 * (df_ + static_cast<double>(mu_.size())) * std::log1p(delta / df_);
  }

  const VectorXd& mean() const { return mu_; }

 private:
  VectorXd mu_;
  double df_;
  MatrixXd root_;
  MatrixXd precision_;
};

struct MHProposalRecord {
  VectorXd proposal;
  VectorXd current;
  double log_lambda;
  double log_u;
  bool accepted;
};

struct ThetaChain {
  std::vector<VectorXd> samples;  // post burn-in
  double acceptance_rate = 0.0;
  double early_acceptance_rate = 0.0;  // over the first min(500, n) iterations
  std::vector<MHProposalRecord> log;
};

/// Independence sampler: accept theta* with probability
/// min{1, f(theta*) q(theta) / (f(theta) q(theta*))}.
template <typename LogTarget, typename Rng>
ThetaChain independence_mh(const LogTarget& log_target, const MultivariateT& proposal, int n, int burnin, Rng& rng,
                           bool record = false) {
  if (n <= 0 || burnin < 0 || burnin >= n) throw InputError("MH needs 0 <= burnin < n");
  ThetaChain chain;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd cur = proposal.sample(rng);
  double cur_f = log_target(cur), cur_q = proposal.log_density(cur);
  std::int64_t accepted = 0, early = 0;
  const int early_n = std::min(500, n);
  chain.samples.reserve(static_cast<std::size_t>(n - burnin));
  for (int j = 1; j <= n; ++j) {
    VectorXd prop = proposal.sample(rng);
    const double f = log_target(prop), q = proposal.log_density(prop);
    const double log_lambda = (f - cur_f) + (cur_q - q);
    const double log_u = std::log(unif(rng));
    const bool acc = std::isfinite(f) && (log_lambda >= 0.0 || log_u < log_lambda);
    if (record) chain.log.push_back({prop, cur, log_lambda, log_u, acc});
    if (acc) {
      cur = std::move(prop);
      cur_f = f;
      cur_q = q;
      ++accepted;
      if (j <= early_n) ++early;
    }
    if (j > burnin) chain.samples.push_back(cur);
  }
  chain.acceptance_rate = static_cast<double>(accepted) / n;
  chain.early_acceptance_rate = static_cast<double>(early) / early_n;
  return chain;
}

/// log P(Y | pi(theta)) + log Dir(pi(theta); q) + log |G(theta)|.
inline double log_target_theta(const VectorXd& theta, const VectorXd& counts, const MatrixXd& probs,
                               const PriorSpec& prior) {
  const VectorXd lpi = log_pi_from_theta(theta);
  const VectorXd pi = lpi.array().exp().matrix();
  double f = 0.0;
  if (counts.size() > 0) {
    const VectorXd w = probs * pi;
    for (Eigen::Index k = 0; k < counts.size(); ++k) {
      if (counts[k] == 0) continue;
      if (!(w[k] > 0.0)) return kNegInf;
      f += counts[k] * std::log(w[k]);
    }
  }
  for (Eigen::Index d = 0; d < lpi.size(); ++d) f += (prior.q[d] - 1.0) * lpi[d];
  return f + lpi.sum();
}

struct MHOptions {
  int n = 10000;
  int burnin = 1000;
  double proposal_scale = 1.0;
  bool record = false;
};

struct MHChain {
  std::vector<VectorXd> samples;  // simplex vectors, n - burnin of them
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  int burnin = 0;
  int n = 0;
  bool low_acceptance = false;
  std::vector<MHProposalRecord> log;

  VectorXd mean() const {
    VectorXd m = VectorXd::Zero(samples.empty() ? 0 : samples.front().size());
    for (const auto& s : samples) m += s;
    return samples.empty() ? m : VectorXd(m / static_cast<double>(samples.size()));
  }
};

template <typename Rng>
MHChain mh_sample(const PosteriorSummary& summary, const VectorXd& counts, const MatrixXd& probs,
                  const PriorSpec& prior, Rng& rng, const MHOptions& opt = {}, std::uint64_t seed = 0) {
  MHChain out;
  out.seed = seed;
  out.burnin = opt.burnin;
  out.n = opt.n;
  if (prior.q.size() == 1) {
    out.samples.assign(static_cast<std::size_t>(opt.n - opt.burnin), VectorXd::Ones(1));
    out.acceptance_rate = 1.0;
    return out;
  }
  MultivariateT proposal(summary.theta_mode, opt.proposal_scale * summary.theta_cov, 3.0);
  auto target = [&](const VectorXd& th) { return log_target_theta(th, counts, probs, prior); };
  auto chain = independence_mh(target, proposal, opt.n, opt.burnin, rng, opt.record);
  out.acceptance_rate = chain.acceptance_rate;
  out.low_acceptance = chain.early_acceptance_rate < 0.01;
  out.samples.reserve(chain.samples.size());
  for (const auto& th : chain.samples) out.samples.push_back(pi_from_theta(th));
  out.log = std::move(chain.log);
  return out;
}

}  // namespace splicequant
