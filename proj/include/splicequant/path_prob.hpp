#pragma once

// Exon-path probabilities p_kd: the probability that a fragment from variant
// d follows exon path k, given the fragment-length and relative-start laws.

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "splicequant/distributions.hpp"
#include "splicequant/genome_model.hpp"
#include "splicequant/pathing.hpp"

namespace splicequant {

/// The path is followed iff a1 <= S <= b1 and a2 <= S + L <= b2.
struct PathBounds {
  Pos a1 = 0, b1 = 0, a2 = 0, b2 = 0;
  friend bool operator==(const PathBounds&, const PathBounds&) = default;
};

namespace detail {

// 1-based index in the variant of the first exon of a consecutive run, if the
// run is consecutive under the variant.
inline std::optional<std::size_t> consecutive_run(const SplicedLayout& lay, const std::vector<int>& ids) {
  if (ids.empty()) return std::nullopt;
  auto j = lay.index_of(ids.front());
  if (!j) return std::nullopt;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    const std::size_t k = *j + i;
    if (k > lay.exon_ids.size() || lay.exon_ids[k - 1] != ids[i]) return std::nullopt;
  }
  return j;
}

}  // namespace detail

/// Start/end bounds of a path under a variant, or nullopt if either side is
/// not a run of consecutive exons of that variant.
inline std::optional<PathBounds> path_bounds(const ExonPath& path, const SplicedLayout& lay, Pos r) {
  auto jl = detail::consecutive_run(lay, path.left);
  auto jr = detail::consecutive_run(lay, path.right);
  if (!jl || !jr) return std::nullopt;
  const std::size_t j = *jl, k = path.left.size() - 1;
  const std::size_t jp = *jr, kp = path.right.size() - 1;
  PathBounds b;
  b.a1 = std::max(lay.start_at(j), lay.start_at(j + k) - r + 1);
  b.b1 = std::min(lay.start_at(j + 1) - 1, lay.start_at(j + k + 1) - r);
  b.a2 = std::max(lay.start_at(jp) + r, lay.start_at(jp + kp) + 1);
  b.b2 = std::min(lay.start_at(jp + 1) + r - 1, lay.start_at(jp + kp + 1));
  return b;
}

/// p_kd = sum_l [ (phi(min{b1/T, (b2-l)/T, S_T})
///                 - phi(min{max{(a1-1)/T, (a2-l-1)/T}, S_T})) / phi(S_T) ]_+ P(L=l|T)
/// `length_given_T` must already be conditioned on T.
inline double path_probability(const ExonPath& path, const SplicedLayout& lay, const LengthPMF& length_given_T,
                               const StartCDF& phi, Pos r) {
  auto b = path_bounds(path, lay, r);
  if (!b) return 0.0;
  const double T = static_cast<double>(lay.length);
  double p = 0.0;
  for (std::size_t i = 0; i < length_given_T.support.size(); ++i) {
    const Pos l = length_given_T.support[i];
    const double st = start_truncation(lay.length, l);
    const double denom = phi(st);
    if (!(denom > 0.0)) continue;
    const double hi = std::min({static_cast<double>(b->b1) / T, static_cast<double>(b->b2 - l) / T, st});
    const double lo =
        std::min(std::max(static_cast<double>(b->a1 - 1) / T, static_cast<double>(b->a2 - l - 1) / T), st);
    const double v = (phi(hi) - phi(lo)) / denom;
    if (v > 0.0) p += v * length_given_T.probs[i];
  }
  return p;
}

inline constexpr double kProbClamp = 1e-300;

struct PathProbMatrix {
  std::string island_id;
  std::vector<ExonPath> paths;
  std::vector<std::string> variant_ids;
  Eigen::MatrixXd probs;  // |paths| x |variants|

  std::vector<std::size_t> zero_rows;                          // paths impossible under every variant
  std::vector<std::pair<std::string, std::string>> bad_columns;  // variant id, reason
  std::int64_t clamped = 0;
};

/// Per-island precomputation shared by every path of the island: layouts and
/// the conditional length law of each variant. Rows are memoized, so repeated
/// calls (e.g. simulation replicates) reuse earlier work. The island and the
/// distributions are borrowed and must outlive the model.
class IslandPathModel {
 public:
  IslandPathModel(const GeneIsland&, FragmentDistributions&&, Pos) = delete;

  IslandPathModel(const GeneIsland& island, const FragmentDistributions& dist, Pos read_length)
      : island_(&island), r_(read_length) {
    for (const auto& v : island.variants) {
      auto lay = spliced_layout(island, v);
      const auto& bin = dist.lookup(lay.length);
      Column c{lay, {}, &bin.start, {}};
      try {
        c.length = admissible_length_pmf(bin.length, bin.start, lay.length,
                                         "variant " + v.id + " of island " + island.island_id);
      } catch (const ModelError& e) {
        c.error = e.what();
      }
      columns_.push_back(std::move(c));
    }
  }

  const std::vector<double>& row(const ExonPath& path) {
    auto it = memo_.find(path);
    if (it != memo_.end()) return it->second;
    std::vector<double> row(columns_.size(), 0.0);
    for (std::size_t d = 0; d < columns_.size(); ++d) {
      const auto& c = columns_[d];
      if (!c.error.empty()) continue;
      row[d] = path_probability(path, c.layout, c.length, *c.start, r_);
    }
    return memo_.emplace(path, std::move(row)).first->second;
  }

  PathProbMatrix matrix(std::span<const ExonPath> paths) {
    PathProbMatrix m;
    m.island_id = island_->island_id;
    m.paths.assign(paths.begin(), paths.end());
    for (const auto& v : island_->variants) m.variant_ids.push_back(v.id);
    for (const auto& c : columns_)
      if (!c.error.empty()) m.bad_columns.push_back({c.layout.variant_id, c.error});
    m.probs.resize(static_cast<Eigen::Index>(paths.size()), static_cast<Eigen::Index>(columns_.size()));
    for (std::size_t k = 0; k < paths.size(); ++k) {
      const auto& rw = row(paths[k]);
      bool any = false;
      for (std::size_t d = 0; d < rw.size(); ++d) {
        double v = rw[d];
        if (v > 0.0 && v < kProbClamp) {
          v = 0.0;
          ++m.clamped;
        }
        m.probs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) = v;
        any = any || v > 0.0;
      }
      if (!any) m.zero_rows.push_back(k);
    }
    return m;
  }

  const SplicedLayout& layout(std::size_t d) const { return columns_[d].layout; }
  const LengthPMF& length_given_T(std::size_t d) const { return columns_[d].length; }
  const StartCDF& start(std::size_t d) const { return *columns_[d].start; }
  bool column_ok(std::size_t d) const { return columns_[d].error.empty(); }
  const std::string& column_error(std::size_t d) const { return columns_[d].error; }
  Pos read_length() const { return r_; }
  const GeneIsland& island() const { return *island_; }

 private:
  struct Column {
    SplicedLayout layout;
    LengthPMF length;
    const StartCDF* start;
    std::string error;
  };
  const GeneIsland* island_;
  Pos r_;
  std::vector<Column> columns_;
  std::map<ExonPath, std::vector<double>> memo_;
};

inline PathProbMatrix build_prob_matrix(const GeneIsland& island, std::span<const ExonPath> paths,
                                        const FragmentDistributions& dist, Pos read_length) {
  IslandPathModel model(island, dist, read_length);
  return model.matrix(paths);
}

/// Audit dump: island_id  path  variant_id  p_kd
inline void write_prob_matrix(std::ostream& out, const PathProbMatrix& m, bool header = true) {
  if (header) out << "island_id\tpath\tvariant_id\tp_kd\n";
  const auto prec = out.precision(17);
  for (std::size_t k = 0; k < m.paths.size(); ++k)
    for (std::size_t d = 0; d < m.variant_ids.size(); ++d)
      out << m.island_id << '\t' << serialize_path(m.paths[k]) << '\t' << m.variant_ids[d] << '\t'
          << m.probs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) << '\n';
  out.precision(prec);
}

}  // namespace splicequant
