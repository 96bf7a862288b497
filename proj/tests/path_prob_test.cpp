#include <gtest/gtest.h>

#include <map>
#include <random>

#include "splicequant/path_prob.hpp"
#include "test_util.hpp"

using namespace splicequant;

namespace {

// Every path a variant can emit, with its probability, by enumerating all
// (length, integer start) pairs.
std::map<ExonPath, double> enumerate_paths(const SplicedLayout& lay, const LengthPMF& len_given_T,
                                           const StartCDF& phi, Pos r) {
  std::map<ExonPath, double> out;
  const Pos T = lay.length;
  auto touched = [&lay](Pos a, Pos b) {
    std::vector<int> ids;
    for (std::size_t k = 1; k <= lay.exon_ids.size(); ++k)
      if (lay.start_at(k) <= b && a <= lay.start_at(k + 1) - 1) ids.push_back(lay.exon_ids[k - 1]);
    return ids;
  };
  for (std::size_t i = 0; i < len_given_T.support.size(); ++i) {
    const Pos l = len_given_T.support[i];
    const double denom = phi(static_cast<double>(T - l + 1) / T);
    for (Pos s = 1; s <= T - l + 1; ++s) {
      const double ps = (phi(static_cast<double>(s) / T) - phi(static_cast<double>(s - 1) / T)) / denom;
      if (ps == 0.0) continue;
      out[{touched(s, s + r - 1), touched(s + l - r, s + l - 1)}] += ps * len_given_T.probs[i];
    }
  }
  return out;
}

}  // namespace

TEST(PathBounds, ToyVariantOneSingleExonPath) {
  const auto isl = testutil::toy_island();
  auto lay = spliced_layout(isl, isl.variants[0]);
  auto b = path_bounds(parse_path("{1}|{1}"), lay, 75);
  ASSERT_TRUE(b);
  EXPECT_EQ(*b, (PathBounds{1, 226, 76, 301}));
  EXPECT_FALSE(path_bounds(parse_path("{1,3}|{3}"), lay, 75));
  auto lay2 = spliced_layout(isl, isl.variants[1]);
  EXPECT_TRUE(path_bounds(parse_path("{1,3}|{3}"), lay2, 75));
  EXPECT_FALSE(path_bounds(parse_path("{1}|{2}"), lay2, 75));
}

TEST(PathProbability, PointMassUniformByHand) {
  // Variant 2 (T = 800), L = 200, uniform starts over 601 positions.
  // Path {1}|{1}: S in [1, 226], S + L in [76, 301] -> S in [1, 101]: 101 starts.
  const auto isl = testutil::toy_island();
  auto lay = spliced_layout(isl, isl.variants[1]);
  auto len = LengthPMF::from_weights({{200, 1.0}});
  auto phi = StartCDF::uniform(800);
  EXPECT_NEAR(path_probability(parse_path("{1}|{1}"), lay, len, phi, 75), 101.0 / 601.0, 1e-15);
}

TEST(PathProbability, MatchesEnumerationOnToyGene) {
  const auto isl = testutil::toy_island();
  auto pmf = LengthPMF::from_weights({{150, 0.2}, {200, 0.5}, {260, 0.3}});
  StartCDF phi({0.1, 0.3, 0.55, 0.8, 1.0}, {0.02, 0.2, 0.45, 0.8, 1.0});
  for (const auto& v : isl.variants) {
    auto lay = spliced_layout(isl, v);
    auto len = admissible_length_pmf(pmf, phi, lay.length);
    auto brute = enumerate_paths(lay, len, phi, 75);
    double total = 0;
    for (const auto& [p, want] : brute) {
      EXPECT_NEAR(path_probability(p, lay, len, phi, 75), want, 1e-12) << serialize_path(p);
      total += want;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(PathProbability, RandomIslandsMatchEnumeration) {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 25; ++rep) {
    auto isl = testutil::random_small_island(rng);
    const Pos r = 40;
    auto pmf = rep % 2 ? LengthPMF::from_weights({{90, 1.0}}) : LengthPMF::from_weights({{60, 0.3}, {95, 0.4}, {140, 0.3}});
    auto phi = rep % 3 ? StartCDF::uniform(50) : StartCDF({0.2, 0.5, 0.9, 1.0}, {0.05, 0.3, 0.7, 1.0});
    const auto dist = FragmentDistributions::single(pmf, phi);
    IslandPathModel model(isl, dist, r);
    for (std::size_t d = 0; d < isl.variants.size(); ++d) {
      if (!model.column_ok(d)) continue;
      auto brute = enumerate_paths(model.layout(d), model.length_given_T(d), phi, r);
      for (const auto& [p, want] : brute) EXPECT_NEAR(model.row(p)[d], want, 1e-12);
    }
  }
}

TEST(PathProbability, ImpossiblePathsAreZeroAndMatrixFlagsThem) {
  const auto isl = testutil::toy_island();
  auto pmf = LengthPMF::from_weights({{200, 1.0}});
  const auto dist = FragmentDistributions::single(pmf, StartCDF::uniform(100));
  IslandPathModel model(isl, dist, 75);
  std::vector<ExonPath> paths{parse_path("{1}|{1}"), parse_path("{1,2}|{3}"), parse_path("{2}|{1}")};
  auto m = model.matrix(paths);
  EXPECT_GT(m.probs(1, 0), 0.0);
  EXPECT_EQ(m.probs(1, 1), 0.0);
  EXPECT_EQ(m.probs(1, 2), 0.0);
  EXPECT_EQ(m.zero_rows, (std::vector<std::size_t>{2}));
}

TEST(PathProbability, ShortVariantColumnIsReported) {
  const auto isl = testutil::toy_island();
  auto pmf = LengthPMF::from_weights({{850, 1.0}});  // longer than variants 2 (800) and 3 (400)
  const auto dist = FragmentDistributions::single(pmf, StartCDF::uniform(100));
  IslandPathModel model(isl, dist, 75);
  EXPECT_TRUE(model.column_ok(0));
  EXPECT_FALSE(model.column_ok(1));
  auto m = model.matrix(std::vector<ExonPath>{parse_path("{1}|{3}")});
  EXPECT_EQ(m.bad_columns.size(), 2u);
}
