#pragma once

// Exon paths: the pair of exon-piece sequences visited by the two ends of a
// paired-end fragment, and per-island counts of them.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "splicequant/error.hpp"
#include "splicequant/genome_model.hpp"
#include "splicequant/tsv.hpp"

namespace splicequant {

struct FragmentAlignment {
  std::string fragment_id;
  std::string chrom;
  std::vector<Interval> left_blocks;   // genomically left mate
  std::vector<Interval> right_blocks;  // genomically right mate

  static Pos aligned_length(const std::vector<Interval>& blocks) {
    Pos n = 0;
    for (const auto& b : blocks) n += b.length();
    return n;
  }
  Pos left_length() const { return aligned_length(left_blocks); }
  Pos right_length() const { return aligned_length(right_blocks); }
  Pos first_bp() const { return left_blocks.front().start; }
  Pos last_bp() const { return std::max(left_blocks.back().end, right_blocks.back().end); }
};

struct ExonPath {
  std::vector<int> left;
  std::vector<int> right;

  friend auto operator<=>(const ExonPath&, const ExonPath&) = default;
};

class PathParseError : public InputError {
 public:
  PathParseError(const std::string& what, std::size_t pos)
      : InputError("malformed exon path at position " + std::to_string(pos) + ": " + what), pos_(pos) {}
  std::size_t position() const { return pos_; }

 private:
  std::size_t pos_;
};

inline std::string serialize_path(const ExonPath& p) {
  std::string s;
  auto side = [&s](const std::vector<int>& ids) {
    s += '{';
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(ids[i]);
    }
    s += '}';
  };
  side(p.left);
  s += '|';
  side(p.right);
  return s;
}

inline ExonPath parse_path(std::string_view text) {
  std::size_t i = 0;
  auto expect = [&](char c) {
    if (i >= text.size() || text[i] != c)
      throw PathParseError(std::string("expected '") + c + "'", i);
    ++i;
  };
  auto side = [&]() {
    std::vector<int> ids;
    expect('{');
    while (true) {
      const std::size_t begin = i;
      while (i < text.size() && text[i] >= '0' && text[i] <= '9') ++i;
      if (i == begin) throw PathParseError("expected exon id", i);
      if (i - begin > 9) throw PathParseError("exon id too large", begin);
      const int id = std::stoi(std::string(text.substr(begin, i - begin)));
      if (id < 1) throw PathParseError("exon ids are positive", begin);
      if (!ids.empty() && id <= ids.back()) throw PathParseError("exon ids must be strictly increasing", begin);
      ids.push_back(id);
      if (i < text.size() && text[i] == ',') {
        ++i;
        continue;
      }
      break;
    }
    expect('}');
    return ids;
  };
  ExonPath p;
  p.left = side();
  expect('|');
  p.right = side();
  if (i != text.size()) throw PathParseError("trailing characters", i);
  return p;
}

enum class UnmappedReason { NoExon, OffExon, Orientation };

inline const char* to_string(UnmappedReason r) {
  switch (r) {
    case UnmappedReason::NoExon: return "no-exon";
    case UnmappedReason::OffExon: return "off-exon";
    case UnmappedReason::Orientation: return "orientation";
  }
  return "?";
}

struct PathOutcome {
  std::optional<ExonPath> path;
  UnmappedReason reason = UnmappedReason::NoExon;  // meaningful when !path

  bool mapped() const { return path.has_value(); }
};

namespace detail {

// Island pieces touched by a set of blocks; nullopt if any bp is outside all pieces.
inline std::optional<std::vector<int>> pieces_of(const GeneIsland& island, const std::vector<Interval>& blocks) {
  std::vector<int> ids;
  for (const auto& b : blocks) {
    Pos covered = 0;
    for (const auto& e : island.exons) {
      const Pos lo = std::max(b.start, e.start), hi = std::min(b.end, e.end);
      if (lo > hi) continue;
      covered += hi - lo + 1;
      ids.push_back(e.id);
    }
    if (covered != b.length()) return std::nullopt;
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace detail

/// Exon path of a fragment within an island whose exons have been subdivided.
/// Left/right are in transcript orientation: for a minus-strand island the
/// genomically right mate is the transcript-left end.
inline PathOutcome fragment_to_path(const FragmentAlignment& frag, const GeneIsland& island) {
  if (frag.chrom != island.chrom)
    throw std::invalid_argument("fragment " + frag.fragment_id + " on " + frag.chrom + " routed to island on " +
                                island.chrom);
  const bool plus = island.strand == Strand::Plus;
  const auto& tl_blocks = plus ? frag.left_blocks : frag.right_blocks;
  const auto& tr_blocks = plus ? frag.right_blocks : frag.left_blocks;

  // 5' end of each mate in transcript sense
  const bool ordered = plus ? frag.left_blocks.front().start <= frag.right_blocks.front().start
                            : frag.right_blocks.back().end >= frag.left_blocks.back().end;

  auto l = detail::pieces_of(island, tl_blocks);
  auto r = detail::pieces_of(island, tr_blocks);
  if (!l || !r) return {std::nullopt, UnmappedReason::OffExon};
  if (!ordered || l->front() > r->front()) return {std::nullopt, UnmappedReason::Orientation};
  return {ExonPath{std::move(*l), std::move(*r)}, UnmappedReason::NoExon};
}

// ---------------------------------------------------------------------------
// Routing fragments to islands
// ---------------------------------------------------------------------------

/// Per-chromosome index of exon pieces for routing a genomic bp to its island.
class IslandIndex {
 public:
  struct Hit {
    std::size_t island;
    int exon_id;
  };

  explicit IslandIndex(std::span<const GeneIsland> islands) : islands_(islands) {
    for (std::size_t i = 0; i < islands.size(); ++i)
      for (const auto& e : islands[i].exons) by_chrom_[islands[i].chrom].push_back({e.interval(), i, e.id});
    for (auto& [_, v] : by_chrom_)
      std::sort(v.begin(), v.end(), [](const Entry& a, const Entry& b) { return a.iv.start < b.iv.start; });
  }

  std::optional<Hit> locate(const std::string& chrom, Pos p) const {
    auto it = by_chrom_.find(chrom);
    if (it == by_chrom_.end()) return std::nullopt;
    const auto& v = it->second;
    auto ub = std::upper_bound(v.begin(), v.end(), p, [](Pos x, const Entry& e) { return x < e.iv.start; });
    if (ub == v.begin()) return std::nullopt;
    --ub;
    if (!ub->iv.contains(p)) return std::nullopt;
    return Hit{ub->island, ub->exon_id};
  }

  std::span<const GeneIsland> islands() const { return islands_; }

 private:
  struct Entry {
    Interval iv;
    std::size_t island;
    int exon_id;
  };
  std::span<const GeneIsland> islands_;
  std::unordered_map<std::string, std::vector<Entry>> by_chrom_;
};

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

struct PathCountTable {
  std::string island_id;
  std::map<ExonPath, std::int64_t> counts;
  std::int64_t total_N = 0;

  void add(const ExonPath& p, std::int64_t n = 1) {
    counts[p] += n;
    total_N += n;
  }

  void merge(const PathCountTable& other) {
    for (const auto& [p, n] : other.counts) add(p, n);
  }
};

struct UnmappedTally {
  std::array<std::int64_t, 3> by_reason{};

  void add(UnmappedReason r, std::int64_t n = 1) { by_reason[static_cast<std::size_t>(r)] += n; }
  std::int64_t total() const { return by_reason[0] + by_reason[1] + by_reason[2]; }
  std::int64_t operator[](UnmappedReason r) const { return by_reason[static_cast<std::size_t>(r)]; }
};

/// Accumulates path counts over a stream of fragments. Memory is bounded by
/// the number of distinct paths, not the number of fragments. Counters over
/// disjoint shards combine with merge() in any order.
class PathCounter {
 public:
  explicit PathCounter(const IslandIndex& index) : index_(&index) {}

  PathOutcome add(const FragmentAlignment& frag) {
    ++seen_;
    auto hit = index_->locate(frag.chrom, frag.first_bp());
    if (!hit) {
      unmapped_.add(UnmappedReason::NoExon);
      return {std::nullopt, UnmappedReason::NoExon};
    }
    const auto& island = index_->islands()[hit->island];
    auto out = fragment_to_path(frag, island);
    if (out.path) {
      auto& t = tables_[hit->island];
      if (t.island_id.empty()) t.island_id = island.island_id;
      t.add(*out.path);
    } else {
      unmapped_.add(out.reason);
    }
    return out;
  }

  void merge(const PathCounter& other) {
    seen_ += other.seen_;
    for (std::size_t i = 0; i < unmapped_.by_reason.size(); ++i) unmapped_.by_reason[i] += other.unmapped_.by_reason[i];
    for (const auto& [i, t] : other.tables_) {
      auto& mine = tables_[i];
      if (mine.island_id.empty()) mine.island_id = t.island_id;
      mine.merge(t);
    }
  }

  /// Tables in island order (the order of the index's island list).
  std::vector<PathCountTable> tables() const {
    std::vector<PathCountTable> out;
    for (const auto& [_, t] : tables_) out.push_back(t);
    return out;
  }

  const std::map<std::size_t, PathCountTable>& tables_by_island() const { return tables_; }
  const UnmappedTally& unmapped() const { return unmapped_; }
  std::int64_t seen() const { return seen_; }
  std::int64_t mapped() const { return seen_ - unmapped_.total(); }

 private:
  const IslandIndex* index_;
  std::map<std::size_t, PathCountTable> tables_;
  UnmappedTally unmapped_;
  std::int64_t seen_ = 0;
};

struct PathCountResult {
  std::vector<PathCountTable> tables;
  UnmappedTally unmapped;
  std::int64_t total = 0;
};

inline PathCountResult count_paths(std::span<const FragmentAlignment> frags, std::span<const GeneIsland> islands) {
  IslandIndex index(islands);
  PathCounter counter(index);
  for (const auto& f : frags) counter.add(f);
  return {counter.tables(), counter.unmapped(), counter.seen()};
}

// ---------------------------------------------------------------------------
// Fragments TSV: fragment_id  chrom  left_blocks  right_blocks
// ---------------------------------------------------------------------------

inline std::vector<Interval> parse_blocks(std::string_view s, std::int64_t line) {
  std::vector<Interval> blocks;
  for (auto part : tsv::split(s, ';')) {
    auto dash = part.find('-');
    if (dash == std::string_view::npos) throw InputError("block '" + std::string(part) + "' is not start-end", line);
    Interval iv{tsv::parse_int(part.substr(0, dash), line, "block start"),
                tsv::parse_int(part.substr(dash + 1), line, "block end")};
    if (iv.start < 1 || iv.end < iv.start) throw InputError("invalid block '" + std::string(part) + "'", line);
    if (!blocks.empty() && iv.start <= blocks.back().end)
      throw InputError("blocks must be sorted and disjoint", line);
    blocks.push_back(iv);
  }
  return blocks;
}

inline std::string format_blocks(const std::vector<Interval>& blocks) {
  std::string s;
  for (const auto& b : blocks) {
    if (!s.empty()) s += ';';
    s += std::to_string(b.start) + "-" + std::to_string(b.end);
  }
  return s;
}

inline constexpr std::string_view kFragmentsHeader = "fragment_id\tchrom\tleft_blocks\tright_blocks";

class FragmentReader {
 public:
  explicit FragmentReader(std::istream& in) : reader_(in) {
    std::string line;
    if (!reader_.next(line)) {
      done_ = true;
      return;
    }
    tsv::expect_header(line, {"fragment_id", "chrom", "left_blocks", "right_blocks"}, reader_.line_no());
  }

  bool next(FragmentAlignment& frag) {
    if (done_) return false;
    std::string line;
    if (!reader_.next(line)) {
      done_ = true;
      return false;
    }
    const auto ln = reader_.line_no();
    auto f = tsv::split(line);
    if (f.size() != 4) throw InputError("expected 4 tab-separated columns, got " + std::to_string(f.size()), ln);
    frag.fragment_id = std::string(f[0]);
    frag.chrom = std::string(f[1]);
    frag.left_blocks = parse_blocks(f[2], ln);
    frag.right_blocks = parse_blocks(f[3], ln);
    return true;
  }

  std::int64_t line_no() const { return reader_.line_no(); }

 private:
  tsv::LineReader reader_;
  bool done_ = false;
};

inline std::vector<FragmentAlignment> read_fragments(std::istream& in) {
  FragmentReader reader(in);
  std::vector<FragmentAlignment> out;
  FragmentAlignment f;
  while (reader.next(f)) out.push_back(f);
  return out;
}

inline void write_fragments_header(std::ostream& out) { out << kFragmentsHeader << '\n'; }

inline void write_fragment(std::ostream& out, const FragmentAlignment& f) {
  out << f.fragment_id << '\t' << f.chrom << '\t' << format_blocks(f.left_blocks) << '\t'
      << format_blocks(f.right_blocks) << '\n';
}

// ---------------------------------------------------------------------------
// Path-counts TSV: island_id  path  count
// ---------------------------------------------------------------------------

inline void write_path_counts(std::ostream& out, std::span<const PathCountTable> tables) {
  std::vector<const PathCountTable*> sorted;
  for (const auto& t : tables) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const PathCountTable* a, const PathCountTable* b) { return a->island_id < b->island_id; });
  out << "island_id\tpath\tcount\n";
  for (const auto* t : sorted)
    for (const auto& [p, n] : t->counts) out << t->island_id << '\t' << serialize_path(p) << '\t' << n << '\n';
}

/// Reads a path-counts TSV. Repeated (island, path) rows are summed.
inline std::vector<PathCountTable> read_path_counts(std::istream& in) {
  tsv::LineReader reader(in);
  std::string line;
  if (!reader.next(line)) return {};
  tsv::expect_header(line, {"island_id", "path", "count"}, reader.line_no());
  std::map<std::string, PathCountTable> tables;
  while (reader.next(line)) {
    const auto ln = reader.line_no();
    auto f = tsv::split(line);
    if (f.size() != 3) throw InputError("expected 3 tab-separated columns", ln);
    ExonPath p;
    try {
      p = parse_path(f[1]);
    } catch (const PathParseError& e) {
      throw InputError(e.what(), ln);
    }
    const auto n = tsv::parse_int(f[2], ln, "count");
    if (n < 0) throw InputError("negative count", ln);
    auto& t = tables[std::string(f[0])];
    t.island_id = std::string(f[0]);
    t.add(p, n);
  }
  std::vector<PathCountTable> out;
  for (auto& [_, t] : tables) out.push_back(std::move(t));
  return out;
}

}  // namespace splicequant
