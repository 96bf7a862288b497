#pragma once

// Annotation loading, gene islands, exon subdivision and spliced coordinates.
//
// All coordinates are 1-based and inclusive. After subdivide_exons() the exon
// pieces of an island are numbered 1..E in transcript (5'->3') orientation, so
// for minus-strand islands piece 1 is the genomically right-most piece.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "splicequant/error.hpp"
#include "splicequant/tsv.hpp"

namespace splicequant {

using Pos = std::int64_t;

enum class Strand : char { Plus = '+', Minus = '-' };

struct Interval {
  Pos start = 0;
  Pos end = 0;

  Pos length() const { return end - start + 1; }
  bool overlaps(const Interval& o) const { return start <= o.end && o.start <= end; }
  bool contains(Pos p) const { return start <= p && p <= end; }
  friend auto operator<=>(const Interval&, const Interval&) = default;
};

struct Exon {
  int id = 0;
  std::string chrom;
  Pos start = 0;
  Pos end = 0;

  Pos length() const { return end - start + 1; }
  Interval interval() const { return {start, end}; }
  friend bool operator==(const Exon&, const Exon&) = default;
};

struct Variant {
  std::string id;
  std::string gene_id;
  Strand strand = Strand::Plus;
  std::vector<int> exon_ids;  // strictly increasing island-local ids
  Pos length = 0;             // transcript length T

  friend bool operator==(const Variant&, const Variant&) = default;
};

struct GeneIsland {
  std::string island_id;
  std::string chrom;
  Strand strand = Strand::Plus;
  std::vector<Exon> exons;  // exons[i].id == i + 1
  std::vector<Variant> variants;
  std::vector<std::string> source_gene_ids;
  // For each exon piece, the ids of the pre-subdivision exons it came from.
  std::vector<std::vector<int>> exon_origins;
  bool subdivided = false;
  bool mixed_strand = false;

  const Exon& exon(int id) const { return exons.at(static_cast<std::size_t>(id - 1)); }

  Interval span() const {
    Interval s{exons.front().start, exons.front().end};
    for (const auto& e : exons) {
      s.start = std::min(s.start, e.start);
      s.end = std::max(s.end, e.end);
    }
    return s;
  }

  // Total genomic bp covered by the exon pieces. Only meaningful once subdivided.
  Pos covered_length() const {
    Pos n = 0;
    for (const auto& e : exons) n += e.length();
    return n;
  }

  const Variant* find_variant(const std::string& id) const {
    for (const auto& v : variants)
      if (v.id == id) return &v;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Annotation TSV
// ---------------------------------------------------------------------------

struct TranscriptRecord {
  std::string id;
  std::vector<Interval> exons;  // sorted by start
};

struct GeneRecord {
  std::string gene_id;
  std::string chrom;
  Strand strand = Strand::Plus;
  std::vector<TranscriptRecord> transcripts;  // sorted by id
};

inline std::vector<GeneRecord> load_annotation(std::istream& in) {
  tsv::LineReader reader(in);
  std::string line;
  if (!reader.next(line)) return {};
  tsv::expect_header(line, {"gene_id", "transcript_id", "chrom", "strand", "exon_start", "exon_end"},
                     reader.line_no());

  struct TxAcc {
    std::string gene;
    std::string chrom;
    Strand strand;
    std::vector<std::pair<Interval, std::int64_t>> exons;  // with source line
  };
  std::map<std::string, TxAcc> txs;
  std::map<std::string, std::pair<std::string, Strand>> gene_loc;

  while (reader.next(line)) {
    const auto ln = reader.line_no();
    auto f = tsv::split(line);
    if (f.size() != 6) throw InputError("expected 6 tab-separated columns, got " + std::to_string(f.size()), ln);
    std::string gene(f[0]), tx(f[1]), chrom(f[2]);
    if (gene.empty() || tx.empty() || chrom.empty()) throw InputError("empty identifier field", ln);
    if (f[3] != "+" && f[3] != "-") throw InputError("strand must be '+' or '-'", ln);
    const Strand strand = f[3] == "+" ? Strand::Plus : Strand::Minus;
    const Pos start = tsv::parse_int(f[4], ln, "exon_start");
    const Pos end = tsv::parse_int(f[5], ln, "exon_end");
    if (start < 1) throw InputError("exon_start must be >= 1", ln);
    if (end < start) throw InputError("exon_end < exon_start", ln);

    auto [git, gnew] = gene_loc.try_emplace(gene, chrom, strand);
    if (!gnew && (git->second.first != chrom || git->second.second != strand))
      throw InputError("gene " + gene + " spans several chromosomes/strands", ln);

    auto [it, fresh] = txs.try_emplace(tx, TxAcc{gene, chrom, strand, {}});
    if (!fresh && it->second.gene != gene)
      throw InputError("transcript " + tx + " listed under two genes", ln);
    for (const auto& [iv, _] : it->second.exons)
      if (iv.start == start && iv.end == end)
        throw InputError("duplicate exon " + std::to_string(start) + "-" + std::to_string(end) +
                             " for transcript " + tx,
                         ln);
    it->second.exons.push_back({{start, end}, ln});
  }

  std::map<std::string, GeneRecord> genes;
  for (auto& [tx_id, acc] : txs) {
    std::sort(acc.exons.begin(), acc.exons.end());
    TranscriptRecord rec{tx_id, {}};
    for (std::size_t i = 0; i < acc.exons.size(); ++i) {
      if (i > 0 && acc.exons[i].first.start <= acc.exons[i - 1].first.end)
        throw InputError("overlapping exons within transcript " + tx_id, acc.exons[i].second);
      rec.exons.push_back(acc.exons[i].first);
    }
    auto& g = genes[acc.gene];
    g.gene_id = acc.gene;
    g.chrom = acc.chrom;
    g.strand = acc.strand;
    g.transcripts.push_back(std::move(rec));
  }

  std::vector<GeneRecord> out;
  out.reserve(genes.size());
  for (auto& [_, g] : genes) out.push_back(std::move(g));
  return out;
}

inline std::vector<GeneRecord> load_annotation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotation file " + path);
  return load_annotation(in);
}

// ---------------------------------------------------------------------------
// Islands
// ---------------------------------------------------------------------------

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Groups genes whose exons overlap (transitively) into islands. Exons of the
/// returned islands are the distinct annotated exon intervals in genomic order;
/// they may overlap until subdivide_exons() is applied.
inline std::vector<GeneIsland> build_islands(const std::vector<GeneRecord>& genes) {
  detail::UnionFind uf(genes.size());

  std::map<std::string, std::vector<std::pair<Interval, std::size_t>>> by_chrom;
  for (std::size_t g = 0; g < genes.size(); ++g)
    for (const auto& tx : genes[g].transcripts)
      for (const auto& iv : tx.exons) by_chrom[genes[g].chrom].push_back({iv, g});

  for (auto& [_, exons] : by_chrom) {
    std::sort(exons.begin(), exons.end());
    Pos run_end = -1;
    std::size_t run_gene = 0;
    for (const auto& [iv, g] : exons) {
      if (iv.start <= run_end) {
        uf.unite(run_gene, g);
      } else {
        run_gene = g;
      }
      if (iv.end > run_end) run_end = iv.end;
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t g = 0; g < genes.size(); ++g) groups[uf.find(g)].push_back(g);

  std::vector<GeneIsland> islands;
  for (const auto& [_, members] : groups) {
    GeneIsland isl;
    isl.chrom = genes[members.front()].chrom;
    std::set<Interval> distinct;
    int plus = 0, minus = 0;
    for (auto g : members) {
      isl.source_gene_ids.push_back(genes[g].gene_id);
      (genes[g].strand == Strand::Plus ? plus : minus) += 1;
      for (const auto& tx : genes[g].transcripts)
        for (const auto& iv : tx.exons) distinct.insert(iv);
    }
    std::sort(isl.source_gene_ids.begin(), isl.source_gene_ids.end());
    for (const auto& id : isl.source_gene_ids) isl.island_id += (isl.island_id.empty() ? "" : ",") + id;
    isl.strand = minus > plus ? Strand::Minus : Strand::Plus;
    isl.mixed_strand = plus > 0 && minus > 0;

    std::map<Interval, int> id_of;
    for (const auto& iv : distinct) {
      const int id = static_cast<int>(isl.exons.size()) + 1;
      id_of[iv] = id;
      isl.exons.push_back({id, isl.chrom, iv.start, iv.end});
      isl.exon_origins.push_back({id});
    }
    for (auto g : members) {
      for (const auto& tx : genes[g].transcripts) {
        Variant v{tx.id, genes[g].gene_id, genes[g].strand, {}, 0};
        for (const auto& iv : tx.exons) {
          v.exon_ids.push_back(id_of.at(iv));
          v.length += iv.length();
        }
        isl.variants.push_back(std::move(v));
      }
    }
    std::sort(isl.variants.begin(), isl.variants.end(),
              [](const Variant& a, const Variant& b) { return a.id < b.id; });
    islands.push_back(std::move(isl));
  }

  std::sort(islands.begin(), islands.end(), [](const GeneIsland& a, const GeneIsland& b) {
    return std::pair(a.chrom, a.span().start) < std::pair(b.chrom, b.span().start);
  });
  return islands;
}

/// Splits exons so that every piece is either fully included in or fully
/// absent from each variant. Adjacent bp share a piece iff they are covered by
/// exactly the same set of variants. Piece ids follow transcript orientation.
inline GeneIsland subdivide_exons(const GeneIsland& island) {
  const std::size_t nv = island.variants.size();

  std::vector<Pos> bounds;
  for (const auto& e : island.exons) {
    bounds.push_back(e.start);
    bounds.push_back(e.end + 1);
  }
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

  struct Segment {
    Interval iv;
    std::vector<bool> members;
    bool covered = false;
  };
  std::vector<Segment> segs;
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i)
    segs.push_back({{bounds[i], bounds[i + 1] - 1}, std::vector<bool>(nv, false), false});

  auto mark = [&](const Interval& iv, auto&& fn) {
    auto it = std::lower_bound(segs.begin(), segs.end(), iv.start,
                               [](const Segment& s, Pos p) { return s.iv.start < p; });
    for (; it != segs.end() && it->iv.end <= iv.end; ++it) fn(*it);
  };
  for (const auto& e : island.exons) mark(e.interval(), [](Segment& s) { s.covered = true; });
  for (std::size_t v = 0; v < nv; ++v)
    for (int id : island.variants[v].exon_ids)
      mark(island.exon(id).interval(), [v](Segment& s) { s.members[v] = true; });

  std::vector<Segment> pieces;
  for (auto& s : segs) {
    if (!s.covered) continue;
    if (!pieces.empty() && pieces.back().iv.end + 1 == s.iv.start && pieces.back().members == s.members) {
      pieces.back().iv.end = s.iv.end;
    } else {
      pieces.push_back(std::move(s));
    }
  }
  if (island.strand == Strand::Minus) std::reverse(pieces.begin(), pieces.end());

  GeneIsland out;
  out.island_id = island.island_id;
  out.chrom = island.chrom;
  out.strand = island.strand;
  out.source_gene_ids = island.source_gene_ids;
  out.mixed_strand = island.mixed_strand;
  out.subdivided = true;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    out.exons.push_back({static_cast<int>(p) + 1, island.chrom, pieces[p].iv.start, pieces[p].iv.end});
    std::vector<int> origins;
    for (const auto& e : island.exons)
      if (e.interval().overlaps(pieces[p].iv)) {
        const auto& src = island.exon_origins.empty() ? std::vector<int>{e.id}
                                                      : island.exon_origins[static_cast<std::size_t>(e.id - 1)];
        origins.insert(origins.end(), src.begin(), src.end());
      }
    std::sort(origins.begin(), origins.end());
    origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
    out.exon_origins.push_back(std::move(origins));
  }
  for (std::size_t v = 0; v < nv; ++v) {
    Variant nvar = island.variants[v];
    nvar.exon_ids.clear();
    for (std::size_t p = 0; p < pieces.size(); ++p)
      if (pieces[p].members[v]) nvar.exon_ids.push_back(static_cast<int>(p) + 1);
    out.variants.push_back(std::move(nvar));
  }
  return out;
}

/// Convenience: annotation records -> subdivided islands.
inline std::vector<GeneIsland> make_islands(const std::vector<GeneRecord>& genes) {
  auto raw = build_islands(genes);
  std::vector<GeneIsland> out;
  out.reserve(raw.size());
  for (const auto& isl : raw) out.push_back(subdivide_exons(isl));
  return out;
}

// ---------------------------------------------------------------------------
// Spliced (transcript-space) coordinates
// ---------------------------------------------------------------------------

struct SplicedLayout {
  std::string variant_id;
  std::vector<int> exon_ids;  // the variant's pieces, transcript order
  std::vector<Pos> starts;    // s*_1 = 1, one entry per exon of the variant
  Pos length = 0;             // T

  /// s*_k for 1-based k in [1, |exons| + 1]; s*_{|exons|+1} = T + 1.
  Pos start_at(std::size_t k) const { return k <= starts.size() ? starts[k - 1] : length + 1; }

  /// 1-based position of an island exon id within the variant, if present.
  std::optional<std::size_t> index_of(int exon_id) const {
    auto it = std::lower_bound(exon_ids.begin(), exon_ids.end(), exon_id);
    if (it == exon_ids.end() || *it != exon_id) return std::nullopt;
    return static_cast<std::size_t>(it - exon_ids.begin()) + 1;
  }
};

inline SplicedLayout spliced_layout(const GeneIsland& island, const Variant& variant) {
  SplicedLayout lay{variant.id, variant.exon_ids, {}, 0};
  Pos s = 1;
  for (int id : variant.exon_ids) {
    lay.starts.push_back(s);
    s += island.exon(id).length();
  }
  lay.length = s - 1;
  return lay;
}

/// Transcript coordinate of a genomic bp, or nullopt if the bp is not in the variant.
inline std::optional<Pos> to_transcript(const GeneIsland& island, const SplicedLayout& lay, Pos g) {
  for (std::size_t k = 0; k < lay.exon_ids.size(); ++k) {
    const auto& e = island.exon(lay.exon_ids[k]);
    if (e.start <= g && g <= e.end)
      return lay.starts[k] + (island.strand == Strand::Plus ? g - e.start : e.end - g);
  }
  return std::nullopt;
}

/// Genomic blocks (ascending, abutting blocks merged) covered by the
/// transcript-space interval [t_start, t_end] of a variant.
inline std::vector<Interval> to_genomic_blocks(const GeneIsland& island, const SplicedLayout& lay, Pos t_start,
                                               Pos t_end) {
  std::vector<Interval> blocks;
  for (std::size_t k = 0; k < lay.exon_ids.size(); ++k) {
    const Pos ts = lay.starts[k];
    const Pos te = lay.start_at(k + 2) - 1;
    const Pos lo = std::max(ts, t_start), hi = std::min(te, t_end);
    if (lo > hi) continue;
    const auto& e = island.exon(lay.exon_ids[k]);
    if (island.strand == Strand::Plus)
      blocks.push_back({e.start + (lo - ts), e.start + (hi - ts)});
    else
      blocks.push_back({e.end - (hi - ts), e.end - (lo - ts)});
  }
  std::sort(blocks.begin(), blocks.end());
  std::vector<Interval> merged;
  for (const auto& b : blocks) {
    if (!merged.empty() && merged.back().end + 1 == b.start)
      merged.back().end = b.end;
    else
      merged.push_back(b);
  }
  return merged;
}

}  // namespace splicequant
