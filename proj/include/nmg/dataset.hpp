#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nmg/error.hpp"
#include "nmg/fem.hpp"
#include "nmg/l2proj.hpp"
#include "nmg/mesh.hpp"
#include "nmg/sparse.hpp"
#include "nmg/text.hpp"

namespace nmg {

// ---------------------------------------------------------------------------
// Record layouts
// ---------------------------------------------------------------------------

/// Which fine/coarse entries make up one record. Members are the fine patch
/// of the center; member_columns[k] is the fine patch of members[k]; the
/// coarse columns are the coarse patch of the center.
struct RecordLayout {
  std::size_t coarse_center = 0;
  std::size_t center = 0;
  std::vector<std::size_t> members;
  std::vector<std::vector<std::size_t>> member_columns;
  std::vector<std::size_t> coarse_columns;

  std::size_t patch_size() const noexcept { return members.size(); }
  std::size_t feature_len() const noexcept {
    std::size_t n = 0;
    for (const auto& c : member_columns) n += c.size();
    return n;
  }
  std::size_t target_len() const noexcept { return members.size() * coarse_columns.size(); }
};

struct FamilyShape {
  std::size_t feature_len = 0;
  std::size_t target_len = 0;
  friend bool operator==(const FamilyShape&, const FamilyShape&) = default;
};

namespace detail {

using Offset = std::array<long, 2>;

/// Offsets of a reference site. Every boundary site of the same patch-size
/// is mapped onto one reference by a symmetry of the lattice pattern, so one
/// model per patch-size sees a single, consistent member order.
struct ReferenceSite {
  std::vector<Offset> members;
  std::vector<std::vector<Offset>> member_columns;
};

/// Lattice symmetries that keep the (1,1) diagonal direction.
enum class Symmetry { identity, rotate_half, swap_xy, swap_anti };

inline Offset apply(Symmetry s, const Offset& o) {
  switch (s) {
    case Symmetry::identity: return o;
    case Symmetry::rotate_half: return {-o[0], -o[1]};
    case Symmetry::swap_xy: return {o[1], o[0]};
    case Symmetry::swap_anti: return {-o[1], -o[0]};
  }
  return o;
}

inline const ReferenceSite& reference_site_1d(bool endpoint) {
  static const ReferenceSite interior{{{0, 0}, {-1, 0}, {1, 0}},
                                      std::vector<std::vector<Offset>>(3, {{0, 0}, {-1, 0}, {1, 0}})};
  static const ReferenceSite end{{{0, 0}, {1, 0}}, {{{0, 0}, {1, 0}}, {{0, 0}, {-1, 0}, {1, 0}}}};
  return endpoint ? end : interior;
}

/// Reference sites read off a 4x4 structured mesh: interior (2,2), edge
/// (2,0), corner (0,0) and corner (4,0).
inline const ReferenceSite& reference_site_2d(std::size_t patch_size) {
  static const std::map<std::size_t, ReferenceSite> sites = [] {
    const TriMesh r = structured_tri_mesh(4, 4);
    const TriAdjacency adj(r);
    const auto coords = [](std::size_t id) { return Offset{long(id % 5), long(id / 5)}; };
    std::map<std::size_t, ReferenceSite> out;
    for (Offset c : {Offset{2, 2}, Offset{2, 0}, Offset{0, 0}, Offset{4, 0}}) {
      const auto p = adj.patch(static_cast<std::size_t>(c[0] + 5 * c[1]));
      ReferenceSite site;
      for (std::size_t m : p.members) {
        const Offset mc = coords(m);
        site.members.push_back({mc[0] - c[0], mc[1] - c[1]});
        std::vector<Offset> cols;
        for (std::size_t k : adj.patch(m).members) {
          const Offset kc = coords(k);
          cols.push_back({kc[0] - mc[0], kc[1] - mc[1]});
        }
        site.member_columns.push_back(std::move(cols));
      }
      out.emplace(p.size(), std::move(site));
    }
    return out;
  }();
  const auto it = sites.find(patch_size);
  if (it == sites.end()) fail(ErrorKind::wrong_family, "no 2D family for patch-size " + std::to_string(patch_size));
  return it->second;
}

}  // namespace detail

/// Feature/target widths of the model family serving `patch_size`.
inline FamilyShape family_shape(int dimension, std::size_t patch_size) {
  detail::ReferenceSite site;
  if (dimension == 1) {
    if (patch_size != 2 && patch_size != 3)
      fail(ErrorKind::wrong_family, "no 1D family for patch-size " + std::to_string(patch_size));
    site = detail::reference_site_1d(patch_size == 2);
  } else if (dimension == 2) {
    site = detail::reference_site_2d(patch_size);
  } else {
    fail(ErrorKind::invalid_argument, "dimension must be 1 or 2");
  }
  FamilyShape s;
  for (const auto& c : site.member_columns) s.feature_len += c.size();
  s.target_len = site.members.size() * site.members.size();
  return s;
}

/// Builds record layouts for every coarse node of a fine/coarse pair.
///
/// 1D: coarse node k sits on fine node coarse_ids[k]. 2D: both meshes carry
/// lattices and coarse (I, J) sits on fine (2I, 2J).
class LayoutBuilder {
 public:
  LayoutBuilder(std::size_t n_fine_1d, std::vector<std::size_t> coarse_ids)
      : dimension_(1), n_fine_(n_fine_1d), coarse_ids_(std::move(coarse_ids)) {
    require(coarse_ids_.size() >= 2, ErrorKind::invalid_argument, "need at least two coarse nodes");
  }

  LayoutBuilder(const TriMesh& fine, const TriMesh& coarse) : dimension_(2) {
    require(fine.lattice.has_value() && coarse.lattice.has_value(), ErrorKind::invalid_argument,
            "2D record layouts need structured meshes");
    fine_lat_ = *fine.lattice;
    coarse_lat_ = *coarse.lattice;
    const auto& f = fine_lat_;
    const auto& c = coarse_lat_;
    require(f.i_min == 2 * c.i_min && f.i_max == 2 * c.i_max && f.j_min == 2 * c.j_min && f.j_max == 2 * c.j_max,
            ErrorKind::invalid_argument, "coarse lattice is not the sublattice of the fine lattice");
    coarse_pos_.assign(coarse.n_nodes(), {0, 0});
    for (long J = c.j_min; J <= c.j_max; ++J)
      for (long I = c.i_min; I <= c.i_max; ++I) {
        const long id = c.at(I, J);
        if (id >= 0) coarse_pos_[static_cast<std::size_t>(id)] = {I, J};
      }
    coarse_ids_.resize(coarse.n_nodes());
    for (std::size_t k = 0; k < coarse.n_nodes(); ++k) {
      const long id = f.at(2 * coarse_pos_[k][0], 2 * coarse_pos_[k][1]);
      require(id >= 0, ErrorKind::invalid_argument, "coarse node has no fine counterpart");
      coarse_ids_[k] = static_cast<std::size_t>(id);
    }
  }

  int dimension() const noexcept { return dimension_; }
  std::size_t n_coarse() const noexcept { return coarse_ids_.size(); }
  const std::vector<std::size_t>& coarse_ids() const noexcept { return coarse_ids_; }

  /// Patch-size of the record centered at coarse node k.
  std::size_t patch_size(std::size_t k) const { return layout(k).patch_size(); }

  RecordLayout layout(std::size_t k) const {
    require(k < coarse_ids_.size(), ErrorKind::out_of_range, "coarse node " + std::to_string(k));
    return dimension_ == 1 ? layout_1d(k) : layout_2d(k);
  }

 private:
  RecordLayout layout_1d(std::size_t k) const {
    const bool left = k == 0, right = k + 1 == coarse_ids_.size();
    const auto& site = detail::reference_site_1d(left || right);
    const long sign = right ? -1 : 1;
    const long f = static_cast<long>(coarse_ids_[k]);
    RecordLayout out;
    out.coarse_center = k;
    out.center = coarse_ids_[k];
    const auto fine = [&](long idx) {
      require(idx >= 0 && idx < static_cast<long>(n_fine_), ErrorKind::wrong_family,
              "patch of coarse node " + std::to_string(k) + " leaves the mesh");
      return static_cast<std::size_t>(idx);
    };
    for (std::size_t m = 0; m < site.members.size(); ++m) {
      const long mi = f + sign * site.members[m][0];
      out.members.push_back(fine(mi));
      std::vector<std::size_t> cols;
      for (const auto& o : site.member_columns[m]) cols.push_back(fine(mi + sign * o[0]));
      out.member_columns.push_back(std::move(cols));
      const long ci = static_cast<long>(k) + sign * site.members[m][0];
      require(ci >= 0 && ci < static_cast<long>(coarse_ids_.size()), ErrorKind::wrong_family, "coarse patch");
      out.coarse_columns.push_back(static_cast<std::size_t>(ci));
    }
    return out;
  }

  RecordLayout layout_2d(std::size_t k) const {
    using detail::Symmetry;
    const auto [I, J] = coarse_pos_[k];
    const auto& c = coarse_lat_;
    const bool l = I == c.i_min, r = I == c.i_max, b = J == c.j_min, t = J == c.j_max;
    std::size_t size = 7;
    Symmetry sym = Symmetry::identity;
    if (l && b) size = 4;
    else if (r && t) size = 4, sym = Symmetry::rotate_half;
    else if (r && b) size = 3;
    else if (l && t) size = 3, sym = Symmetry::rotate_half;
    else if (b) size = 5;
    else if (t) size = 5, sym = Symmetry::rotate_half;
    else if (l) size = 5, sym = Symmetry::swap_xy;
    else if (r) size = 5, sym = Symmetry::swap_anti;
    const auto& site = detail::reference_site_2d(size);

    RecordLayout out;
    out.coarse_center = k;
    out.center = coarse_ids_[k];
    const auto fine = [&](long i, long j) {
      const long id = fine_lat_.at(i, j);
      require(id >= 0, ErrorKind::wrong_family, "patch of coarse node " + std::to_string(k) + " leaves the mesh");
      return static_cast<std::size_t>(id);
    };
    for (std::size_t m = 0; m < site.members.size(); ++m) {
      const auto om = detail::apply(sym, site.members[m]);
      const long mi = 2 * I + om[0], mj = 2 * J + om[1];
      out.members.push_back(fine(mi, mj));
      std::vector<std::size_t> cols;
      for (const auto& o : site.member_columns[m]) {
        const auto oc = detail::apply(sym, o);
        cols.push_back(fine(mi + oc[0], mj + oc[1]));
      }
      out.member_columns.push_back(std::move(cols));
      const long cid = c.at(I + om[0], J + om[1]);
      require(cid >= 0, ErrorKind::wrong_family, "coarse patch leaves the mesh");
      out.coarse_columns.push_back(static_cast<std::size_t>(cid));
    }
    return out;
  }

  int dimension_;
  std::size_t n_fine_ = 0;
  std::vector<std::size_t> coarse_ids_;
  Lattice fine_lat_, coarse_lat_;
  std::vector<std::array<long, 2>> coarse_pos_;
};

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct PatchRecord {
  long class_id = 0;
  std::size_t patch_size = 0;
  std::vector<double> features;
  std::vector<double> target;
  std::vector<double> aux_lumped;
  friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

/// M entries at each member's patch columns, members in layout order.
inline std::vector<double> extract_features(const SparseMatrix& m, const RecordLayout& layout) {
  std::vector<double> f;
  f.reserve(layout.feature_len());
  for (std::size_t k = 0; k < layout.members.size(); ++k)
    for (std::size_t col : layout.member_columns[k]) f.push_back(m(layout.members[k], col));
  return f;
}

inline std::vector<double> extract_lumped(const SparseMatrix& m, const RecordLayout& layout) {
  std::vector<double> a;
  for (std::size_t k : layout.members) {
    a.push_back(m.row_sum(k));
    require(a.back() > 0.0, ErrorKind::invalid_mass, "nonpositive lumped mass at row " + std::to_string(k));
  }
  return a;
}

inline PatchRecord extract_record(const SparseMatrix& m, const SparseMatrix& b, const RecordLayout& layout,
                                  long class_id, const FamilyShape& family) {
  if (layout.feature_len() != family.feature_len || layout.target_len() != family.target_len)
    fail(ErrorKind::wrong_family, "patch-size " + std::to_string(layout.patch_size()) +
                                      " does not match the model family");
  PatchRecord r;
  r.class_id = class_id;
  r.patch_size = layout.patch_size();
  r.features = extract_features(m, layout);
  r.target.reserve(layout.target_len());
  for (std::size_t k : layout.members)
    for (std::size_t c : layout.coarse_columns) r.target.push_back(b(k, c));
  r.aux_lumped = extract_lumped(m, layout);
  return r;
}

// ---------------------------------------------------------------------------
// Class schedules
// ---------------------------------------------------------------------------

enum class ScheduleKind { linear, refinement };

inline const char* to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "refinement"; }

inline std::vector<long> class_schedule_linear(long n0, long k, long count) {
  require(n0 > 0 && k > 0 && count > 0, ErrorKind::invalid_argument, "linear schedule needs positive inputs");
  std::vector<long> out;
  for (long i = 0; i < count; ++i) out.push_back(n0 + i * k);
  return out;
}

inline std::vector<long> class_schedule_refinement(long n0, long factor, long levels) {
  require(n0 > 0 && levels > 0, ErrorKind::invalid_argument, "refinement schedule needs positive inputs");
  require(factor == 2 || factor == 4, ErrorKind::invalid_argument, "refinement factor must be 2 or 4");
  std::vector<long> out{n0};
  for (long i = 1; i < levels; ++i) out.push_back(out.back() * factor);
  return out;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerationConfig {
  int dimension = 1;
  std::size_t patch_size = 3;
  double jitter = kDefaultJitter;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 2D class N: a strip of N/16 by 8 square cells over [0,1] x [0, 8/(N/16)].
inline void strip_shape(long n, long& nx, long& ny) {
  require(n % 32 == 0 && n >= 64, ErrorKind::invalid_argument,
          "2D classes need N divisible by 32 and at least 64, got " + std::to_string(n));
  nx = n / 16;
  ny = 8;
}

namespace detail {

struct MeshSample {
  SparseMatrix m;
  SparseMatrix b;
  LayoutBuilder layouts;
};

inline MeshSample sample_mesh(const GenerationConfig& cfg, long n, std::uint64_t seed) {
  if (cfg.dimension == 1) {
    const auto fine = jitter_mesh(uniform_mesh_1d(n, 0.0, 1.0), cfg.jitter, seed);
    const auto coarse = coarsen_1d(fine, 2);
    return {assemble_mass(fine), assemble_coupling(fine, coarse.mesh),
            LayoutBuilder(fine.n_nodes(), coarse.fine_ids)};
  }
  long nx = 0, ny = 0;
  strip_shape(n, nx, ny);
  const double height = 8.0 / static_cast<double>(nx);
  const auto coarse = jitter_mesh(structured_tri_mesh(nx / 2, ny / 2, 1.0, height), cfg.jitter, seed);
  const auto fine = refine_lattice_along_edges(coarse, cfg.jitter, mix_seed(seed, 1));
  return {assemble_mass(fine), assemble_coupling(fine, coarse), LayoutBuilder(fine, coarse)};
}

}  // namespace detail

/// Jitters fresh meshes with N elements and collects one record per coarse
/// node of the requested patch-size until `count` records exist.
inline std::vector<PatchRecord> generate_class(const GenerationConfig& cfg, long n, std::size_t count,
                                               std::uint64_t seed) {
  require(cfg.dimension == 1 || cfg.dimension == 2, ErrorKind::invalid_argument, "dimension must be 1 or 2");
  if (cfg.dimension == 1) require(n >= 4, ErrorKind::invalid_argument, "1D classes need N >= 4");
  const FamilyShape family = family_shape(cfg.dimension, cfg.patch_size);
  std::vector<PatchRecord> out;
  out.reserve(count);
  for (std::uint64_t draw = 0; out.size() < count; ++draw) {
    const auto s = detail::sample_mesh(cfg, n, mix_seed(seed, draw));
    std::size_t found = 0;
    for (std::size_t k = 0; k < s.layouts.n_coarse() && out.size() < count; ++k) {
      RecordLayout layout;
      try {
        layout = s.layouts.layout(k);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::wrong_family) throw;
        continue;
      }
      if (layout.patch_size() != cfg.patch_size) continue;
      out.push_back(extract_record(s.m, s.b, layout, n, family));
      ++found;
    }
    require(found > 0, ErrorKind::invalid_argument,
            "N = " + std::to_string(n) + " has no coarse node of patch-size " + std::to_string(cfg.patch_size));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets and splits
// ---------------------------------------------------------------------------

struct ClassCount {
  long n = 0;
  std::size_t count = 0;
  friend bool operator==(const ClassCount&, const ClassCount&) = default;
};

struct DatasetManifest {
  int dimension = 1;
  std::size_t patch_size = 3;
  ScheduleKind schedule = ScheduleKind::linear;
  std::uint64_t seed = 0;
  double jitter = kDefaultJitter;
  std::vector<ClassCount> classes;
  std::size_t feature_len = 0;
  std::size_t target_len = 0;

  std::size_t total_records() const {
    std::size_t n = 0;
    for (const auto& c : classes) n += c.count;
    return n;
  }
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PatchRecord> records;
};

inline Dataset generate_dataset(const GenerationConfig& cfg, ScheduleKind kind, const std::vector<long>& classes,
                                std::size_t per_class, std::uint64_t seed) {
  Dataset d;
  d.manifest.dimension = cfg.dimension;
  d.manifest.patch_size = cfg.patch_size;
  d.manifest.schedule = kind;
  d.manifest.seed = seed;
  d.manifest.jitter = cfg.jitter;
  const auto shape = family_shape(cfg.dimension, cfg.patch_size);
  d.manifest.feature_len = shape.feature_len;
  d.manifest.target_len = shape.target_len;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto recs = generate_class(cfg, classes[i], per_class, mix_seed(seed, static_cast<std::uint64_t>(classes[i])));
    d.manifest.classes.push_back({classes[i], recs.size()});
    for (auto& r : recs) d.records.push_back(std::move(r));
  }
  return d;
}

struct Split {
  std::vector<PatchRecord> train;
  std::vector<PatchRecord> validation;
  std::vector<PatchRecord> test;
};

/// Stratified by class: 20% test, then 20% of the rest for validation.
inline Split split(const std::vector<PatchRecord>& records, std::uint64_t seed) {
  require(records.size() >= 5, ErrorKind::invalid_argument, "splitting needs at least 5 records");
  std::map<long, std::vector<std::size_t>> by_class;
  std::vector<long> order;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = by_class.try_emplace(records[i].class_id);
    if (inserted) order.push_back(records[i].class_id);
    it->second.push_back(i);
  }
  Split out;
  for (long cls : order) {
    auto& idx = by_class[cls];
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = idx.size();
    const auto n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n - n_test)));
    for (std::size_t k = 0; k < n; ++k) {
      auto& dst = k < n_test ? out.test : (k < n_test + n_val ? out.validation : out.train);
      dst.push_back(records[idx[k]]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

inline std::string manifest_line(const DatasetManifest& m) {
  std::string s = "dimension=" + std::to_string(m.dimension) + " patch_size=" + std::to_string(m.patch_size) +
                  " schedule=" + to_string(m.schedule) + " seed=" + std::to_string(m.seed) +
                  " jitter=" + format_real(m.jitter) + " classes=";
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(m.classes[i].n) + ':' + std::to_string(m.classes[i].count);
  }
  s += " feature_len=" + std::to_string(m.feature_len) + " target_len=" + std::to_string(m.target_len);
  return s;
}

inline void write_dataset(std::ostream& os, const Dataset& d) {
  os << manifest_line(d.manifest) << '\n';
  for (const auto& r : d.records) {
    os << r.class_id << ' ' << r.patch_size << " |";
    for (double v : r.features) os << ' ' << format_real(v);
    os << " |";
    for (double v : r.target) os << ' ' << format_real(v);
    os << " |";
    for (double v : r.aux_lumped) os << ' ' << format_real(v);
    os << '\n';
  }
}

inline void write_dataset(const std::string& path, const Dataset& d) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
  write_dataset(os, d);
  if (!os) fail(ErrorKind::io_error, "write to " + path + " failed");
}

inline Dataset read_dataset(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  const auto bad = [&](const std::string& what) {
    fail(ErrorKind::parse_error, "line " + std::to_string(lineno) + ": " + what);
  };
  Dataset d;
  auto& m = d.manifest;
  if (!std::getline(is, line)) bad("missing manifest");
  ++lineno;
  std::map<std::string, std::string> kv;
  for (auto tok : split_ws(line)) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) bad("manifest token without '='");
    kv[std::string(tok.substr(0, eq))] = std::string(tok.substr(eq + 1));
  }
  const auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) bad(std::string("manifest lacks ") + key);
    return it->second;
  };
  try {
    m.dimension = parse_int<int>(need("dimension"));
    m.patch_size = parse_int<std::size_t>(need("patch_size"));
    const auto& sched = need("schedule");
    if (sched == "linear") m.schedule = ScheduleKind::linear;
    else if (sched == "refinement") m.schedule = ScheduleKind::refinement;
    else bad("unknown schedule " + sched);
    m.seed = parse_int<std::uint64_t>(need("seed"));
    m.jitter = parse_real(need("jitter"));
    const auto& cls = need("classes");
    if (!cls.empty()) {
      for (auto c : split_char(cls, ',')) {
        const auto parts = split_char(c, ':');
        if (parts.size() != 2) bad("malformed class entry");
        m.classes.push_back({parse_int<long>(parts[0]), parse_int<std::size_t>(parts[1])});
      }
    }
    m.feature_len = parse_int<std::size_t>(need("feature_len"));
    m.target_len = parse_int<std::size_t>(need("target_len"));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::parse_error && std::string(e.what()).find("line ") == std::string::npos)
      bad(e.what());
    throw;
  }

  const std::size_t expected = m.total_records();
  d.records.reserve(expected);
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto sections = split_char(line, '|');
    if (sections.size() != 4) bad("record needs 4 sections");
    PatchRecord r;
    try {
      const auto head = split_ws(sections[0]);
      if (head.size() != 2) bad("record header needs class and patch size");
      r.class_id = parse_int<long>(head[0]);
      r.patch_size = parse_int<std::size_t>(head[1]);
      for (auto t : split_ws(sections[1])) r.features.push_back(parse_real(t));
      for (auto t : split_ws(sections[2])) r.target.push_back(parse_real(t));
      for (auto t : split_ws(sections[3])) r.aux_lumped.push_back(parse_real(t));
    } catch (const Error& e) {
      if (std::string(e.what()).find("line ") == std::string::npos) bad(e.what());
      throw;
    }
    if (r.features.size() != m.feature_len || r.target.size() != m.target_len ||
        r.aux_lumped.size() != r.patch_size)
      bad("record lengths disagree with manifest");
    d.records.push_back(std::move(r));
  }
  if (d.records.size() != expected)
    bad("expected " + std::to_string(expected) + " records, found " + std::to_string(d.records.size()));
  return d;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io_error, "cannot open " + path);
  return read_dataset(is);
}

/// Hash of the manifest line; stored in model checkpoints.
inline std::uint64_t manifest_hash(const DatasetManifest& m) {
  Fnv1a h;
  h.update(manifest_line(m));
  return h.value();
}

// ---------------------------------------------------------------------------
// Balance diagnostic
// ---------------------------------------------------------------------------

struct BalanceReport {
  std::vector<long> gaps;
  double ratio = 1.0;  // max gap / min gap
  bool uneven() const { return ratio > 1.0 + 1e-12; }
};

inline BalanceReport balance_diagnostic(const DatasetManifest& m) {
  std::vector<long> ns;
  for (const auto& c : m.classes) ns.push_back(c.n);
  std::sort(ns.begin(), ns.end());
  BalanceReport r;
  for (std::size_t i = 1; i < ns.size(); ++i) r.gaps.push_back(ns[i] - ns[i - 1]);
  if (!r.gaps.empty()) {
    const auto [lo, hi] = std::minmax_element(r.gaps.begin(), r.gaps.end());
    if (*lo > 0) r.ratio = static_cast<double>(*hi) / static_cast<double>(*lo);
  }
  return r;
}

inline void print_balance(std::ostream& os, const BalanceReport& r) {
  os << "gaps:";
  for (long g : r.gaps) os << ' ' << g;
  os << "\ngap_ratio: " << format_real(r.ratio) << (r.uneven() ? " (uneven)" : "") << '\n';
}

}  // namespace nmg
