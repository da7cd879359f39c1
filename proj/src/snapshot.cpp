#include "bivalid/snapshot.hpp"

#include <omp.h>

#include <algorithm>
#include <fstream>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "bivalid/error.hpp"
#include "bivalid/io.hpp"

namespace bivalid {

Layer parse_layer(std::string_view s) {
  if (s == "holders" || s == "holder" || s == "institutions") return Layer::holders;
  if (s == "assets" || s == "asset" || s == "securities") return Layer::assets;
  throw InputError("unknown layer '" + std::string(s) + "'");
}

const char* to_string(Layer layer) { return layer == Layer::holders ? "holders" : "assets"; }

// ---------------------------------------------------------------------------

Snapshot Snapshot::from_entries(std::string date, std::vector<Entry> entries, bool weighted) {
  std::vector<std::string> hs, as;
  hs.reserve(entries.size());
  as.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.shares < 0) throw InputError("negative shares for (" + e.holder + ", " + e.asset + ")");
    if (e.shares == 0) continue;
    hs.push_back(e.holder);
    as.push_back(e.asset);
  }
  std::sort(hs.begin(), hs.end());
  hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
  std::sort(as.begin(), as.end());
  as.erase(std::unique(as.begin(), as.end()), as.end());

  auto index = [](const std::vector<std::string>& ids, const std::string& id) {
    return static_cast<index_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };
  std::vector<Triplet> ts;
  ts.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.shares == 0) continue;
    ts.push_back({index(hs, e.holder), index(as, e.asset), weighted ? e.shares : 1.0});
  }
  return from_triplets(std::move(date), std::move(hs), std::move(as), std::move(ts), weighted);
}

Snapshot Snapshot::from_triplets(std::string date, std::vector<std::string> holder_ids,
                                 std::vector<std::string> asset_ids, std::vector<Triplet> ts,
                                 bool weighted) {
  std::sort(ts.begin(), ts.end(), [](const Triplet& x, const Triplet& y) {
    return x.holder != y.holder ? x.holder < y.holder : x.asset < y.asset;
  });
  std::vector<Triplet> kept;
  kept.reserve(ts.size());
  for (const auto& t : ts) {
    if (t.holder >= holder_ids.size() || t.asset >= asset_ids.size())
      throw InputError("entry references an unknown id index");
    if (t.shares < 0)
      throw InputError("negative shares for (" + holder_ids[t.holder] + ", " + asset_ids[t.asset] + ")");
    if (t.shares == 0) continue;
    if (!kept.empty() && kept.back().holder == t.holder && kept.back().asset == t.asset) {
      if (kept.back().shares != t.shares)
        throw InputError("conflicting duplicate entry (" + holder_ids[t.holder] + ", " + asset_ids[t.asset] + ")");
      continue;
    }
    kept.push_back(t);
  }

  // Compact away ids without entries.
  std::vector<char> h_used(holder_ids.size(), 0), a_used(asset_ids.size(), 0);
  for (const auto& t : kept) {
    h_used[t.holder] = 1;
    a_used[t.asset] = 1;
  }
  std::vector<index_t> h_map(holder_ids.size()), a_map(asset_ids.size());
  Snapshot s;
  s.date_ = std::move(date);
  s.weighted_ = weighted;
  for (std::size_t i = 0; i < holder_ids.size(); ++i) {
    if (!h_used[i]) continue;
    h_map[i] = static_cast<index_t>(s.holders_.size());
    s.holders_.push_back(std::move(holder_ids[i]));
  }
  for (std::size_t i = 0; i < asset_ids.size(); ++i) {
    if (!a_used[i]) continue;
    a_map[i] = static_cast<index_t>(s.assets_.size());
    s.assets_.push_back(std::move(asset_ids[i]));
  }
  if (!std::is_sorted(s.holders_.begin(), s.holders_.end()) ||
      std::adjacent_find(s.holders_.begin(), s.holders_.end()) != s.holders_.end() ||
      !std::is_sorted(s.assets_.begin(), s.assets_.end()) ||
      std::adjacent_find(s.assets_.begin(), s.assets_.end()) != s.assets_.end())
    throw InputError("id lists must be sorted and unique");

  const std::size_t nh = s.holders_.size(), na = s.assets_.size();
  s.row_ptr_.assign(nh + 1, 0);
  s.col_ptr_.assign(na + 1, 0);
  s.row_idx_.reserve(kept.size());
  s.row_w_.reserve(kept.size());
  for (const auto& t : kept) {
    const index_t h = h_map[t.holder], a = a_map[t.asset];
    s.row_ptr_[h + 1]++;
    s.col_ptr_[a + 1]++;
    s.row_idx_.push_back(a);
    s.row_w_.push_back(weighted ? t.shares : 1.0);
  }
  for (std::size_t i = 0; i < nh; ++i) s.row_ptr_[i + 1] += s.row_ptr_[i];
  for (std::size_t i = 0; i < na; ++i) s.col_ptr_[i + 1] += s.col_ptr_[i];
  s.col_idx_.resize(kept.size());
  std::vector<std::size_t> fill(s.col_ptr_.begin(), s.col_ptr_.end() - 1);
  for (index_t h = 0; h < nh; ++h)
    for (auto a : s.assets_of(h)) s.col_idx_[fill[a]++] = h;
  return s;
}

double Snapshot::shares(index_t holder, index_t asset) const {
  const auto row = assets_of(holder);
  const auto it = std::lower_bound(row.begin(), row.end(), asset);
  if (it == row.end() || *it != asset) return 0.0;
  return row_w_[row_ptr_[holder] + static_cast<std::size_t>(it - row.begin())];
}

std::optional<index_t> Snapshot::find(Layer layer, std::string_view id) const {
  const auto& v = ids(layer);
  const auto it = std::lower_bound(v.begin(), v.end(), id);
  if (it == v.end() || *it != id) return std::nullopt;
  return static_cast<index_t>(it - v.begin());
}

index_t Snapshot::index_of(Layer layer, std::string_view id) const {
  if (auto i = find(layer, id)) return *i;
  throw InputError(std::string("unknown ") + (layer == Layer::holders ? "holder" : "asset") + " id '" +
                   std::string(id) + "'");
}

std::vector<Triplet> Snapshot::triplets() const {
  std::vector<Triplet> ts;
  ts.reserve(num_links());
  for (index_t h = 0; h < num_holders(); ++h) {
    const auto as = assets_of(h);
    const auto ws = shares_of(h);
    for (std::size_t k = 0; k < as.size(); ++k) ts.push_back({h, as[k], ws[k]});
  }
  return ts;
}

Snapshot Snapshot::transposed() const {
  auto ts = triplets();
  for (auto& t : ts) std::swap(t.holder, t.asset);
  return from_triplets(date_, assets_, holders_, std::move(ts), weighted_);
}

// ---------------------------------------------------------------------------

Snapshot load_snapshot(std::istream& in, std::string date) {
  const auto table = io::read_table(in);
  if (table.header.empty()) return Snapshot::from_entries(std::move(date), {}, true);
  const int hc = table.column("holder_id");
  const int ac = table.column("asset_id");
  const int sc = table.column("shares");
  if (hc < 0 || ac < 0) throw InputError("snapshot header must contain holder_id and asset_id");
  const bool weighted = sc >= 0;
  std::vector<Entry> entries;
  entries.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    Entry e;
    e.holder = row.fields[hc];
    e.asset = row.fields[ac];
    if (e.holder.empty() || e.asset.empty())
      throw InputError("malformed row at row " + std::to_string(row.line) + ": empty id");
    if (weighted) {
      e.shares = io::parse_double(row.fields[sc], row.line, "shares");
      if (e.shares < 0) throw InputError("negative shares at row " + std::to_string(row.line));
    }
    entries.push_back(std::move(e));
  }
  // Report conflicting duplicates with their row number.
  {
    std::vector<std::size_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (entries[x].holder != entries[y].holder) return entries[x].holder < entries[y].holder;
      return entries[x].asset < entries[y].asset;
    });
    for (std::size_t k = 1; k < order.size(); ++k) {
      const auto& p = entries[order[k - 1]];
      const auto& q = entries[order[k]];
      if (p.holder == q.holder && p.asset == q.asset && p.shares != q.shares)
        throw InputError("conflicting duplicate entry (" + q.holder + ", " + q.asset + ") at row " +
                         std::to_string(table.rows[order[k]].line));
    }
  }
  return Snapshot::from_entries(std::move(date), std::move(entries), weighted);
}

Snapshot load_snapshot_file(const std::string& path, std::string date) {
  if (date.empty()) date = std::filesystem::path(path).stem().string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  try {
    return load_snapshot(in, std::move(date));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_snapshot(std::ostream& out, const Snapshot& snap) {
  out << (snap.weighted() ? "holder_id,asset_id,shares\n" : "holder_id,asset_id\n");
  for (index_t h = 0; h < snap.num_holders(); ++h) {
    const auto as = snap.assets_of(h);
    const auto ws = snap.shares_of(h);
    for (std::size_t k = 0; k < as.size(); ++k) {
      out << snap.holders()[h] << ',' << snap.assets()[as[k]];
      if (snap.weighted()) out << ',' << io::format_double(ws[k]);
      out << '\n';
    }
  }
}

std::string snapshot_to_string(const Snapshot& snap) {
  std::ostringstream os;
  write_snapshot(os, snap);
  return os.str();
}

HolderMeta load_holder_meta(std::istream& in) {
  const auto table = io::read_table(in);
  const int hc = table.column("holder_id");
  const int tc = table.column("type");
  if (hc < 0 || tc < 0) throw InputError("holder metadata header must be holder_id,type");
  HolderMeta meta;
  for (const auto& row : table.rows) {
    auto [it, inserted] = meta.emplace(row.fields[hc], row.fields[tc]);
    if (!inserted && it->second != row.fields[tc])
      throw InputError("conflicting holder type at row " + std::to_string(row.line));
  }
  return meta;
}

SecurityMetaTable load_security_meta(std::istream& in) {
  const auto table = io::read_table(in);
  const int ac = table.column("asset_id");
  const int pc = table.column("price");
  const int oc = table.column("outstanding");
  const int cc = table.column("category");
  if (ac < 0) throw InputError("asset metadata header must contain asset_id");
  SecurityMetaTable meta;
  for (const auto& row : table.rows) {
    SecurityMeta m;
    if (pc >= 0 && !row.fields[pc].empty()) {
      m.price = io::parse_double(row.fields[pc], row.line, "price");
      if (*m.price < 0) throw InputError("negative price at row " + std::to_string(row.line));
    }
    if (oc >= 0 && !row.fields[oc].empty()) {
      m.outstanding = io::parse_double(row.fields[oc], row.line, "outstanding");
      if (*m.outstanding <= 0) throw InputError("non-positive outstanding shares at row " + std::to_string(row.line));
    }
    if (cc >= 0 && !row.fields[cc].empty()) m.category = row.fields[cc];
    if (!meta.emplace(row.fields[ac], m).second)
      throw InputError("duplicate asset metadata at row " + std::to_string(row.line));
  }
  return meta;
}

// ---------------------------------------------------------------------------

DegreeClasses DegreeClasses::from_degrees(std::span<const std::uint32_t> degrees) {
  DegreeClasses c;
  std::vector<std::uint32_t> distinct(degrees.begin(), degrees.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  c.degree = distinct;
  c.multiplicity.assign(distinct.size(), 0);
  c.class_of.resize(degrees.size());
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const auto k = static_cast<std::uint32_t>(std::lower_bound(distinct.begin(), distinct.end(), degrees[i]) -
                                              distinct.begin());
    c.class_of[i] = k;
    c.multiplicity[k]++;
  }
  return c;
}

DegreeSequence DegreeSequence::from_degrees(std::vector<std::uint32_t> holder_degrees,
                                            std::vector<std::uint32_t> asset_degrees, Layer projected) {
  DegreeSequence d;
  d.projected = projected;
  d.holder_degrees = std::move(holder_degrees);
  d.asset_degrees = std::move(asset_degrees);
  d.holder_classes = DegreeClasses::from_degrees(d.holder_degrees);
  d.asset_classes = DegreeClasses::from_degrees(d.asset_degrees);
  std::uint64_t lh = 0, la = 0;
  for (auto k : d.holder_degrees) lh += k;
  for (auto k : d.asset_degrees) la += k;
  if (lh != la) throw InputError("holder and asset degree sums differ");
  d.links = lh;
  return d;
}

DegreeSequence degree_sequence(const Snapshot& snap, Layer projected) {
  std::vector<std::uint32_t> hd(snap.num_holders()), ad(snap.num_assets());
  for (index_t h = 0; h < hd.size(); ++h) hd[h] = static_cast<std::uint32_t>(snap.assets_of(h).size());
  for (index_t a = 0; a < ad.size(); ++a) ad[a] = static_cast<std::uint32_t>(snap.holders_of(a).size());
  return DegreeSequence::from_degrees(std::move(hd), std::move(ad), projected);
}

// ---------------------------------------------------------------------------

namespace {

// Upper-triangle co-occurrence counts for one row `i`, appended in increasing
// partner order. `counts` must be zero on entry and is left zeroed.
void row_overlaps(const Snapshot& snap, Layer layer, index_t i, std::vector<std::uint32_t>& counts,
                  std::vector<index_t>& touched, std::vector<OverlapRecord>& out) {
  const Layer opp = other(layer);
  touched.clear();
  for (auto s : snap.neighbors(layer, i)) {
    const auto partners = snap.neighbors(opp, s);
    auto it = std::upper_bound(partners.begin(), partners.end(), i);
    for (; it != partners.end(); ++it) {
      if (counts[*it]++ == 0) touched.push_back(*it);
    }
  }
  std::sort(touched.begin(), touched.end());
  for (auto j : touched) {
    out.push_back({i, j, counts[j]});
    counts[j] = 0;
  }
}

}  // namespace

std::vector<OverlapRecord> overlaps_serial(const Snapshot& snap, Layer layer) {
  const auto n = static_cast<index_t>(snap.num_nodes(layer));
  std::vector<std::uint32_t> counts(n, 0);
  std::vector<index_t> touched;
  std::vector<OverlapRecord> out;
  for (index_t i = 0; i < n; ++i) row_overlaps(snap, layer, i, counts, touched, out);
  return out;
}

std::vector<OverlapRecord> overlaps(const Snapshot& snap, Layer layer, int workers) {
  if (workers <= 1) return overlaps_serial(snap, layer);
  const auto n = static_cast<index_t>(snap.num_nodes(layer));
  std::vector<std::vector<OverlapRecord>> rows(n);
#pragma omp parallel num_threads(workers)
  {
    std::vector<std::uint32_t> counts(n, 0);
    std::vector<index_t> touched;
#pragma omp for schedule(dynamic, 16)
    for (index_t i = 0; i < n; ++i) row_overlaps(snap, layer, i, counts, touched, rows[i]);
  }
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  std::vector<OverlapRecord> out;
  out.reserve(total);
  for (auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

// ---------------------------------------------------------------------------

DeltaNetworks delta_networks(const Snapshot& prev, const Snapshot& curr) {
  if (prev.date() == curr.date()) throw InputError("delta networks need two distinct dates, got '" + curr.date() + "' twice");

  std::vector<std::string> hs(prev.holders());
  hs.insert(hs.end(), curr.holders().begin(), curr.holders().end());
  std::sort(hs.begin(), hs.end());
  hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
  std::vector<std::string> as(prev.assets());
  as.insert(as.end(), curr.assets().begin(), curr.assets().end());
  std::sort(as.begin(), as.end());
  as.erase(std::unique(as.begin(), as.end()), as.end());

  auto remap = [](const std::vector<std::string>& from, const std::vector<std::string>& to) {
    std::vector<index_t> m(from.size());
    for (std::size_t i = 0; i < from.size(); ++i)
      m[i] = static_cast<index_t>(std::lower_bound(to.begin(), to.end(), from[i]) - to.begin());
    return m;
  };
  const auto ph = remap(prev.holders(), hs), pa = remap(prev.assets(), as);
  const auto ch = remap(curr.holders(), hs), ca = remap(curr.assets(), as);

  // (holder, asset) -> shares change, via merged sorted triplet lists.
  std::vector<Triplet> diff;
  diff.reserve(prev.num_links() + curr.num_links());
  for (const auto& t : prev.triplets()) diff.push_back({ph[t.holder], pa[t.asset], -t.shares});
  for (const auto& t : curr.triplets()) diff.push_back({ch[t.holder], ca[t.asset], t.shares});
  std::sort(diff.begin(), diff.end(), [](const Triplet& x, const Triplet& y) {
    if (x.holder != y.holder) return x.holder < y.holder;
    if (x.asset != y.asset) return x.asset < y.asset;
    return x.shares < y.shares;  // prev (negative) before curr (positive)
  });
  std::vector<Triplet> buy, sell;
  for (std::size_t k = 0; k < diff.size();) {
    std::size_t e = k + 1;
    double change = diff[k].shares;
    while (e < diff.size() && diff[e].holder == diff[k].holder && diff[e].asset == diff[k].asset) {
      change += diff[e].shares;
      ++e;
    }
    // change = curr - prev; an absent side contributes nothing.
    if (change > 0) buy.push_back({diff[k].holder, diff[k].asset, 1.0});
    if (change < 0) sell.push_back({diff[k].holder, diff[k].asset, 1.0});
    k = e;
  }
  DeltaNetworks out;
  out.buy = Snapshot::from_triplets(curr.date(), hs, as, std::move(buy), false);
  out.sell = Snapshot::from_triplets(curr.date(), std::move(hs), std::move(as), std::move(sell), false);
  return out;
}

Snapshot restrict_holders(const Snapshot& snap, const std::function<bool(std::string_view)>& keep) {
  std::vector<Triplet> ts;
  for (const auto& t : snap.triplets())
    if (keep(snap.holders()[t.holder])) ts.push_back(t);
  return Snapshot::from_triplets(snap.date(), snap.holders(), snap.assets(), std::move(ts), snap.weighted());
}

std::function<bool(std::string_view)> holder_type_is(const HolderMeta& meta, std::string type) {
  return [&meta, type = std::move(type)](std::string_view id) {
    const auto it = meta.find(id);
    return it != meta.end() && it->second == type;
  };
}

}  // namespace bivalid
