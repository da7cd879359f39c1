#pragma once

// Dated bipartite ownership snapshots (holders x assets), degree sequences,
// pairwise overlaps and buy/sell deltas.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bivalid {

using index_t = std::uint32_t;

enum class Layer { holders, assets };

Layer parse_layer(std::string_view s);
const char* to_string(Layer layer);
inline Layer other(Layer layer) { return layer == Layer::holders ? Layer::assets : Layer::holders; }

struct Entry {
  std::string holder;
  std::string asset;
  double shares = 1.0;
};

struct Triplet {
  index_t holder = 0;
  index_t asset = 0;
  double shares = 1.0;
};

// Immutable after construction. Ids are sorted lexicographically and mapped to
// dense indices; every id has at least one stored entry. Entries are stored in
// both row (holder -> assets) and column (asset -> holders) compressed form.
class Snapshot {
 public:
  Snapshot() = default;

  // Entries with zero shares are dropped, exact duplicates collapse, and a
  // duplicate (holder, asset) with different shares is an InputError.
  static Snapshot from_entries(std::string date, std::vector<Entry> entries, bool weighted = true);

  // Triplets index into the given id lists, which must be sorted and unique.
  // Ids that end up without entries are removed.
  static Snapshot from_triplets(std::string date, std::vector<std::string> holder_ids,
                                std::vector<std::string> asset_ids, std::vector<Triplet> triplets,
                                bool weighted);

  const std::string& date() const { return date_; }
  bool weighted() const { return weighted_; }

  const std::vector<std::string>& holders() const { return holders_; }
  const std::vector<std::string>& assets() const { return assets_; }
  const std::vector<std::string>& ids(Layer layer) const {
    return layer == Layer::holders ? holders_ : assets_;
  }

  std::size_t num_holders() const { return holders_.size(); }
  std::size_t num_assets() const { return assets_.size(); }
  std::size_t num_nodes(Layer layer) const { return ids(layer).size(); }
  std::size_t num_links() const { return row_idx_.size(); }
  bool empty() const { return row_idx_.empty(); }

  std::span<const index_t> assets_of(index_t holder) const {
    return {row_idx_.data() + row_ptr_[holder], row_idx_.data() + row_ptr_[holder + 1]};
  }
  std::span<const double> shares_of(index_t holder) const {
    return {row_w_.data() + row_ptr_[holder], row_w_.data() + row_ptr_[holder + 1]};
  }
  std::span<const index_t> holders_of(index_t asset) const {
    return {col_idx_.data() + col_ptr_[asset], col_idx_.data() + col_ptr_[asset + 1]};
  }
  // Neighbors of a node of `layer` on the opposite layer.
  std::span<const index_t> neighbors(Layer layer, index_t node) const {
    return layer == Layer::holders ? assets_of(node) : holders_of(node);
  }
  std::size_t degree(Layer layer, index_t node) const { return neighbors(layer, node).size(); }

  // Position of a holder's first entry in row-major entry order.
  std::size_t row_begin(index_t holder) const { return row_ptr_[holder]; }

  // Shares held, or 0 when the entry is absent.
  double shares(index_t holder, index_t asset) const;

  std::optional<index_t> find(Layer layer, std::string_view id) const;
  // Throws InputError for an unknown id.
  index_t index_of(Layer layer, std::string_view id) const;

  // Holders and assets exchange roles.
  Snapshot transposed() const;

  std::vector<Triplet> triplets() const;

 private:
  std::string date_;
  bool weighted_ = true;
  std::vector<std::string> holders_;
  std::vector<std::string> assets_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<index_t> row_idx_;
  std::vector<double> row_w_;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<index_t> col_idx_;
};

// Header `holder_id,asset_id,shares`; a file without the shares column is read
// as binary (all shares 1, snapshot flagged unweighted).
Snapshot load_snapshot(std::istream& in, std::string date);
Snapshot load_snapshot_file(const std::string& path, std::string date = {});
// Canonical dump sorted by (holder_id, asset_id).
void write_snapshot(std::ostream& out, const Snapshot& snap);
std::string snapshot_to_string(const Snapshot& snap);

// --- metadata -------------------------------------------------------------

// holder_id -> type label (e.g. "Hedge Fund").
using HolderMeta = std::map<std::string, std::string, std::less<>>;
HolderMeta load_holder_meta(std::istream& in);

struct SecurityMeta {
  std::optional<double> price;        // currency per share
  std::optional<double> outstanding;  // shares outstanding
  std::string category = "other";
};
using SecurityMetaTable = std::map<std::string, SecurityMeta, std::less<>>;
SecurityMetaTable load_security_meta(std::istream& in);

// --- degrees --------------------------------------------------------------

// Nodes grouped by identical degree; classes sorted by ascending degree.
struct DegreeClasses {
  std::vector<std::uint32_t> degree;
  std::vector<std::uint32_t> multiplicity;
  std::vector<std::uint32_t> class_of;  // node -> class

  static DegreeClasses from_degrees(std::span<const std::uint32_t> degrees);
  std::size_t size() const { return degree.size(); }
};

struct DegreeSequence {
  Layer projected = Layer::holders;
  std::vector<std::uint32_t> holder_degrees;
  std::vector<std::uint32_t> asset_degrees;
  DegreeClasses holder_classes;
  DegreeClasses asset_classes;
  std::uint64_t links = 0;

  const DegreeClasses& classes(Layer layer) const {
    return layer == Layer::holders ? holder_classes : asset_classes;
  }
  const std::vector<std::uint32_t>& degrees(Layer layer) const {
    return layer == Layer::holders ? holder_degrees : asset_degrees;
  }
  // Classes of the layer summed over when projecting, which drive the
  // overlap distribution.
  const DegreeClasses& summed_classes() const { return classes(other(projected)); }

  static DegreeSequence from_degrees(std::vector<std::uint32_t> holder_degrees,
                                     std::vector<std::uint32_t> asset_degrees,
                                     Layer projected = Layer::holders);
};

DegreeSequence degree_sequence(const Snapshot& snap, Layer projected = Layer::holders);

// --- overlaps -------------------------------------------------------------

struct OverlapRecord {
  index_t a = 0;  // a < b
  index_t b = 0;
  std::uint32_t overlap = 0;

  friend bool operator==(const OverlapRecord&, const OverlapRecord&) = default;
};

// Pairs of `layer` nodes sharing at least one neighbor, sorted by (a, b).
// Cost is sum over the opposite layer of squared degrees.
std::vector<OverlapRecord> overlaps(const Snapshot& snap, Layer layer, int workers = 1);
// Single-threaded reference for the parallel kernel.
std::vector<OverlapRecord> overlaps_serial(const Snapshot& snap, Layer layer);

// --- deltas and restrictions ---------------------------------------------

struct DeltaNetworks {
  Snapshot buy;
  Snapshot sell;
};

// Binary buy/sell networks: buy where shares(curr) > shares(prev), sell where
// shares(curr) < shares(prev). Missing entries count as zero shares.
DeltaNetworks delta_networks(const Snapshot& prev, const Snapshot& curr);

Snapshot restrict_holders(const Snapshot& snap, const std::function<bool(std::string_view)>& keep);

// Predicate matching holders whose metadata type equals `type`.
std::function<bool(std::string_view)> holder_type_is(const HolderMeta& meta, std::string type);

}  // namespace bivalid
