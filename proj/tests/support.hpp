#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "bivalid/rng.hpp"
#include "bivalid/snapshot.hpp"

namespace testing {

using Dense = std::vector<std::vector<int>>;

// Rows are holders h0.., columns assets a0..; entries are share counts.
inline bivalid::Snapshot from_dense(const Dense& m, std::string date = "t", bool weighted = true) {
  std::vector<bivalid::Entry> es;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t s = 0; s < m[i].size(); ++s)
      if (m[i][s] != 0) es.push_back({"h" + std::to_string(i), "a" + std::to_string(s), double(m[i][s])});
  return bivalid::Snapshot::from_entries(std::move(date), std::move(es), weighted);
}

// Dense binary incidence of a snapshot in its own index order.
inline Dense to_dense(const bivalid::Snapshot& snap) {
  Dense m(snap.num_holders(), std::vector<int>(snap.num_assets(), 0));
  for (bivalid::index_t i = 0; i < snap.num_holders(); ++i)
    for (auto s : snap.assets_of(i)) m[i][s] = 1;
  return m;
}

inline Dense random_dense(std::size_t holders, std::size_t assets, double density, std::uint64_t seed,
                          int max_shares = 1) {
  bivalid::Rng rng(seed);
  Dense m(holders, std::vector<int>(assets, 0));
  for (auto& row : m)
    for (auto& v : row)
      if (rng.bernoulli(density)) v = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_shares)));
  // keep every holder and asset present
  for (std::size_t i = 0; i < holders; ++i) m[i][i % assets] = m[i][i % assets] ? m[i][i % assets] : 1;
  for (std::size_t s = 0; s < assets; ++s) m[s % holders][s] = m[s % holders][s] ? m[s % holders][s] : 1;
  return m;
}

inline bivalid::Snapshot parse(const std::string& text, std::string date = "t") {
  std::istringstream in(text);
  return bivalid::load_snapshot(in, std::move(date));
}

}  // namespace testing
