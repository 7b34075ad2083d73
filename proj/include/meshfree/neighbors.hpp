#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "meshfree/particles.hpp"

namespace meshfree {

struct Neighbor {
    int j;         // neighbor particle index
    double h_ij;   // pairwise smoothing length
    double dist;   // |r_j - r_i|
};

/// Symmetric neighbor table: j in nbrs(i) iff i in nbrs(j), every pair
/// satisfies dist < 2 h_ij (cubic spline support). Self pairs are excluded;
/// the kernel self value W(0) enters only the specific-volume sums.
struct NeighborTable {
    std::vector<std::vector<Neighbor>> nbrs;

    int size() const { return static_cast<int>(nbrs.size()); }
    const std::vector<Neighbor>& of(int i) const { return nbrs[static_cast<std::size_t>(i)]; }

    /// Index of particle j within list i, or -1.
    int find(int i, int j) const {
        const auto& list = nbrs[static_cast<std::size_t>(i)];
        auto it = std::lower_bound(list.begin(), list.end(), j,
                                   [](const Neighbor& n, int v) { return n.j < v; });
        if (it == list.end() || it->j != j) return -1;
        return static_cast<int>(it - list.begin());
    }
};

namespace detail {

inline void push_pair(NeighborTable& table, const ParticleSet& ps, int i, int j) {
    const Vec d = ps.pos[static_cast<std::size_t>(j)] - ps.pos[static_cast<std::size_t>(i)];
    const double r = norm(d);
    const double h_ij = symmetrize_h(ps.h[static_cast<std::size_t>(i)], ps.h[static_cast<std::size_t>(j)]);
    if (r < 2.0 * h_ij) {
        table.nbrs[static_cast<std::size_t>(i)].push_back({j, h_ij, r});
        table.nbrs[static_cast<std::size_t>(j)].push_back({i, h_ij, r});
    }
}

inline void sort_lists(NeighborTable& table) {
    for (auto& list : table.nbrs)
        std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) { return a.j < b.j; });
}

}  // namespace detail

/// Reference O(N^2) scan; the cell list must reproduce it exactly.
inline NeighborTable find_neighbors_bruteforce(const ParticleSet& ps) {
    NeighborTable table;
    table.nbrs.resize(static_cast<std::size_t>(ps.size()));
    for (int i = 0; i < ps.size(); ++i)
        for (int j = i + 1; j < ps.size(); ++j) detail::push_pair(table, ps, i, j);
    detail::sort_lists(table);
    return table;
}

/// Cell-list search with cell edge >= the largest pair support 2*h_max, so a
/// one-ring sweep covers every admissible pair.
inline NeighborTable find_neighbors(const ParticleSet& ps) {
    NeighborTable table;
    const int n = ps.size();
    table.nbrs.resize(static_cast<std::size_t>(n));
    if (n <= 1) return table;

    double h_max = 0.0;
    Vec lo{1e300, 1e300, 1e300};
    for (int i = 0; i < n; ++i) {
        h_max = std::max(h_max, ps.h[static_cast<std::size_t>(i)]);
        for (int d = 0; d < ps.dim; ++d) lo[d] = std::min(lo[d], ps.pos[static_cast<std::size_t>(i)][d]);
    }
    const double cell = 2.0 * h_max;
    if (!(cell > 0.0)) return table;

    struct CellKey {
        std::int64_t x, y, z;
        bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
    };
    struct CellHash {
        std::size_t operator()(const CellKey& k) const {
            return static_cast<std::size_t>((k.x * 73856093LL) ^ (k.y * 19349663LL) ^ (k.z * 83492791LL));
        }
    };

    auto cell_of = [&](const Vec& p, int d) { return static_cast<std::int64_t>(std::floor((p[d] - lo[d]) / cell)); };
    auto key_of = [&](const Vec& p) {
        return CellKey{cell_of(p, 0), ps.dim >= 2 ? cell_of(p, 1) : 0, ps.dim >= 3 ? cell_of(p, 2) : 0};
    };

    std::unordered_map<CellKey, std::vector<int>, CellHash> bins;
    bins.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) bins[key_of(ps.pos[static_cast<std::size_t>(i)])].push_back(i);

    const int sy = ps.dim >= 2 ? 1 : 0;
    const int sz = ps.dim >= 3 ? 1 : 0;
    for (int i = 0; i < n; ++i) {
        const CellKey c = key_of(ps.pos[static_cast<std::size_t>(i)]);
        for (std::int64_t dz = -sz; dz <= sz; ++dz) {
            for (std::int64_t dy = -sy; dy <= sy; ++dy) {
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                    auto it = bins.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
                    if (it == bins.end()) continue;
                    for (int j : it->second) {
                        if (j <= i) continue;
                        detail::push_pair(table, ps, i, j);
                    }
                }
            }
        }
    }
    detail::sort_lists(table);
    return table;
}

}  // namespace meshfree
