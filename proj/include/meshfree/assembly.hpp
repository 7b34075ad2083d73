#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfree/kernel.hpp"
#include "meshfree/linalg.hpp"
#include "meshfree/mobility.hpp"
#include "meshfree/neighbors.hpp"
#include "meshfree/parallel.hpp"
#include "meshfree/particles.hpp"

namespace meshfree {

/// CB-SPH: Brookshaw pairwise scheme with the trace correction multiplier.
/// S-SPH: Schwaiger correction terms, pairwise-difference form.
/// M-SPH: the two-point flux scheme scaled by the gamma-star trace.
enum class Scheme { CorrectedBrookshaw, Schwaiger, New };

enum class RowKind { InteriorScheme, DirichletIdentity, NeumannFlux };

/// Assembled operator A u = b. The sign convention throughout is that A
/// approximates -div(M grad u), so interior rows have positive diagonals,
/// nonpositive off-diagonals wherever the transmissibilities are nonnegative,
/// and A u = g + boundary data forms the discrete boundary-value problem.
struct SparseSystem {
    CsrMatrix A;
    std::vector<double> b;
    std::vector<RowKind> row_kind;
    std::vector<int> degraded_rows;  // rows that fell back to plain Brookshaw
};

namespace detail {

/// Contraction (r . (M_I + M_J) g) / |r|^2 for diagonal M.
inline double pair_bracket(const Vec& r, double dist2, const Vec& m_i, const Vec& m_j, const Vec& g, int dim) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += r[a] * (m_i[a] + m_j[a]) * g[a];
    return s / dist2;
}

/// N . (M_I + M_J) g for diagonal M.
inline double pair_nterm(const Vec& nvec, const Vec& m_i, const Vec& m_j, const Vec& g, int dim) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += nvec[a] * (m_i[a] + m_j[a]) * g[a];
    return s;
}

struct RowScale {
    double value = 1.0;
    bool degraded = false;
};

inline RowScale scheme_scale(Scheme scheme, const ParticleCorrection& pc, int dim) {
    double tr = 0.0;
    switch (scheme) {
        case Scheme::CorrectedBrookshaw:
        case Scheme::Schwaiger: tr = trace(pc.gamma, dim); break;
        case Scheme::New: {
            const double tr_star = trace(pc.gamma_star, dim);
            const double tr_gamma = trace(pc.gamma, dim);
            tr = std::abs(tr_star) > 1e-14 * std::max(1.0, std::abs(tr_gamma)) ? tr_star : tr_gamma;
            break;
        }
    }
    if (!std::isfinite(tr) || std::abs(tr) < 1e-150) return {1.0, true};
    return {static_cast<double>(dim) / tr, false};
}

}  // namespace detail

/// One scheme row as (column, coefficient) pairs, columns ascending. The row
/// applied to u equals -scale * sum_J V_J (m_I + m_J)(bracket - nterm)(u_J - u_I),
/// which approximates -div(M grad u) at particle I.
inline std::vector<std::pair<int, double>> scheme_row(const ParticleSet& ps, const NeighborTable& nbrs,
                                                      const CorrectionState& corr, const MobilityField& mob,
                                                      Scheme scheme, int i, bool corrected_multiplier,
                                                      bool* degraded = nullptr) {
    const auto ki = static_cast<std::size_t>(i);
    const ParticleCorrection& pc = corr.p[ki];
    const bool use_star_bracket = corr.opt.corrected;
    const bool with_nterm = scheme != Scheme::CorrectedBrookshaw;
    const Vec nvec = use_star_bracket ? pc.N_tilde : pc.N;

    detail::RowScale scale{1.0, false};
    if (scheme != Scheme::CorrectedBrookshaw || corrected_multiplier) scale = detail::scheme_scale(scheme, pc, ps.dim);
    const bool fallback = scale.degraded;
    if (degraded) *degraded = fallback;

    std::vector<std::pair<int, double>> row;
    row.reserve(nbrs.of(i).size() + 1);
    double diag = 0.0;
    bool placed_diag = false;
    for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
        const Neighbor& nb = nbrs.of(i)[s];
        const auto kj = static_cast<std::size_t>(nb.j);
        const PairKernel& pk = corr.at(i, static_cast<int>(s));
        const Vec r = ps.pos[kj] - ps.pos[ki];
        const Vec& g = use_star_bracket ? pk.grad_star : pk.grad;
        double c = detail::pair_bracket(r, nb.dist * nb.dist, mob.at(i), mob.at(nb.j), g, ps.dim);
        if (with_nterm && !fallback) c -= detail::pair_nterm(nvec, mob.at(i), mob.at(nb.j), pk.grad_star, ps.dim);
        c *= ps.volume[kj] * (fallback ? 1.0 : scale.value);
        if (!placed_diag && nb.j > i) {
            row.push_back({i, 0.0});
            placed_diag = true;
        }
        row.push_back({nb.j, -c});
        diag += c;
    }
    if (!placed_diag) row.push_back({i, 0.0});
    for (auto& [c, v] : row)
        if (c == i) v = diag;
    return row;
}

namespace detail {

inline SparseSystem assemble_scheme(const ParticleSet& ps, const NeighborTable& nbrs, const CorrectionState& corr,
                                    const MobilityField& mob, Scheme scheme, bool corrected_multiplier,
                                    const std::vector<double>* source) {
    const int n = ps.size();
    std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
    std::vector<char> degraded(static_cast<std::size_t>(n), 0);
    parallel_for(n, [&](int i) {
        bool fell = false;
        rows[static_cast<std::size_t>(i)] = scheme_row(ps, nbrs, corr, mob, scheme, i, corrected_multiplier, &fell);
        degraded[static_cast<std::size_t>(i)] = fell ? 1 : 0;
    });
    SparseSystem sys;
    sys.A = CsrMatrix::from_rows(rows);
    sys.b.assign(static_cast<std::size_t>(n), 0.0);
    if (source) {
        if (static_cast<int>(source->size()) != n) throw std::invalid_argument("assemble: source size mismatch");
        sys.b = *source;
    }
    sys.row_kind.assign(static_cast<std::size_t>(n), RowKind::InteriorScheme);
    for (int i = 0; i < n; ++i)
        if (degraded[static_cast<std::size_t>(i)]) sys.degraded_rows.push_back(i);
    return sys;
}

}  // namespace detail

inline SparseSystem assemble_brookshaw(const ParticleSet& ps, const NeighborTable& nbrs,
                                       const CorrectionState& corr, const MobilityField& mob,
                                       bool corrected_multiplier, const std::vector<double>* source = nullptr) {
    return detail::assemble_scheme(ps, nbrs, corr, mob, Scheme::CorrectedBrookshaw, corrected_multiplier, source);
}

inline SparseSystem assemble_schwaiger(const ParticleSet& ps, const NeighborTable& nbrs,
                                       const CorrectionState& corr, const MobilityField& mob,
                                       const std::vector<double>* source = nullptr) {
    return detail::assemble_scheme(ps, nbrs, corr, mob, Scheme::Schwaiger, true, source);
}

inline SparseSystem assemble_new(const ParticleSet& ps, const NeighborTable& nbrs, const CorrectionState& corr,
                                 const MobilityField& mob, const std::vector<double>* source = nullptr) {
    return detail::assemble_scheme(ps, nbrs, corr, mob, Scheme::New, true, source);
}

inline SparseSystem assemble(Scheme scheme, const ParticleSet& ps, const NeighborTable& nbrs,
                             const CorrectionState& corr, const MobilityField& mob,
                             const std::vector<double>* source = nullptr) {
    return detail::assemble_scheme(ps, nbrs, corr, mob, scheme, true, source);
}

// ---------------------------------------------------------------------------
// Transmissibilities
// ---------------------------------------------------------------------------

/// Pair coupling in the flux-difference sense: the assembled off-diagonal
/// entry (I, J) equals -V_J * value.
struct Transmissibility {
    int i = 0, j = 0;
    double value = 0.0;
    double flux_term = 0.0;        // scaled (m_I + m_J) bracket part
    double correction_term = 0.0;  // scaled N-coupled part (zero for CB-SPH)
};

inline Transmissibility pair_transmissibility(const ParticleSet& ps, const NeighborTable& nbrs,
                                              const CorrectionState& corr, const MobilityField& mob, int i,
                                              int j, Scheme scheme) {
    const int s = nbrs.find(i, j);
    if (s < 0) throw std::invalid_argument("pair_transmissibility: j is not a neighbor of i");
    const Neighbor& nb = nbrs.of(i)[static_cast<std::size_t>(s)];
    const ParticleCorrection& pc = corr.p[static_cast<std::size_t>(i)];
    const PairKernel& pk = corr.at(i, s);
    const Vec r = ps.pos[static_cast<std::size_t>(j)] - ps.pos[static_cast<std::size_t>(i)];
    const bool use_star_bracket = corr.opt.corrected;
    const Vec& g = use_star_bracket ? pk.grad_star : pk.grad;
    const Vec nvec = use_star_bracket ? pc.N_tilde : pc.N;

    const detail::RowScale scale = detail::scheme_scale(scheme, pc, ps.dim);
    const double sc = scale.degraded ? 1.0 : scale.value;

    Transmissibility t;
    t.i = i;
    t.j = j;
    t.flux_term = sc * detail::pair_bracket(r, nb.dist * nb.dist, mob.at(i), mob.at(j), g, ps.dim);
    if (scheme != Scheme::CorrectedBrookshaw && !scale.degraded)
        t.correction_term = -sc * detail::pair_nterm(nvec, mob.at(i), mob.at(j), pk.grad_star, ps.dim);
    t.value = t.flux_term + t.correction_term;
    return t;
}

/// Finite-volume cell geometry for the TPFA transmissibility: cell center,
/// shared face center and the face area vector.
struct CellGeom {
    Vec center;
    Vec face_center;
    Vec face_area;
};

/// Harmonic two-point transmissibility of a shared face. The face area
/// vector is taken outward of each cell, i.e. |S . M r| enters each half.
inline double tpfa_transmissibility(const CellGeom& a, const CellGeom& b, const Vec& m_a, const Vec& m_b) {
    auto half = [](const CellGeom& g, const Vec& m) {
        const Vec r = g.face_center - g.center;
        double smr = 0.0;
        for (int d = 0; d < 3; ++d) smr += g.face_area[d] * m[d] * r[d];
        if (smr == 0.0) throw std::invalid_argument("tpfa_transmissibility: degenerate geometry");
        return norm2(r) / std::abs(smr);
    };
    return 1.0 / (half(a, m_a) + half(b, m_b));
}

// ---------------------------------------------------------------------------
// Boundary conditions
// ---------------------------------------------------------------------------

/// Per-particle boundary data. Dirichlet rows become identities with b = psi;
/// Neumann rows prescribe the outward flux n . M grad u.
struct BoundarySpec {
    std::vector<std::optional<double>> dirichlet;
    std::vector<std::optional<double>> neumann_flux;

    explicit BoundarySpec(int n = 0)
        : dirichlet(static_cast<std::size_t>(n)), neumann_flux(static_cast<std::size_t>(n)) {}

    void set_dirichlet(int i, double psi) { dirichlet[static_cast<std::size_t>(i)] = psi; }
    void set_neumann(int i, double flux) { neumann_flux[static_cast<std::size_t>(i)] = flux; }
};

/// Every boundary-tagged particle must carry exactly one condition.
inline void check_boundary_complete(const ParticleSet& ps, const BoundarySpec& spec) {
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const bool d = spec.dirichlet[k].has_value();
        const bool nm = spec.neumann_flux[k].has_value();
        if (ps.is_boundary(i) && !d && !nm)
            throw std::runtime_error("boundary particle " + std::to_string(i) + " has no condition");
        if (d && nm) throw std::runtime_error("boundary particle " + std::to_string(i) + " has two conditions");
    }
}

inline void apply_dirichlet(SparseSystem& sys, const ParticleSet& ps, const BoundarySpec& spec) {
    auto rows = sys.A.to_rows();
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (!spec.dirichlet[k]) continue;
        rows[k] = {{i, 1.0}};
        sys.b[k] = *spec.dirichlet[k];
        sys.row_kind[k] = RowKind::DirichletIdentity;
    }
    sys.A = CsrMatrix::from_rows(rows);
}

/// Flux rows n . M(r_I) sum_J V_J (u_J - u_I) g = psi. The gradient g is the
/// corrected one for the Schwaiger and new schemes; the Brookshaw scheme has
/// no correction machinery, so its flux rows use the uncorrected gradient.
inline void apply_neumann(SparseSystem& sys, const ParticleSet& ps, const NeighborTable& nbrs,
                          const CorrectionState& corr, const MobilityField& mob, const BoundarySpec& spec,
                          Scheme scheme) {
    auto rows = sys.A.to_rows();
    const bool corrected = scheme != Scheme::CorrectedBrookshaw;
    for (int i = 0; i < ps.size(); ++i) {
        const auto ki = static_cast<std::size_t>(i);
        if (!spec.neumann_flux[ki]) continue;
        if (ps.tag[ki] != BoundaryTag::Neumann)
            throw std::runtime_error("apply_neumann: particle " + std::to_string(i) + " is not Neumann-tagged");
        const Vec& nrm = ps.normal[ki];
        std::vector<std::pair<int, double>> row;
        row.reserve(nbrs.of(i).size() + 1);
        double diag = 0.0;
        bool placed_diag = false;
        for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
            const Neighbor& nb = nbrs.of(i)[s];
            const PairKernel& pk = corr.at(i, static_cast<int>(s));
            const Vec& g = corrected ? pk.grad_star : pk.grad;
            double wj = 0.0;
            for (int a = 0; a < ps.dim; ++a) wj += nrm[a] * mob.at(i)[a] * g[a];
            wj *= ps.volume[static_cast<std::size_t>(nb.j)];
            if (!placed_diag && nb.j > i) {
                row.push_back({i, 0.0});
                placed_diag = true;
            }
            row.push_back({nb.j, wj});
            diag -= wj;
        }
        if (!placed_diag) row.push_back({i, 0.0});
        for (auto& [c, v] : row)
            if (c == i) v = diag;
        rows[ki] = std::move(row);
        sys.b[ki] = *spec.neumann_flux[ki];
        sys.row_kind[ki] = RowKind::NeumannFlux;
    }
    sys.A = CsrMatrix::from_rows(rows);
    check_boundary_complete(ps, spec);
}

}  // namespace meshfree
