#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfree/analysis.hpp"
#include "meshfree/assembly.hpp"
#include "meshfree/kernel.hpp"
#include "meshfree/mobility.hpp"
#include "meshfree/neighbors.hpp"
#include "meshfree/particles.hpp"
#include "meshfree/reference.hpp"
#include "meshfree/rng.hpp"

namespace meshfree {

/// Scheme selection plus the kernel-gradient option it runs with.
struct SchemeConfig {
    Scheme scheme = Scheme::New;
    KernelGradientOption opt;
};

/// Boundary data layout on a 2D rectangle. Edge order follows the series
/// solutions: psi1 at y = lo, psi2 at x = hi, psi3 at y = hi, psi4 at x = lo.
/// Dirichlet mode imposes the psi as values on all four edges; Mixed mode
/// imposes psi1 as a value along the base and psi2..psi4 as outward fluxes.
enum class BcMode { Dirichlet, Mixed };

struct BvpProblem {
    Domain domain{Vec{0.5, 0.5}, Vec{0.5, 0.5}, 2};
    BcMode bc = BcMode::Dirichlet;
    std::array<double, 4> psi{0.0, 0.0, 0.0, 0.0};
    MobilityModel mobility = MobilityModel::one();
};

struct BvpRun {
    int n_per_dim = 21;
    double f = 1.001;
    SchemeConfig scheme;
    double perturb_amplitude = 0.0;
    std::uint64_t seed = 0;
    SolverConfig solver;
    bool direct_fallback = true;  // retry small non-converged solves densely
};

namespace detail {

inline bool on_edge(const ParticleSet& ps, int i, int axis, bool high) {
    const double x = ps.pos[static_cast<std::size_t>(i)][axis];
    const double edge = high ? ps.domain.hi(axis) : ps.domain.lo(axis);
    return std::abs(x - edge) < 1e-9 * ps.spacing + 1e-300;
}

}  // namespace detail

/// Retags boundary particles for the mixed problem: Dirichlet along the base
/// y = lo, Neumann elsewhere. Top corners belong to two flux edges at once
/// and get the normalized diagonal normal, which the exact solution satisfies.
inline void apply_mixed_tags(ParticleSet& ps) {
    if (ps.dim != 2) throw std::invalid_argument("apply_mixed_tags: 2D only");
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (!ps.is_boundary(i)) continue;
        if (detail::on_edge(ps, i, 1, false)) {
            ps.tag[k] = BoundaryTag::Dirichlet;
            ps.normal[k] = Vec{};
            continue;
        }
        Vec n;
        if (detail::on_edge(ps, i, 0, false)) n[0] -= 1.0;
        if (detail::on_edge(ps, i, 0, true)) n[0] += 1.0;
        if (detail::on_edge(ps, i, 1, true)) n[1] += 1.0;
        const double len = norm(n);
        if (len == 0.0) throw std::runtime_error("apply_mixed_tags: boundary particle not on any edge");
        ps.tag[k] = BoundaryTag::Neumann;
        ps.normal[k] = (1.0 / len) * n;
    }
}

/// Boundary data for a tagged particle set. Dirichlet corners sitting on two
/// edges take the average of the edge values; Neumann corners the normal
/// projection of the two prescribed edge fluxes.
inline BoundarySpec make_boundary_spec(const BvpProblem& prob, const ParticleSet& ps) {
    BoundarySpec spec(ps.size());
    for (int i = 0; i < ps.size(); ++i) {
        if (!ps.is_boundary(i)) continue;
        const bool e_lo_y = detail::on_edge(ps, i, 1, false);
        const bool e_hi_x = detail::on_edge(ps, i, 0, true);
        const bool e_hi_y = detail::on_edge(ps, i, 1, true);
        const bool e_lo_x = detail::on_edge(ps, i, 0, false);
        if (prob.bc == BcMode::Dirichlet) {
            double sum = 0.0;
            int cnt = 0;
            if (e_lo_y) {
                sum += prob.psi[0];
                ++cnt;
            }
            if (e_hi_x) {
                sum += prob.psi[1];
                ++cnt;
            }
            if (e_hi_y) {
                sum += prob.psi[2];
                ++cnt;
            }
            if (e_lo_x) {
                sum += prob.psi[3];
                ++cnt;
            }
            if (cnt == 0) throw std::runtime_error("make_boundary_spec: boundary particle not on any edge");
            spec.set_dirichlet(i, sum / cnt);
        } else {
            if (ps.tag[static_cast<std::size_t>(i)] == BoundaryTag::Dirichlet) {
                spec.set_dirichlet(i, prob.psi[0]);
                continue;
            }
            double fsum = 0.0;
            int cnt = 0;
            if (e_hi_x) {
                fsum += prob.psi[1];
                ++cnt;
            }
            if (e_hi_y) {
                fsum += prob.psi[2];
                ++cnt;
            }
            if (e_lo_x) {
                fsum += prob.psi[3];
                ++cnt;
            }
            if (cnt == 0) throw std::runtime_error("make_boundary_spec: Neumann particle not on a flux edge");
            spec.set_neumann(i, fsum / std::sqrt(static_cast<double>(cnt)));
        }
    }
    return spec;
}

inline ParticleSet make_bvp_particles(const BvpProblem& prob, const BvpRun& run) {
    ParticleSet ps = build_uniform_grid(prob.domain, run.n_per_dim, run.f);
    if (run.perturb_amplitude > 0.0) ps = perturb(ps, run.perturb_amplitude, run.seed);
    if (prob.bc == BcMode::Mixed) apply_mixed_tags(ps);
    return ps;
}

struct BvpSolution {
    ParticleSet ps;
    NeighborTable nbrs;
    CorrectionState corr;
    SparseSystem sys;
    std::vector<double> u;
    SolveResult solver;
    bool used_direct_fallback = false;
};

/// GMRES with the configured preconditioner; if the preconditioner cannot be
/// built the solve retries unpreconditioned, and small systems that still
/// fail fall back to the dense direct solver.
inline SolveResult robust_solve(const CsrMatrix& a, const std::vector<double>& b, const SolverConfig& cfg,
                                bool allow_direct, bool* used_direct = nullptr) {
    if (used_direct) *used_direct = false;
    if (cfg.method == SolveMethod::DirectDense) {
        if (used_direct) *used_direct = true;
        return solve(a, b, cfg);
    }
    SolveResult r;
    bool ran = false;
    try {
        r = gmres(a, b, cfg);
        ran = true;
    } catch (const std::runtime_error&) {
        SolverConfig plain = cfg;
        plain.precond = PrecondKind::None;
        r = gmres(a, b, plain);
        ran = true;
    }
    if (ran && !r.converged && allow_direct && a.n <= 4096) {
        SolverConfig dd = cfg;
        dd.method = SolveMethod::DirectDense;
        SolveResult rd = solve(a, b, dd);
        rd.residual_history = r.residual_history;
        rd.iterations = r.iterations;
        if (used_direct) *used_direct = true;
        return rd;
    }
    return r;
}

inline BvpSolution solve_bvp(const BvpProblem& prob, const BvpRun& run) {
    BvpSolution sol;
    sol.ps = make_bvp_particles(prob, run);
    sol.nbrs = find_neighbors(sol.ps);
    sol.corr = build_corrections(sol.ps, sol.nbrs, run.scheme.opt);
    const MobilityField mob = MobilityField::from_scalar_field(
        sol.ps, [&](const Vec& r) { return prob.mobility.value(r, sol.ps.dim); });
    sol.sys = assemble(run.scheme.scheme, sol.ps, sol.nbrs, sol.corr, mob);
    const BoundarySpec spec = make_boundary_spec(prob, sol.ps);
    apply_dirichlet(sol.sys, sol.ps, spec);
    if (prob.bc == BcMode::Mixed) apply_neumann(sol.sys, sol.ps, sol.nbrs, sol.corr, mob, spec, run.scheme.scheme);
    check_boundary_complete(sol.ps, spec);
    sol.solver = robust_solve(sol.sys.A, sol.sys.b, run.solver, run.direct_fallback, &sol.used_direct_fallback);
    sol.u = sol.solver.x;
    return sol;
}

// ---------------------------------------------------------------------------
// Reference solutions
// ---------------------------------------------------------------------------

/// Point-evaluable reference field for a BVP: the mixed-condition series on
/// rectangles, or a fine-grid TPFA solve sampled by multilinear
/// interpolation (the route used for Dirichlet data).
class ReferenceSolution {
  public:
    static ReferenceSolution series(const BvpProblem& prob) {
        ReferenceSolution ref;
        ref.kind_ = Kind::Series;
        ref.origin_ = Vec{prob.domain.lo(0), prob.domain.lo(1)};
        ref.series_.kind = prob.bc == BcMode::Mixed ? SeriesSolution::Kind::MixedRect
                                                    : SeriesSolution::Kind::DirichletRect;
        ref.series_.L = prob.domain.side(0);
        ref.series_.H = prob.domain.side(1);
        ref.series_.psi = prob.psi;
        return ref;
    }

    static ReferenceSolution fine_tpfa(const BvpProblem& prob, int cells = 513,
                                       SolverConfig cfg = {SolveMethod::GMRES, 60, 1e-11, 200000,
                                                           PrecondKind::ILU0}) {
        ReferenceSolution ref;
        ref.kind_ = Kind::Tpfa;
        ref.origin_ = Vec{prob.domain.lo(0), prob.domain.lo(1)};
        RasterField raster;
        raster.dim = 2;
        raster.nx = raster.ny = cells;
        raster.dx = prob.domain.side(0) / cells;
        raster.dy = prob.domain.side(1) / cells;
        raster.k.resize(static_cast<std::size_t>(raster.cells()));
        for (int j = 0; j < cells; ++j)
            for (int i = 0; i < cells; ++i) {
                const Vec c = raster.cell_center(i, j);
                const double m = prob.mobility.value(c + ref.origin_, 2);
                raster.k[static_cast<std::size_t>(raster.index(i, j))] = Vec{m, m, m};
            }
        TpfaBcSet bc{};
        if (prob.bc == BcMode::Dirichlet) {
            bc[0] = TpfaSide::dirichlet(prob.psi[3]);
            bc[1] = TpfaSide::dirichlet(prob.psi[1]);
            bc[2] = TpfaSide::dirichlet(prob.psi[0]);
            bc[3] = TpfaSide::dirichlet(prob.psi[2]);
        } else {
            bc[0] = TpfaSide::flux(prob.psi[3]);
            bc[1] = TpfaSide::flux(prob.psi[1]);
            bc[2] = TpfaSide::dirichlet(prob.psi[0]);
            bc[3] = TpfaSide::flux(prob.psi[2]);
        }
        TpfaResult res = tpfa_solve(raster, bc, cfg);
        if (!res.solver.converged) throw std::runtime_error("fine_tpfa reference did not converge");
        ref.raster_ = std::make_shared<RasterField>(std::move(raster));
        ref.field_ = std::make_shared<std::vector<double>>(std::move(res.u));
        return ref;
    }

    double operator()(const Vec& p) const {
        if (kind_ == Kind::Series) {
            const SeriesEval ev = evaluate_series(series_, p[0] - origin_[0], p[1] - origin_[1]);
            return ev.value;
        }
        return tpfa_interpolate(*raster_, *field_, p - origin_);
    }

  private:
    enum class Kind { Series, Tpfa };
    Kind kind_ = Kind::Series;
    Vec origin_;
    SeriesSolution series_;
    std::shared_ptr<RasterField> raster_;
    std::shared_ptr<std::vector<double>> field_;
};

inline ReferenceSolution make_reference(const BvpProblem& prob, int tpfa_cells = 257) {
    // Mixed data has a clean series; constant-edge Dirichlet data goes
    // through the fine-grid finite-volume reference.
    if (prob.bc == BcMode::Mixed) return ReferenceSolution::series(prob);
    return ReferenceSolution::fine_tpfa(prob, tpfa_cells);
}

/// Relative L2 error against the reference. Dirichlet-constrained particles
/// are excluded: they carry their imposed values identically (and edge data
/// may legitimately be zero, where the pointwise relative error is undefined).
inline double error_vs_reference(const ParticleSet& ps, const std::vector<double>& u,
                                 const ReferenceSolution& ref, const BoundarySpec& spec) {
    double vsum = 0.0, esum = 0.0;
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (spec.dirichlet[k]) continue;
        const double rv = ref(ps.pos[k]);
        const double rel = (rv - u[k]) / rv;
        vsum += ps.volume[k];
        esum += ps.volume[k] * rel * rel;
    }
    return std::sqrt(esum / vsum);
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

/// Runs the DoF ladder; realizations > 0 switches to perturbed clouds with
/// one RNG stream per realization, reporting mean and standard deviation.
inline std::vector<ConvergenceRow> convergence_study(const BvpProblem& prob, const BvpRun& proto,
                                                     const std::vector<int>& dof_ladder, int realizations,
                                                     std::uint64_t seed, const ReferenceSolution& ref) {
    std::vector<ConvergenceRow> rows;
    for (int dof : dof_ladder) {
        const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dof))));
        if (n * n != dof) throw std::invalid_argument("convergence_study: DoF must be a perfect square in 2D");
        if (!rows.empty() && dof <= rows.back().dof)
            throw std::invalid_argument("convergence_study: DoF ladder must be strictly increasing");
        BvpRun run = proto;
        run.n_per_dim = n;
        ConvergenceRow row;
        row.dof = dof;
        if (realizations <= 0) {
            run.perturb_amplitude = 0.0;
            const BvpSolution sol = solve_bvp(prob, run);
            if (!sol.solver.converged)
                throw std::runtime_error("convergence_study: solver failed at DoF " + std::to_string(dof) +
                                         " (residual " + std::to_string(sol.solver.final_residual) + ")");
            row.error = row.mean = error_vs_reference(sol.ps, sol.u, ref, make_boundary_spec(prob, sol.ps));
            row.realizations = 0;
        } else {
            double sum = 0.0, sq = 0.0;
            for (int r = 0; r < realizations; ++r) {
                run.seed = SplitMix64::stream(seed, static_cast<std::uint64_t>(r)).next_u64();
                const BvpSolution sol = solve_bvp(prob, run);
                if (!sol.solver.converged)
                    throw std::runtime_error("convergence_study: solver failed at DoF " + std::to_string(dof));
                const double e = error_vs_reference(sol.ps, sol.u, ref, make_boundary_spec(prob, sol.ps));
                sum += e;
                sq += e * e;
            }
            row.mean = sum / realizations;
            row.error = row.mean;
            row.stddev = realizations > 1 ? std::sqrt(std::max(0.0, (sq - sum * sum / realizations) / (realizations - 1)))
                                          : 0.0;
            row.realizations = realizations;
        }
        rows.push_back(row);
    }
    fill_orders(rows);
    return rows;
}

}  // namespace meshfree
