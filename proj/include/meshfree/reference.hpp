#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfree/assembly.hpp"
#include "meshfree/geometry.hpp"
#include "meshfree/linalg.hpp"
#include "meshfree/mobility.hpp"
#include "meshfree/rng.hpp"

namespace meshfree {

// ---------------------------------------------------------------------------
// Analytic test fields and their heterogeneous Laplacians
// ---------------------------------------------------------------------------

inline double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

/// Polynomial test fields: sum x_i^s or prod x_i^{m_i}.
struct TestField {
    enum class Kind { SumPow, ProdPow };
    Kind kind = Kind::SumPow;
    int s = 2;
    std::array<int, 3> m{1, 1, 0};

    static TestField sum_pow(int s_) { return {Kind::SumPow, s_, {0, 0, 0}}; }
    static TestField prod_pow(int mx, int my, int mz = 0) { return {Kind::ProdPow, 0, {mx, my, mz}}; }

    double value(const Vec& r, int dim) const {
        if (kind == Kind::SumPow) {
            double v = 0.0;
            for (int d = 0; d < dim; ++d) v += ipow(r[d], s);
            return v;
        }
        double v = 1.0;
        for (int d = 0; d < dim; ++d) v *= ipow(r[d], m[static_cast<std::size_t>(d)]);
        return v;
    }

    double d1(const Vec& r, int dim, int a) const {
        if (kind == Kind::SumPow) return s == 0 ? 0.0 : s * ipow(r[a], s - 1);
        const int ma = m[static_cast<std::size_t>(a)];
        if (ma == 0) return 0.0;
        double v = ma * ipow(r[a], ma - 1);
        for (int d = 0; d < dim; ++d)
            if (d != a) v *= ipow(r[d], m[static_cast<std::size_t>(d)]);
        return v;
    }

    double d2(const Vec& r, int dim, int a) const {
        if (kind == Kind::SumPow) return s < 2 ? 0.0 : static_cast<double>(s) * (s - 1) * ipow(r[a], s - 2);
        const int ma = m[static_cast<std::size_t>(a)];
        if (ma < 2) return 0.0;
        double v = static_cast<double>(ma) * (ma - 1) * ipow(r[a], ma - 2);
        for (int d = 0; d < dim; ++d)
            if (d != a) v *= ipow(r[d], m[static_cast<std::size_t>(d)]);
        return v;
    }
};

/// Scalar mobility models of the form offset + coef * sum_i x_i^p, covering
/// m = 1, m = x + y, m = x^p + y^p and the affine m = 1 + x + y.
struct MobilityModel {
    double offset = 1.0;
    double coef = 0.0;
    int p = 1;

    static MobilityModel one() { return {1.0, 0.0, 1}; }
    static MobilityModel sum_pow(int p_) {
        if (p_ < 1) throw std::invalid_argument("MobilityModel: exponent must be >= 1");
        return {0.0, 1.0, p_};
    }
    static MobilityModel affine(double offset_) { return {offset_, 1.0, 1}; }

    double value(const Vec& r, int dim) const {
        if (coef == 0.0) return offset;
        double v = 0.0;
        for (int d = 0; d < dim; ++d) v += ipow(r[d], p);
        return offset + coef * v;
    }

    double d1(const Vec& r, int, int a) const {
        if (coef == 0.0 || p == 0) return 0.0;
        return coef * p * ipow(r[a], p - 1);
    }
};

/// Closed-form div(m grad u): sum_a [dm/dx_a du/dx_a + m d2u/dx_a2], with the
/// exact polynomial partials of the two families above.
inline double analytic_operator(const TestField& u, const MobilityModel& mob, const Vec& r, int dim) {
    const double m = mob.value(r, dim);
    double v = 0.0;
    for (int a = 0; a < dim; ++a) v += mob.d1(r, dim, a) * u.d1(r, dim, a) + m * u.d2(r, dim, a);
    return v;
}

/// Flux-form central differences of div(m grad u); cross-check for the
/// closed forms above.
inline double analytic_operator_fd(const TestField& u, const MobilityModel& mob, const Vec& r, int dim,
                                   double step = 1e-5) {
    double v = 0.0;
    for (int a = 0; a < dim; ++a) {
        Vec rp = r, rm = r, rhp = r, rhm = r;
        rp[a] += step;
        rm[a] -= step;
        rhp[a] += 0.5 * step;
        rhm[a] -= 0.5 * step;
        const double flux_p = mob.value(rhp, dim) * (u.value(rp, dim) - u.value(r, dim));
        const double flux_m = mob.value(rhm, dim) * (u.value(r, dim) - u.value(rm, dim));
        v += (flux_p - flux_m) / (step * step);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Series solutions on rectangles
// ---------------------------------------------------------------------------

namespace detail {

/// sinh(a)/sinh(b) for a in [0, b], b > 0, evaluated in log space so large
/// arguments never overflow.
inline double sinh_ratio(double a, double b) {
    if (a <= 0.0) return 0.0;
    return std::exp(a - b) * (1.0 - std::exp(-2.0 * a)) / (1.0 - std::exp(-2.0 * b));
}

/// cosh(a)/sinh(b) for a in [0, b], b > 0.
inline double cosh_over_sinh(double a, double b) {
    return std::exp(a - b) * (1.0 + std::exp(-2.0 * a)) / (1.0 - std::exp(-2.0 * b));
}

}  // namespace detail

/// Rectangle [0,L] x [0,H].
///
/// DirichletRect: boundary values psi1 at y=0, psi2 at x=L, psi3 at y=H,
/// psi4 at x=0, expanded edge by edge in the standard sine/sinh harmonics.
///
/// MixedRect: Dirichlet value psi1 along the base y=0 and prescribed outward
/// fluxes psi2 (x=L), psi3 (y=H), psi4 (x=0):
///   u = psi1 + psi3 y
///     + sum_n [2 psi2 cosh(l_n x) + 2 psi4 cosh(l_n (L-x))]
///       / (H l_n^2 sinh(l_n L)) * sin(l_n y),     l_n = (2n-1) pi / (2H).
struct SeriesSolution {
    enum class Kind { DirichletRect, MixedRect };
    Kind kind = Kind::DirichletRect;
    double L = 1.0;
    double H = 1.0;
    std::array<double, 4> psi{0.0, 0.0, 0.0, 0.0};
    int max_terms = 10000;
};

struct SeriesEval {
    double value = 0.0;
    bool converged = true;
    int terms = 0;
};

inline SeriesEval evaluate_series(const SeriesSolution& sol, double x, double y) {
    if (sol.max_terms < 1) throw std::invalid_argument("evaluate_series: max_terms must be >= 1");
    if (x < -1e-12 || x > sol.L + 1e-12 || y < -1e-12 || y > sol.H + 1e-12)
        throw std::invalid_argument("evaluate_series: point outside the closed rectangle");
    x = std::min(std::max(x, 0.0), sol.L);
    y = std::min(std::max(y, 0.0), sol.H);

    SeriesEval ev;
    const double rel_tol = 1e-12;
    int small_in_a_row = 0;

    if (sol.kind == SeriesSolution::Kind::DirichletRect) {
        double sum = 0.0;
        for (int n = 1; n <= 2 * sol.max_terms - 1; n += 2) {
            const double cx = n * M_PI / sol.L;
            const double cy = n * M_PI / sol.H;
            double term = 0.0;
            term += 4.0 * sol.psi[0] / (n * M_PI) * std::sin(cx * x) * detail::sinh_ratio(cx * (sol.H - y), cx * sol.H);
            term += 4.0 * sol.psi[1] / (n * M_PI) * std::sin(cy * y) * detail::sinh_ratio(cy * x, cy * sol.L);
            term += 4.0 * sol.psi[2] / (n * M_PI) * std::sin(cx * x) * detail::sinh_ratio(cx * y, cx * sol.H);
            term += 4.0 * sol.psi[3] / (n * M_PI) * std::sin(cy * y) * detail::sinh_ratio(cy * (sol.L - x), cy * sol.L);
            sum += term;
            ++ev.terms;
            if (std::abs(term) <= rel_tol * std::max(std::abs(sum), 1e-30)) {
                if (++small_in_a_row >= 2) break;
            } else {
                small_in_a_row = 0;
            }
        }
        ev.value = sum;
        ev.converged = small_in_a_row >= 2;
        return ev;
    }

    double sum = sol.psi[0] + sol.psi[2] * y;
    for (int n = 1; n <= sol.max_terms; ++n) {
        const double lam = (2.0 * n - 1.0) * M_PI / (2.0 * sol.H);
        const double coef = 2.0 / (sol.H * lam * lam);
        const double term = coef * (sol.psi[1] * detail::cosh_over_sinh(lam * x, lam * sol.L) +
                                    sol.psi[3] * detail::cosh_over_sinh(lam * (sol.L - x), lam * sol.L)) *
                            std::sin(lam * y);
        sum += term;
        ++ev.terms;
        if (std::abs(term) <= rel_tol * std::max(std::abs(sum), 1e-30)) {
            if (++small_in_a_row >= 2) break;
        } else {
            small_in_a_row = 0;
        }
    }
    ev.value = sum;
    ev.converged = small_in_a_row >= 2;
    return ev;
}

// ---------------------------------------------------------------------------
// Raster permeability fields and the TPFA reference solver
// ---------------------------------------------------------------------------

/// Cell-centered diagonal permeability raster with origin at 0 and uniform
/// cell sizes; values stored x-fastest.
struct RasterField {
    int dim = 2;
    int nx = 0, ny = 1, nz = 1;
    double dx = 1.0, dy = 1.0, dz = 1.0;
    std::vector<Vec> k;

    int cells() const { return nx * ny * nz; }
    int index(int i, int j, int l = 0) const { return (l * ny + j) * nx + i; }

    Vec cell_center(int i, int j, int l = 0) const {
        return Vec{(i + 0.5) * dx, dim >= 2 ? (j + 0.5) * dy : 0.0, dim >= 3 ? (l + 0.5) * dz : 0.0};
    }

    const Vec& at(int i, int j, int l = 0) const { return k[static_cast<std::size_t>(index(i, j, l))]; }

    Vec sample_nearest(const Vec& p) const {
        auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
        const int i = clampi(static_cast<int>(std::floor(p[0] / dx)), nx);
        const int j = dim >= 2 ? clampi(static_cast<int>(std::floor(p[1] / dy)), ny) : 0;
        const int l = dim >= 3 ? clampi(static_cast<int>(std::floor(p[2] / dz)), nz) : 0;
        return at(i, j, l);
    }

    static RasterField isotropic(int nx_, int ny_, double dx_, double dy_, std::vector<double> vals) {
        RasterField r;
        r.dim = 2;
        r.nx = nx_;
        r.ny = ny_;
        r.dx = dx_;
        r.dy = dy_;
        if (static_cast<int>(vals.size()) != r.cells()) throw std::invalid_argument("RasterField: size mismatch");
        r.k.reserve(vals.size());
        for (double v : vals) {
            if (!(v > 0.0)) throw std::invalid_argument("RasterField: entries must be positive");
            r.k.push_back(Vec{v, v, v});
        }
        return r;
    }
};

/// One diagonal component in the plain-text raster format:
/// `nx ny [nz]`, then cell sizes, then values x-fastest.
inline void write_raster_component(std::ostream& os, const RasterField& r, int component) {
    os.precision(17);
    os << r.nx;
    if (r.dim >= 2) os << ' ' << r.ny;
    if (r.dim >= 3) os << ' ' << r.nz;
    os << '\n' << r.dx;
    if (r.dim >= 2) os << ' ' << r.dy;
    if (r.dim >= 3) os << ' ' << r.dz;
    os << '\n';
    for (int i = 0; i < r.cells(); ++i) os << r.k[static_cast<std::size_t>(i)][component] << '\n';
}

struct RasterComponent {
    int dim = 2;
    int nx = 0, ny = 1, nz = 1;
    double dx = 1.0, dy = 1.0, dz = 1.0;
    std::vector<double> v;
};

inline RasterComponent read_raster_component(std::istream& is, int dim) {
    RasterComponent c;
    c.dim = dim;
    if (!(is >> c.nx)) throw std::runtime_error("raster: bad header");
    if (dim >= 2 && !(is >> c.ny)) throw std::runtime_error("raster: bad header");
    if (dim >= 3 && !(is >> c.nz)) throw std::runtime_error("raster: bad header");
    if (!(is >> c.dx)) throw std::runtime_error("raster: bad cell size");
    if (dim >= 2 && !(is >> c.dy)) throw std::runtime_error("raster: bad cell size");
    if (dim >= 3 && !(is >> c.dz)) throw std::runtime_error("raster: bad cell size");
    const int n = c.nx * c.ny * c.nz;
    c.v.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        if (!(is >> c.v[static_cast<std::size_t>(i)])) throw std::runtime_error("raster: truncated values");
    return c;
}

/// Assembles a RasterField from per-axis component data; a single component
/// may be reused for isotropic fields.
inline RasterField raster_from_components(const std::vector<RasterComponent>& comps) {
    if (comps.empty()) throw std::invalid_argument("raster_from_components: no components");
    const RasterComponent& c0 = comps.front();
    for (const auto& c : comps)
        if (c.nx != c0.nx || c.ny != c0.ny || c.nz != c0.nz || c.dim != c0.dim)
            throw std::invalid_argument("raster_from_components: mismatched geometry");
    RasterField r;
    r.dim = c0.dim;
    r.nx = c0.nx;
    r.ny = c0.ny;
    r.nz = c0.nz;
    r.dx = c0.dx;
    r.dy = c0.dy;
    r.dz = c0.dz;
    const int n = c0.nx * c0.ny * c0.nz;
    r.k.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Vec kv;
        for (int d = 0; d < r.dim; ++d) {
            const double v = comps[std::min<std::size_t>(static_cast<std::size_t>(d), comps.size() - 1)].v[static_cast<std::size_t>(i)];
            if (!(v > 0.0)) throw std::invalid_argument("raster: entries must be positive");
            kv[d] = v;
        }
        r.k[static_cast<std::size_t>(i)] = kv;
    }
    return r;
}

/// Seeded synthetic permeability: moving-average smoothing of white noise on
/// the log scale, rescaled to the requested sigma, then exponentiated.
inline RasterField lognormal_raster(int nx, int ny, int correlation_cells, std::uint64_t seed,
                                    double sigma_log = 1.0) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("lognormal_raster: dims must be positive");
    SplitMix64 rng(seed);
    std::vector<double> noise(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    for (auto& v : noise) v = 2.0 * rng.next_unit() - 1.0;

    const int rad = std::max(correlation_cells, 0);
    std::vector<double> field(noise.size(), 0.0);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            double s = 0.0;
            int cnt = 0;
            for (int jj = std::max(0, j - rad); jj <= std::min(ny - 1, j + rad); ++jj)
                for (int ii = std::max(0, i - rad); ii <= std::min(nx - 1, i + rad); ++ii) {
                    s += noise[static_cast<std::size_t>(jj * nx + ii)];
                    ++cnt;
                }
            field[static_cast<std::size_t>(j * nx + i)] = s / cnt;
        }
    }

    double mean = 0.0;
    for (double v : field) mean += v;
    mean /= static_cast<double>(field.size());
    double var = 0.0;
    for (double v : field) var += (v - mean) * (v - mean);
    var /= static_cast<double>(field.size());
    const double scale = sigma_log > 0.0 && var > 0.0 ? sigma_log / std::sqrt(var) : 0.0;

    std::vector<double> k(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) k[i] = std::exp(scale * (field[i] - mean));
    return RasterField::isotropic(nx, ny, 1.0 / nx, 1.0 / ny, std::move(k));
}

/// Boundary condition of one raster side.
struct TpfaSide {
    enum class Kind { Dirichlet, Flux };
    Kind kind = Kind::Flux;
    double value = 0.0;  // pressure, or outward flux per unit face area

    static TpfaSide dirichlet(double v) { return {Kind::Dirichlet, v}; }
    static TpfaSide no_flow() { return {Kind::Flux, 0.0}; }
    static TpfaSide flux(double v) { return {Kind::Flux, v}; }
};

/// Sides ordered xmin, xmax, ymin, ymax[, zmin, zmax].
using TpfaBcSet = std::array<TpfaSide, 6>;

struct TpfaResult {
    std::vector<double> u;
    CsrMatrix A;
    std::vector<double> b;
    SolveResult solver;
};

/// Cell-centered finite-volume solve of -div(K grad u) = g with the
/// two-point flux approximation; 5-point stencil in 2D, 7-point in 3D.
inline TpfaResult tpfa_solve(const RasterField& r, const TpfaBcSet& bc, const SolverConfig& cfg,
                             const std::vector<double>* source = nullptr) {
    const int n = r.cells();
    std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
    std::vector<double> b(static_cast<std::size_t>(n), 0.0);
    const double cell_vol = r.dx * (r.dim >= 2 ? r.dy : 1.0) * (r.dim >= 3 ? r.dz : 1.0);
    if (source) {
        if (static_cast<int>(source->size()) != n) throw std::invalid_argument("tpfa_solve: source size mismatch");
        for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = (*source)[static_cast<std::size_t>(i)] * cell_vol;
    }

    const double sizes[3] = {r.dx, r.dy, r.dz};
    const int dims[3] = {r.nx, r.ny, r.nz};
    auto face_area = [&](int axis) {
        double a = 1.0;
        for (int d = 0; d < r.dim; ++d)
            if (d != axis) a *= sizes[d];
        return a;
    };

    auto add = [&](int row, int col, double v) { rows[static_cast<std::size_t>(row)].push_back({col, v}); };

    for (int l = 0; l < r.nz; ++l) {
        for (int j = 0; j < r.ny; ++j) {
            for (int i = 0; i < r.nx; ++i) {
                const int me = r.index(i, j, l);
                double diag = 0.0;
                const int idx[3] = {i, j, l};
                for (int axis = 0; axis < r.dim; ++axis) {
                    const double area = face_area(axis);
                    for (int dir = -1; dir <= 1; dir += 2) {
                        int nb[3] = {i, j, l};
                        nb[axis] += dir;
                        const double half_t = 2.0 * area * r.k[static_cast<std::size_t>(me)][axis] / sizes[axis];
                        if (nb[axis] >= 0 && nb[axis] < dims[axis]) {
                            const int other = r.index(nb[0], nb[1], nb[2]);
                            // relative geometry keeps the half distances exact
                            CellGeom ga, gb;
                            ga.face_center[axis] = dir * 0.5 * sizes[axis];
                            gb.face_center[axis] = -dir * 0.5 * sizes[axis];
                            Vec av;
                            av[axis] = area;
                            ga.face_area = av;
                            gb.face_area = av;
                            const double t = tpfa_transmissibility(ga, gb, r.k[static_cast<std::size_t>(me)],
                                                                   r.k[static_cast<std::size_t>(other)]);
                            diag += t;
                            add(me, other, -t);
                        } else {
                            const TpfaSide& side = bc[static_cast<std::size_t>(2 * axis + (dir > 0 ? 1 : 0))];
                            if (side.kind == TpfaSide::Kind::Dirichlet) {
                                diag += half_t;
                                b[static_cast<std::size_t>(me)] += half_t * side.value;
                            } else {
                                // outward flux q: contributes q * area to the balance
                                b[static_cast<std::size_t>(me)] -= side.value * area;
                            }
                        }
                    }
                }
                (void)idx;
                add(me, me, diag);
            }
        }
    }

    for (auto& row : rows)
        std::sort(row.begin(), row.end(), [](const auto& a2, const auto& b2) { return a2.first < b2.first; });

    TpfaResult out;
    out.A = CsrMatrix::from_rows(rows);
    out.b = b;
    out.solver = solve(out.A, b, cfg);
    out.u = out.solver.x;
    return out;
}

/// Multilinear interpolation of a cell-centered field, clamped to the hull of
/// cell centers.
inline double tpfa_interpolate(const RasterField& r, const std::vector<double>& u, const Vec& p) {
    auto axis_weight = [&](double x, double dxa, int n, int& i0, double& t) {
        double s = x / dxa - 0.5;
        s = std::min(std::max(s, 0.0), static_cast<double>(n - 1));
        i0 = std::min(static_cast<int>(std::floor(s)), n - 2 >= 0 ? n - 2 : 0);
        t = n > 1 ? s - i0 : 0.0;
    };
    int i0 = 0, j0 = 0;
    double tx = 0.0, ty = 0.0;
    axis_weight(p[0], r.dx, r.nx, i0, tx);
    if (r.dim >= 2) axis_weight(p[1], r.dy, r.ny, j0, ty);
    if (r.dim == 1) {
        const int i1 = std::min(i0 + 1, r.nx - 1);
        return (1 - tx) * u[static_cast<std::size_t>(r.index(i0, 0))] + tx * u[static_cast<std::size_t>(r.index(i1, 0))];
    }
    const int i1 = std::min(i0 + 1, r.nx - 1);
    const int j1 = std::min(j0 + 1, r.ny - 1);
    const double v00 = u[static_cast<std::size_t>(r.index(i0, j0))];
    const double v10 = u[static_cast<std::size_t>(r.index(i1, j0))];
    const double v01 = u[static_cast<std::size_t>(r.index(i0, j1))];
    const double v11 = u[static_cast<std::size_t>(r.index(i1, j1))];
    return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 + tx * ty * v11;
}

/// Mobility sampled from a raster by nearest cell (piecewise constant), with
/// particle coordinates taken relative to the domain's lower corner.
inline MobilityField sample_mobility(const ParticleSet& ps, const RasterField& r) {
    MobilityField mf;
    mf.diag.reserve(static_cast<std::size_t>(ps.size()));
    for (int i = 0; i < ps.size(); ++i) {
        Vec local;
        for (int d = 0; d < ps.dim; ++d) local[d] = ps.pos[static_cast<std::size_t>(i)][d] - ps.domain.lo(d);
        mf.diag.push_back(r.sample_nearest(local));
    }
    return mf;
}

// ---------------------------------------------------------------------------
// Brute-force row oracle
// ---------------------------------------------------------------------------

/// Direct summation of the scheme formulas, no matrix assembly. Matches
/// (A u)_I of the assembled operator. The Schwaiger path evaluates the
/// three separate gradient sums of the original correction bracket rather
/// than the collapsed pairwise form used by the assembler.
inline double brute_force_row(const ParticleSet& ps, const NeighborTable& nbrs, const CorrectionState& corr,
                              const MobilityField& mob, Scheme scheme, int i, const std::vector<double>& u) {
    const auto ki = static_cast<std::size_t>(i);
    const ParticleCorrection& pc = corr.p[ki];
    const bool star_bracket = corr.opt.corrected;
    const detail::RowScale scale = detail::scheme_scale(scheme, pc, ps.dim);
    const bool fallback = scale.degraded;
    const double sc = fallback ? 1.0 : scale.value;

    double core = 0.0;
    for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
        const Neighbor& nb = nbrs.of(i)[s];
        const auto kj = static_cast<std::size_t>(nb.j);
        const PairKernel& pk = corr.at(i, static_cast<int>(s));
        const Vec r = ps.pos[kj] - ps.pos[ki];
        const Vec& g = star_bracket ? pk.grad_star : pk.grad;
        core += ps.volume[kj] * (u[kj] - u[ki]) *
                detail::pair_bracket(r, nb.dist * nb.dist, mob.at(i), mob.at(nb.j), g, ps.dim);
    }
    if (scheme == Scheme::CorrectedBrookshaw || fallback) return -sc * core;

    const Vec nvec = star_bracket ? pc.N_tilde : pc.N;
    const bool isotropic = mob.is_isotropic(ps.dim);
    double nterm = 0.0;
    if (isotropic) {
        // <grad(mu)> - u_I <grad m> + m_I <grad u>, each a corrected-gradient sum
        Vec g_mu, g_m, g_u;
        for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
            const Neighbor& nb = nbrs.of(i)[s];
            const auto kj = static_cast<std::size_t>(nb.j);
            const PairKernel& pk = corr.at(i, static_cast<int>(s));
            const double mi = mob.at(i)[0], mj = mob.at(nb.j)[0];
            const double vj = ps.volume[kj];
            g_mu += (vj * (mj * u[kj] - mi * u[ki])) * pk.grad_star;
            g_m += (vj * (mj - mi)) * pk.grad_star;
            g_u += (vj * (u[kj] - u[ki])) * pk.grad_star;
        }
        const Vec bracket = g_mu - u[ki] * g_m + mob.at(i)[0] * g_u;
        for (int a = 0; a < ps.dim; ++a) nterm += nvec[a] * bracket[a];
    } else {
        for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
            const Neighbor& nb = nbrs.of(i)[s];
            const auto kj = static_cast<std::size_t>(nb.j);
            const PairKernel& pk = corr.at(i, static_cast<int>(s));
            nterm += ps.volume[kj] * (u[kj] - u[ki]) *
                     detail::pair_nterm(nvec, mob.at(i), mob.at(nb.j), pk.grad_star, ps.dim);
        }
    }
    return -sc * (core - nterm);
}

}  // namespace meshfree
