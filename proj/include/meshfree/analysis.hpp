#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <ostream>
#include <vector>

#include "meshfree/assembly.hpp"
#include "meshfree/linalg.hpp"
#include "meshfree/particles.hpp"
#include "meshfree/reference.hpp"

namespace meshfree {

// ---------------------------------------------------------------------------
// Patch-test errors
// ---------------------------------------------------------------------------

struct PatchErrorReport {
    std::vector<double> exact;
    std::vector<double> approx;
    std::vector<double> abs_err;
    double l2_error = 0.0;        // volume-averaged L2 of (exact - approx)
    double norm_all = 0.0;        // (sum V e^2)^(1/2), all particles
    double norm_interior = 0.0;   // same, interior-tagged particles only
};

/// Applies the assembled operator to the sampled field and compares with the
/// analytic div(m grad u). The operator approximates -div(m grad u), so its
/// output is negated before comparison.
inline PatchErrorReport laplacian_patch_error(const ParticleSet& ps, const SparseSystem& sys,
                                              const TestField& field, const MobilityModel& mob) {
    const int n = ps.size();
    std::vector<double> u(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] = field.value(ps.pos[static_cast<std::size_t>(i)], ps.dim);
    const std::vector<double> au = spmv(sys.A, u);

    PatchErrorReport rep;
    rep.exact.resize(static_cast<std::size_t>(n));
    rep.approx.resize(static_cast<std::size_t>(n));
    rep.abs_err.resize(static_cast<std::size_t>(n));
    double vsum = 0.0, esum = 0.0, all = 0.0, inner = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        rep.exact[k] = analytic_operator(field, mob, ps.pos[k], ps.dim);
        rep.approx[k] = -au[k];
        rep.abs_err[k] = std::abs(rep.exact[k] - rep.approx[k]);
        const double contrib = ps.volume[k] * rep.abs_err[k] * rep.abs_err[k];
        vsum += ps.volume[k];
        esum += contrib;
        all += contrib;
        if (!ps.is_boundary(i)) inner += contrib;
    }
    rep.l2_error = std::sqrt(esum / vsum);
    rep.norm_all = std::sqrt(all);
    rep.norm_interior = std::sqrt(inner);
    return rep;
}

inline void write_patch_csv(std::ostream& os, const ParticleSet& ps, const PatchErrorReport& rep) {
    os << "x";
    if (ps.dim >= 2) os << ",y";
    if (ps.dim >= 3) os << ",z";
    os << ",exact,approx,abs_err\n";
    os.precision(17);
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        for (int d = 0; d < ps.dim; ++d) os << (d ? "," : "") << ps.pos[k][d];
        os << ',' << rep.exact[k] << ',' << rep.approx[k] << ',' << rep.abs_err[k] << '\n';
    }
}

// ---------------------------------------------------------------------------
// von Neumann growth factors
// ---------------------------------------------------------------------------

struct GrowthFactorSample {
    int particle = 0;
    Vec k;
    std::complex<double> lambda;
    double tau = 0.0;
};

/// Uniform wavevector grid over [0, pi/h_p]^dim, per_dim points per axis.
inline std::vector<Vec> wavevector_grid(const ParticleSet& ps, int per_dim) {
    const double kmax = M_PI / ps.spacing;
    std::vector<Vec> ks;
    const int ny = ps.dim >= 2 ? per_dim : 1;
    const int nz = ps.dim >= 3 ? per_dim : 1;
    for (int iz = 0; iz < nz; ++iz)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < per_dim; ++ix) {
                Vec k;
                k[0] = kmax * ix / (per_dim - 1);
                if (ps.dim >= 2) k[1] = kmax * iy / (per_dim - 1);
                if (ps.dim >= 3) k[2] = kmax * iz / (per_dim - 1);
                ks.push_back(k);
            }
    return ks;
}

/// Growth factor of one explicit step u^{n+1} = u^n + tau L[u^n] for the
/// plane wave exp(i k.r):  lambda_j = 1 + tau exp(-i k.r_j) (L e^{ikr})_j,
/// with L = -A (the assembled A approximates -div(M grad)). The system must
/// be the pure operator: no boundary rows substituted. By default only
/// interior particles are reported.
inline std::vector<GrowthFactorSample> von_neumann_growth(const ParticleSet& ps, const SparseSystem& sys,
                                                          double tau, const std::vector<Vec>& wavevectors,
                                                          bool interior_only = true) {
    using cd = std::complex<double>;
    std::vector<GrowthFactorSample> out;
    for (const Vec& k : wavevectors) {
        std::vector<cd> wave(static_cast<std::size_t>(ps.size()));
        for (int i = 0; i < ps.size(); ++i) {
            const double phase = dot(k, ps.pos[static_cast<std::size_t>(i)]);
            wave[static_cast<std::size_t>(i)] = cd(std::cos(phase), std::sin(phase));
        }
        const std::vector<cd> aw = spmv(sys.A, wave);
        for (int i = 0; i < ps.size(); ++i) {
            if (interior_only && ps.is_boundary(i)) continue;
            const double phase = dot(k, ps.pos[static_cast<std::size_t>(i)]);
            const cd lam = 1.0 + tau * cd(std::cos(-phase), std::sin(-phase)) * (-aw[static_cast<std::size_t>(i)]);
            out.push_back({i, k, lam, tau});
        }
    }
    return out;
}

inline void write_growth_csv(std::ostream& os, const std::vector<GrowthFactorSample>& samples, int dim) {
    os << "k_x";
    if (dim >= 2) os << ",k_y";
    if (dim >= 3) os << ",k_z";
    os << ",particle,re,im,abs\n";
    os.precision(17);
    for (const auto& s : samples) {
        for (int d = 0; d < dim; ++d) os << (d ? "," : "") << s.k[d];
        os << ',' << s.particle << ',' << s.lambda.real() << ',' << s.lambda.imag() << ',' << std::abs(s.lambda)
           << '\n';
    }
}

// ---------------------------------------------------------------------------
// Monotonicity
// ---------------------------------------------------------------------------

struct MonotonicityVerdict {
    bool sign_pattern_ok = false;
    std::optional<bool> inverse_positive;  // only set when the dense inverse was computed
    bool inverse_singular = false;
    std::vector<std::pair<int, int>> offending_pairs;
};

/// Sign-pattern scan of the scheme rows (positive diagonal, nonpositive
/// off-diagonals up to roundoff slack) plus, for small systems, entrywise
/// nonnegativity of the dense inverse.
inline MonotonicityVerdict monotonicity_check(const SparseSystem& sys, int dense_threshold) {
    MonotonicityVerdict v;
    v.sign_pattern_ok = true;
    for (int i = 0; i < sys.A.n; ++i) {
        if (sys.row_kind[static_cast<std::size_t>(i)] != RowKind::InteriorScheme) continue;
        double row_scale = 0.0;
        for (int k = sys.A.ptr[static_cast<std::size_t>(i)]; k < sys.A.ptr[static_cast<std::size_t>(i) + 1]; ++k)
            row_scale = std::max(row_scale, std::abs(sys.A.val[static_cast<std::size_t>(k)]));
        const double slack = 1e-14 * row_scale;
        for (int k = sys.A.ptr[static_cast<std::size_t>(i)]; k < sys.A.ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            const int j = sys.A.col[static_cast<std::size_t>(k)];
            const double a = sys.A.val[static_cast<std::size_t>(k)];
            const bool bad = j == i ? !(a > 0.0) : a > slack;
            if (bad) {
                v.sign_pattern_ok = false;
                v.offending_pairs.push_back({i, j});
            }
        }
    }

    if (sys.A.n <= dense_threshold) {
        const int n = sys.A.n;
        double min_entry = 0.0, max_entry = 0.0;
        try {
            for (int col = 0; col < n; ++col) {
                std::vector<double> e(static_cast<std::size_t>(n), 0.0);
                e[static_cast<std::size_t>(col)] = 1.0;
                const std::vector<double> x = direct_dense(sys.A, e);
                for (double xv : x) {
                    min_entry = std::min(min_entry, xv);
                    max_entry = std::max(max_entry, std::abs(xv));
                }
            }
            v.inverse_positive = min_entry >= -1e-12 * std::max(max_entry, 1.0);
        } catch (const std::runtime_error&) {
            v.inverse_singular = true;
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Convergence bookkeeping and the relative solution error
// ---------------------------------------------------------------------------

struct ConvergenceRow {
    int dof = 0;
    double error = 0.0;   // single run, or the mean in random mode
    double mean = 0.0;
    double stddev = 0.0;
    int realizations = 0;
    double observed_order = 0.0;  // vs the previous row; 0 for the first
    bool saturated = false;       // error ratio < 1.3 against the previous row
};

/// Relative L2 solution error: sqrt( sum V ((ref - u)/ref)^2 / sum V ).
/// Reference values must be nonzero wherever weighted.
inline double relative_l2_error(const ParticleSet& ps, const std::vector<double>& u,
                                const std::vector<double>& ref) {
    double vsum = 0.0, esum = 0.0;
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double rel = (ref[k] - u[k]) / ref[k];
        vsum += ps.volume[k];
        esum += ps.volume[k] * rel * rel;
    }
    return std::sqrt(esum / vsum);
}

inline void fill_orders(std::vector<ConvergenceRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double ratio = rows[i - 1].error / rows[i].error;
        rows[i].saturated = ratio < 1.3;
        const double dim_factor = std::log(static_cast<double>(rows[i].dof) / rows[i - 1].dof) / std::log(4.0);
        rows[i].observed_order = std::log(ratio) / (std::log(2.0) * dim_factor);
    }
}

inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
    os << "dof,error,mean,std,order\n";
    os.precision(17);
    for (const auto& r : rows)
        os << r.dof << ',' << r.error << ',' << r.mean << ',' << r.stddev << ',' << r.observed_order << '\n';
}

}  // namespace meshfree
