#pragma once

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "meshfree/geometry.hpp"
#include "meshfree/neighbors.hpp"
#include "meshfree/parallel.hpp"
#include "meshfree/particles.hpp"

namespace meshfree {

// ---------------------------------------------------------------------------
// Cubic spline kernel
// ---------------------------------------------------------------------------

/// Normalization factor: 3/2, 10/(7 pi), 1/pi in 1D/2D/3D.
inline double spline_sigma(int dim) {
    switch (dim) {
        case 1: return 1.5;
        case 2: return 10.0 / (7.0 * M_PI);
        case 3: return 1.0 / M_PI;
    }
    throw std::invalid_argument("spline_sigma: dim must be 1, 2 or 3");
}

/// Shape s(z): 1 - 3/2 z^2 + 3/4 z^3 on [0,1], (2-z)^3/4 on [1,2], 0 beyond.
inline double cubic_spline_shape(double z) {
    if (z < 1.0) return 1.0 - 1.5 * z * z + 0.75 * z * z * z;
    if (z < 2.0) {
        const double t = 2.0 - z;
        return 0.25 * t * t * t;
    }
    return 0.0;
}

/// Shape derivative s'(z); nonpositive for all z >= 0.
inline double dw_dz(double z) {
    if (z < 0.0) throw std::invalid_argument("dw_dz: z must be nonnegative");
    if (z < 1.0) return -3.0 * z + 2.25 * z * z;
    if (z < 2.0) {
        const double t = 2.0 - z;
        return -0.75 * t * t;
    }
    return 0.0;
}

/// Kernel value W(|r|, h) = sigma/h^dim * s(|r|/h).
inline double w(double dist, double h, int dim) {
    if (dist < 0.0 || !(h > 0.0)) throw std::invalid_argument("w: need dist >= 0 and h > 0");
    const double z = dist / h;
    if (z >= 2.0) return 0.0;
    return spline_sigma(dim) / std::pow(h, dim) * cubic_spline_shape(z);
}

// ---------------------------------------------------------------------------
// Kernel gradient options and correction tensors
// ---------------------------------------------------------------------------

/// The four ways of forming the pairwise kernel gradient: the plain gradient,
/// the full derivative of the Shepard-normalized kernel, the diffuse
/// derivative (nu treated as constant), and the full derivative with the
/// single-pair nu term.
enum class GradientKind { PlainW, NormalizedFull, NormalizedDiffuse, NormalizedFullPair };

struct KernelGradientOption {
    GradientKind kind = GradientKind::PlainW;
    bool corrected = false;  // left-multiply by the correction tensor C
};

/// Per-pair kernel data, aligned with the NeighborTable lists.
///
/// Gradients are stored in the "+" orientation: sum_J V_J (u_J - u_I) grad
/// approximates +grad(u) at r_I. The spec-facing grad_w() below returns the
/// nabla_{r_J} convention, which is the negative of this.
struct PairKernel {
    double w = 0.0;
    Vec grad;       // uncorrected gradient of the selected option
    Vec grad_star;  // C * grad (falls back to grad on singular particles)
    double beta = 0.0;  // dot(r_J - r_I, grad) / |r_J - r_I|^2
};

/// Per-particle correction tensors.
///
/// moment   M_ab = sum V (r_J - r_I)_a grad_b,           ~ I on full support
/// C        inverse transpose of the moment matrix (Remark 1: C^-1 = Gamma)
/// gamma    sum V beta (r_J - r_I) (x) (r_J - r_I),       trace scales rows
/// gamma_star  moment^T minus the N-contracted second-moment term
/// N        sum V grad          (support-incompleteness indicator)
/// N_star   sum V grad_star
/// N_tilde  sum V r dot(r, grad_star)/|r|^2  (replaces N for starred brackets)
struct ParticleCorrection {
    double nu = 0.0;
    Vec grad_nu;
    Mat moment;
    Mat C;
    Mat gamma;
    Mat gamma_star;
    Vec N;
    Vec N_star;
    Vec N_tilde;
    double lambda_c = 0.0;  // min eigenvalue of C^-1 (boundary indicator)
    bool singular = false;
};

struct CorrectionState {
    int dim = 2;
    KernelGradientOption opt;
    std::vector<ParticleCorrection> p;
    std::vector<std::vector<PairKernel>> pair;  // aligned with NeighborTable
    std::vector<int> singular_particles;

    const PairKernel& at(int i, int k) const {
        return pair[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
};

/// Condition-number threshold above which a moment matrix is treated as
/// singular and the particle falls back to the uncorrected gradient.
inline constexpr double kSingularCondition = 1e12;

inline CorrectionState build_corrections(const ParticleSet& ps, const NeighborTable& nbrs,
                                         KernelGradientOption opt) {
    const int n = ps.size();
    CorrectionState st;
    st.dim = ps.dim;
    st.opt = opt;
    st.p.resize(static_cast<std::size_t>(n));
    st.pair.resize(static_cast<std::size_t>(n));

    // Specific volume nu (self term included) and its gradient.
    parallel_for(n, [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        auto& pc = st.p[k];
        pc.nu = w(0.0, ps.h[k], ps.dim) * ps.volume[k];
        for (const Neighbor& nb : nbrs.of(i)) {
            const auto j = static_cast<std::size_t>(nb.j);
            pc.nu += w(nb.dist, nb.h_ij, ps.dim) * ps.volume[j];
            const Vec r = ps.pos[j] - ps.pos[k];
            const double gfac = spline_sigma(ps.dim) / std::pow(nb.h_ij, ps.dim) * dw_dz(nb.dist / nb.h_ij) /
                                (nb.h_ij * nb.dist);
            pc.grad_nu += (-gfac * ps.volume[j]) * r;
        }
    });

    // Option gradients, moment matrices, and the tensors derived from them.
    parallel_for(n, [&](int i) {
        const auto ki = static_cast<std::size_t>(i);
        auto& pc = st.p[ki];
        auto& pairs = st.pair[ki];
        pairs.resize(nbrs.of(i).size());

        for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
            const Neighbor& nb = nbrs.of(i)[s];
            const auto kj = static_cast<std::size_t>(nb.j);
            const Vec r = ps.pos[kj] - ps.pos[ki];
            const double z = nb.dist / nb.h_ij;
            const double wv = w(nb.dist, nb.h_ij, ps.dim);
            const double gfac = spline_sigma(ps.dim) / std::pow(nb.h_ij, ps.dim) * dw_dz(z) / (nb.h_ij * nb.dist);
            const Vec g_plain = (-gfac) * r;

            Vec g;
            switch (opt.kind) {
                case GradientKind::PlainW: g = g_plain; break;
                case GradientKind::NormalizedDiffuse: g = (1.0 / pc.nu) * g_plain; break;
                case GradientKind::NormalizedFull:
                    g = (1.0 / pc.nu) * g_plain - (wv / (pc.nu * pc.nu)) * pc.grad_nu;
                    break;
                case GradientKind::NormalizedFullPair:
                    g = ((pc.nu - wv * ps.volume[kj]) / (pc.nu * pc.nu)) * g_plain;
                    break;
            }

            PairKernel pk;
            pk.w = wv;
            pk.grad = g;
            pk.beta = dot(r, g) / (nb.dist * nb.dist);
            pairs[s] = pk;

            const double vj = ps.volume[kj];
            pc.moment = pc.moment + vj * outer(r, g);
            pc.gamma = pc.gamma + (vj * pk.beta) * outer(r, r);
            pc.N += vj * g;
        }

        pc.lambda_c = min_symmetric_eigenvalue(pc.moment, ps.dim);
        double cond = 0.0;
        try {
            const Mat inv = invert(pc.moment, ps.dim, &cond);
            if (cond > kSingularCondition || !std::isfinite(cond)) {
                pc.singular = true;
            } else {
                pc.C = transpose(inv);
            }
        } catch (const std::runtime_error&) {
            pc.singular = true;
        }
        if (pc.singular) pc.C = Mat::identity(ps.dim);

        // Corrected pair gradients, then the starred tensors built from them.
        Mat second_moment[3];
        for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
            const Neighbor& nb = nbrs.of(i)[s];
            const auto kj = static_cast<std::size_t>(nb.j);
            const Vec r = ps.pos[kj] - ps.pos[ki];
            PairKernel& pk = pairs[s];
            pk.grad_star = pc.singular ? pk.grad : matvec(pc.C, pk.grad);
            const double vj = ps.volume[kj];
            pc.N_star += vj * pk.grad_star;
            pc.N_tilde += (vj * dot(r, pk.grad_star) / (nb.dist * nb.dist)) * r;
            for (int gc = 0; gc < ps.dim; ++gc)
                second_moment[gc] = second_moment[gc] + (vj * pk.grad_star[gc]) * outer(r, r);
        }
        pc.gamma_star = transpose(pc.moment);
        for (int gc = 0; gc < ps.dim; ++gc)
            pc.gamma_star = pc.gamma_star - pc.N_star[gc] * second_moment[gc];
    });

    for (int i = 0; i < n; ++i)
        if (st.p[static_cast<std::size_t>(i)].singular) st.singular_particles.push_back(i);
    return st;
}

/// Pairwise kernel gradient in the nabla_{r_J} convention, so that for the
/// plain kernel (r_J - r_I) . grad_w / |r_J - r_I|^2 = dW/dz / (z h^2) <= 0.
inline Vec grad_w(const ParticleSet& ps, const NeighborTable& nbrs, const CorrectionState& corr, int i,
                  int j, KernelGradientOption opt) {
    if (i == j) throw std::invalid_argument("grad_w: i and j must differ");
    if (opt.kind != corr.opt.kind) throw std::invalid_argument("grad_w: corrections built for a different option");
    const int s = nbrs.find(i, j);
    if (s < 0) throw std::invalid_argument("grad_w: j is not a neighbor of i");
    const PairKernel& pk = corr.at(i, s);
    return -1.0 * (opt.corrected ? pk.grad_star : pk.grad);
}

/// Discrete Shepard sum: equals 1 for every particle by construction.
inline double shepard_sum(const ParticleSet& ps, const NeighborTable& nbrs, const CorrectionState& corr,
                          int i) {
    const auto k = static_cast<std::size_t>(i);
    double s = w(0.0, ps.h[k], ps.dim) * ps.volume[k];
    for (const Neighbor& nb : nbrs.of(i)) s += w(nb.dist, nb.h_ij, ps.dim) * ps.volume[static_cast<std::size_t>(nb.j)];
    return s / corr.p[k].nu;
}

/// sum V (r_J - r_I) (x) grad_star; its trace equals dim for every
/// nonsingular particle (exact linear completeness of the corrected gradient).
inline Mat corrected_moment(const ParticleSet& ps, const NeighborTable& nbrs, const CorrectionState& corr,
                            int i) {
    Mat m;
    const auto ki = static_cast<std::size_t>(i);
    for (std::size_t s = 0; s < nbrs.of(i).size(); ++s) {
        const Neighbor& nb = nbrs.of(i)[s];
        const Vec r = ps.pos[static_cast<std::size_t>(nb.j)] - ps.pos[ki];
        m = m + ps.volume[static_cast<std::size_t>(nb.j)] * outer(r, corr.at(i, s).grad_star);
    }
    return m;
}

/// CSV dump used by the lambda_C boundary-detection diagnostic.
inline void write_corrections_csv(std::ostream& os, const ParticleSet& ps, const CorrectionState& corr) {
    os << "particle,nu,lambda_C,gamma_trace,gamma_star_trace,N_x";
    if (ps.dim >= 2) os << ",N_y";
    if (ps.dim >= 3) os << ",N_z";
    os << "\n";
    os.precision(17);
    for (int i = 0; i < ps.size(); ++i) {
        const auto& pc = corr.p[static_cast<std::size_t>(i)];
        os << i << ',' << pc.nu << ',' << pc.lambda_c << ',' << trace(pc.gamma, ps.dim) << ','
           << trace(pc.gamma_star, ps.dim);
        for (int d = 0; d < ps.dim; ++d) os << ',' << pc.N[d];
        os << "\n";
    }
}

}  // namespace meshfree
