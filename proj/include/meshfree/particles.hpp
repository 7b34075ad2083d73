#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfree/geometry.hpp"
#include "meshfree/rng.hpp"

namespace meshfree {

enum class BoundaryTag : int { Interior = 0, Dirichlet = 1, Neumann = 2 };

/// Static particle cloud. Two length scales per particle: the lattice spacing
/// h_p and the smoothing length h = f * h_p. Normals are unit outward vectors
/// and only meaningful on Neumann-tagged particles.
struct ParticleSet {
    int dim = 2;
    double spacing = 0.0;  // h_p
    double factor = 0.0;   // f
    Domain domain;

    std::vector<Vec> pos;
    std::vector<double> volume;
    std::vector<double> h;
    std::vector<BoundaryTag> tag;
    std::vector<Vec> normal;

    int size() const { return static_cast<int>(pos.size()); }

    bool is_boundary(int i) const { return tag[static_cast<std::size_t>(i)] != BoundaryTag::Interior; }

    /// True when the support sphere of particle i lies fully inside the
    /// domain, i.e. the discrete stencil is complete and symmetric on a
    /// uniform lattice.
    bool has_full_support(int i) const {
        const double r = 2.0 * h[static_cast<std::size_t>(i)];
        for (int d = 0; d < dim; ++d) {
            const double x = pos[static_cast<std::size_t>(i)][d];
            if (x - domain.lo(d) < r - 1e-12 || domain.hi(d) - x < r - 1e-12) return false;
        }
        return true;
    }
};

/// Pairwise smoothing length, arithmetic mean of the two particle values.
inline double symmetrize_h(double h_i, double h_j) {
    if (!(h_i > 0.0) || !(h_j > 0.0)) throw std::invalid_argument("symmetrize_h: lengths must be positive");
    return 0.5 * (h_i + h_j);
}

/// Node-centered lattice over the domain, boundary faces included. The
/// outermost layer is tagged Dirichlet; spacing h_p = side/(n_per_dim-1) and
/// V = h_p^dim for every particle.
inline ParticleSet build_uniform_grid(const Domain& domain, int n_per_dim, double f) {
    if (domain.dim < 1 || domain.dim > 3) throw std::invalid_argument("build_uniform_grid: dim must be 1, 2 or 3");
    if (n_per_dim < 2) throw std::invalid_argument("build_uniform_grid: need at least 2 particles per direction");
    if (!(f > 0.0)) throw std::invalid_argument("build_uniform_grid: smoothing factor must be positive");
    for (int d = 1; d < domain.dim; ++d)
        if (std::abs(domain.side(d) - domain.side(0)) > 1e-12 * domain.side(0))
            throw std::invalid_argument("build_uniform_grid: sides must be equal for a single n_per_dim");

    ParticleSet ps;
    ps.dim = domain.dim;
    ps.domain = domain;
    ps.spacing = domain.side(0) / static_cast<double>(n_per_dim - 1);
    ps.factor = f;

    const double hp = ps.spacing;
    const double vol = std::pow(hp, domain.dim);
    const double sml = f * hp;

    const int ny = domain.dim >= 2 ? n_per_dim : 1;
    const int nz = domain.dim >= 3 ? n_per_dim : 1;
    for (int kz = 0; kz < nz; ++kz) {
        for (int ky = 0; ky < ny; ++ky) {
            for (int kx = 0; kx < n_per_dim; ++kx) {
                Vec p;
                p[0] = domain.lo(0) + hp * kx;
                if (domain.dim >= 2) p[1] = domain.lo(1) + hp * ky;
                if (domain.dim >= 3) p[2] = domain.lo(2) + hp * kz;
                const bool edge = kx == 0 || kx == n_per_dim - 1 ||
                                  (domain.dim >= 2 && (ky == 0 || ky == n_per_dim - 1)) ||
                                  (domain.dim >= 3 && (kz == 0 || kz == n_per_dim - 1));
                ps.pos.push_back(p);
                ps.volume.push_back(vol);
                ps.h.push_back(sml);
                ps.tag.push_back(edge ? BoundaryTag::Dirichlet : BoundaryTag::Interior);
                ps.normal.push_back(Vec{});
            }
        }
    }
    return ps;
}

/// Shifts interior particles by a uniform random offset in
/// [-amplitude*h_max, +amplitude*h_max] per coordinate, h_max = max_i h_i.
/// Boundary particles stay put so the domain shape (and any series solution
/// attached to it) is preserved. Deterministic for a fixed seed.
inline ParticleSet perturb(const ParticleSet& ps, double amplitude, std::uint64_t seed) {
    if (amplitude < 0.0) throw std::invalid_argument("perturb: amplitude must be nonnegative");
    ParticleSet out = ps;
    if (amplitude == 0.0) return out;
    double h_max = 0.0;
    for (double v : ps.h) h_max = std::max(h_max, v);
    SplitMix64 rng(seed);
    for (int i = 0; i < ps.size(); ++i) {
        if (ps.is_boundary(i)) continue;
        for (int d = 0; d < ps.dim; ++d) out.pos[static_cast<std::size_t>(i)][d] += rng.next_symmetric(amplitude * h_max);
    }
    return out;
}

/// Rotates all positions about the domain center (2D only). Tags, volumes and
/// smoothing lengths are untouched.
inline ParticleSet rotate(const ParticleSet& ps, double angle_deg) {
    if (ps.dim != 2) throw std::invalid_argument("rotate: only defined for dim = 2");
    ParticleSet out = ps;
    const double a = angle_deg * M_PI / 180.0;
    const double co = std::cos(a), si = std::sin(a);
    const Vec c = ps.domain.center;
    for (int i = 0; i < ps.size(); ++i) {
        const double dx = ps.pos[static_cast<std::size_t>(i)][0] - c[0];
        const double dy = ps.pos[static_cast<std::size_t>(i)][1] - c[1];
        out.pos[static_cast<std::size_t>(i)][0] = c[0] + co * dx - si * dy;
        out.pos[static_cast<std::size_t>(i)][1] = c[1] + si * dx + co * dy;
        // rotate any Neumann normals with the cloud
        const double nx = ps.normal[static_cast<std::size_t>(i)][0];
        const double ny = ps.normal[static_cast<std::size_t>(i)][1];
        out.normal[static_cast<std::size_t>(i)][0] = co * nx - si * ny;
        out.normal[static_cast<std::size_t>(i)][1] = si * nx + co * ny;
    }
    return out;
}

inline char tag_char(BoundaryTag t) {
    switch (t) {
        case BoundaryTag::Interior: return 'I';
        case BoundaryTag::Dirichlet: return 'D';
        case BoundaryTag::Neumann: return 'N';
    }
    return '?';
}

/// Plain-text particle format: header `dim N h_p f`, then one line per
/// particle `x [y] [z] volume h tag [nx ny nz]` (normal only for tag N).
inline void write_particles(std::ostream& os, const ParticleSet& ps) {
    os << std::setprecision(17);
    os << ps.dim << ' ' << ps.size() << ' ' << ps.spacing << ' ' << ps.factor << '\n';
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        for (int d = 0; d < ps.dim; ++d) os << ps.pos[k][d] << ' ';
        os << ps.volume[k] << ' ' << ps.h[k] << ' ' << tag_char(ps.tag[k]);
        if (ps.tag[k] == BoundaryTag::Neumann) {
            for (int d = 0; d < ps.dim; ++d) os << ' ' << ps.normal[k][d];
        }
        os << '\n';
    }
}

inline ParticleSet read_particles(std::istream& is) {
    ParticleSet ps;
    int n = 0;
    if (!(is >> ps.dim >> n >> ps.spacing >> ps.factor)) throw std::runtime_error("read_particles: bad header");
    if (ps.dim < 1 || ps.dim > 3 || n < 0) throw std::runtime_error("read_particles: invalid header values");
    Vec lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (int i = 0; i < n; ++i) {
        Vec p;
        double vol = 0.0, sml = 0.0;
        char t = 0;
        for (int d = 0; d < ps.dim; ++d) is >> p[d];
        is >> vol >> sml >> t;
        if (!is) throw std::runtime_error("read_particles: truncated particle record");
        Vec nrm;
        if (t == 'N')
            for (int d = 0; d < ps.dim; ++d) is >> nrm[d];
        BoundaryTag tag = t == 'I'   ? BoundaryTag::Interior
                          : t == 'D' ? BoundaryTag::Dirichlet
                          : t == 'N' ? BoundaryTag::Neumann
                                     : throw std::runtime_error("read_particles: unknown tag");
        ps.pos.push_back(p);
        ps.volume.push_back(vol);
        ps.h.push_back(sml);
        ps.tag.push_back(tag);
        ps.normal.push_back(nrm);
        for (int d = 0; d < ps.dim; ++d) {
            lo[d] = std::min(lo[d], p[d]);
            hi[d] = std::max(hi[d], p[d]);
        }
    }
    if (n > 0) {
        Vec c, half;
        for (int d = 0; d < ps.dim; ++d) {
            c[d] = 0.5 * (lo[d] + hi[d]);
            half[d] = std::max(0.5 * (hi[d] - lo[d]), 1e-30);
        }
        ps.domain = Domain(c, half, ps.dim);
    }
    return ps;
}

inline void write_particles_file(const std::string& path, const ParticleSet& ps) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_particles(os, ps);
}

inline ParticleSet read_particles_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_particles(is);
}

}  // namespace meshfree
