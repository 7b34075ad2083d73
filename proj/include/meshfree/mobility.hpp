#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "meshfree/particles.hpp"

namespace meshfree {

/// Diagonal mobility tensor sampled per particle. A scalar field replicates
/// to all diagonal entries. Entries must be nonnegative; strictly positive
/// for well-posed operators.
struct MobilityField {
    std::vector<Vec> diag;

    static MobilityField constant(const ParticleSet& ps, double m) {
        return from_scalar_field(ps, [m](const Vec&) { return m; });
    }

    static MobilityField from_scalar_field(const ParticleSet& ps, const std::function<double(const Vec&)>& f) {
        MobilityField mf;
        mf.diag.reserve(static_cast<std::size_t>(ps.size()));
        for (int i = 0; i < ps.size(); ++i) {
            const double v = f(ps.pos[static_cast<std::size_t>(i)]);
            if (v < 0.0) throw std::invalid_argument("MobilityField: negative mobility");
            Vec d;
            for (int a = 0; a < ps.dim; ++a) d[a] = v;
            mf.diag.push_back(d);
        }
        return mf;
    }

    static MobilityField from_diag_field(const ParticleSet& ps, const std::function<Vec(const Vec&)>& f) {
        MobilityField mf;
        mf.diag.reserve(static_cast<std::size_t>(ps.size()));
        for (int i = 0; i < ps.size(); ++i) {
            const Vec v = f(ps.pos[static_cast<std::size_t>(i)]);
            for (int a = 0; a < ps.dim; ++a)
                if (v[a] < 0.0) throw std::invalid_argument("MobilityField: negative mobility");
            mf.diag.push_back(v);
        }
        return mf;
    }

    const Vec& at(int i) const { return diag[static_cast<std::size_t>(i)]; }

    bool is_isotropic(int dim) const {
        for (const Vec& d : diag)
            for (int a = 1; a < dim; ++a)
                if (d[a] != d[0]) return false;
        return true;
    }
};

}  // namespace meshfree
