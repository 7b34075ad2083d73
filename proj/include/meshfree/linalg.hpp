#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfree/parallel.hpp"

namespace meshfree {

/// Row-compressed square sparse matrix. Column indices are strictly
/// increasing within each row and exact zeros are not stored.
struct CsrMatrix {
    int n = 0;
    std::vector<int> ptr{0};
    std::vector<int> col;
    std::vector<double> val;

    static CsrMatrix from_rows(const std::vector<std::vector<std::pair<int, double>>>& rows) {
        CsrMatrix a;
        a.n = static_cast<int>(rows.size());
        a.ptr.assign(1, 0);
        for (const auto& row : rows) {
            int last = -1;
            for (const auto& [c, v] : row) {
                if (c < 0 || c >= a.n) throw std::invalid_argument("CsrMatrix: column out of range");
                if (c <= last) throw std::invalid_argument("CsrMatrix: row columns must be strictly increasing");
                last = c;
                if (v != 0.0) {
                    a.col.push_back(c);
                    a.val.push_back(v);
                }
            }
            a.ptr.push_back(static_cast<int>(a.col.size()));
        }
        return a;
    }

    std::vector<std::vector<std::pair<int, double>>> to_rows() const {
        std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            for (int k = ptr[static_cast<std::size_t>(i)]; k < ptr[static_cast<std::size_t>(i) + 1]; ++k)
                rows[static_cast<std::size_t>(i)].push_back({col[static_cast<std::size_t>(k)], val[static_cast<std::size_t>(k)]});
        return rows;
    }

    double at(int i, int j) const {
        for (int k = ptr[static_cast<std::size_t>(i)]; k < ptr[static_cast<std::size_t>(i) + 1]; ++k)
            if (col[static_cast<std::size_t>(k)] == j) return val[static_cast<std::size_t>(k)];
        return 0.0;
    }
};

template <class T>
inline std::vector<T> spmv(const CsrMatrix& a, const std::vector<T>& x) {
    if (static_cast<int>(x.size()) != a.n) throw std::invalid_argument("spmv: dimension mismatch");
    std::vector<T> y(static_cast<std::size_t>(a.n));
    parallel_for(a.n, [&](int i) {
        T s{};
        for (int k = a.ptr[static_cast<std::size_t>(i)]; k < a.ptr[static_cast<std::size_t>(i) + 1]; ++k)
            s += a.val[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(a.col[static_cast<std::size_t>(k)])];
        y[static_cast<std::size_t>(i)] = s;
    });
    return y;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Coordinate text export, `I J value` per line, 0-based.
inline void write_matrix_coo(std::ostream& os, const CsrMatrix& a) {
    os.precision(17);
    for (int i = 0; i < a.n; ++i)
        for (int k = a.ptr[static_cast<std::size_t>(i)]; k < a.ptr[static_cast<std::size_t>(i) + 1]; ++k)
            os << i << ' ' << a.col[static_cast<std::size_t>(k)] << ' ' << a.val[static_cast<std::size_t>(k)] << '\n';
}

// ---------------------------------------------------------------------------
// Preconditioners
// ---------------------------------------------------------------------------

enum class PrecondKind { None, Jacobi, ILU0 };
enum class SolveMethod { GMRES, DirectDense };

struct SolverConfig {
    SolveMethod method = SolveMethod::GMRES;
    int restart = 30;
    double tol = 1e-10;  // relative residual target
    int max_iter = 10000;
    PrecondKind precond = PrecondKind::None;
};

/// ILU(0): incomplete LU keeping exactly the sparsity pattern of A.
/// L has unit diagonal and is stored strictly below it, U on and above.
class Ilu0 {
  public:
    explicit Ilu0(const CsrMatrix& a) : a_(a), lu_(a.val), diag_pos_(static_cast<std::size_t>(a.n), -1) {
        const int n = a.n;
        for (int i = 0; i < n; ++i)
            for (int k = a.ptr[static_cast<std::size_t>(i)]; k < a.ptr[static_cast<std::size_t>(i) + 1]; ++k)
                if (a.col[static_cast<std::size_t>(k)] == i) diag_pos_[static_cast<std::size_t>(i)] = k;
        for (int i = 0; i < n; ++i)
            if (diag_pos_[static_cast<std::size_t>(i)] < 0)
                throw std::runtime_error("ilu0: missing diagonal in row " + std::to_string(i));

        // IKJ variant restricted to the fixed pattern.
        std::vector<int> pos(static_cast<std::size_t>(n), -1);
        for (int i = 0; i < n; ++i) {
            const int row_begin = a.ptr[static_cast<std::size_t>(i)];
            const int row_end = a.ptr[static_cast<std::size_t>(i) + 1];
            for (int k = row_begin; k < row_end; ++k) pos[static_cast<std::size_t>(a.col[static_cast<std::size_t>(k)])] = k;
            for (int k = row_begin; k < row_end; ++k) {
                const int j = a.col[static_cast<std::size_t>(k)];
                if (j >= i) break;
                const double piv = lu_[static_cast<std::size_t>(diag_pos_[static_cast<std::size_t>(j)])];
                if (piv == 0.0) throw std::runtime_error("ilu0: zero pivot in row " + std::to_string(j));
                const double f = lu_[static_cast<std::size_t>(k)] / piv;
                lu_[static_cast<std::size_t>(k)] = f;
                for (int kk = diag_pos_[static_cast<std::size_t>(j)] + 1; kk < a.ptr[static_cast<std::size_t>(j) + 1]; ++kk) {
                    const int p = pos[static_cast<std::size_t>(a.col[static_cast<std::size_t>(kk)])];
                    if (p >= 0 && p < row_end && p >= row_begin) lu_[static_cast<std::size_t>(p)] -= f * lu_[static_cast<std::size_t>(kk)];
                }
            }
            for (int k = row_begin; k < row_end; ++k) pos[static_cast<std::size_t>(a.col[static_cast<std::size_t>(k)])] = -1;
            if (lu_[static_cast<std::size_t>(diag_pos_[static_cast<std::size_t>(i)])] == 0.0)
                throw std::runtime_error("ilu0: zero pivot in row " + std::to_string(i));
        }
    }

    std::vector<double> apply(const std::vector<double>& r) const {
        const int n = a_.n;
        std::vector<double> y(r);
        for (int i = 0; i < n; ++i) {
            double s = y[static_cast<std::size_t>(i)];
            for (int k = a_.ptr[static_cast<std::size_t>(i)]; k < diag_pos_[static_cast<std::size_t>(i)]; ++k)
                s -= lu_[static_cast<std::size_t>(k)] * y[static_cast<std::size_t>(a_.col[static_cast<std::size_t>(k)])];
            y[static_cast<std::size_t>(i)] = s;
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = y[static_cast<std::size_t>(i)];
            for (int k = diag_pos_[static_cast<std::size_t>(i)] + 1; k < a_.ptr[static_cast<std::size_t>(i) + 1]; ++k)
                s -= lu_[static_cast<std::size_t>(k)] * y[static_cast<std::size_t>(a_.col[static_cast<std::size_t>(k)])];
            y[static_cast<std::size_t>(i)] = s / lu_[static_cast<std::size_t>(diag_pos_[static_cast<std::size_t>(i)])];
        }
        return y;
    }

    const std::vector<double>& factors() const { return lu_; }

  private:
    CsrMatrix a_;
    std::vector<double> lu_;
    std::vector<int> diag_pos_;
};

struct SolveResult {
    std::vector<double> x;
    std::vector<double> residual_history;  // relative residual per inner iteration
    bool converged = false;
    int iterations = 0;
    double final_residual = 0.0;
};

namespace detail {

class Preconditioner {
  public:
    Preconditioner(PrecondKind kind, const CsrMatrix& a) : kind_(kind) {
        if (kind == PrecondKind::Jacobi) {
            diag_.assign(static_cast<std::size_t>(a.n), 1.0);
            for (int i = 0; i < a.n; ++i) {
                const double d = a.at(i, i);
                if (d == 0.0) throw std::runtime_error("jacobi: zero diagonal in row " + std::to_string(i));
                diag_[static_cast<std::size_t>(i)] = 1.0 / d;
            }
        } else if (kind == PrecondKind::ILU0) {
            ilu_ = std::make_unique<Ilu0>(a);
        }
    }

    std::vector<double> apply(const std::vector<double>& v) const {
        switch (kind_) {
            case PrecondKind::None: return v;
            case PrecondKind::Jacobi: {
                std::vector<double> y(v);
                for (std::size_t i = 0; i < y.size(); ++i) y[i] *= diag_[i];
                return y;
            }
            case PrecondKind::ILU0: return ilu_->apply(v);
        }
        return v;
    }

  private:
    PrecondKind kind_;
    std::vector<double> diag_;
    std::unique_ptr<Ilu0> ilu_;
};

}  // namespace detail

/// Restarted GMRES, right preconditioned, modified Gram-Schmidt with one
/// reorthogonalization pass. The history records the relative residual of
/// every inner iteration; within a cycle it never increases. On failure the
/// best iterate is returned with converged = false.
inline SolveResult gmres(const CsrMatrix& a, const std::vector<double>& b, const SolverConfig& cfg) {
    if (static_cast<int>(b.size()) != a.n) throw std::invalid_argument("gmres: dimension mismatch");
    if (!(cfg.tol > 0.0) || cfg.restart < 1) throw std::invalid_argument("gmres: bad config");
    for (double v : b)
        if (!std::isfinite(v)) throw std::invalid_argument("gmres: right-hand side must be finite");

    SolveResult res;
    res.x.assign(static_cast<std::size_t>(a.n), 0.0);
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        res.converged = true;
        res.residual_history.push_back(0.0);
        return res;
    }

    detail::Preconditioner prec(cfg.precond, a);
    const int m = cfg.restart;
    std::vector<std::vector<double>> v(static_cast<std::size_t>(m + 1));
    std::vector<std::vector<double>> z(static_cast<std::size_t>(m));
    std::vector<double> h(static_cast<std::size_t>((m + 1) * m), 0.0);
    std::vector<double> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m)), g(static_cast<std::size_t>(m + 1));
    auto H = [&](int i, int j) -> double& { return h[static_cast<std::size_t>(i * m + j)]; };

    int total_iters = 0;
    while (total_iters < cfg.max_iter) {
        std::vector<double> r = spmv(a, res.x);
        for (int i = 0; i < a.n; ++i) r[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(i)];
        double beta = norm2(r);
        if (beta / bnorm <= cfg.tol) {
            res.converged = true;
            break;
        }
        v[0] = r;
        for (double& x : v[0]) x /= beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;

        int k = 0;
        for (; k < m && total_iters < cfg.max_iter; ++k, ++total_iters) {
            z[static_cast<std::size_t>(k)] = prec.apply(v[static_cast<std::size_t>(k)]);
            std::vector<double> wv = spmv(a, z[static_cast<std::size_t>(k)]);
            for (int pass = 0; pass < 2; ++pass) {
                for (int i = 0; i <= k; ++i) {
                    double hi = 0.0;
                    for (int r2 = 0; r2 < a.n; ++r2)
                        hi += wv[static_cast<std::size_t>(r2)] * v[static_cast<std::size_t>(i)][static_cast<std::size_t>(r2)];
                    H(i, k) += hi;
                    for (int r2 = 0; r2 < a.n; ++r2)
                        wv[static_cast<std::size_t>(r2)] -= hi * v[static_cast<std::size_t>(i)][static_cast<std::size_t>(r2)];
                }
            }
            const double hkk = norm2(wv);
            H(k + 1, k) = hkk;
            if (hkk > 0.0) {
                v[static_cast<std::size_t>(k + 1)] = wv;
                for (double& x : v[static_cast<std::size_t>(k + 1)]) x /= hkk;
            }
            // apply accumulated Givens rotations, then form a new one
            for (int i = 0; i < k; ++i) {
                const double t = cs[static_cast<std::size_t>(i)] * H(i, k) + sn[static_cast<std::size_t>(i)] * H(i + 1, k);
                H(i + 1, k) = -sn[static_cast<std::size_t>(i)] * H(i, k) + cs[static_cast<std::size_t>(i)] * H(i + 1, k);
                H(i, k) = t;
            }
            const double denom = std::hypot(H(k, k), H(k + 1, k));
            cs[static_cast<std::size_t>(k)] = denom == 0.0 ? 1.0 : H(k, k) / denom;
            sn[static_cast<std::size_t>(k)] = denom == 0.0 ? 0.0 : H(k + 1, k) / denom;
            H(k, k) = denom;
            H(k + 1, k) = 0.0;
            g[static_cast<std::size_t>(k + 1)] = -sn[static_cast<std::size_t>(k)] * g[static_cast<std::size_t>(k)];
            g[static_cast<std::size_t>(k)] = cs[static_cast<std::size_t>(k)] * g[static_cast<std::size_t>(k)];

            res.residual_history.push_back(std::abs(g[static_cast<std::size_t>(k + 1)]) / bnorm);
            if (std::abs(g[static_cast<std::size_t>(k + 1)]) / bnorm <= cfg.tol || hkk == 0.0) {
                ++k;
                ++total_iters;
                break;
            }
        }

        // back substitution and update
        std::vector<double> y(static_cast<std::size_t>(k), 0.0);
        for (int i = k - 1; i >= 0; --i) {
            double s = g[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < k; ++j) s -= H(i, j) * y[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = s / H(i, i);
        }
        for (int j = 0; j < k; ++j)
            for (int r2 = 0; r2 < a.n; ++r2)
                res.x[static_cast<std::size_t>(r2)] += y[static_cast<std::size_t>(j)] * z[static_cast<std::size_t>(j)][static_cast<std::size_t>(r2)];
        for (auto& hh : h) hh = 0.0;

        if (k == 0) break;  // happy breakdown with converged residual handled above
    }

    std::vector<double> r = spmv(a, res.x);
    for (int i = 0; i < a.n; ++i) r[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(i)];
    res.final_residual = norm2(r) / bnorm;
    res.iterations = total_iters;
    if (res.final_residual <= cfg.tol) res.converged = true;
    return res;
}

/// Dense LU with partial pivoting; fallback for small systems.
inline std::vector<double> direct_dense(const CsrMatrix& a, const std::vector<double>& b) {
    if (static_cast<int>(b.size()) != a.n) throw std::invalid_argument("direct_dense: dimension mismatch");
    const int n = a.n;
    std::vector<double> m(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = a.ptr[static_cast<std::size_t>(i)]; k < a.ptr[static_cast<std::size_t>(i) + 1]; ++k)
            m[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(a.col[static_cast<std::size_t>(k)])] =
                a.val[static_cast<std::size_t>(k)];
    std::vector<double> x(b);
    std::vector<int> piv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) piv[static_cast<std::size_t>(i)] = i;
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(m[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)]) >
                std::abs(m[static_cast<std::size_t>(p) * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)]))
                p = i;
        if (m[static_cast<std::size_t>(p) * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)] == 0.0)
            throw std::runtime_error("direct_dense: singular matrix at column " + std::to_string(k));
        if (p != k) {
            for (int j = 0; j < n; ++j)
                std::swap(m[static_cast<std::size_t>(p) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)],
                          m[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)]);
            std::swap(x[static_cast<std::size_t>(p)], x[static_cast<std::size_t>(k)]);
        }
        const double d = m[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)];
        for (int i = k + 1; i < n; ++i) {
            const double f = m[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)] / d;
            if (f == 0.0) continue;
            m[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)] = f;
            for (int j = k + 1; j < n; ++j)
                m[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] -=
                    f * m[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
            x[static_cast<std::size_t>(i)] -= f * x[static_cast<std::size_t>(k)];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = x[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j)
            s -= m[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
        x[static_cast<std::size_t>(i)] = s / m[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
    }
    return x;
}

inline SolveResult solve(const CsrMatrix& a, const std::vector<double>& b, const SolverConfig& cfg) {
    if (cfg.method == SolveMethod::DirectDense) {
        SolveResult r;
        r.x = direct_dense(a, b);
        std::vector<double> res = spmv(a, r.x);
        for (int i = 0; i < a.n; ++i) res[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - res[static_cast<std::size_t>(i)];
        const double bn = norm2(b);
        r.final_residual = bn > 0.0 ? norm2(res) / bn : norm2(res);
        r.converged = true;
        r.residual_history.push_back(r.final_residual);
        return r;
    }
    return gmres(a, b, cfg);
}

inline void write_residual_csv(std::ostream& os, const std::vector<double>& history) {
    os << "iter,relative_residual\n";
    os.precision(17);
    for (std::size_t i = 0; i < history.size(); ++i) os << i + 1 << ',' << history[i] << '\n';
}

}  // namespace meshfree
