// meshfree: command-line driver for the SPH elliptic-operator library.
//
// Subcommands: patch, solve, stability, monotone, convergence, raster-solve,
// kernel-dump. Every run writes its artifacts plus a manifest.json recording
// the resolved configuration, its hash, and the seeds, so identical configs
// reproduce byte-identical outputs.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "meshfree/analysis.hpp"
#include "meshfree/bvp.hpp"
#include "meshfree/kernel.hpp"
#include "meshfree/reference.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace meshfree;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonOpts {
    std::string out = "out";
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--threads", c.threads, "cap worker threads (also: MESHFREE_THREADS)");
}

/// Expands `--config FILE` (flat `key=value` or `key value` lines, # comments)
/// into ordinary flags inserted before the explicit ones, which therefore win.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] != "--config") {
            out.push_back(args[i]);
            continue;
        }
        if (i + 1 >= args.size()) throw std::invalid_argument("--config needs a file path");
        std::ifstream is(args[i + 1]);
        if (!is) throw std::invalid_argument("cannot open config file " + args[i + 1]);
        std::vector<std::string> expanded;
        std::string line;
        while (std::getline(is, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string key, value;
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                key = line.substr(0, eq);
                value = line.substr(eq + 1);
            } else {
                std::istringstream ls(line);
                ls >> key >> value;
            }
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            key = trim(key);
            value = trim(value);
            if (key.empty()) continue;
            expanded.push_back(value.empty() ? "--" + key : "--" + key + "=" + value);
        }
        // config flags go right after the subcommand name, before explicit flags
        std::size_t insert_at = out.size();
        for (std::size_t j = 0; j < out.size(); ++j) {
            if (out[j].rfind("--", 0) == std::string::npos) continue;
            insert_at = j;
            break;
        }
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(insert_at), expanded.begin(), expanded.end());
        ++i;  // skip the file path
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::map<std::string, std::string>& config, const std::vector<std::uint64_t>& seeds) {
    std::string canon;
    for (const auto& [k, v] : config) canon += k + "=" + v + "\n";
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config"] = config;
    std::ostringstream hash;
    hash << std::hex << fnv1a64(canon);
    m["config_hash"] = hash.str();
    m["seeds"] = seeds;
    std::ofstream os(dir / "manifest.json");
    os << m.dump(2) << "\n";
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << "\n";
}

Scheme parse_scheme(const std::string& s) {
    if (s == "cbsph") return Scheme::CorrectedBrookshaw;
    if (s == "ssph") return Scheme::Schwaiger;
    if (s == "msph") return Scheme::New;
    throw CLI::ValidationError("--scheme", "unknown scheme '" + s + "' (cbsph|ssph|msph)");
}

GradientKind parse_grad(const std::string& s) {
    if (s == "plain") return GradientKind::PlainW;
    if (s == "full") return GradientKind::NormalizedFull;
    if (s == "diffuse") return GradientKind::NormalizedDiffuse;
    if (s == "pairfull") return GradientKind::NormalizedFullPair;
    throw CLI::ValidationError("--grad", "unknown gradient option '" + s + "' (plain|full|diffuse|pairfull)");
}

PrecondKind parse_precond(const std::string& s) {
    if (s == "none") return PrecondKind::None;
    if (s == "jacobi") return PrecondKind::Jacobi;
    if (s == "ilu0") return PrecondKind::ILU0;
    throw CLI::ValidationError("--precond", "unknown preconditioner '" + s + "' (none|jacobi|ilu0)");
}

/// quad | cubic | sumpow:<s> | prodpow:<mx>,<my>
TestField parse_field(const std::string& s) {
    if (s == "quad") return TestField::sum_pow(2);
    if (s == "cubic") return TestField::sum_pow(3);
    if (s.rfind("sumpow:", 0) == 0) return TestField::sum_pow(std::stoi(s.substr(7)));
    if (s.rfind("prodpow:", 0) == 0) {
        const std::string rest = s.substr(8);
        const auto comma = rest.find(',');
        if (comma == std::string::npos) throw CLI::ValidationError("--function", "prodpow needs mx,my");
        return TestField::prod_pow(std::stoi(rest.substr(0, comma)), std::stoi(rest.substr(comma + 1)));
    }
    throw CLI::ValidationError("--function", "unknown field '" + s + "'");
}

/// one | sumlin | sumpow:<p> | affine:<offset>
MobilityModel parse_mobility(const std::string& s) {
    if (s == "one") return MobilityModel::one();
    if (s == "sumlin") return MobilityModel::sum_pow(1);
    if (s.rfind("sumpow:", 0) == 0) return MobilityModel::sum_pow(std::stoi(s.substr(7)));
    if (s.rfind("affine:", 0) == 0) return MobilityModel::affine(std::stod(s.substr(7)));
    throw CLI::ValidationError("--mob", "unknown mobility '" + s + "'");
}

std::vector<int> parse_ladder(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    if (out.empty()) throw CLI::ValidationError("--ladder", "empty DoF ladder");
    return out;
}

void prepare(const CommonOpts& c) {
    if (c.threads > 0) setenv("MESHFREE_THREADS", std::to_string(c.threads).c_str(), 1);
    fs::create_directories(c.out);
}

void write_solution_csv(const fs::path& path, const ParticleSet& ps, const std::vector<double>& u) {
    std::ofstream os(path);
    os.precision(17);
    os << "x";
    if (ps.dim >= 2) os << ",y";
    if (ps.dim >= 3) os << ",z";
    os << ",u\n";
    for (int i = 0; i < ps.size(); ++i) {
        for (int d = 0; d < ps.dim; ++d) os << (d ? "," : "") << ps.pos[static_cast<std::size_t>(i)][d];
        os << ',' << u[static_cast<std::size_t>(i)] << '\n';
    }
}

// -----------------------------------------------------------------------
// patch
// -----------------------------------------------------------------------

struct PatchOpts {
    CommonOpts common;
    int n = 21;
    double f = 1.2;
    double center = 2.5;
    double half = 0.5;
    std::string function = "cubic";
    std::string mob = "one";
    std::string scheme = "msph";
    std::string grad = "plain";
    bool star = false;
    bool no_multiplier = false;
    double perturb_amp = 0.0;
    std::uint64_t seed = 0;
    double rotate_deg = 0.0;
};

int run_patch(const PatchOpts& o) {
    prepare(o.common);
    const Domain dom(Vec{o.center, o.center}, Vec{o.half, o.half}, 2);
    ParticleSet ps = build_uniform_grid(dom, o.n, o.f);
    if (o.perturb_amp > 0.0) ps = perturb(ps, o.perturb_amp, o.seed);
    if (o.rotate_deg != 0.0) ps = rotate(ps, o.rotate_deg);
    const NeighborTable nbrs = find_neighbors(ps);
    const KernelGradientOption opt{parse_grad(o.grad), o.star};
    const CorrectionState corr = build_corrections(ps, nbrs, opt);
    const MobilityModel mm = parse_mobility(o.mob);
    const MobilityField mob = MobilityField::from_scalar_field(ps, [&](const Vec& r) { return mm.value(r, 2); });
    const Scheme scheme = parse_scheme(o.scheme);
    const SparseSystem sys = scheme == Scheme::CorrectedBrookshaw
                                 ? assemble_brookshaw(ps, nbrs, corr, mob, !o.no_multiplier)
                                 : assemble(scheme, ps, nbrs, corr, mob);
    const TestField field = parse_field(o.function);
    const PatchErrorReport rep = laplacian_patch_error(ps, sys, field, mm);

    std::ofstream csv(fs::path(o.common.out) / "patch_errors.csv");
    write_patch_csv(csv, ps, rep);

    double max_full = 0.0, max_rel_full = 0.0;
    for (int i = 0; i < ps.size(); ++i) {
        if (!ps.has_full_support(i)) continue;
        const auto k = static_cast<std::size_t>(i);
        max_full = std::max(max_full, rep.abs_err[k]);
        if (rep.exact[k] != 0.0) max_rel_full = std::max(max_rel_full, rep.abs_err[k] / std::abs(rep.exact[k]));
    }
    json summary;
    summary["l2_error"] = rep.l2_error;
    summary["norm_all"] = rep.norm_all;
    summary["norm_interior"] = rep.norm_interior;
    summary["max_abs_err_full_support"] = max_full;
    summary["max_rel_err_full_support"] = max_rel_full;
    summary["degraded_rows"] = sys.degraded_rows.size();
    summary["singular_particles"] = corr.singular_particles.size();
    write_json_file(fs::path(o.common.out) / "summary.json", summary);

    write_manifest(o.common.out, "patch",
                   {{"n", std::to_string(o.n)},
                    {"f", fmt(o.f)},
                    {"center", fmt(o.center)},
                    {"half", fmt(o.half)},
                    {"function", o.function},
                    {"mob", o.mob},
                    {"scheme", o.scheme},
                    {"grad", o.grad},
                    {"star", o.star ? "1" : "0"},
                    {"no_multiplier", o.no_multiplier ? "1" : "0"},
                    {"perturb", fmt(o.perturb_amp)},
                    {"seed", std::to_string(o.seed)},
                    {"rotate", fmt(o.rotate_deg)}},
                   {o.seed});
    return 0;
}

// -----------------------------------------------------------------------
// solve
// -----------------------------------------------------------------------

struct SolveOpts {
    CommonOpts common;
    std::string bc = "dirichlet";
    double psi1 = 150.0, psi2 = 90.0, psi3 = 150.0, psi4 = 200.0;
    int n = 21;
    double f = 1.001;
    std::string scheme = "msph";
    std::string grad = "plain";
    bool star = false;
    std::string mob = "one";
    double perturb_amp = 0.0;
    std::uint64_t seed = 0;
    std::string precond = "ilu0";
    std::string method = "gmres";
    double tol = 1e-10;
    int restart = 30;
    int maxiter = 10000;
    bool dump_system = false;
    bool no_fallback = false;
    std::string reference = "auto";
    int ref_cells = 257;
};

int run_solve(const SolveOpts& o) {
    prepare(o.common);
    BvpProblem prob;
    prob.domain = Domain(Vec{0.5, 0.5}, Vec{0.5, 0.5}, 2);
    prob.bc = o.bc == "mixed" ? BcMode::Mixed : BcMode::Dirichlet;
    prob.psi = {o.psi1, o.psi2, o.psi3, o.psi4};
    prob.mobility = parse_mobility(o.mob);
    BvpRun run;
    run.n_per_dim = o.n;
    run.f = o.f;
    run.scheme = {parse_scheme(o.scheme), {parse_grad(o.grad), o.star}};
    run.perturb_amplitude = o.perturb_amp;
    run.seed = o.seed;
    run.solver.precond = parse_precond(o.precond);
    run.solver.method = o.method == "direct" ? SolveMethod::DirectDense : SolveMethod::GMRES;
    run.solver.tol = o.tol;
    run.solver.restart = o.restart;
    run.solver.max_iter = o.maxiter;
    run.direct_fallback = !o.no_fallback;

    const BvpSolution sol = solve_bvp(prob, run);

    write_solution_csv(fs::path(o.common.out) / "solution.csv", sol.ps, sol.u);
    {
        std::ofstream rs(fs::path(o.common.out) / "residuals.csv");
        write_residual_csv(rs, sol.solver.residual_history);
    }
    if (o.dump_system) {
        std::ofstream ms(fs::path(o.common.out) / "matrix.txt");
        write_matrix_coo(ms, sol.sys.A);
        std::ofstream bs(fs::path(o.common.out) / "rhs.txt");
        bs.precision(17);
        for (double v : sol.sys.b) bs << v << '\n';
        std::ofstream pf(fs::path(o.common.out) / "particles.txt");
        write_particles(pf, sol.ps);
    }

    json summary;
    summary["converged"] = sol.solver.converged;
    summary["iterations"] = sol.solver.iterations;
    summary["final_residual"] = sol.solver.final_residual;
    summary["direct_fallback"] = sol.used_direct_fallback;
    summary["degraded_rows"] = sol.sys.degraded_rows.size();
    if (o.reference == "auto") {
        const ReferenceSolution ref = make_reference(prob, o.ref_cells);
        summary["relative_l2_error"] = error_vs_reference(sol.ps, sol.u, ref, make_boundary_spec(prob, sol.ps));
    }
    write_json_file(fs::path(o.common.out) / "summary.json", summary);

    write_manifest(o.common.out, "solve",
                   {{"bc", o.bc},
                    {"psi1", fmt(o.psi1)},
                    {"psi2", fmt(o.psi2)},
                    {"psi3", fmt(o.psi3)},
                    {"psi4", fmt(o.psi4)},
                    {"n", std::to_string(o.n)},
                    {"f", fmt(o.f)},
                    {"scheme", o.scheme},
                    {"grad", o.grad},
                    {"star", o.star ? "1" : "0"},
                    {"mob", o.mob},
                    {"perturb", fmt(o.perturb_amp)},
                    {"seed", std::to_string(o.seed)},
                    {"precond", o.precond},
                    {"method", o.method},
                    {"tol", fmt(o.tol)},
                    {"restart", std::to_string(o.restart)},
                    {"maxiter", std::to_string(o.maxiter)},
                    {"reference", o.reference},
                    {"ref_cells", std::to_string(o.ref_cells)}},
                   {o.seed});
    return sol.solver.converged ? 0 : 2;
}

// -----------------------------------------------------------------------
// stability
// -----------------------------------------------------------------------

struct StabilityOpts {
    CommonOpts common;
    int n = 21;
    double f = 1.2;
    double tau = 0.25;
    int kgrid = 16;
    std::string scheme = "all";
    std::string grad = "plain";
    bool star = false;
    double perturb_amp = 0.0;
    std::uint64_t seed = 0;
    int dim = 2;
};

int run_stability(const StabilityOpts& o) {
    prepare(o.common);
    // unit-spaced lattice: the growth-factor bound is scale dependent
    const double half = (o.n - 1) / 2.0;
    const Domain dom(Vec{0.0, 0.0, 0.0}, Vec{half, half, half}, o.dim);
    ParticleSet ps = build_uniform_grid(dom, o.n, o.f);
    if (o.perturb_amp > 0.0) ps = perturb(ps, o.perturb_amp, o.seed);
    const NeighborTable nbrs = find_neighbors(ps);
    const CorrectionState corr = build_corrections(ps, nbrs, {parse_grad(o.grad), o.star});
    const MobilityField mob = MobilityField::constant(ps, 1.0);
    const std::vector<Vec> ks = wavevector_grid(ps, o.kgrid);

    std::vector<std::pair<std::string, Scheme>> schemes;
    if (o.scheme == "all")
        schemes = {{"cbsph", Scheme::CorrectedBrookshaw}, {"ssph", Scheme::Schwaiger}, {"msph", Scheme::New}};
    else
        schemes = {{o.scheme, parse_scheme(o.scheme)}};

    json summary;
    for (const auto& [name, scheme] : schemes) {
        const SparseSystem sys = assemble(scheme, ps, nbrs, corr, mob);
        const auto samples = von_neumann_growth(ps, sys, o.tau, ks);
        std::ofstream csv(fs::path(o.common.out) / ("growth_" + name + ".csv"));
        write_growth_csv(csv, samples, ps.dim);
        double max_abs = 0.0, max_im = 0.0;
        for (const auto& g : samples) {
            max_abs = std::max(max_abs, std::abs(g.lambda));
            max_im = std::max(max_im, std::abs(g.lambda.imag()));
        }
        summary[name] = {{"max_abs_lambda", max_abs}, {"max_im_lambda", max_im}, {"samples", samples.size()}};
    }
    write_json_file(fs::path(o.common.out) / "summary.json", summary);

    write_manifest(o.common.out, "stability",
                   {{"n", std::to_string(o.n)},
                    {"f", fmt(o.f)},
                    {"tau", fmt(o.tau)},
                    {"kgrid", std::to_string(o.kgrid)},
                    {"scheme", o.scheme},
                    {"grad", o.grad},
                    {"star", o.star ? "1" : "0"},
                    {"perturb", fmt(o.perturb_amp)},
                    {"seed", std::to_string(o.seed)},
                    {"dim", std::to_string(o.dim)}},
                   {o.seed});
    return 0;
}

// -----------------------------------------------------------------------
// monotone
// -----------------------------------------------------------------------

struct MonotoneOpts {
    CommonOpts common;
    int n = 5;
    double f = 1.2;
    std::string scheme = "msph";
    std::string grad = "plain";
    std::string mob = "affine:1";
    int dense_threshold = 400;
};

int run_monotone(const MonotoneOpts& o) {
    prepare(o.common);
    BvpProblem prob;
    prob.domain = Domain(Vec{0.5, 0.5}, Vec{0.5, 0.5}, 2);
    prob.mobility = parse_mobility(o.mob);
    BvpRun run;
    run.n_per_dim = o.n;
    run.f = o.f;
    run.scheme = {parse_scheme(o.scheme), {parse_grad(o.grad), false}};
    ParticleSet ps = make_bvp_particles(prob, run);
    const NeighborTable nbrs = find_neighbors(ps);
    const CorrectionState corr = build_corrections(ps, nbrs, run.scheme.opt);
    const MobilityField mob =
        MobilityField::from_scalar_field(ps, [&](const Vec& r) { return prob.mobility.value(r, 2); });
    SparseSystem sys = assemble(run.scheme.scheme, ps, nbrs, corr, mob);

    // boundary data in [0,1] for the maximum-principle check
    BoundarySpec spec(ps.size());
    for (int i = 0; i < ps.size(); ++i)
        if (ps.is_boundary(i)) {
            const Vec& p = ps.pos[static_cast<std::size_t>(i)];
            spec.set_dirichlet(i, 0.5 * (p[0] + p[1]));
        }
    apply_dirichlet(sys, ps, spec);

    const MonotonicityVerdict v = monotonicity_check(sys, o.dense_threshold);
    bool dmp_ok = false;
    if (sys.A.n <= o.dense_threshold) {
        const std::vector<double> u = direct_dense(sys.A, sys.b);
        dmp_ok = true;
        for (double x : u) dmp_ok &= x >= -1e-12 && x <= 1.0 + 1e-12;
    }

    std::ofstream off(fs::path(o.common.out) / "offending_pairs.csv");
    off << "row,col,value\n";
    for (const auto& [i, j] : v.offending_pairs) off << i << ',' << j << ',' << sys.A.at(i, j) << '\n';

    json summary;
    summary["sign_pattern_ok"] = v.sign_pattern_ok;
    if (v.inverse_positive) summary["inverse_positive"] = *v.inverse_positive;
    summary["inverse_singular"] = v.inverse_singular;
    summary["dmp_ok"] = dmp_ok;
    summary["offending_pairs"] = v.offending_pairs.size();
    write_json_file(fs::path(o.common.out) / "summary.json", summary);

    write_manifest(o.common.out, "monotone",
                   {{"n", std::to_string(o.n)},
                    {"f", fmt(o.f)},
                    {"scheme", o.scheme},
                    {"grad", o.grad},
                    {"mob", o.mob},
                    {"dense_threshold", std::to_string(o.dense_threshold)}},
                   {});
    return 0;
}

// -----------------------------------------------------------------------
// convergence
// -----------------------------------------------------------------------

struct ConvergenceOpts {
    CommonOpts common;
    std::string bc = "dirichlet";
    double psi1 = 150.0, psi2 = 90.0, psi3 = 150.0, psi4 = 200.0;
    double f = 1.001;
    std::string scheme = "msph";
    std::string grad = "plain";
    bool star = false;
    std::string mob = "one";
    std::string ladder = "25,100,400,1600,6400";
    int realizations = 0;
    double perturb_amp = 0.1;
    std::uint64_t seed = 1;
    int ref_cells = 257;
    double tol = 1e-11;
};

int run_convergence(const ConvergenceOpts& o) {
    prepare(o.common);
    BvpProblem prob;
    prob.domain = Domain(Vec{0.5, 0.5}, Vec{0.5, 0.5}, 2);
    prob.bc = o.bc == "mixed" ? BcMode::Mixed : BcMode::Dirichlet;
    prob.psi = {o.psi1, o.psi2, o.psi3, o.psi4};
    prob.mobility = parse_mobility(o.mob);
    BvpRun run;
    run.f = o.f;
    run.scheme = {parse_scheme(o.scheme), {parse_grad(o.grad), o.star}};
    run.perturb_amplitude = o.realizations > 0 ? o.perturb_amp : 0.0;
    run.solver.precond = PrecondKind::ILU0;
    run.solver.restart = 60;
    run.solver.tol = o.tol;
    run.solver.max_iter = 100000;

    const ReferenceSolution ref = make_reference(prob, o.ref_cells);
    const std::vector<ConvergenceRow> rows =
        convergence_study(prob, run, parse_ladder(o.ladder), o.realizations, o.seed, ref);

    std::ofstream csv(fs::path(o.common.out) / "convergence.csv");
    write_convergence_csv(csv, rows);

    json jrows = json::array();
    for (const auto& r : rows)
        jrows.push_back({{"dof", r.dof},
                         {"error", r.error},
                         {"mean", r.mean},
                         {"std", r.stddev},
                         {"order", r.observed_order},
                         {"saturated", r.saturated}});
    json summary;
    summary["rows"] = jrows;
    write_json_file(fs::path(o.common.out) / "summary.json", summary);

    write_manifest(o.common.out, "convergence",
                   {{"bc", o.bc},
                    {"psi1", fmt(o.psi1)},
                    {"psi2", fmt(o.psi2)},
                    {"psi3", fmt(o.psi3)},
                    {"psi4", fmt(o.psi4)},
                    {"f", fmt(o.f)},
                    {"scheme", o.scheme},
                    {"grad", o.grad},
                    {"star", o.star ? "1" : "0"},
                    {"mob", o.mob},
                    {"ladder", o.ladder},
                    {"realizations", std::to_string(o.realizations)},
                    {"perturb", fmt(o.perturb_amp)},
                    {"seed", std::to_string(o.seed)},
                    {"ref_cells", std::to_string(o.ref_cells)},
                    {"tol", fmt(o.tol)}},
                   {o.seed});
    return 0;
}

// -----------------------------------------------------------------------
// raster-solve
// -----------------------------------------------------------------------

struct RasterOpts {
    CommonOpts common;
    std::string raster_x;
    std::string raster_y;
    std::string lognormal;  // nx,ny,corr,seed[,sigma]
    double drop_lo = 1.0;
    double drop_hi = 2.0;
    int n_particles = 0;
    double f = 1.2;
    std::string scheme = "msph";
    std::string grad = "plain";
    double tol = 1e-10;
    int maxiter = 40000;
    bool compare_precond = false;
};

int run_raster(const RasterOpts& o) {
    prepare(o.common);
    RasterField raster;
    std::vector<std::uint64_t> seeds;
    if (!o.lognormal.empty()) {
        std::stringstream ss(o.lognormal);
        std::vector<double> v;
        std::string tok;
        while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
        if (v.size() < 4) throw CLI::ValidationError("--lognormal", "expected nx,ny,corr,seed[,sigma]");
        const double sigma = v.size() > 4 ? v[4] : 1.0;
        raster = lognormal_raster(static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                                  static_cast<std::uint64_t>(v[3]), sigma);
        seeds.push_back(static_cast<std::uint64_t>(v[3]));
        std::ofstream rf(fs::path(o.common.out) / "raster.txt");
        write_raster_component(rf, raster, 0);
    } else if (!o.raster_x.empty()) {
        std::ifstream fx(o.raster_x);
        if (!fx) throw CLI::ValidationError("--raster", "cannot open " + o.raster_x);
        std::vector<RasterComponent> comps{read_raster_component(fx, 2)};
        if (!o.raster_y.empty()) {
            std::ifstream fy(o.raster_y);
            if (!fy) throw CLI::ValidationError("--raster-y", "cannot open " + o.raster_y);
            comps.push_back(read_raster_component(fy, 2));
        }
        raster = raster_from_components(comps);
    } else {
        throw CLI::ValidationError("raster-solve", "need --raster or --lognormal");
    }

    // reference finite-volume solve with the pressure drop in y
    TpfaBcSet bc{};
    bc[0] = TpfaSide::no_flow();
    bc[1] = TpfaSide::no_flow();
    bc[2] = TpfaSide::dirichlet(o.drop_lo);
    bc[3] = TpfaSide::dirichlet(o.drop_hi);
    SolverConfig scfg;
    scfg.precond = PrecondKind::ILU0;
    scfg.restart = 60;
    scfg.tol = o.tol;
    scfg.max_iter = o.maxiter;
    const TpfaResult tp = tpfa_solve(raster, bc, scfg);

    // particle discretization of the same problem
    const double lx = raster.nx * raster.dx, ly = raster.ny * raster.dy;
    if (std::abs(lx - ly) > 1e-12 * lx)
        throw CLI::ValidationError("raster-solve", "particle lattice needs a square raster footprint");
    const int np = o.n_particles > 0 ? o.n_particles : raster.nx + 1;
    const Domain dom(Vec{0.5 * lx, 0.5 * ly}, Vec{0.5 * lx, 0.5 * ly}, 2);
    ParticleSet ps = build_uniform_grid(dom, np, o.f);
    for (int i = 0; i < ps.size(); ++i) {
        if (!ps.is_boundary(i)) continue;
        const auto k = static_cast<std::size_t>(i);
        const bool bottom = std::abs(ps.pos[k][1] - dom.lo(1)) < 1e-9 * ps.spacing;
        const bool top = std::abs(ps.pos[k][1] - dom.hi(1)) < 1e-9 * ps.spacing;
        if (bottom || top) {
            ps.tag[k] = BoundaryTag::Dirichlet;
        } else {
            ps.tag[k] = BoundaryTag::Neumann;
            ps.normal[k] = Vec{ps.pos[k][0] < dom.center[0] ? -1.0 : 1.0, 0.0};
        }
    }
    const NeighborTable nbrs = find_neighbors(ps);
    const CorrectionState corr = build_corrections(ps, nbrs, {parse_grad(o.grad), false});
    const MobilityField mob = sample_mobility(ps, raster);
    const Scheme scheme = parse_scheme(o.scheme);
    SparseSystem sys = assemble(scheme, ps, nbrs, corr, mob);
    BoundarySpec spec(ps.size());
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (ps.tag[k] == BoundaryTag::Dirichlet)
            spec.set_dirichlet(i, ps.pos[k][1] < dom.center[1] ? o.drop_lo : o.drop_hi);
        else if (ps.tag[k] == BoundaryTag::Neumann)
            spec.set_neumann(i, 0.0);
    }
    apply_dirichlet(sys, ps, spec);
    apply_neumann(sys, ps, nbrs, corr, mob, spec, scheme);

    const SolveResult sph = gmres(sys.A, sys.b, scfg);
    {
        std::ofstream rs(fs::path(o.common.out) / "residuals_ilu0.csv");
        write_residual_csv(rs, sph.residual_history);
    }

    std::vector<double> refv(static_cast<std::size_t>(ps.size()));
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        Vec local = ps.pos[k];
        for (int d = 0; d < 2; ++d) local[d] -= dom.lo(d);
        refv[k] = spec.dirichlet[k] ? *spec.dirichlet[k] : tpfa_interpolate(raster, tp.u, local);
    }
    const double rel = relative_l2_error(ps, sph.x, refv);

    write_solution_csv(fs::path(o.common.out) / "sph_solution.csv", ps, sph.x);
    {
        std::ofstream os(fs::path(o.common.out) / "tpfa_solution.csv");
        os.precision(17);
        os << "x,y,u\n";
        for (int j = 0; j < raster.ny; ++j)
            for (int i = 0; i < raster.nx; ++i) {
                const Vec c = raster.cell_center(i, j);
                os << c[0] << ',' << c[1] << ',' << tp.u[static_cast<std::size_t>(raster.index(i, j))] << '\n';
            }
    }

    json summary;
    summary["relative_l2_error"] = rel;
    summary["sph_converged"] = sph.converged;
    summary["sph_iterations_ilu0"] = sph.iterations;
    summary["tpfa_iterations_ilu0"] = tp.solver.iterations;
    if (o.compare_precond) {
        SolverConfig plain = scfg;
        plain.precond = PrecondKind::None;
        const SolveResult sph_none = gmres(sys.A, sys.b, plain);
        const SolveResult tp_none = gmres(tp.A, tp.b, plain);
        std::ofstream rs(fs::path(o.common.out) / "residuals_none.csv");
        write_residual_csv(rs, sph_none.residual_history);
        summary["sph_iterations_none"] = sph_none.iterations;
        summary["tpfa_iterations_none"] = tp_none.iterations;
        summary["sph_none_converged"] = sph_none.converged;
    }
    write_json_file(fs::path(o.common.out) / "summary.json", summary);

    write_manifest(o.common.out, "raster-solve",
                   {{"raster", o.raster_x},
                    {"raster_y", o.raster_y},
                    {"lognormal", o.lognormal},
                    {"drop_lo", fmt(o.drop_lo)},
                    {"drop_hi", fmt(o.drop_hi)},
                    {"n_particles", std::to_string(np)},
                    {"f", fmt(o.f)},
                    {"scheme", o.scheme},
                    {"grad", o.grad},
                    {"tol", fmt(o.tol)},
                    {"maxiter", std::to_string(o.maxiter)},
                    {"compare_precond", o.compare_precond ? "1" : "0"}},
                   seeds);
    return sph.converged && tp.solver.converged ? 0 : 2;
}

// -----------------------------------------------------------------------
// kernel-dump
// -----------------------------------------------------------------------

struct KernelOpts {
    CommonOpts common;
    int n = 21;
    double f = 1.2;
    std::string grad = "plain";
    bool star = false;
    double perturb_amp = 0.0;
    std::uint64_t seed = 0;
};

int run_kernel_dump(const KernelOpts& o) {
    prepare(o.common);
    const Domain dom(Vec{2.5, 2.5}, Vec{0.5, 0.5}, 2);
    ParticleSet ps = build_uniform_grid(dom, o.n, o.f);
    if (o.perturb_amp > 0.0) ps = perturb(ps, o.perturb_amp, o.seed);
    const NeighborTable nbrs = find_neighbors(ps);
    const CorrectionState corr = build_corrections(ps, nbrs, {parse_grad(o.grad), o.star});
    {
        std::ofstream cs(fs::path(o.common.out) / "corrections.csv");
        write_corrections_csv(cs, ps, corr);
    }
    {
        std::ofstream ks(fs::path(o.common.out) / "kernel_profile.csv");
        ks.precision(17);
        ks << "z,shape,dshape,w_1d,w_2d,w_3d\n";
        for (int i = 0; i <= 250; ++i) {
            const double z = 2.5 * i / 250.0;
            ks << z << ',' << cubic_spline_shape(z) << ',' << dw_dz(z) << ',' << w(z, 1.0, 1) << ','
               << w(z, 1.0, 2) << ',' << w(z, 1.0, 3) << '\n';
        }
    }
    double min_lambda = 1e300, max_shepard_dev = 0.0;
    for (int i = 0; i < ps.size(); ++i) {
        min_lambda = std::min(min_lambda, corr.p[static_cast<std::size_t>(i)].lambda_c);
        max_shepard_dev = std::max(max_shepard_dev, std::abs(shepard_sum(ps, nbrs, corr, i) - 1.0));
    }
    json summary;
    summary["min_lambda_c"] = min_lambda;
    summary["singular_particles"] = corr.singular_particles.size();
    summary["max_shepard_deviation"] = max_shepard_dev;
    write_json_file(fs::path(o.common.out) / "summary.json", summary);
    write_manifest(o.common.out, "kernel-dump",
                   {{"n", std::to_string(o.n)},
                    {"f", fmt(o.f)},
                    {"grad", o.grad},
                    {"star", o.star ? "1" : "0"},
                    {"perturb", fmt(o.perturb_amp)},
                    {"seed", std::to_string(o.seed)}},
                   {o.seed});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mesh-free discretizations of the heterogeneous elliptic operator"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    PatchOpts po;
    CLI::App* patch = app.add_subcommand("patch", "apply a scheme to an analytic field and report errors");
    add_common(patch, po.common);
    patch->add_option("--n", po.n);
    patch->add_option("--f", po.f);
    patch->add_option("--center", po.center);
    patch->add_option("--half", po.half);
    patch->add_option("--function", po.function, "quad|cubic|sumpow:<s>|prodpow:<mx>,<my>");
    patch->add_option("--mob", po.mob, "one|sumlin|sumpow:<p>|affine:<c>");
    patch->add_option("--scheme", po.scheme, "cbsph|ssph|msph");
    patch->add_option("--grad", po.grad, "plain|full|diffuse|pairfull");
    patch->add_flag("--star", po.star, "use corrected gradients in the scheme bracket");
    patch->add_flag("--no-multiplier", po.no_multiplier, "raw Brookshaw row without the trace multiplier");
    patch->add_option("--perturb", po.perturb_amp);
    patch->add_option("--seed", po.seed);
    patch->add_option("--rotate", po.rotate_deg);

    SolveOpts so;
    CLI::App* slv = app.add_subcommand("solve", "assemble and solve one boundary-value problem");
    add_common(slv, so.common);
    slv->add_option("--bc", so.bc, "dirichlet|mixed");
    slv->add_option("--psi1", so.psi1);
    slv->add_option("--psi2", so.psi2);
    slv->add_option("--psi3", so.psi3);
    slv->add_option("--psi4", so.psi4);
    slv->add_option("--n", so.n);
    slv->add_option("--f", so.f);
    slv->add_option("--scheme", so.scheme);
    slv->add_option("--grad", so.grad);
    slv->add_flag("--star", so.star);
    slv->add_option("--mob", so.mob);
    slv->add_option("--perturb", so.perturb_amp);
    slv->add_option("--seed", so.seed);
    slv->add_option("--precond", so.precond, "none|jacobi|ilu0");
    slv->add_option("--method", so.method, "gmres|direct");
    slv->add_option("--tol", so.tol);
    slv->add_option("--restart", so.restart);
    slv->add_option("--maxiter", so.maxiter);
    slv->add_flag("--dump-system", so.dump_system, "write matrix.txt (I J value), rhs.txt, particles.txt");
    slv->add_flag("--no-direct-fallback", so.no_fallback, "report non-convergence instead of retrying densely");
    slv->add_option("--reference", so.reference, "auto|none");
    slv->add_option("--ref-cells", so.ref_cells);

    StabilityOpts sto;
    CLI::App* stab = app.add_subcommand("stability", "von Neumann growth factors on a unit-spaced lattice");
    add_common(stab, sto.common);
    stab->add_option("--n", sto.n);
    stab->add_option("--f", sto.f);
    stab->add_option("--tau", sto.tau);
    stab->add_option("--kgrid", sto.kgrid);
    stab->add_option("--scheme", sto.scheme, "cbsph|ssph|msph|all");
    stab->add_option("--grad", sto.grad);
    stab->add_flag("--star", sto.star);
    stab->add_option("--perturb", sto.perturb_amp);
    stab->add_option("--seed", sto.seed);
    stab->add_option("--dim", sto.dim)->check(CLI::Range(1, 2));

    MonotoneOpts mo;
    CLI::App* mono = app.add_subcommand("monotone", "sign-pattern and inverse-positivity scan");
    add_common(mono, mo.common);
    mono->add_option("--n", mo.n);
    mono->add_option("--f", mo.f);
    mono->add_option("--scheme", mo.scheme);
    mono->add_option("--grad", mo.grad);
    mono->add_option("--mob", mo.mob);
    mono->add_option("--dense-threshold", mo.dense_threshold);

    ConvergenceOpts co;
    CLI::App* conv = app.add_subcommand("convergence", "error ladder against the reference solution");
    add_common(conv, co.common);
    conv->add_option("--bc", co.bc, "dirichlet|mixed");
    conv->add_option("--psi1", co.psi1);
    conv->add_option("--psi2", co.psi2);
    conv->add_option("--psi3", co.psi3);
    conv->add_option("--psi4", co.psi4);
    conv->add_option("--f", co.f);
    conv->add_option("--scheme", co.scheme);
    conv->add_option("--grad", co.grad);
    conv->add_flag("--star", co.star);
    conv->add_option("--mob", co.mob);
    conv->add_option("--ladder", co.ladder, "comma-separated DoF list");
    conv->add_option("--realizations", co.realizations, "0: uniform lattice; >0: perturbed statistics");
    conv->add_option("--perturb", co.perturb_amp);
    conv->add_option("--seed", co.seed);
    conv->add_option("--ref-cells", co.ref_cells);
    conv->add_option("--tol", co.tol);

    RasterOpts ro;
    CLI::App* rast = app.add_subcommand("raster-solve", "heterogeneous raster problem, particles vs finite volumes");
    add_common(rast, ro.common);
    rast->add_option("--raster", ro.raster_x, "raster component file (reused isotropically)");
    rast->add_option("--raster-y", ro.raster_y, "optional y-component file");
    rast->add_option("--lognormal", ro.lognormal, "nx,ny,corr,seed[,sigma]");
    rast->add_option("--drop-lo", ro.drop_lo);
    rast->add_option("--drop-hi", ro.drop_hi);
    rast->add_option("--n-particles", ro.n_particles, "0: one node per cell corner");
    rast->add_option("--f", ro.f);
    rast->add_option("--scheme", ro.scheme);
    rast->add_option("--grad", ro.grad);
    rast->add_option("--tol", ro.tol);
    rast->add_option("--maxiter", ro.maxiter);
    rast->add_flag("--compare-precond", ro.compare_precond, "also run unpreconditioned GMRES");

    KernelOpts ko;
    CLI::App* kd = app.add_subcommand("kernel-dump", "correction tensors and kernel profile");
    add_common(kd, ko.common);
    kd->add_option("--n", ko.n);
    kd->add_option("--f", ko.f);
    kd->add_option("--grad", ko.grad);
    kd->add_flag("--star", ko.star);
    kd->add_option("--perturb", ko.perturb_amp);
    kd->add_option("--seed", ko.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 3;
    }

    try {
        if (*patch) return run_patch(po);
        if (*slv) return run_solve(so);
        if (*stab) return run_stability(sto);
        if (*mono) return run_monotone(mo);
        if (*conv) return run_convergence(co);
        if (*rast) return run_raster(ro);
        if (*kd) return run_kernel_dump(ko);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        std::cerr << "error: " << what << "\n";
        return what.find("solver failed") != std::string::npos ? 2 : 1;
    }
    return 0;
}
