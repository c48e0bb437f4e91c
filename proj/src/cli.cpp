#include "radonlab/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace radonlab::cli {

namespace fs = std::filesystem;
using ops::GridFunction;

// absolute floor added to the reproducing-formula bound, relative to |f|_2
constexpr double kRoundoff = 1e-12;

// ---------------------------------------------------------------- config

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw UsageError("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
        c.kv_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("config file not found: " + path);
    return parse(read_file(path));
}

std::string Config::require(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end() || it->second.empty()) throw UsageError("missing config field '" + key + "'");
    return it->second;
}

std::string Config::str(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

double Config::num(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        return parse_rational(it->second);
    } catch (const std::exception&) {
        throw UsageError("config field '" + key + "' is not a number: " + it->second);
    }
}

int Config::integer(const std::string& key, int def) const {
    double v = num(key, def);
    if (v != std::floor(v)) throw UsageError("config field '" + key + "' must be an integer");
    return static_cast<int>(v);
}

std::vector<double> Config::list(const std::string& key, const std::vector<double>& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<double> out;
    for (const auto& f : split(it->second, ',')) {
        std::string t = trim(f);
        if (t.empty()) continue;
        if (t == "inf") {
            out.push_back(INFINITY);
            continue;
        }
        try {
            out.push_back(parse_rational(t));
        } catch (const std::exception&) {
            throw UsageError("config field '" + key + "' has a bad entry: " + t);
        }
    }
    return out;
}

std::vector<int> Config::ints(const std::string& key, const std::vector<int>& def) const {
    if (!has(key)) return def;
    std::vector<int> out;
    for (double v : list(key, {})) {
        if (v != std::floor(v)) throw UsageError("config field '" + key + "' must list integers");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

// ---------------------------------------------------------------- report

void RunReport::add(int criterion, const std::string& name, bool pass, double value, double threshold,
                    double runtime) {
    checks.push_back({criterion, name, pass ? "pass" : "fail", value, threshold, runtime});
}

void RunReport::info(int criterion, const std::string& name, double value, double runtime) {
    checks.push_back({criterion, name, "info", value, 0.0, runtime});
}

bool RunReport::failed() const {
    for (const auto& c : checks)
        if (c.status == "fail") return true;
    return false;
}

std::string RunReport::csv() const {
    std::string s = "criterion,name,status,value,threshold\n";
    for (const auto& c : checks)
        s += std::to_string(c.criterion) + "," + c.name + "," + c.status + "," + fmt_double(c.value) + "," +
             fmt_double(c.threshold) + "\n";
    return s;
}

RunReport RunReport::from_csv(const std::string& text) {
    RunReport r;
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 5) throw InputError("report row has wrong arity: " + line);
        r.checks.push_back({std::stoi(f[0]), f[1], f[2], parse_rational(f[3]), parse_rational(f[4]), 0.0});
    }
    return r;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write " + path);
    os << text;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- scenarios

namespace {

vfalg::GammaSpec identity_gamma(int N, int n) {
    vfalg::GammaSpec g;
    g.N = N;
    g.n = n;
    g.eval = [](const Vec&, const Vec& x) { return x; };
    return g;
}

vfalg::GammaSpec shift_gamma(double sign) {
    vfalg::GammaSpec g;
    g.N = 1;
    g.n = 1;
    g.eval = [sign](const Vec& t, const Vec& x) {
        Vec y = x;
        y[0] += sign * t[0];
        return y;
    };
    return g;
}

int refined(int P, int refine) {
    for (int i = 0; i < refine; ++i) P = 2 * P - 1;
    return P;
}

vfalg::VectorFieldSpec unit_field(int n, int i) {
    std::vector<vfalg::Polynomial> p;
    for (int k = 0; k < n; ++k) p.push_back(k == i ? vfalg::Polynomial::constant(n, 1.0) : vfalg::Polynomial(n));
    return vfalg::VectorFieldSpec::symbolic(p);
}

}  // namespace

Scenario make_scenario(const Config& c, int refine) {
    Scenario s;
    s.name = c.require("scenario.name");
    s.a = c.num("params.a", 1.0);
    if (!(s.a > 0.0)) throw UsageError("params.a must be positive");
    if (s.name == "heisenberg") {
        auto lp = heis::heis_lp_scenario(refined(c.integer("grid.P", 33), refine), c.num("grid.L", 2.0), s.a);
        s.grid = lp.grid;
        s.chain = lp.chain;
        s.blocks = lp.blocks;
        s.gamma = heis::heis_gamma();
        s.e = heis::heis_exponents();
        s.nu = 2;
    } else if (s.name == "translation") {
        s.grid = ops::Grid(1, c.num("grid.L", 8.0), refined(c.integer("grid.P", 1025), refine));
        s.chain = ops::CutoffChain::standard(s.grid.L);
        s.blocks.push_back({shift_gamma(1.0), {1.0}, kernels::make_bump("poly4", 1, s.a)});
        s.gamma = shift_gamma(-1.0);
        s.e = {vfalg::FormalDegree({1.0})};
        s.nu = 1;
    } else if (s.name == "trivial") {
        s.nu = c.integer("params.nu", 1);
        if (s.nu < 1) throw UsageError("params.nu must be >= 1");
        s.grid = ops::Grid(c.integer("grid.n", 1), c.num("grid.L", 2.0), refined(c.integer("grid.P", 65), refine));
        s.chain = ops::CutoffChain::standard(s.grid.L);
        for (int mu = 0; mu < s.nu; ++mu) {
            s.blocks.push_back({identity_gamma(1, s.grid.n), {1.0}, kernels::make_bump("poly4", 1, s.a)});
            std::vector<double> d(s.nu, 0.0);
            d[mu] = 1.0;
            s.e.emplace_back(d);
        }
        s.gamma = identity_gamma(s.nu, s.grid.n);
    } else if (s.name == "exp-list") {
        auto fields = vfalg::read_field_list(read_file(c.require("scenario.fields")));
        if (fields.empty()) throw UsageError("exp-list scenario needs at least one field");
        const int n = fields.front().field.dim();
        s.nu = fields.front().degree.nu();
        s.grid = ops::Grid(n, c.num("grid.L", 2.0), refined(c.integer("grid.P", 17), refine));
        s.chain = ops::CutoffChain::standard(s.grid.L);
        s.mu0 = c.integer("params.mu0", s.nu);
        const bool general = c.integer("params.general", 0) != 0;
        for (int mu = 1; mu <= s.nu; ++mu) {
            auto sub = ops::extract_sublist(fields, mu, s.mu0, general);
            if (sub.fields.empty()) throw UsageError("exp-list: no fields for parameter " + std::to_string(mu));
            std::vector<vfalg::VectorFieldSpec> fs;
            for (const auto& f : sub.fields) fs.push_back(f.field);
            s.blocks.push_back({ops::build_gamma_hat(fs), sub.degs,
                                kernels::make_bump("poly4", static_cast<int>(fs.size()), s.a)});
        }
        std::vector<vfalg::VectorFieldSpec> all;
        for (const auto& f : fields) {
            all.push_back(f.field);
            s.e.push_back(f.degree);
        }
        s.gamma = ops::build_gamma_hat(all);
    } else if (s.name == "xst") {
        s.grid = ops::Grid(1, c.num("grid.L", 4.0), refined(c.integer("grid.P", 257), refine));
        s.chain = ops::CutoffChain::standard(s.grid.L);
        s.gamma = heis::xst_gamma();
        s.e = {vfalg::FormalDegree({1, 0}), vfalg::FormalDegree({0, 1})};
        s.nu = 2;
    } else {
        throw UsageError("unknown scenario '" + s.name + "'");
    }
    if (s.name != "exp-list") s.mu0 = c.integer("params.mu0", s.nu);
    if (s.mu0 < 1 || s.mu0 > s.nu) throw UsageError("params.mu0 must lie in [1, nu]");
    return s;
}

kernels::DyadicKernel scenario_kernel(const Config& c, const Scenario& s, int J) {
    if (c.has("kernel.manifest")) {
        auto m = kernels::parse_manifest(read_file(c.require("kernel.manifest")));
        m.J = J;
        return kernels::build_kernel(m);
    }
    const double a = s.a;
    auto rule = [&s, a](const std::vector<int>&) {
        return kernels::make_tensor_bump(std::vector<std::string>(s.gamma.N, "odd4"), a);
    };
    return kernels::synth_kernel(rule, s.mu0, s.nu, J, s.e, a);
}

vfalg::FieldList scenario_fields(const Config& c, std::vector<double>& x0) {
    const std::string name = c.require("scenario.name");
    vfalg::FieldList fields;
    if (name == "euclidean") {
        for (int i = 0; i < 2; ++i) fields.push_back({unit_field(2, i), vfalg::FormalDegree({1.0})});
    } else if (name == "heisenberg") {
        auto h = heis::heis_fields();
        const double deg[] = {1.0, 1.0, 2.0};
        for (int i = 0; i < 3; ++i) fields.push_back({h[i].field, vfalg::FormalDegree({deg[i]})});
    } else if (name == "exp-list") {
        fields = vfalg::read_field_list(read_file(c.require("scenario.fields")));
    } else {
        throw UsageError("scenario '" + name + "' has no field list for ball estimates");
    }
    const int n = fields.front().field.dim();
    x0 = c.list("ball.x0", std::vector<double>(n, 0.0));
    if (static_cast<int>(x0.size()) != n) throw UsageError("ball.x0 must have " + std::to_string(n) + " entries");
    return fields;
}

// ---------------------------------------------------------------- commands

namespace {

std::string out_path(const Context& ctx, const std::string& file) { return (fs::path(ctx.out_dir) / file).string(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void log_line(const Context& ctx, const std::string& s) {
    if (ctx.log) *ctx.log << s << "\n";
}

int finish(const Context& ctx, const RunReport& rep, const std::string& name) {
    write_file(out_path(ctx, "report_" + name + ".csv"), rep.csv());
    for (const auto& c : rep.checks)
        log_line(ctx, "[" + c.status + "] criterion " + std::to_string(c.criterion) + " " + c.name + " = " +
                          fmt_double(c.value));
    return rep.failed() ? 5 : 0;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<long>(v.size())); }

std::string index_str(const std::vector<int>& j) {
    std::string s;
    for (int v : j) s += (s.empty() ? "" : " ") + (v == kInf ? std::string("inf") : std::to_string(v));
    return s;
}

}  // namespace

int cmd_ball(const Context& ctx) {
    const auto& c = ctx.cfg;
    std::vector<double> x0;
    auto fields = scenario_fields(c, x0);
    const int nu = fields.front().degree.nu();
    auto deltas = c.list("ball.delta", {0.5});
    const int samples = c.integer("ball.samples", 10000);
    const double tol = c.num("ball.tol", 0.15);
    RunReport rep;
    std::vector<flow::BallEstimate> rows;
    std::string dcsv = "delta,measured,predicted,rel_err\n";
    for (size_t i = 0; i < deltas.size(); ++i) {
        std::vector<double> delta(nu, deltas[i]);
        auto t0 = std::chrono::steady_clock::now();
        auto d = flow::doubling_ratio(to_vec(x0), fields, delta, samples, derive_seed(ctx.seed, i));
        rows.push_back(d.small);
        double rel = std::abs(d.measured / d.predicted - 1.0);
        dcsv += fmt_double(deltas[i]) + "," + fmt_double(d.measured) + "," + fmt_double(d.predicted) + "," +
                fmt_double(rel) + "\n";
        rep.add(2, "doubling_rel_err_delta_" + fmt_double(deltas[i]), rel <= tol, rel, tol, seconds_since(t0));
        if (c.str("scenario.name", "") == "euclidean") {
            double exact = std::numbers::pi * deltas[i] * deltas[i];
            double err = std::abs(d.small.volume / exact - 1.0);
            rep.add(1, "volume_rel_err_delta_" + fmt_double(deltas[i]), err <= 0.05, err, 0.05);
        }
    }
    write_file(out_path(ctx, "ball.csv"), flow::ball_estimate_csv(rows));
    write_file(out_path(ctx, "doubling.csv"), dcsv);
    return finish(ctx, rep, "ball");
}

int cmd_kernel(const Context& ctx) {
    const auto& c = ctx.cfg;
    auto m = kernels::parse_manifest(read_file(c.require("kernel.manifest")));
    if (c.has("params.J")) m.J = c.integer("params.J", m.J);
    auto K = kernels::build_kernel(m);
    write_file(out_path(ctx, "manifest.txt"), kernels::write_manifest(m));
    const int per_axis = c.integer("kernel.per_axis", 9);
    std::string pieces;
    for (const auto& [j, b] : K.pieces) {
        std::string csv = kernels::dump_bump_csv(b, per_axis);
        std::istringstream is(csv);
        std::string line;
        std::getline(is, line);
        if (pieces.empty()) pieces = "j," + line + "\n";
        while (std::getline(is, line)) pieces += index_str(j) + "," + line + "\n";
    }
    write_file(out_path(ctx, "pieces.csv"), pieces);

    std::vector<int> n_split = c.ints("kernel.split", {});
    if (n_split.empty()) {
        // one block of coordinates per parameter, read off the exponents
        n_split.assign(m.nu, 0);
        for (const auto& d : m.e) n_split[std::max(0, d.pure_component())]++;
    }
    std::vector<double> radii(n_split.size(), m.a);
    auto samples = kernels::product_samples(n_split, radii, c.integer("kernel.kmax", 2));
    std::string table = "alpha,value\n";
    RunReport rep;
    for (int i = 0; i <= K.N; ++i) {
        std::vector<int> alpha(K.N, 0);
        if (i < K.N) alpha[i] = 1;
        double v = kernels::product_estimate_check(K, alpha, n_split, samples);
        table += index_str(alpha) + "," + fmt_double(v) + "\n";
        rep.info(4, "product_estimate_alpha_" + std::to_string(i), v);
    }
    write_file(out_path(ctx, "product_estimates.csv"), table);
    rep.add(4, "pieces", !K.pieces.empty(), static_cast<double>(K.pieces.size()), 1.0);
    return finish(ctx, rep, "kernel");
}

int cmd_apply(const Context& ctx) {
    const auto& c = ctx.cfg;
    auto s = make_scenario(c, ctx.refine);
    const std::string op = c.require("apply.op");
    std::vector<int> j = c.ints("apply.j", std::vector<int>(s.nu, 0));
    GridFunction f;
    if (c.has("apply.input")) {
        f = GridFunction::from_csv(read_file(c.require("apply.input")), s.grid);
    } else {
        std::mt19937_64 rng(ctx.seed);
        f = analysis::make_probe(s.grid, c.integer("apply.probe", 0), rng);
    }
    ops::Operator T;
    const int J = c.integer("params.J", *std::max_element(j.begin(), j.end()));
    if (op == "T") {
        T = ops::make_T(scenario_kernel(c, s, J), s.gamma, s.grid, s.chain);
    } else if (op == "Tj") {
        auto K = scenario_kernel(c, s, J);
        if (!K.pieces.count(j)) throw UsageError("apply.j is not in the kernel index set");
        T = ops::make_Tj(K.pieces.at(j), j, s.e, s.gamma, s.grid, s.chain);
    } else if (op == "D") {
        if (s.blocks.empty()) throw UsageError("scenario has no Littlewood-Paley blocks");
        ops::LPFamily fam(s.grid, s.chain, s.blocks, J, c.integer("params.closed", 1) != 0);
        T = fam.D(j);
    } else if (op == "A" || op == "B") {
        std::vector<ops::AverageSpec> av;
        for (const auto& b : s.blocks) av.push_back({b.gamma_hat, b.degs});
        ops::AFamily A(s.grid, s.chain, av, ops::WindowSigma{c.num("params.sigma_b", 1.0)});
        T = op == "A" ? A.A(j) : ops::make_B(j, s.mu0, A, s.gamma, s.e, s.grid, s.chain);
    } else if (op == "M") {
        T = ops::make_M(j, s.gamma, s.e, s.grid, s.chain, ops::WindowSigma{c.num("params.sigma_b", 1.0)});
    } else {
        throw UsageError("apply.op must be one of T, Tj, D, A, M, B");
    }
    GridFunction g = T(f);
    write_file(out_path(ctx, "input.csv"), f.to_csv());
    write_file(out_path(ctx, "apply.csv"), g.to_csv());
    write_file(out_path(ctx, "apply.bin"), g.to_binary());
    RunReport rep;
    rep.info(0, "output_l2", g.lp_norm(2.0));
    return finish(ctx, rep, "apply");
}

int cmd_norms(const Context& ctx) {
    const auto& c = ctx.cfg;
    auto s = make_scenario(c, ctx.refine);
    auto ps = c.list("params.p", {});
    if (ps.empty()) throw UsageError("params.p must list at least one exponent");
    for (double p : ps)
        if (!(p > 1.0)) throw UsageError("params.p entries must lie in (1, inf]");
    if (s.blocks.empty()) throw UsageError("scenario has no Littlewood-Paley blocks");
    const int J = c.integer("params.J", 3);
    const int Mmax = c.integer("params.M", 4);
    const int probes = c.integer("params.probes", 10);
    RunReport rep;
    std::vector<analysis::DecayFit> fits;
    std::vector<analysis::NormEstimate> norms;

    ops::LPFamily open(s.grid, s.chain, s.blocks, J, false);
    std::vector<ops::AverageSpec> av;
    for (const auto& b : s.blocks) av.push_back({b.gamma_hat, b.degs});
    ops::AFamily A(s.grid, s.chain, av, ops::WindowSigma{c.num("params.sigma_b", 1.0)});
    auto K = scenario_kernel(c, s, J);

    analysis::DecayInputs in;
    in.D = [&open](const std::vector<int>& j) { return open.D(j); };
    in.B = [&](const std::vector<int>& j) { return ops::make_B(j, s.mu0, A, s.gamma, s.e, s.grid, s.chain); };
    in.T = [&](const std::vector<int>& j) {
        if (!K.pieces.count(j)) return ops::zero(s.grid);
        return ops::make_Tj(K.pieces.at(j), j, s.e, s.gamma, s.grid, s.chain);
    };
    auto idx = analysis::full_index(s.nu, J);
    std::vector<int> zero(s.nu, 0), top(s.nu, J);
    std::vector<std::vector<std::vector<int>>> pairs, triples;
    for (const auto& k : idx) {
        if (analysis::linf_dist(zero, k) == *std::max_element(k.begin(), k.end())) pairs.push_back({zero, k});
        pairs.push_back({top, k});
    }
    for (int d = 0; d <= J; ++d) {
        std::vector<int> jd(s.nu, d);
        triples.push_back({zero, zero, jd});
        triples.push_back({zero, jd, zero});
        triples.push_back({jd, jd, jd});
    }
    auto run_fit = [&](analysis::DecayMode mode, const auto& tuples) {
        try {
            auto f = analysis::orthogonality_decay(in, tuples, mode, ctx.seed);
            fits.push_back(f);
            if (f.zero_family)
                rep.info(7, analysis::mode_name(mode) + "_zero_family", 1.0);
            else
                rep.info(7, analysis::mode_name(mode) + "_eps", f.eps);
        } catch (const FitError& e) {
            log_line(ctx, std::string("fit skipped: ") + e.what());
            rep.info(7, analysis::mode_name(mode) + "_fit_error", 0.0);
        }
    };
    run_fit(analysis::DecayMode::DDstar, pairs);
    run_fit(analysis::DecayMode::BD, pairs);
    run_fit(analysis::DecayMode::TD, triples);

    for (double p : ps) {
        auto fam = [&](const std::vector<int>& k) {
            std::vector<ops::Operator> diag;
            for (const auto& j : idx) {
                std::vector<int> j1(s.nu), j2(s.nu);
                bool ok = true;
                for (int mu = 0; mu < s.nu; ++mu) {
                    j1[mu] = j[mu] + k[mu];
                    j2[mu] = j[mu] + k[s.nu + mu];
                    ok = ok && j1[mu] >= 0 && j1[mu] <= J && j2[mu] >= 0 && j2[mu] <= J && K.pieces.count(j1);
                }
                if (ok) diag.push_back(ops::compose(open.D(j), ops::compose(in.T(j1), open.D(j2))));
            }
            return diag;
        };
        std::vector<std::vector<int>> ks;
        for (int d = 0; d <= J; ++d) {
            std::vector<int> k(2 * s.nu, 0);
            k[0] = d;
            ks.push_back(k);
            k[0] = 0;
            k[s.nu] = d;
            if (d > 0) ks.push_back(k);
        }
        try {
            auto f = analysis::vector_valued_decay(fam, ks, p, std::max(2, probes / 2), "vvT", ctx.seed);
            fits.push_back(f);
            rep.info(7, "vvT_eps_p" + fmt_double(p), f.eps);
        } catch (const FitError& e) {
            log_line(ctx, std::string("vector-valued fit skipped: ") + e.what());
        }
    }

    ops::LPFamily closed(s.grid, s.chain, s.blocks, J, true);
    std::vector<double> rm;
    for (int M = 1; M <= Mmax; ++M) {
        auto pr = analysis::build_UM_RM(closed, M, ctx.seed);
        auto e = analysis::l2_opnorm(pr.R, 1e-6, 200, derive_seed(ctx.seed, M), "R_" + std::to_string(M));
        norms.push_back(e);
        rm.push_back(e.value);
        if (M == 1) rep.info(8, "boundary_discrepancy", pr.boundary_discrepancy);
    }
    bool mono = true;
    for (size_t i = 1; i < rm.size(); ++i) mono = mono && rm[i] <= rm[i - 1] * (1.0 + 1e-3);
    rep.add(8, "R_M_non_increasing", mono, mono ? 1.0 : 0.0, 1.0);
    if (!rm.empty() && rm.front() > 0.0) rep.add(8, "R_M_final_over_initial", rm.back() / rm.front() <= 0.5, rm.back() / rm.front(), 0.5);

    const int m_max = c.integer("params.m_max", 20);
    auto pr = analysis::build_UM_RM(closed, Mmax, ctx.seed);
    auto psi = s.chain.sample(s.chain.psi_v, s.grid);
    auto psi_m2 = s.chain.sample(s.chain.psi_m2, s.grid);
    try {
        auto V = analysis::build_VM(pr.R, psi, m_max, ctx.seed);
        norms.push_back({"contraction", 2.0, V.contraction, "power-iteration", 0, 0.0, true, {}});
        double worst = 0.0;
        bool ok = true;
        for (int i = 0; i < probes; ++i) {
            std::mt19937_64 rng(derive_seed(ctx.seed, 500 + i));
            auto f = analysis::make_probe(s.grid, i, rng);
            double r = analysis::reproducing_residual(pr.U, V.V, psi_m2, f);
            double bound = (V.tail + pr.boundary_discrepancy + kRoundoff) * f.lp_norm(2.0);
            ok = ok && r <= bound;
            worst = std::max(worst, r / f.lp_norm(2.0));
        }
        rep.add(9, "reproducing_residual", ok, worst, V.tail + pr.boundary_discrepancy + kRoundoff);
    } catch (const PreconditionFailure& e) {
        log_line(ctx, e.what());
        rep.add(9, "neumann_contraction", false, 1.0, 1.0);
    }

    auto iv = analysis::square_function_interval(closed, psi_m2, 2.0, 2 * probes, ctx.seed);
    rep.add(10, "square_function_C", iv.C() <= 20.0, iv.C(), 20.0);

    write_file(out_path(ctx, "decay.csv"), analysis::decay_csv(fits));
    write_file(out_path(ctx, "norms.csv"), analysis::norm_csv(norms));
    return finish(ctx, rep, "norms");
}

namespace {

int maximal_heisenberg(const Context& ctx, RunReport& rep) {
    const auto& c = ctx.cfg;
    const double L = c.num("grid.L", 2.0);
    const double r = c.num("maximal.r", 2.0);
    const double p = c.num("maximal.p", 2.0);
    const double N = c.num("maximal.N", 0.25);
    const double R = c.num("maximal.eval_radius", 0.5);
    const int levels = c.integer("maximal.levels", 2);
    const int P0 = c.integer("grid.P", 17);
    const int radial = c.integer("maximal.radial", 4);
    auto f = [](const Vec& x) { return std::exp(-2.0 * (x[0] * x[0] + x[1] * x[1]) - 4.0 * x[2] * x[2]); };
    std::string csv = "refine,P,discrepancy,budget,discrepancy_ratio,budget_ratio\n";
    double pd = 0.0, pb = 0.0;
    for (int k = 0; k <= std::max(1, ctx.refine); ++k) {
        int P = refined(P0, k);
        auto res = heis::dilation_covariance_check(f, r, p, N, ops::Grid(3, L, P), ops::Grid(3, L / r, P), R, levels,
                                                   radial);
        csv += std::to_string(k) + "," + std::to_string(P) + "," + fmt_double(res.discrepancy) + "," +
               fmt_double(res.budget) + "," + (k ? fmt_double(res.discrepancy / pd) : std::string("")) + "," +
               (k ? fmt_double(res.budget / pb) : std::string("")) + "\n";
        rep.add(11, "covariance_within_budget_refine_" + std::to_string(k), res.discrepancy <= res.budget,
                res.discrepancy, res.budget);
        if (k) {
            double q = res.budget / pb;
            rep.add(11, "budget_halves_refine_" + std::to_string(k), std::abs(q - 0.5) <= 0.1, q, 0.5);
            rep.info(11, "discrepancy_ratio_refine_" + std::to_string(k), res.discrepancy / pd);
        }
        pd = res.discrepancy;
        pb = res.budget;
    }
    write_file(out_path(ctx, "covariance.csv"), csv);
    return 0;
}

}  // namespace

int cmd_maximal(const Context& ctx) {
    const auto& c = ctx.cfg;
    auto s = make_scenario(c, ctx.refine);
    RunReport rep;
    const int probes = c.integer("maximal.probes", 6);
    const double p = c.num("maximal.p", 2.0);
    if (s.name == "xst") {
        auto x = heis::xst_experiment(c.integer("maximal.J_min", 1), c.integer("maximal.J_max", 6), p, s.grid, s.a,
                                      probes, ctx.seed, c.integer("maximal.with_T", 1) != 0);
        std::string m = "J,maximal_ratio\n", t = "J,T_norm\n";
        for (size_t i = 0; i < x.J.size(); ++i) {
            m += std::to_string(x.J[i]) + "," + fmt_double(x.maximal_ratio[i]) + "\n";
            if (i < x.T_norm.size()) t += std::to_string(x.J[i]) + "," + fmt_double(x.T_norm[i]) + "\n";
        }
        write_file(out_path(ctx, "xst_maximal.csv"), m);
        write_file(out_path(ctx, "xst_T.csv"), t);
        rep.add(13, "maximal_log_slope", x.maximal_slope <= 0.05, x.maximal_slope, 0.05);
        for (size_t i = 0; i < x.T_norm.size(); ++i) rep.info(13, "T_norm_J" + std::to_string(x.J[i]), x.T_norm[i]);
        return finish(ctx, rep, "maximal");
    }
    if (s.name == "heisenberg") {
        maximal_heisenberg(ctx, rep);
        return finish(ctx, rep, "maximal");
    }
    const int J = c.integer("params.J", 3);
    auto grid = ops::default_delta_grid(s.nu, s.mu0, J);
    std::string csv = "probe,p,ratio,min_value\n";
    double worst = 0.0;
    for (int i = 0; i < probes; ++i) {
        std::mt19937_64 rng(derive_seed(ctx.seed, i));
        auto f = analysis::make_probe(s.grid, i, rng);
        f.values() = f.values().cwiseAbs();
        auto Mf = ops::maximal_M(s.gamma, s.e, s.chain, s.a, grid, f);
        double ratio = Mf.lp_norm(p) / f.lp_norm(p);
        worst = std::max(worst, ratio);
        csv += std::to_string(i) + "," + fmt_double(p) + "," + fmt_double(ratio) + "," +
               fmt_double(Mf.values().minCoeff()) + "\n";
    }
    write_file(out_path(ctx, "maximal.csv"), csv);
    rep.info(13, "maximal_ratio_max", worst);
    return finish(ctx, rep, "maximal");
}

int cmd_heisenberg(const Context& ctx) {
    const auto& c = ctx.cfg;
    RunReport rep;
    maximal_heisenberg(ctx, rep);
    Config hc = c;
    hc.set("scenario.name", "heisenberg");
    auto s = make_scenario(hc, 0);
    std::string csv = "J,T_norm\n";
    for (int J = 0; J <= c.integer("heisenberg.J_max", 2); ++J) {
        auto K = scenario_kernel(hc, s, J);
        auto T = ops::make_T(K, s.gamma, s.grid, s.chain);
        double v = analysis::l2_opnorm(T, 1e-6, 200, derive_seed(ctx.seed, J)).value;
        csv += std::to_string(J) + "," + fmt_double(v) + "\n";
        rep.info(11, "T_norm_J" + std::to_string(J), v);
    }
    write_file(out_path(ctx, "heis_norms.csv"), csv);
    return finish(ctx, rep, "heisenberg");
}

int cmd_report(const Context& ctx) {
    RunReport all;
    std::vector<fs::path> files;
    if (fs::exists(ctx.out_dir))
        for (const auto& e : fs::directory_iterator(ctx.out_dir)) {
            auto name = e.path().filename().string();
            if (name.rfind("report_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto r = RunReport::from_csv(read_file(f.string()));
        all.checks.insert(all.checks.end(), r.checks.begin(), r.checks.end());
    }
    std::stable_sort(all.checks.begin(), all.checks.end(),
                     [](const CheckRecord& a, const CheckRecord& b) { return a.criterion < b.criterion; });
    write_file(out_path(ctx, "report.csv"), all.csv());
    if (ctx.log) *ctx.log << all.csv();
    return all.failed() ? 5 : 0;
}

// ---------------------------------------------------------------- entry point

int run(int argc, char** argv) {
    CLI::App app{"radonlab: multi-parameter singular Radon transform laboratory"};
    std::string config_path, out_dir, cmd;
    std::uint64_t seed = 0;
    int jobs_n = 1, refine = -1;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "experiment config file");
    app.add_option("--seed", seed, "base seed");
    app.add_option("--jobs", jobs_n, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--refine", refine, "grid refinement steps")->check(CLI::NonNegativeNumber);
    app.add_option("--set", sets, "override: section.key=value");
    app.add_option("command", cmd, "ball | kernel | apply | norms | maximal | heisenberg | report")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    Context ctx;
    ctx.log = &std::cout;
    try {
        if (!config_path.empty()) ctx.cfg = Config::load(config_path);
        else if (cmd != "report") throw UsageError("--config is required for '" + cmd + "'");
        for (const auto& s : sets) {
            auto eq = s.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects section.key=value");
            ctx.cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
        if (app.count("--seed")) ctx.cfg.set("run.seed", std::to_string(seed));
        if (app.count("--jobs")) ctx.cfg.set("run.jobs", std::to_string(jobs_n));
        if (app.count("--refine")) ctx.cfg.set("run.refine", std::to_string(refine));
        if (!out_dir.empty()) ctx.cfg.set("run.out", out_dir);
        ctx.seed = static_cast<std::uint64_t>(ctx.cfg.num("run.seed", 1));
        ctx.refine = ctx.cfg.integer("run.refine", 0);
        set_jobs(ctx.cfg.integer("run.jobs", 1));
        const char* env = std::getenv("RADONLAB_OUT");
        ctx.out_dir = ctx.cfg.str("run.out", env ? env : ".");
        fs::create_directories(ctx.out_dir);

        if (cmd == "ball") return cmd_ball(ctx);
        if (cmd == "kernel") return cmd_kernel(ctx);
        if (cmd == "apply") return cmd_apply(ctx);
        if (cmd == "norms") return cmd_norms(ctx);
        if (cmd == "maximal") return cmd_maximal(ctx);
        if (cmd == "heisenberg") return cmd_heisenberg(ctx);
        if (cmd == "report") return cmd_report(ctx);
        throw UsageError("unknown command '" + cmd + "'");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const KernelClassError& e) {
        std::cerr << "kernel-class error: " << e.what() << "\n";
        return 3;
    } catch (const CoverageError& e) {
        std::cerr << "coverage error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace radonlab::cli
