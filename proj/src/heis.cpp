#include "radonlab/heis.hpp"

#include <cmath>

namespace radonlab::heis {

namespace {
vfalg::VectorFieldSpec poly_field(const std::vector<std::string>& coords) {
    std::vector<vfalg::Polynomial> p;
    for (const auto& c : coords) p.push_back(vfalg::Polynomial::parse(c, 3));
    return vfalg::VectorFieldSpec::symbolic(p);
}
}  // namespace

vfalg::FieldList heis_fields(bool two_parameter) {
    auto X = poly_field({"1:0,0,0", "0", "-2:0,1,0"});
    auto Y = poly_field({"0", "1:0,0,0", "2:1,0,0"});
    auto T = poly_field({"0", "0", "1:0,0,0"});
    using vfalg::FormalDegree;
    if (two_parameter)
        return {{X, FormalDegree({1, 0})}, {Y, FormalDegree({0, 1})}, {T, FormalDegree({1, 1})}};
    return {{X, FormalDegree({1, 0, 0})}, {Y, FormalDegree({0, 1, 0})}, {T, FormalDegree({0, 0, 1})}};
}

HeisPoint heis_dilate(double r, const HeisPoint& p) {
    if (!(r > 0.0)) throw InputError("dilation needs r > 0");
    return {r * p.x, r * p.y, r * r * p.t};
}

Vec heis_dilate(double r, const Vec& p) {
    HeisPoint q = heis_dilate(r, HeisPoint{p[0], p[1], p[2]});
    Vec out(3);
    out << q.x, q.y, q.t;
    return out;
}

Vec heis_exp(double a, double b, double c, const Vec& p) {
    Vec out(3);
    out << p[0] + a, p[1] + b, p[2] + c + 2.0 * (b * p[0] - a * p[1]);
    return out;
}

vfalg::GammaSpec heis_gamma() {
    vfalg::GammaSpec g;
    g.N = 2;
    g.n = 3;
    g.eval = [](const Vec& t, const Vec& x) { return heis_exp(t[0], t[1], 0.0, x); };
    return g;
}

vfalg::GammaSpec heis_gamma_hat(int mu) {
    if (mu != 1 && mu != 2) throw InputError("heisenberg gamma_hat: mu must be 1 or 2");
    vfalg::GammaSpec g;
    g.N = 1;
    g.n = 3;
    if (mu == 1)
        g.eval = [](const Vec& t, const Vec& x) { return heis_exp(t[0], 0.0, 0.0, x); };
    else
        g.eval = [](const Vec& t, const Vec& x) { return heis_exp(0.0, t[0], 0.0, x); };
    return g;
}

vfalg::DilationExponents heis_exponents() { return {vfalg::FormalDegree({1, 0}), vfalg::FormalDegree({0, 1})}; }

std::vector<Delta3> strong_delta_grid(double cap, int levels) {
    if (!(cap > 0.0) || levels < 1) throw InputError("strong delta grid needs cap > 0 and levels >= 1");
    std::vector<Delta3> out;
    for (int a = 0; a < levels; ++a)
        for (int b = 0; b < levels; ++b)
            for (int c = 0; c < levels; ++c) out.push_back({cap * std::exp2(-a), cap * std::exp2(-b), cap * std::exp2(-c)});
    return out;
}

Vec strong_maximal_at(const GridFunction& f, const std::vector<Delta3>& deltas, const std::vector<Vec>& points,
                      int radial) {
    if (f.grid().n != 3) throw InputError("strong maximal function lives on a 3-d grid");
    for (const auto& d : deltas)
        if (!(d[0] > 0.0 && d[1] > 0.0 && d[2] > 0.0)) throw InputError("strong maximal deltas must be positive");
    const auto nodes = ops::ball_nodes(3, 1.0, radial);
    Vec out = Vec::Zero(static_cast<long>(points.size()));
    parallel_for(static_cast<int>(points.size()), [&](int i) {
        std::vector<std::pair<long, double>> w;
        double best = 0.0;
        for (const auto& d : deltas) {
            double s = 0.0;
            for (const auto& q : nodes) {
                Vec y = heis_exp(d[0] * q.t[0], d[1] * q.t[1], d[2] * q.t[2], points[i]);
                ops::interpolation_weights(f.grid(), y, w);
                if (w.empty()) throw CoverageError("strong maximal sample leaves the grid");
                double v = 0.0;
                for (auto [k, c] : w) v += c * f.values()[k];
                s += q.w * std::abs(v);
            }
            best = std::max(best, s);
        }
        out[i] = best;
    });
    return out;
}

GridFunction strong_maximal(const GridFunction& f, const std::vector<Delta3>& deltas, double eval_radius, int radial) {
    const Grid& g = f.grid();
    std::vector<Vec> pts;
    std::vector<long> idx;
    for (long i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        if (x.lpNorm<Eigen::Infinity>() <= eval_radius + 1e-12) {
            pts.push_back(x);
            idx.push_back(i);
        }
    }
    Vec m = strong_maximal_at(f, deltas, pts, radial);
    Vec v = Vec::Zero(g.size());
    for (size_t k = 0; k < idx.size(); ++k) v[idx[k]] = m[k];
    return GridFunction(g, v);
}

namespace {
// sum_i h/2 |d_i g|_inf with the derivative bound read off grid differences
double interpolation_error_bound(const GridFunction& g) {
    const Grid& G = g.grid();
    double total = 0.0;
    long stride = 1;
    for (int k = G.n - 1; k >= 0; --k) {
        double m = 0.0;
        for (long i = 0; i < G.size(); ++i)
            if ((i / stride) % G.P + 1 < G.P) m = std::max(m, std::abs(g.values()[i + stride] - g.values()[i]));
        total += 0.5 * m;
        stride *= G.P;
    }
    return total;
}
}  // namespace

CovarianceResult dilation_covariance_check(const std::function<double(const Vec&)>& f, double r, double p, double N,
                                           const Grid& g1, const Grid& g2, double eval_radius, int levels,
                                           int radial) {
    if (!(r >= 1.0)) throw InputError("covariance check expects r >= 1");
    if (g1.n != 3 || g2.n != 3) throw InputError("covariance check needs 3-d grids");
    if (g1.P != g2.P || g1.P % 2 == 0) throw InputError("covariance grids must share an odd P");
    if (std::abs(g2.L * r - g1.L) > 1e-12 * g1.L) throw InputError("covariance grids must satisfy L2 = L1 / r");
    const double pw = std::isinf(p) ? 0.0 : 4.0 / p;
    const double scale = std::pow(r, pw);
    GridFunction fs = GridFunction::sample(g1, f);
    GridFunction Fs = GridFunction::sample(g2, [&](const Vec& x) { return scale * f(heis_dilate(r, x)); });

    auto deltas = strong_delta_grid(N, levels);
    std::vector<Delta3> scaled;
    for (const auto& d : deltas) scaled.push_back({d[0] / r, d[1] / r, d[2] / (r * r)});

    std::vector<Vec> p1, p2;
    const int mid = (g1.P - 1) / 2;
    for (int i = 0; i < g1.P; ++i)
        for (int j = 0; j < g1.P; ++j) {
            Vec x = g1.point(g1.index({i, j, mid}));
            if (std::max(std::abs(x[0]), std::abs(x[1])) > eval_radius + 1e-12) continue;
            p1.push_back(x);
            p2.push_back(g2.point(g2.index({i, j, mid})));
        }
    if (p1.empty()) throw InputError("covariance check has no evaluation points");
    Vec rhs = strong_maximal_at(fs, deltas, p1, radial);
    Vec lhs = strong_maximal_at(Fs, scaled, p2, radial) / scale;

    CovarianceResult out;
    out.points = static_cast<int>(p1.size());
    out.discrepancy = (lhs - rhs).lpNorm<Eigen::Infinity>();
    for (const auto& q : ops::ball_nodes(3, 1.0, radial)) out.weight += q.w;
    out.E_f = interpolation_error_bound(fs);
    out.E_F = interpolation_error_bound(Fs);
    out.budget = out.weight * (out.E_f + out.E_F / scale);
    return out;
}

vfalg::GammaSpec xst_gamma() {
    vfalg::GammaSpec g;
    g.N = 2;
    g.n = 1;
    g.eval = [](const Vec& t, const Vec& x) {
        Vec y(1);
        y[0] = x[0] - t[0] * t[1];
        return y;
    };
    return g;
}

XstReport xst_experiment(int J_min, int J_max, double p, const Grid& g, double a, int probes, std::uint64_t seed,
                         bool with_T) {
    if (g.n != 1) throw InputError("xst experiment runs on a 1-d grid");
    if (J_min < 0 || J_max < J_min) throw InputError("xst experiment needs 0 <= J_min <= J_max");
    XstReport rep;
    auto gamma = xst_gamma();
    vfalg::DilationExponents e{vfalg::FormalDegree({1, 0}), vfalg::FormalDegree({0, 1})};
    auto chain = ops::CutoffChain::standard(g.L);
    std::vector<GridFunction> fs;
    for (int i = 0; i < probes; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        fs.push_back(analysis::make_probe(g, i, rng));
    }
    for (int J = J_min; J <= J_max; ++J) {
        auto grid = ops::default_delta_grid(2, 2, J);
        double best = 0.0;
        for (const auto& f : fs) {
            double d = f.lp_norm(p);
            if (d > 0.0) best = std::max(best, ops::maximal_M(gamma, e, chain, a, grid, f).lp_norm(p) / d);
        }
        rep.J.push_back(J);
        rep.maximal_ratio.push_back(best);
        if (with_T) {
            auto rule = [a](const std::vector<int>&) { return kernels::make_tensor_bump({"odd4", "odd4"}, a); };
            auto K = kernels::synth_kernel(rule, 2, 2, J, e, a);
            auto T = ops::make_T(K, gamma, g, chain);
            rep.T_norm.push_back(analysis::l2_opnorm(T, 1e-6, 200, derive_seed(seed, 100 + J)).value);
        }
    }
    if (rep.J.size() >= 2) {
        double n = static_cast<double>(rep.J.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (size_t i = 0; i < rep.J.size(); ++i) {
            double y = rep.maximal_ratio[i] > 0.0 ? std::log2(rep.maximal_ratio[i]) : 0.0;
            sx += rep.J[i];
            sy += y;
            sxx += rep.J[i] * rep.J[i];
            sxy += rep.J[i] * y;
        }
        rep.maximal_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return rep;
}

LPScenario heis_lp_scenario(int P, double L, double a) {
    LPScenario s{Grid(3, L, P), ops::CutoffChain::standard(L), {}};
    auto phi = kernels::make_bump("poly4", 1, a);
    for (int mu = 1; mu <= 2; ++mu) s.blocks.push_back({heis_gamma_hat(mu), {1.0}, phi});
    return s;
}

}  // namespace radonlab::heis
