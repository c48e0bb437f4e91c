#include "radonlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace radonlab::analysis {

NormEstimate l2_opnorm(const Operator& T, double tol, int max_iter, std::uint64_t seed, const std::string& label) {
    if (!T.has_adjoint()) throw InputError("l2_opnorm needs an adjoint");
    const Grid& g = T.grid();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Vec v(g.size());
    for (long i = 0; i < v.size(); ++i) v[i] = nd(rng);
    v.normalize();
    NormEstimate est{label.empty() ? T.label() : label, 2.0, 0.0, "power-iteration", 0, 0.0, false, {}};
    double lam = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Vec u = T.apply_adjoint(T.apply(v));
        double next = v.dot(u);
        double un = u.norm();
        est.iters = it;
        if (un == 0.0) {
            lam = 0.0;
            est.residual = 0.0;
            est.converged = true;
            break;
        }
        est.residual = std::abs(next - lam) / std::max(next, 1e-300);
        lam = next;
        v = u / un;
        if (est.residual <= tol) {
            est.converged = true;
            break;
        }
    }
    est.value = std::sqrt(std::max(lam, 0.0));
    est.maximizer = GridFunction(g, v);
    return est;
}

GridFunction make_probe(const Grid& g, ProbeFamily fam, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Vec v = Vec::Zero(g.size());
    switch (fam) {
        case ProbeFamily::Gaussian: {
            int count = 1 + static_cast<int>(rng() % 3);
            for (int c = 0; c < count; ++c) {
                Vec ctr(g.n), wid(g.n);
                for (int k = 0; k < g.n; ++k) {
                    ctr[k] = g.L * (U(rng) - 0.5);
                    wid[k] = g.L * (0.08 + 0.22 * U(rng));
                }
                double amp = 2.0 * U(rng) - 1.0;
                for (long i = 0; i < v.size(); ++i) {
                    Vec x = g.point(i);
                    v[i] += amp * std::exp(-0.5 * (x - ctr).cwiseQuotient(wid).squaredNorm());
                }
            }
            break;
        }
        case ProbeFamily::Chessboard: {
            int cell = 1 + static_cast<int>(rng() % std::max(1, g.P / 8));
            int cells = (g.P + cell - 1) / cell;
            long total = 1;
            for (int k = 0; k < g.n; ++k) total *= cells;
            std::vector<double> sign(total);
            for (auto& s : sign) s = (rng() & 1) ? 1.0 : -1.0;
            for (long i = 0; i < v.size(); ++i) {
                long id = 0;
                for (int m : g.multi(i)) id = id * cells + m / cell;
                v[i] = sign[id];
            }
            break;
        }
        case ProbeFamily::SmoothNoise: {
            std::normal_distribution<double> nd;
            for (long i = 0; i < v.size(); ++i) v[i] = nd(rng);
            long stride = 1;
            for (int k = g.n - 1; k >= 0; --k) {
                for (int pass = 0; pass < 3; ++pass) {
                    Vec w = v;
                    for (long i = 0; i < v.size(); ++i) {
                        int m = static_cast<int>((i / stride) % g.P);
                        long lo = m > 0 ? i - stride : i, hi = m + 1 < g.P ? i + stride : i;
                        w[i] = 0.25 * v[lo] + 0.5 * v[i] + 0.25 * v[hi];
                    }
                    v = w;
                }
                stride *= g.P;
            }
            break;
        }
    }
    return GridFunction(g, v);
}

GridFunction make_probe(const Grid& g, int index, std::mt19937_64& rng) {
    return make_probe(g, static_cast<ProbeFamily>(index % 3), rng);
}

NormEstimate lp_opnorm_lower(const Operator& T, double p, int trials, std::uint64_t seed, const std::string& label) {
    if (!(p >= 1.0)) throw InputError("lp_opnorm_lower needs p >= 1");
    const Grid& g = T.grid();
    NormEstimate est{label.empty() ? T.label() : label, p, 0.0, "random-probe", 0, 0.0, true, {}};
    auto ratio = [&](const GridFunction& f) {
        double d = f.lp_norm(p);
        return d > 0.0 ? T(f).lp_norm(p) / d : 0.0;
    };
    GridFunction best;
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng(derive_seed(seed, t));
        GridFunction f = make_probe(g, t, rng);
        if (t >= 3 && best.values().size() > 0 && t % 4 == 3) {
            // perturb the current maximizer
            GridFunction n = make_probe(g, ProbeFamily::SmoothNoise, rng);
            double s = 0.1 * best.lp_norm(2.0) / std::max(n.lp_norm(2.0), 1e-300);
            f = GridFunction(g, best.values() + s * n.values());
        }
        double r = ratio(f);
        ++est.iters;
        if (r > est.value) {
            est.value = r;
            best = f;
        }
    }
    est.maximizer = best;
    return est;
}

DecayFit fit_decay(std::vector<DecayPoint> pairs, const std::string& mode, double p, std::uint64_t seed) {
    if (pairs.empty()) throw FitError("decay fit with no pairs");
    DecayFit fit;
    fit.mode = mode;
    fit.p = p;
    fit.seed = seed;
    fit.pairs = pairs;
    std::map<double, double> groups;
    double top = 0.0;
    for (const auto& q : pairs) {
        auto& m = groups[q.separation];
        m = std::max(m, q.norm);
        top = std::max(top, q.norm);
    }
    if (top <= 1e-10) {
        fit.zero_family = true;
        return fit;
    }
    for (auto [s, m] : groups)
        if (m > kNoiseFloor) fit.groups.push_back({s, m});
    if (fit.groups.size() < 3) throw FitError("decay fit needs at least three separation groups above the noise floor");
    const double n = static_cast<double>(fit.groups.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& q : fit.groups) {
        double y = -std::log2(q.norm);
        sx += q.separation;
        sy += y;
        sxx += q.separation * q.separation;
        sxy += q.separation * y;
    }
    double den = n * sxx - sx * sx;
    if (den == 0.0) throw FitError("decay fit has a degenerate separation range");
    fit.eps = (n * sxy - sx * sy) / den;
    double icpt = (sy - fit.eps * sx) / n;
    double ss_res = 0, ss_tot = 0, mean = sy / n;
    for (const auto& q : fit.groups) {
        double y = -std::log2(q.norm);
        ss_res += std::pow(y - (icpt + fit.eps * q.separation), 2);
        ss_tot += std::pow(y - mean, 2);
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.s_min = fit.groups.front().separation;
    fit.s_max = fit.groups.back().separation;
    return fit;
}

std::string mode_name(DecayMode m) {
    switch (m) {
        case DecayMode::DDstar: return "DD*";
        case DecayMode::DstarD: return "D*D";
        case DecayMode::BD: return "BD";
        case DecayMode::TD: return "TD";
    }
    return "?";
}

int linf_dist(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw InputError("index length mismatch");
    int d = 0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

int diam(const std::vector<std::vector<int>>& js) {
    int d = 0;
    for (size_t a = 0; a < js.size(); ++a)
        for (size_t b = a + 1; b < js.size(); ++b) d = std::max(d, linf_dist(js[a], js[b]));
    return d;
}

DecayFit orthogonality_decay(const DecayInputs& in, const std::vector<std::vector<std::vector<int>>>& tuples,
                             DecayMode mode, std::uint64_t seed, double tol) {
    std::vector<DecayPoint> pts;
    for (size_t i = 0; i < tuples.size(); ++i) {
        const auto& t = tuples[i];
        const size_t need = mode == DecayMode::TD ? 3 : 2;
        if (t.size() != need) throw InputError("decay tuple has the wrong arity for mode " + mode_name(mode));
        Operator op;
        double sep = 0.0;
        switch (mode) {
            case DecayMode::DDstar:
                op = compose(in.D(t[0]), in.D(t[1]).adjoint());
                sep = linf_dist(t[0], t[1]);
                break;
            case DecayMode::DstarD:
                op = compose(in.D(t[0]).adjoint(), in.D(t[1]));
                sep = linf_dist(t[0], t[1]);
                break;
            case DecayMode::BD:
                if (!in.B) throw InputError("BD mode needs a B family");
                op = compose(in.B(t[0]), in.D(t[1]));
                sep = linf_dist(t[0], t[1]);
                break;
            case DecayMode::TD:
                if (!in.T) throw InputError("TD mode needs a T family");
                op = compose(in.D(t[0]), compose(in.T(t[1]), in.D(t[2])));
                sep = diam(t);
                break;
        }
        pts.push_back({sep, l2_opnorm(op, tol, 200, derive_seed(seed, i)).value});
    }
    return fit_decay(pts, mode_name(mode), 2.0, seed);
}

std::vector<std::vector<int>> full_index(int nu, int J) {
    std::vector<std::vector<int>> out{{}};
    for (int mu = 0; mu < nu; ++mu) {
        std::vector<std::vector<int>> next;
        for (const auto& j : out)
            for (int k = 0; k <= J; ++k) {
                auto e = j;
                e.push_back(k);
                next.push_back(e);
            }
        out = next;
    }
    return out;
}

std::vector<Vec> all_blocks(const LPFamily& fam, const Vec& f, bool adjoint) {
    const int nu = fam.nu(), J = fam.J();
    std::vector<Vec> cur{f};
    if (!adjoint) {
        // D_j = D^1 ... D^nu: apply the last factor first, prepend indices
        for (int mu = nu - 1; mu >= 0; --mu) {
            std::vector<Vec> next;
            for (int k = 0; k <= J; ++k)
                for (const auto& v : cur) next.push_back(fam.block(mu, k).apply(v));
            cur = std::move(next);
        }
    } else {
        for (int mu = 0; mu < nu; ++mu) {
            std::vector<Vec> next;
            for (const auto& v : cur)
                for (int k = 0; k <= J; ++k) next.push_back(fam.block(mu, k).apply_adjoint(v));
            cur = std::move(next);
        }
    }
    return cur;
}

namespace {

Vec apply_Dj(const LPFamily& fam, const std::vector<int>& j, Vec v, bool adjoint) {
    if (!adjoint)
        for (int mu = fam.nu() - 1; mu >= 0; --mu) v = fam.block(mu, j[mu]).apply(v);
    else
        for (int mu = 0; mu < fam.nu(); ++mu) v = fam.block(mu, j[mu]).apply_adjoint(v);
    return v;
}

int l1_dist(const std::vector<int>& a, const std::vector<int>& b) {
    int d = 0;
    for (size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

// sum over |k - j|_1 <= M of D_j D_k; symmetric in the pair relation, so the adjoint has the same shape
Vec pair_sum(const LPFamily& fam, const std::vector<std::vector<int>>& idx, int M, const Vec& f, bool adjoint) {
    auto g = all_blocks(fam, f, adjoint);
    Vec out = Vec::Zero(f.size());
    for (size_t a = 0; a < idx.size(); ++a) {
        Vec h = Vec::Zero(f.size());
        bool any = false;
        for (size_t b = 0; b < idx.size(); ++b)
            if (l1_dist(idx[a], idx[b]) <= M) {
                h += g[b];
                any = true;
            }
        if (any) out += apply_Dj(fam, idx[a], h, adjoint);
    }
    return out;
}

}  // namespace

PairSums build_UM_RM(const LPFamily& fam, int M, std::uint64_t seed) {
    if (M < 0) throw InputError("M must be nonnegative");
    const Grid& g = fam.grid();
    auto idx = full_index(fam.nu(), fam.J());
    auto famp = std::make_shared<const LPFamily>(fam);
    PairSums out;
    out.U = Operator(
        g, "U_" + std::to_string(M), [famp, idx, M](const Vec& f) { return pair_sum(*famp, idx, M, f, false); },
        [famp, idx, M](const Vec& f) { return pair_sum(*famp, idx, M, f, true); });
    auto psi = fam.chain().sample(fam.chain().psi_m3, g);
    psi.values() = psi.values().array().pow(4.0 * fam.nu()).matrix();
    out.psi_power = ops::multiply(psi, "psi^4nu");
    out.R = ops::combine({{1.0, out.psi_power}, {-1.0, out.U}}, "R_" + std::to_string(M));
    Operator S(
        g, "SumD",
        [famp](const Vec& f) {
            Vec s = Vec::Zero(f.size());
            for (const auto& v : all_blocks(*famp, f, false)) s += v;
            return s;
        },
        [famp](const Vec& f) {
            Vec s = Vec::Zero(f.size());
            for (const auto& v : all_blocks(*famp, f, true)) s += v;
            return s;
        });
    out.literal_sum = ops::compose(S, S);
    out.boundary_discrepancy =
        l2_opnorm(ops::combine({{1.0, out.psi_power}, {-1.0, out.literal_sum}}, "boundary"), 1e-6, 100, seed).value;
    return out;
}

Neumann build_VM(const Operator& R, const GridFunction& psi, int m_max, std::uint64_t seed) {
    if (m_max < 0) throw InputError("m_max must be nonnegative");
    Neumann out;
    out.m_max = m_max;
    out.contraction = l2_opnorm(ops::compose(R, ops::multiply(psi)), 1e-8, 300, seed).value;
    if (out.contraction >= 1.0)
        throw PreconditionFailure("Neumann series needs |R_M psi|_2 < 1, measured " + fmt_double(out.contraction));
    out.tail = std::pow(out.contraction, m_max + 1) / (1.0 - out.contraction);
    Vec m = psi.values();
    out.V = Operator(
        R.grid(), "V",
        [R, m, m_max](const Vec& f) {
            Vec w = f;
            for (int k = 0; k < m_max; ++k) w = f + R.apply(m.cwiseProduct(w));
            return Vec(m.cwiseProduct(w));
        },
        [R, m, m_max](const Vec& f) {
            Vec pf = m.cwiseProduct(f);
            Vec w = pf;
            for (int k = 0; k < m_max; ++k) w = pf + m.cwiseProduct(R.apply_adjoint(w));
            return w;
        });
    return out;
}

double reproducing_residual(const Operator& U, const Operator& V, const GridFunction& psi_m2, const GridFunction& f) {
    Vec r = psi_m2.values().cwiseProduct(f.values() - U.apply(V.apply(f.values())));
    return GridFunction(f.grid(), r).lp_norm(2.0);
}

GridFunction square_function(const LPFamily& fam, const GridFunction& f) {
    Vec s = Vec::Zero(f.values().size());
    for (const auto& v : all_blocks(fam, f.values(), false)) s += v.cwiseAbs2();
    return GridFunction(f.grid(), s.cwiseSqrt());
}

SquareFunctionInterval square_function_interval(const LPFamily& fam, const GridFunction& psi_m2, double p, int probes,
                                                std::uint64_t seed) {
    SquareFunctionInterval out;
    out.lo = INFINITY;
    out.hi = 0.0;
    for (int i = 0; i < probes; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        GridFunction f = make_probe(fam.grid(), i, rng);
        GridFunction g(f.grid(), psi_m2.values().cwiseProduct(f.values()));
        double den = square_function(fam, g).lp_norm(p);
        if (den == 0.0) continue;
        double r = g.lp_norm(p) / den;
        out.ratios.push_back(r);
        out.lo = std::min(out.lo, r);
        out.hi = std::max(out.hi, r);
    }
    if (out.ratios.empty()) throw FitError("square function vanished on every probe");
    return out;
}

NormEstimate rademacher_probe(const LPFamily& fam, double p, int trials, std::uint64_t seed, bool all_plus) {
    NormEstimate best{"rademacher", p, 0.0, p == 2.0 ? "power-iteration" : "random-probe", 0, 0.0, true, {}};
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng(derive_seed(seed, t));
        Operator op;
        for (int mu = 0; mu < fam.nu(); ++mu) {
            std::vector<std::pair<double, Operator>> terms;
            for (int k = 0; k <= fam.J(); ++k) terms.emplace_back(all_plus || (rng() & 1) ? 1.0 : -1.0, fam.block(mu, k));
            Operator s = ops::combine(terms, "eD" + std::to_string(mu + 1));
            op = mu == 0 ? s : ops::compose(op, s);
        }
        NormEstimate e = p == 2.0 ? l2_opnorm(op, 1e-6, 200, derive_seed(seed, t))
                                  : lp_opnorm_lower(op, p, 12, derive_seed(seed, t));
        best.iters += e.iters;
        if (e.value > best.value) {
            best.value = e.value;
            best.residual = e.residual;
        }
        if (all_plus) break;
    }
    return best;
}

double sequence_norm(const std::vector<Operator>& diag, double p, int trials, std::uint64_t seed) {
    if (diag.empty()) return 0.0;
    const Grid& g = diag.front().grid();
    auto ratio = [&](const std::vector<Vec>& f) {
        Vec num = Vec::Zero(g.size()), den = Vec::Zero(g.size());
        for (size_t j = 0; j < diag.size(); ++j) {
            if (f[j].size() == 0) continue;
            num += diag[j].apply(f[j]).cwiseAbs2();
            den += f[j].cwiseAbs2();
        }
        double d = GridFunction(g, den.cwiseSqrt()).lp_norm(p);
        return d > 0.0 ? GridFunction(g, num.cwiseSqrt()).lp_norm(p) / d : 0.0;
    };
    double best = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng(derive_seed(seed, t));
        std::vector<Vec> f(diag.size());
        for (size_t j = 0; j < diag.size(); ++j)
            if (rng() % 2 == 0 || j == static_cast<size_t>(t) % diag.size())
                f[j] = make_probe(g, static_cast<int>(t + j), rng).values();
        best = std::max(best, ratio(f));
    }
    if (p == 2.0)
        for (size_t j = 0; j < diag.size(); ++j) {
            std::vector<Vec> f(diag.size());
            f[j] = l2_opnorm(diag[j], 1e-6, 200, derive_seed(seed, 1000 + j)).maximizer.values();
            best = std::max(best, ratio(f));
        }
    return best;
}

DecayFit vector_valued_decay(const SequenceFamily& fam, const std::vector<std::vector<int>>& ks, double p, int trials,
                             const std::string& mode, std::uint64_t seed) {
    std::vector<DecayPoint> pts;
    for (size_t i = 0; i < ks.size(); ++i) {
        double sep = 0.0;
        for (int v : ks[i]) sep += std::abs(v);
        pts.push_back({sep, sequence_norm(fam(ks[i]), p, trials, derive_seed(seed, i))});
    }
    return fit_decay(pts, mode, p, seed);
}

std::vector<double> bootstrap_pset(int steps) {
    if (steps < 1) throw InputError("bootstrap needs at least one step");
    std::vector<double> q{2.0};
    for (int s = 0; s < steps; ++s) q.push_back(2.0 * q.back() / (q.back() + 1.0));
    return q;
}

std::string decay_csv(const std::vector<DecayFit>& fits) {
    std::string s = "mode,p,separation,norm,fitted_eps,r2,seed\n";
    for (const auto& f : fits)
        for (const auto& q : f.pairs)
            s += f.mode + "," + fmt_double(f.p) + "," + fmt_double(q.separation) + "," + fmt_double(q.norm) + "," +
                 fmt_double(f.eps) + "," + fmt_double(f.r2) + "," + std::to_string(f.seed) + "\n";
    return s;
}

std::string norm_csv(const std::vector<NormEstimate>& est) {
    std::string s = "label,p,value,method,iters,residual\n";
    for (const auto& e : est)
        s += e.label + "," + fmt_double(e.p) + "," + fmt_double(e.value) + "," + e.method + "," +
             std::to_string(e.iters) + "," + fmt_double(e.residual) + "\n";
    return s;
}

}  // namespace radonlab::analysis
