#include "radonlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

namespace radonlab::ops {

// ---------------------------------------------------------------- grid

Grid::Grid(int n_, double L_, int P_) : n(n_), L(L_), P(P_) {
    if (n < 1) throw InputError("grid dimension must be positive");
    if (P < 8) throw InputError("grid needs at least 8 points per axis");
    if (!(L > 0.0)) throw InputError("grid half-width must be positive");
}

long Grid::size() const {
    long s = 1;
    for (int i = 0; i < n; ++i) s *= P;
    return s;
}

Vec Grid::point(long idx) const {
    Vec x(n);
    for (int k = n - 1; k >= 0; --k) {
        x[k] = -L + h() * (idx % P);
        idx /= P;
    }
    return x;
}

long Grid::index(const std::vector<int>& m) const {
    long idx = 0;
    for (int k = 0; k < n; ++k) idx = idx * P + m[k];
    return idx;
}

std::vector<int> Grid::multi(long idx) const {
    std::vector<int> m(n);
    for (int k = n - 1; k >= 0; --k) {
        m[k] = static_cast<int>(idx % P);
        idx /= P;
    }
    return m;
}

GridFunction::GridFunction(Grid g, Vec v) : grid_(g), v_(std::move(v)) {
    if (v_.size() != grid_.size()) throw InputError("grid function size mismatch");
    if (!v_.allFinite()) throw InputError("grid function values must be finite");
}

GridFunction GridFunction::zeros(const Grid& g) { return GridFunction(g, Vec::Zero(g.size())); }

GridFunction GridFunction::sample(const Grid& g, const std::function<double(const Vec&)>& f) {
    Vec v(g.size());
    for (long i = 0; i < g.size(); ++i) v[i] = f(g.point(i));
    return GridFunction(g, v);
}

double GridFunction::lp_norm(double p) const {
    if (std::isinf(p)) return v_.lpNorm<Eigen::Infinity>();
    if (!(p >= 1.0)) throw InputError("Lp norm needs p >= 1");
    KahanSum s;
    for (long i = 0; i < v_.size(); ++i) s.add(std::pow(std::abs(v_[i]), p));
    return std::pow(std::pow(grid_.h(), grid_.n) * s.value(), 1.0 / p);
}

double GridFunction::inner(const GridFunction& o) const {
    if (!(grid_ == o.grid_)) throw InputError("inner product on different grids");
    return std::pow(grid_.h(), grid_.n) * v_.dot(o.v_);
}

void interpolation_weights(const Grid& g, const Vec& x, std::vector<std::pair<long, double>>& out) {
    out.clear();
    const double h = g.h();
    int base[8];
    double fr[8];
    if (g.n > 8) throw InputError("interpolation supports n <= 8");
    for (int k = 0; k < g.n; ++k) {
        double s = (x[k] + g.L) / h;
        if (!(s >= -1e-9 && s <= g.P - 1 + 1e-9)) return;
        int i0 = std::clamp(static_cast<int>(std::floor(s)), 0, g.P - 2);
        base[k] = i0;
        fr[k] = std::clamp(s - i0, 0.0, 1.0);
    }
    const int corners = 1 << g.n;
    for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        long idx = 0;
        for (int k = 0; k < g.n; ++k) {
            int bit = (c >> (g.n - 1 - k)) & 1;
            w *= bit ? fr[k] : 1.0 - fr[k];
            idx = idx * g.P + base[k] + bit;
        }
        if (w != 0.0) out.emplace_back(idx, w);
    }
}

std::optional<double> GridFunction::interpolate(const Vec& x) const {
    std::vector<std::pair<long, double>> w;
    interpolation_weights(grid_, x, w);
    if (w.empty()) return std::nullopt;
    double s = 0.0;
    for (auto [i, c] : w) s += c * v_[i];
    return s;
}

std::string GridFunction::to_csv() const {
    std::string s;
    for (int k = 0; k < grid_.n; ++k) s += "i" + std::to_string(k + 1) + ",";
    s += "value\n";
    for (long i = 0; i < v_.size(); ++i) {
        for (int m : grid_.multi(i)) s += std::to_string(m) + ",";
        s += fmt_double(v_[i]) + "\n";
    }
    return s;
}

GridFunction GridFunction::from_csv(const std::string& text, const Grid& g) {
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    Vec v = Vec::Zero(g.size());
    std::vector<char> seen(g.size(), 0);
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        auto f = split(line, ',');
        if (static_cast<int>(f.size()) != g.n + 1) throw InputError("grid CSV row has wrong arity");
        std::vector<int> m;
        for (int k = 0; k < g.n; ++k) {
            int v0 = std::stoi(f[k]);
            if (v0 < 0 || v0 >= g.P) throw InputError("grid CSV index out of range");
            m.push_back(v0);
        }
        long idx = g.index(m);
        v[idx] = parse_rational(f[g.n]);
        seen[idx] = 1;
    }
    for (char c : seen)
        if (!c) throw InputError("grid CSV is missing points");
    return GridFunction(g, v);
}

std::string GridFunction::to_binary() const {
    std::string s(24 + 8 * v_.size(), '\0');
    std::int64_t n = grid_.n, P = grid_.P;
    double L = grid_.L;
    std::memcpy(&s[0], &n, 8);
    std::memcpy(&s[8], &P, 8);
    std::memcpy(&s[16], &L, 8);
    std::memcpy(&s[24], v_.data(), 8 * v_.size());
    return s;
}

GridFunction GridFunction::from_binary(const std::string& bytes) {
    if (bytes.size() < 24) throw InputError("binary grid dump too short");
    std::int64_t n, P;
    double L;
    std::memcpy(&n, &bytes[0], 8);
    std::memcpy(&P, &bytes[8], 8);
    std::memcpy(&L, &bytes[16], 8);
    Grid g(static_cast<int>(n), L, static_cast<int>(P));
    if (bytes.size() != 24 + 8 * static_cast<size_t>(g.size())) throw InputError("binary grid dump has wrong length");
    Vec v(g.size());
    std::memcpy(v.data(), &bytes[24], 8 * v.size());
    return GridFunction(g, v);
}

// ---------------------------------------------------------------- cutoffs and windows

namespace {
double smooth_transition(double u) {
    // 1 at u<=0, 0 at u>=1
    if (u <= 0.0) return 1.0;
    if (u >= 1.0) return 0.0;
    double a = std::exp(-1.0 / (1.0 - u)), b = std::exp(-1.0 / u);
    return a / (a + b);
}
}  // namespace

double Cutoff::operator()(const Vec& x) const {
    double v = 1.0;
    for (int k = 0; k < x.size() && v != 0.0; ++k)
        v *= smooth_transition((std::abs(x[k]) / L - r_in) / (r_out - r_in));
    return v;
}

CutoffChain CutoffChain::standard(double L) {
    CutoffChain c;
    c.psi1 = {0.40, 0.50, L};
    c.psi2 = {0.40, 0.50, L};
    c.psi0 = {0.50, 0.58, L};
    c.psi_m1 = {0.58, 0.66, L};
    c.psi_m2 = {0.66, 0.74, L};
    c.psi_v = {0.74, 0.82, L};
    c.psi_m3 = {0.82, 0.90, L};
    return c;
}

GridFunction CutoffChain::sample(const Cutoff& c, const Grid& g) const {
    return GridFunction::sample(g, [&](const Vec& x) { return c(x); });
}

bool CutoffChain::check_nesting(const Grid& g) const {
    const Cutoff* order[] = {&psi1, &psi0, &psi_m1, &psi_m2, &psi_v, &psi_m3};
    for (long i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        if (psi2(x) > 0.0 && psi0(x) != 1.0) return false;
        for (int k = 0; k + 1 < 6; ++k) {
            double a = (*order[k])(x), b = (*order[k + 1])(x);
            if (a < 0.0 || a > 1.0) return false;
            if (a > 0.0 && b != 1.0) return false;
        }
    }
    return true;
}

double WindowSigma::sigma0(double s) const { return smooth_transition((std::abs(s) / b - 0.5) / 0.5); }

double WindowSigma::operator()(const Vec& t) const {
    double v = 1.0;
    for (int i = 0; i < t.size(); ++i) v *= sigma0(t[i]);
    return v;
}

const Quadrature1D& WindowSigma::nodes() const {
    static thread_local std::map<double, Quadrature1D> cache;
    auto it = cache.find(b);
    if (it != cache.end()) return it->second;
    return cache.emplace(b, refined(1)).first->second;
}

Quadrature1D WindowSigma::refined(int factor) const {
    if (factor < 1) throw InputError("window refinement factor must be >= 1");
    Quadrature1D q;
    auto add = [&](double lo, double hi, int m) {
        const auto& g = gauss_legendre(m);
        for (int p = 0; p < factor; ++p) {
            double a = lo + (hi - lo) * p / factor, c = lo + (hi - lo) * (p + 1) / factor;
            for (int k = 0; k < m; ++k) {
                q.x.push_back(0.5 * (a + c) + 0.5 * (c - a) * g.x[k]);
                q.w.push_back(0.5 * (c - a) * g.w[k] * sigma0(q.x.back()));
            }
        }
    };
    add(-b, -0.5 * b, 6);
    add(-0.5 * b, 0.5 * b, 4);
    add(0.5 * b, b, 6);
    return q;
}

double WindowSigma::mass1d() const {
    double s = 0.0;
    for (double w : nodes().w) s += w;
    return s;
}

// ---------------------------------------------------------------- stencils and operators

namespace {
std::string vec_str(const Vec& v) {
    std::string s = "(";
    for (long i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
    return s + ")";
}
}  // namespace

void Stencil::apply(const Vec& in, Vec& out) const {
    const long M = static_cast<long>(row_ptr.size()) - 1;
    out = Vec::Zero(M);
    const int chunks = std::max(1, std::min<int>(jobs() * 4, static_cast<int>(M)));
    parallel_for(chunks, [&](int c) {
        for (long r = M * c / chunks; r < M * (c + 1) / chunks; ++r) {
            double s = 0.0;
            for (long k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * in[col[k]];
            out[r] = s;
        }
    });
}

void Stencil::apply_adjoint(const Vec& in, Vec& out) const {
    const long M = static_cast<long>(row_ptr.size()) - 1;
    out = Vec::Zero(M);
    for (long r = 0; r < M; ++r) {
        double v = in[r];
        if (v == 0.0) continue;
        for (long k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out[col[k]] += val[k] * v;
    }
}

Operator::Operator(Grid g, std::string label, Fn apply, Fn adjoint)
    : grid_(g), label_(std::move(label)), fn_(std::move(apply)), adj_(std::move(adjoint)) {}

Vec Operator::apply(const Vec& f) const {
    if (f.size() != grid_.size()) throw InputError("operator applied to a vector of the wrong size");
    return fn_(f);
}

Vec Operator::apply_adjoint(const Vec& f) const {
    if (!adj_) throw InputError("operator '" + label_ + "' has no adjoint");
    if (f.size() != grid_.size()) throw InputError("adjoint applied to a vector of the wrong size");
    return adj_(f);
}

GridFunction Operator::operator()(const GridFunction& f) const {
    if (!(f.grid() == grid_)) throw InputError("operator applied on a different grid");
    return GridFunction(grid_, apply(f.values()));
}

Operator Operator::adjoint() const {
    if (!adj_) throw InputError("operator '" + label_ + "' has no adjoint");
    return Operator(grid_, label_ + "*", adj_, fn_);
}

Operator from_stencil(const Grid& g, std::shared_ptr<const Stencil> s, const std::string& label) {
    return Operator(
        g, label,
        [s](const Vec& f) {
            Vec out;
            s->apply(f, out);
            return out;
        },
        [s](const Vec& f) {
            Vec out;
            s->apply_adjoint(f, out);
            return out;
        });
}

Operator multiply(const GridFunction& psi, const std::string& label) {
    Vec m = psi.values();
    auto fn = [m](const Vec& f) -> Vec { return m.cwiseProduct(f); };
    return Operator(psi.grid(), label, fn, fn);
}

Operator identity(const Grid& g) {
    auto fn = [](const Vec& f) { return f; };
    return Operator(g, "I", fn, fn);
}

Operator zero(const Grid& g) {
    auto fn = [](const Vec& f) -> Vec { return Vec::Zero(f.size()); };
    return Operator(g, "0", fn, fn);
}

Operator compose(const Operator& A, const Operator& B) {
    if (!(A.grid() == B.grid())) throw InputError("compose: grid mismatch");
    Operator::Fn adj;
    if (A.has_adjoint() && B.has_adjoint()) adj = [A, B](const Vec& f) { return B.apply_adjoint(A.apply_adjoint(f)); };
    return Operator(A.grid(), A.label() + "." + B.label(), [A, B](const Vec& f) { return A.apply(B.apply(f)); }, adj);
}

Operator combine(const std::vector<std::pair<double, Operator>>& terms, const std::string& label) {
    if (terms.empty()) throw InputError("combine: no terms");
    bool adj = true;
    for (const auto& t : terms) adj = adj && t.second.has_adjoint();
    auto fn = [terms](const Vec& f) {
        Vec out = Vec::Zero(f.size());
        for (const auto& [c, op] : terms) out += c * op.apply(f);
        return out;
    };
    Operator::Fn afn;
    if (adj)
        afn = [terms](const Vec& f) {
            Vec out = Vec::Zero(f.size());
            for (const auto& [c, op] : terms) out += c * op.apply_adjoint(f);
            return out;
        };
    return Operator(terms.front().second.grid(), label, fn, afn);
}

std::shared_ptr<const Stencil> build_average(const Grid& g, const std::vector<QuadNode>& nodes,
                                             const std::function<Vec(const Vec&, const Vec&)>& gamma,
                                             const Cutoff& outer, const Cutoff& inner,
                                             const std::function<double(const Vec&, const Vec&)>& kappa) {
    const long M = g.size();
    std::vector<std::vector<std::pair<long, double>>> rows(M);
    const int chunks = std::max(1, std::min<int>(64, static_cast<int>(M)));
    parallel_for(chunks, [&](int c) {
        std::vector<std::pair<long, double>> w;
        for (long r = M * c / chunks; r < M * (c + 1) / chunks; ++r) {
            Vec x = g.point(r);
            double o = outer(x);
            if (o == 0.0) continue;
            auto& row = rows[r];
            for (const auto& q : nodes) {
                Vec y = gamma(q.t, x);
                double in = inner(y);
                if (in == 0.0) continue;
                interpolation_weights(g, y, w);
                if (w.empty())
                    throw CoverageError("flow leaves the grid where the inner cutoff is nonzero at x=" +
                                        vec_str(x) + ", t=" + vec_str(q.t));
                double c0 = o * q.w * in * (kappa ? kappa(q.t, x) : 1.0);
                for (auto [i, c1] : w) row.emplace_back(i, c0 * c1);
            }
            std::sort(row.begin(), row.end());
            size_t m = 0;
            for (size_t k = 0; k < row.size(); ++k) {
                if (m > 0 && row[m - 1].first == row[k].first)
                    row[m - 1].second += row[k].second;
                else
                    row[m++] = row[k];
            }
            row.resize(m);
            row.shrink_to_fit();
        }
    });
    auto s = std::make_shared<Stencil>();
    s->row_ptr.resize(M + 1, 0);
    for (long r = 0; r < M; ++r) s->row_ptr[r + 1] = s->row_ptr[r] + static_cast<long>(rows[r].size());
    s->col.reserve(s->row_ptr[M]);
    s->val.reserve(s->row_ptr[M]);
    for (auto& row : rows) {
        for (auto [i, v] : row) {
            s->col.push_back(i);
            s->val.push_back(v);
        }
        std::vector<std::pair<long, double>>().swap(row);
    }
    return s;
}

namespace {
std::vector<QuadNode> tensor_nodes(const std::vector<std::vector<double>>& xs, const std::vector<std::vector<double>>& ws) {
    std::vector<QuadNode> out;
    const int N = static_cast<int>(xs.size());
    std::vector<size_t> it(N, 0);
    while (true) {
        QuadNode q{Vec(N), 1.0};
        for (int i = 0; i < N; ++i) {
            q.t[i] = xs[i][it[i]];
            q.w *= ws[i][it[i]];
        }
        out.push_back(q);
        int i = 0;
        while (i < N && ++it[i] == xs[i].size()) it[i++] = 0;
        if (i == N) break;
    }
    return out;
}
}  // namespace

std::vector<QuadNode> bump_nodes(const kernels::Bump& b, const std::vector<double>& lambda, int per_axis) {
    return bump_nodes(b, lambda, std::vector<int>(b.N(), per_axis));
}

std::vector<QuadNode> bump_nodes(const kernels::Bump& b, const std::vector<double>& lambda,
                                 const std::vector<int>& counts) {
    auto box = b.box();
    std::vector<std::vector<double>> xs(b.N()), ws(b.N());
    for (int i = 0; i < b.N(); ++i) {
        const auto& q = gauss_legendre(counts[i]);
        for (int k = 0; k < counts[i]; ++k) {
            xs[i].push_back(box[i] * q.x[k]);
            ws[i].push_back(box[i] * q.w[k]);
        }
    }
    std::vector<QuadNode> out;
    for (auto& n : tensor_nodes(xs, ws)) {
        double v = b(n.t);
        if (v == 0.0) continue;
        n.w *= v;
        for (int i = 0; i < b.N(); ++i) n.t[i] /= lambda[i];
        out.push_back(n);
    }
    return out;
}

std::vector<int> resolved_counts(const GammaSpec& gamma, const Grid& g, const Cutoff& where,
                                 const std::vector<double>& t_half_width, double density, int min_count) {
    std::vector<int> counts(gamma.N, min_count);
    if (density <= 0.0) return counts;
    const long stride = std::max<long>(1, g.size() / 257);
    for (int i = 0; i < gamma.N; ++i) {
        const double eps = 1e-4 * std::max(t_half_width[i], 1e-6);
        Vec t = Vec::Zero(gamma.N);
        t[i] = eps;
        double speed = 0.0;
        for (long r = 0; r < g.size(); r += stride) {
            Vec x = g.point(r);
            if (where(x) == 0.0) continue;
            speed = std::max(speed, (gamma.eval(t, x) - x).norm() / eps);
        }
        double need = 2.0 * t_half_width[i] * speed * density / g.h();
        counts[i] = std::max(min_count, static_cast<int>(std::ceil(need - 1e-6)));
    }
    return counts;
}

std::vector<QuadNode> ball_nodes(int N, double a, int radial) {
    const double pi = std::numbers::pi;
    std::vector<QuadNode> out;
    const auto& gr = gauss_legendre(radial);
    auto rnode = [&](int k) { return 0.5 * a * (1.0 + gr.x[k]); };
    auto rweight = [&](int k) { return 0.5 * a * gr.w[k]; };
    if (N == 1) {
        const auto& g = gauss_legendre(2 * radial);
        for (size_t k = 0; k < g.x.size(); ++k) out.push_back({Vec::Constant(1, a * g.x[k]), a * g.w[k]});
    } else if (N == 2) {
        const int m = 3 * radial;
        for (int k = 0; k < radial; ++k)
            for (int l = 0; l < m; ++l) {
                double th = 2.0 * pi * (l + 0.5) / m, r = rnode(k);
                Vec t(2);
                t << r * std::cos(th), r * std::sin(th);
                out.push_back({t, rweight(k) * r * 2.0 * pi / m});
            }
    } else if (N == 3) {
        const auto& gc = gauss_legendre(radial);
        const int m = 2 * radial;
        for (int k = 0; k < radial; ++k)
            for (int c = 0; c < radial; ++c)
                for (int l = 0; l < m; ++l) {
                    double r = rnode(k), ct = gc.x[c], st = std::sqrt(1.0 - ct * ct), ph = 2.0 * pi * (l + 0.5) / m;
                    Vec t(3);
                    t << r * st * std::cos(ph), r * st * std::sin(ph), r * ct;
                    out.push_back({t, rweight(k) * r * r * gc.w[c] * 2.0 * pi / m});
                }
    } else {
        const auto& g = gauss_legendre(radial);
        std::vector<std::vector<double>> xs(N), ws(N);
        for (int i = 0; i < N; ++i)
            for (int k = 0; k < radial; ++k) {
                xs[i].push_back(a * g.x[k]);
                ws[i].push_back(a * g.w[k]);
            }
        for (auto& n : tensor_nodes(xs, ws))
            if (n.t.norm() < a) out.push_back(n);
    }
    return out;
}

// ---------------------------------------------------------------- T_j, T

Operator make_Tj(const kernels::Bump& piece, const std::vector<int>& j, const vfalg::DilationExponents& e,
                 const GammaSpec& gamma, const Grid& g, const CutoffChain& chain, const Kappa& kappa, int per_axis) {
    if (piece.N() != gamma.N || static_cast<int>(e.size()) != gamma.N) throw InputError("T_j: parameter dimension mismatch");
    if (gamma.n != g.n) throw InputError("T_j: gamma and grid dimensions differ");
    std::vector<double> lambda(gamma.N);
    for (int i = 0; i < gamma.N; ++i) {
        double je = 0.0;
        for (int mu = 0; mu < e[i].nu(); ++mu) je += j[mu] * e[i][mu];
        lambda[i] = std::exp2(je);
    }
    auto nodes = bump_nodes(piece, lambda, per_axis);
    auto s = build_average(g, nodes, gamma.eval, chain.psi1, chain.psi2, kappa);
    std::string js;
    for (int v : j) js += (js.empty() ? "" : ",") + std::to_string(v);
    return from_stencil(g, s, "T_" + js);
}

GridFunction apply_Tj(const kernels::Bump& piece, const std::vector<int>& j, const vfalg::DilationExponents& e,
                      const GammaSpec& gamma, const CutoffChain& chain, const Kappa& kappa, const GridFunction& f,
                      int per_axis) {
    return make_Tj(piece, j, e, gamma, f.grid(), chain, kappa, per_axis)(f);
}

Operator make_T(const kernels::DyadicKernel& K, const GammaSpec& gamma, const Grid& g, const CutoffChain& chain,
                const Kappa& kappa, int per_axis) {
    std::vector<std::pair<double, Operator>> terms;
    for (const auto& [j, piece] : K.pieces) terms.emplace_back(1.0, make_Tj(piece, j, K.e, gamma, g, chain, kappa, per_axis));
    return combine(terms, "T");
}

GridFunction apply_T(const kernels::DyadicKernel& K, const GammaSpec& gamma, const CutoffChain& chain,
                     const Kappa& kappa, const GridFunction& f, int per_axis) {
    return make_T(K, gamma, f.grid(), chain, kappa, per_axis)(f);
}

GammaSpec build_gamma_hat(const std::vector<vfalg::VectorFieldSpec>& fields, const flow::FlowConfig& cfg) {
    if (fields.empty()) throw InputError("build_gamma_hat: no fields");
    GammaSpec g;
    g.N = static_cast<int>(fields.size());
    g.n = fields.front().dim();
    for (const auto& f : fields)
        if (f.dim() != g.n) throw InputError("build_gamma_hat: fields must share dimension");
    g.eval = [fields, cfg](const Vec& t, const Vec& x) {
        try {
            return flow::flow_constant(fields, t, x, cfg);
        } catch (const EscapeError& e) {
            throw CoverageError(e.what());
        }
    };
    return g;
}

Sublist extract_sublist(const FieldList& fields, int mu, int mu0, bool general) {
    Sublist s;
    for (const auto& f : fields) {
        const auto& d = f.degree;
        if (mu < 1 || mu > d.nu()) throw InputError("extract_sublist: mu out of range");
        if (general && mu > mu0) {
            bool ok = true;
            double sum = 0.0;
            for (int m = 0; m < d.nu(); ++m) {
                if (m < mu - 1 && d[m] != 0.0) ok = false;
                if (m >= mu - 1) sum += d[m];
            }
            if (ok && sum > 0.0) {
                s.fields.push_back(f);
                s.degs.push_back(sum);
            }
        } else if (d.pure_component() == mu - 1) {
            s.fields.push_back(f);
            s.degs.push_back(d[mu - 1]);
        }
    }
    return s;
}

// ---------------------------------------------------------------- Littlewood-Paley family

LPFamily::LPFamily(Grid g, CutoffChain chain, std::vector<BlockSpec> blocks, int J, bool closed_top, int per_axis,
                   double node_density)
    : grid_(g), chain_(chain), blocks_(std::move(blocks)), J_(J), closed_(closed_top) {
    if (J < 0) throw InputError("LP family needs J >= 0");
    auto psi2 = chain_.sample(chain_.psi_m3, grid_);
    psi2.values() = psi2.values().cwiseProduct(psi2.values());
    for (size_t mu = 0; mu < blocks_.size(); ++mu) {
        const auto& b = blocks_[mu];
        if (std::abs(b.phi.integral() - 1.0) > 1e-10) throw InputError("LP family: phi must have unit mass");
        if (b.phi.N() != b.gamma_hat.N || static_cast<int>(b.degs.size()) != b.gamma_hat.N)
            throw InputError("LP family: phi, degrees and gamma_hat disagree on q_mu");
        std::vector<Operator> avg, D;
        for (int k = 0; k <= J; ++k) {
            std::vector<double> lambda, half;
            for (size_t i = 0; i < b.degs.size(); ++i) {
                lambda.push_back(std::exp2(k * b.degs[i]));
                half.push_back(b.phi.box()[i] / lambda.back());
            }
            auto counts = resolved_counts(b.gamma_hat, grid_, chain_.psi_m3, half, node_density, per_axis);
            auto s = build_average(grid_, bump_nodes(b.phi, lambda, counts), b.gamma_hat.eval, chain_.psi_m3,
                                   chain_.psi_m3);
            avg.push_back(from_stencil(grid_, s, "Avg" + std::to_string(mu + 1) + "_" + std::to_string(k)));
        }
        for (int k = 0; k <= J; ++k) {
            std::string lab = "D" + std::to_string(mu + 1) + "_" + std::to_string(k);
            if (closed_ && k == J) {
                D.push_back(k == 0 ? multiply(psi2, lab) : combine({{1.0, multiply(psi2)}, {-1.0, avg[k - 1]}}, lab));
            } else if (k == 0) {
                D.push_back(avg[0]);
            } else {
                D.push_back(combine({{1.0, avg[k]}, {-1.0, avg[k - 1]}}, lab));
            }
        }
        avg_.push_back(avg);
        D_.push_back(D);
    }
}

Operator LPFamily::D(const std::vector<int>& j) const {
    if (static_cast<int>(j.size()) != nu()) throw InputError("D_j: index length must equal nu");
    for (int v : j)
        if (v < 0 || v > J_) throw InputError("D_j: index outside the truncated range");
    Operator op = D_[0][j[0]];
    for (int mu = 1; mu < nu(); ++mu) op = compose(op, D_[mu][j[mu]]);
    return op;
}

Operator LPFamily::sum_mu(int mu) const {
    std::vector<std::pair<double, Operator>> terms;
    for (const auto& d : D_[mu]) terms.emplace_back(1.0, d);
    return combine(terms, "SumD" + std::to_string(mu + 1));
}

GridFunction apply_D(const LPFamily& fam, const std::vector<int>& j, const GridFunction& f) { return fam.D(j)(f); }

// ---------------------------------------------------------------- averages, M, B

AFamily::AFamily(Grid g, CutoffChain chain, std::vector<AverageSpec> blocks, WindowSigma sigma, int per_axis,
                 double node_density)
    : grid_(g), chain_(chain), blocks_(std::move(blocks)), sigma_(sigma), per_axis_(per_axis), density_(node_density) {}

Operator AFamily::A_mu(int mu, int j) const {
    auto key = std::make_pair(mu, j);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const auto& b = blocks_[mu];
    const int q = b.gamma_hat.N;
    std::string lab = "A" + std::to_string(mu + 1) + "_" + (j == kInf ? std::string("inf") : std::to_string(j));
    Operator op;
    if (j == kInf) {
        auto psi = chain_.sample(chain_.psi_m1, grid_);
        psi.values() = std::pow(sigma_.mass1d(), q) * psi.values().cwiseProduct(psi.values());
        op = multiply(psi, lab);
    } else {
        std::vector<double> half;
        for (int i = 0; i < q; ++i) half.push_back(sigma_.b * std::exp2(-j * b.degs[i]));
        auto counts = resolved_counts(b.gamma_hat, grid_, chain_.psi_m1, half, density_, per_axis_);
        std::vector<std::vector<double>> xs(q), ws(q);
        for (int i = 0; i < q; ++i) {
            const int base = static_cast<int>(sigma_.nodes().x.size());
            const Quadrature1D sq = sigma_.refined((counts[i] + base - 1) / base);
            double s = std::exp2(-j * b.degs[i]);
            for (size_t k = 0; k < sq.x.size(); ++k) {
                xs[i].push_back(s * sq.x[k]);
                ws[i].push_back(sq.w[k]);
            }
        }
        auto nodes = tensor_nodes(xs, ws);
        op = from_stencil(grid_, build_average(grid_, nodes, b.gamma_hat.eval, chain_.psi_m1, chain_.psi_m1), lab);
    }
    cache_.emplace(key, op);
    return op;
}

Operator AFamily::A(const std::vector<int>& j) const {
    if (static_cast<int>(j.size()) != nu()) throw InputError("A_j: index length must equal nu");
    Operator op = A_mu(0, j[0]);
    for (int mu = 1; mu < nu(); ++mu) op = compose(op, A_mu(mu, j[mu]));
    return op;
}

GridFunction apply_A(const AFamily& fam, const std::vector<int>& j, const GridFunction& f) { return fam.A(j)(f); }

std::vector<int> jE_index(const std::vector<int>& E, const std::vector<int>& j, int mu0) {
    const int nu = static_cast<int>(j.size());
    std::vector<int> out(nu, kInf);
    for (int e : E)
        if (e < 1 || e > nu) throw InputError("jE_index: E must be a subset of {1..nu}");
    auto inE = [&](int mu) { return std::find(E.begin(), E.end(), mu) != E.end(); };
    for (int mu = 1; mu <= nu; ++mu) {
        if (inE(mu))
            out[mu - 1] = j[mu - 1];
        else if (mu > mu0 && mu > 1)
            out[mu - 1] = out[mu - 2];
        else
            out[mu - 1] = kInf;
    }
    return out;
}

Operator make_M(const std::vector<int>& j, const GammaSpec& gamma, const vfalg::DilationExponents& e, const Grid& g,
                const CutoffChain& chain, const WindowSigma& sigma) {
    const int N = gamma.N;
    std::vector<double> delta;
    for (int v : j) delta.push_back(v == kInf ? 0.0 : std::exp2(-v));
    std::vector<int> active;
    std::vector<double> fac(N);
    for (int i = 0; i < N; ++i) {
        fac[i] = vfalg::dilation_factor(delta, e[i]);
        if (fac[i] != 0.0) active.push_back(i);
    }
    const double mass = sigma.mass1d();
    const double frozen = std::pow(mass, N - static_cast<int>(active.size()));
    std::string lab = "M_";
    for (int v : j) lab += (v == kInf ? std::string("inf") : std::to_string(v)) + ",";
    if (active.empty()) {
        auto psi = chain.sample(chain.psi0, g);
        psi.values() = frozen * psi.values().cwiseProduct(psi.values());
        return multiply(psi, lab);
    }
    const auto& sq = sigma.nodes();
    std::vector<std::vector<double>> xs(active.size()), ws(active.size());
    for (size_t a = 0; a < active.size(); ++a)
        for (size_t k = 0; k < sq.x.size(); ++k) {
            xs[a].push_back(fac[active[a]] * sq.x[k]);
            ws[a].push_back(sq.w[k]);
        }
    std::vector<QuadNode> nodes;
    for (auto& n : tensor_nodes(xs, ws)) {
        QuadNode q{Vec::Zero(N), n.w * frozen};
        for (size_t a = 0; a < active.size(); ++a) q.t[active[a]] = n.t[a];
        nodes.push_back(q);
    }
    return from_stencil(g, build_average(g, nodes, gamma.eval, chain.psi0, chain.psi0), lab);
}

GridFunction apply_M_jE(const std::vector<int>& E, const std::vector<int>& j, int mu0, const GammaSpec& gamma,
                        const vfalg::DilationExponents& e, const CutoffChain& chain, const WindowSigma& sigma,
                        const GridFunction& f) {
    return make_M(jE_index(E, j, mu0), gamma, e, f.grid(), chain, sigma)(f);
}

Operator make_B(const std::vector<int>& j, int mu0, const AFamily& A, const GammaSpec& gamma,
                const vfalg::DilationExponents& e, const Grid& g, const CutoffChain& chain) {
    const int nu = static_cast<int>(j.size());
    if (A.nu() != nu) throw InputError("B_j: averaging family has the wrong nu");
    std::vector<std::pair<double, Operator>> terms;
    for (int mask = 0; mask < (1 << nu); ++mask) {
        std::vector<int> E, Ec;
        for (int mu = 1; mu <= nu; ++mu) ((mask >> (mu - 1)) & 1 ? E : Ec).push_back(mu);
        double sign = (E.size() % 2) ? -1.0 : 1.0;
        Operator M = make_M(jE_index(E, j, mu0), gamma, e, g, chain, A.sigma());
        terms.emplace_back(sign, compose(A.A(jE_index(Ec, j, mu0)), M));
    }
    return combine(terms, "B");
}

GridFunction apply_B(const std::vector<int>& j, int mu0, const AFamily& A, const GammaSpec& gamma,
                     const vfalg::DilationExponents& e, const CutoffChain& chain, const GridFunction& f) {
    return make_B(j, mu0, A, gamma, e, f.grid(), chain)(f);
}

std::vector<std::vector<double>> default_delta_grid(int nu, int mu0, int J) {
    std::vector<double> vals;
    for (int k = 0; k <= J; ++k) {
        vals.push_back(std::exp2(-k));
        vals.push_back(3.0 * std::exp2(-k - 2));
    }
    std::sort(vals.begin(), vals.end(), std::greater<>());
    std::vector<std::vector<double>> out{{}};
    for (int mu = 0; mu < nu; ++mu) {
        std::vector<std::vector<double>> next;
        for (const auto& d : out)
            for (double v : vals) {
                auto e = d;
                e.push_back(v);
                next.push_back(e);
            }
        out = next;
    }
    std::vector<std::vector<double>> filt;
    for (const auto& d : out) {
        bool ok = true;
        for (int mu = mu0; mu < nu; ++mu) ok = ok && d[mu - 1] <= d[mu];
        if (ok) filt.push_back(d);
    }
    return filt;
}

GridFunction maximal_M(const GammaSpec& gamma, const vfalg::DilationExponents& e, const CutoffChain& chain, double a,
                       const std::vector<std::vector<double>>& delta_grid, const GridFunction& f, int radial) {
    const Grid& g = f.grid();
    Vec absf = f.values().cwiseAbs();
    Vec best = Vec::Zero(g.size());
    auto base = ball_nodes(gamma.N, a, radial);
    for (const auto& delta : delta_grid) {
        std::vector<QuadNode> nodes;
        for (const auto& q : base) nodes.push_back({vfalg::dilate_param(delta, e, q.t), q.w});
        std::shared_ptr<const Stencil> s;
        try {
            s = build_average(g, nodes, gamma.eval, chain.psi1, chain.psi2);
        } catch (const CoverageError& err) {
            std::vector<double> d = delta;
            throw CoverageError(std::string(err.what()) + ", delta=" + vec_str(Eigen::Map<const Vec>(d.data(), d.size())));
        }
        Vec out;
        s->apply(absf, out);
        best = best.cwiseMax(out);
    }
    return GridFunction(g, best);
}

Mat schwartz_kernel(const Operator& op, const std::vector<long>& columns) {
    const Grid& g = op.grid();
    Mat K(g.size(), columns.size());
    const double inv = std::pow(g.h(), -g.n);
    for (size_t c = 0; c < columns.size(); ++c) {
        Vec e = Vec::Zero(g.size());
        e[columns[c]] = inv;
        K.col(c) = op.apply(e);
    }
    return K;
}

}  // namespace radonlab::ops
