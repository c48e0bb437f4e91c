#include "radonlab/vfalg.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace radonlab::vfalg {

FormalDegree::FormalDegree(std::vector<double> c) : c_(std::move(c)) {
    if (c_.empty()) throw InputError("formal degree needs nu >= 1");
    bool pos = false;
    for (double v : c_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("formal degree components must be finite and >= 0");
        pos = pos || v > 0.0;
    }
    if (!pos) throw InputError("formal degree must be nonzero");
}

FormalDegree FormalDegree::operator+(const FormalDegree& o) const {
    if (nu() != o.nu()) throw InputError("degree length mismatch");
    std::vector<double> r(c_);
    for (int i = 0; i < nu(); ++i) r[i] += o.c_[i];
    return FormalDegree(r);
}

bool FormalDegree::leq(const FormalDegree& cap) const {
    if (nu() != cap.nu()) throw InputError("degree length mismatch");
    for (int i = 0; i < nu(); ++i)
        if (c_[i] > cap.c_[i] + 1e-12) return false;
    return true;
}

int FormalDegree::pure_component() const {
    int idx = -1;
    for (int i = 0; i < nu(); ++i) {
        if (c_[i] == 0.0) continue;
        if (idx >= 0) return -1;
        idx = i;
    }
    return idx;
}

std::string FormalDegree::str() const {
    std::string s;
    for (int i = 0; i < nu(); ++i) s += (i ? "," : "") + fmt_rational(c_[i]);
    return s;
}

double dilation_factor(const std::vector<double>& delta, const FormalDegree& d) {
    if (static_cast<int>(delta.size()) != d.nu()) throw InputError("delta/degree length mismatch");
    double f = 1.0;
    for (int mu = 0; mu < d.nu(); ++mu) {
        if (delta[mu] < 0.0) throw InputError("delta must be nonnegative");
        f *= pow0(delta[mu], d[mu]);
    }
    return f;
}

// ---------------------------------------------------------------- polynomials

Polynomial Polynomial::constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(Monomial(nvars, 0), c);
    return p;
}

Polynomial Polynomial::variable(int nvars, int i, double c) {
    Polynomial p(nvars);
    Monomial m(nvars, 0);
    m[i] = 1;
    p.add_term(m, c);
    return p;
}

void Polynomial::add_term(const Monomial& m, double c) {
    if (static_cast<int>(m.size()) != nvars_) throw InputError("monomial length mismatch");
    if (c == 0.0) return;
    double& v = terms_[m];
    v += c;
    if (v == 0.0) terms_.erase(m);
}

double Polynomial::eval(const Vec& x) const {
    double s = 0.0;
    for (const auto& [m, c] : terms_) {
        double t = c;
        for (int i = 0; i < nvars_; ++i)
            for (int k = 0; k < m[i]; ++k) t *= x[i];
        s += t;
    }
    return s;
}

Polynomial Polynomial::derivative(int i) const {
    Polynomial d(nvars_);
    for (const auto& [m, c] : terms_) {
        if (m[i] == 0) continue;
        Monomial mm = m;
        mm[i] -= 1;
        d.add_term(mm, c * m[i]);
    }
    return d;
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
    Polynomial r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, c);
    return r;
}

Polynomial Polynomial::operator-(const Polynomial& o) const { return *this + o.scaled(-1.0); }

Polynomial Polynomial::operator*(const Polynomial& o) const {
    Polynomial r(nvars_);
    for (const auto& [m1, c1] : terms_)
        for (const auto& [m2, c2] : o.terms_) {
            Monomial m(nvars_);
            for (int i = 0; i < nvars_; ++i) m[i] = m1[i] + m2[i];
            r.add_term(m, c1 * c2);
        }
    return r;
}

Polynomial Polynomial::scaled(double c) const {
    Polynomial r(nvars_);
    for (const auto& [m, v] : terms_) r.add_term(m, v * c);
    return r;
}

std::string Polynomial::str() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (const auto& [m, c] : terms_) {
        if (!s.empty()) s += ' ';
        s += fmt_double(c) + ":";
        for (int i = 0; i < nvars_; ++i) s += (i ? "," : "") + std::to_string(m[i]);
    }
    return s;
}

Polynomial Polynomial::parse(const std::string& line, int nvars) {
    Polynomial p(nvars);
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        if (tok == "0") continue;
        auto colon = tok.find(':');
        if (colon == std::string::npos) throw InputError("bad polynomial term '" + tok + "'");
        double c = parse_rational(tok.substr(0, colon));
        auto exps = split(tok.substr(colon + 1), ',');
        if (static_cast<int>(exps.size()) != nvars) throw InputError("exponent tuple length mismatch in '" + tok + "'");
        Monomial m;
        for (const auto& e : exps) {
            int v = std::stoi(e);
            if (v < 0) throw InputError("negative exponent");
            m.push_back(v);
        }
        p.add_term(m, c);
    }
    return p;
}

// ---------------------------------------------------------------- fields

VectorFieldSpec VectorFieldSpec::symbolic(std::vector<Polynomial> coords, double domain_scale) {
    VectorFieldSpec X;
    X.n_ = static_cast<int>(coords.size());
    for (const auto& p : coords)
        if (p.nvars() != X.n_) throw InputError("symbolic field: polynomial arity must equal dimension");
    X.scale_ = domain_scale;
    X.polys_ = std::move(coords);
    struct Term {
        int coord;
        double coef;
        std::vector<int> exps;
    };
    std::vector<Term> flat;
    for (int i = 0; i < X.n_; ++i)
        for (const auto& [m, c] : X.polys_[i].terms()) flat.push_back({i, c, m});
    const int n = X.n_;
    X.eval_ = [flat, n](const Vec& x) {
        Vec v = Vec::Zero(n);
        for (const auto& t : flat) {
            double m = t.coef;
            for (int k = 0; k < n; ++k)
                for (int e = 0; e < t.exps[k]; ++e) m *= x[k];
            v[t.coord] += m;
        }
        return v;
    };
    return X;
}

VectorFieldSpec VectorFieldSpec::numeric(int n, Evaluator f, double domain_scale) {
    VectorFieldSpec X;
    X.n_ = n;
    X.scale_ = domain_scale;
    X.eval_ = std::move(f);
    return X;
}

VectorFieldSpec VectorFieldSpec::scaled(double c) const {
    if (is_symbolic()) {
        std::vector<Polynomial> ps;
        for (const auto& p : polys_) ps.push_back(p.scaled(c));
        return symbolic(ps, scale_);
    }
    auto f = eval_;
    return numeric(n_, [f, c](const Vec& x) -> Vec { return c * f(x); }, scale_);
}

std::vector<std::vector<int>> ParamIndexSet::enumerate() const {
    if (nu < 1 || mu0 < 1 || mu0 > nu || J < 0) throw InputError("index set: need 1 <= mu0 <= nu and J >= 0");
    std::vector<std::vector<int>> out;
    std::vector<int> j(nu, 0);
    while (true) {
        if (contains(j)) out.push_back(j);
        int k = nu - 1;
        while (k >= 0 && j[k] == J) j[k--] = 0;
        if (k < 0) break;
        ++j[k];
    }
    return out;
}

bool ParamIndexSet::contains(const std::vector<int>& j) const {
    if (static_cast<int>(j.size()) != nu) return false;
    for (int v : j)
        if (v < 0 || v > J) return false;
    for (int mu = mu0; mu < nu; ++mu)
        if (j[mu - 1] < j[mu]) return false;
    return true;
}

std::vector<double> dilate_param(const std::vector<double>& delta, const DilationExponents& e,
                                 const std::vector<double>& t) {
    if (t.size() != e.size()) throw InputError("dilate_param: t length must equal N");
    std::vector<double> r(t.size());
    for (size_t i = 0; i < t.size(); ++i) r[i] = dilation_factor(delta, e[i]) * t[i];
    return r;
}

Vec dilate_param(const std::vector<double>& delta, const DilationExponents& e, const Vec& t) {
    std::vector<double> tv(t.data(), t.data() + t.size());
    auto r = dilate_param(delta, e, tv);
    return Eigen::Map<Vec>(r.data(), r.size());
}

std::vector<VectorFieldSpec> scale_fields(const std::vector<double>& delta, const FieldList& fields) {
    std::vector<VectorFieldSpec> out;
    for (const auto& f : fields) {
        if (!fields.empty() && f.field.dim() != fields.front().field.dim()) throw InputError("scale_fields: dimension mismatch");
        out.push_back(f.field.scaled(dilation_factor(delta, f.degree)));
    }
    return out;
}

namespace {
Vec checked(const VectorFieldSpec& X, const Vec& x) {
    Vec v = X(x);
    if (v.size() != X.dim() || !v.allFinite())
        throw UnsupportedInput("field evaluator is not finite/differentiable near the sampled point");
    return v;
}

// DY(x) v by a central difference along v
Vec directional(const VectorFieldSpec& Y, const Vec& x, const Vec& v, double h) {
    double nv = v.norm();
    if (nv == 0.0) return Vec::Zero(x.size());
    double eps = h / nv;
    return (checked(Y, x + eps * v) - checked(Y, x - eps * v)) / (2.0 * eps);
}
}  // namespace

VectorFieldSpec commutator(const VectorFieldSpec& X, const VectorFieldSpec& Y) {
    if (X.dim() != Y.dim()) throw InputError("commutator: dimension mismatch");
    const int n = X.dim();
    if (X.is_symbolic() && Y.is_symbolic()) {
        std::vector<Polynomial> out;
        for (int i = 0; i < n; ++i) {
            Polynomial c(n);
            for (int k = 0; k < n; ++k) {
                c = c + X.polys()[k] * Y.polys()[i].derivative(k);
                c = c - Y.polys()[k] * X.polys()[i].derivative(k);
            }
            out.push_back(c);
        }
        return VectorFieldSpec::symbolic(out, std::max(X.domain_scale(), Y.domain_scale()));
    }
    double scale = std::max(X.domain_scale(), Y.domain_scale());
    double h = 1e-4 * scale;
    return VectorFieldSpec::numeric(
        n,
        [X, Y, h](const Vec& x) -> Vec {
            Vec xv = checked(X, x), yv = checked(Y, x);
            return directional(Y, x, xv, h) - directional(X, x, yv, h);
        },
        scale);
}

FieldList generate_finite_list(const FieldList& seeds, const FormalDegree& cap, const GenerateOptions& opt) {
    if (seeds.empty()) throw InputError("generate_finite_list: no seeds");
    for (int mu = 0; mu < cap.nu(); ++mu)
        if (!(cap[mu] > 0.0)) throw InputError("degree cap must be componentwise positive");
    const int n = seeds.front().field.dim();
    for (const auto& s : seeds) {
        if (s.field.dim() != n) throw InputError("seed dimension mismatch");
        if (s.degree.nu() != cap.nu()) throw InputError("seed degree length differs from cap");
    }
    auto pts = halton_points(opt.samples, n, -opt.sample_half_width, opt.sample_half_width);
    auto sample = [&](const VectorFieldSpec& X) {
        Vec v(n * pts.size());
        for (size_t s = 0; s < pts.size(); ++s) v.segment(s * n, n) = checked(X, pts[s]);
        return v;
    };

    FieldList list = seeds;
    std::vector<Vec> samples;
    for (const auto& s : list) samples.push_back(sample(s.field));

    for (size_t i = 0; i < list.size(); ++i) {
        for (const auto& seed : seeds) {
            FormalDegree d = seed.degree + list[i].degree;
            if (!d.leq(cap)) continue;
            VectorFieldSpec Z = commutator(seed.field, list[i].field);
            Vec zs = sample(Z);
            bool exact = Z.is_symbolic();
            double tol = exact ? opt.rel_tol : opt.numeric_rel_tol;
            double zero_tol = exact ? 1e-12 : 1e-6;
            if (zs.lpNorm<Eigen::Infinity>() <= zero_tol) continue;
            bool dup = false;
            for (size_t k = 0; k < list.size() && !dup; ++k) {
                if (!(list[k].degree == d)) continue;
                const Vec& w = samples[k];
                double ww = w.squaredNorm();
                if (ww == 0.0) continue;
                double c = w.dot(zs) / ww;
                dup = (zs - c * w).norm() <= tol * zs.norm();
            }
            if (dup) continue;
            list.push_back({Z, d});
            samples.push_back(zs);
            if (static_cast<int>(list.size()) > opt.size_bound)
                throw GrowthError("bracket closure exceeded " + std::to_string(opt.size_bound) + " fields");
        }
    }
    return list;
}

// ---------------------------------------------------------------- gamma, W, Taylor

Vec invert_gamma(const GammaSpec& g, const Vec& t, const Vec& x, const WOptions& opt) {
    Vec y = x;
    for (int it = 0; it < opt.newton_max_iter; ++it) {
        Vec r = g.eval(t, y) - x;
        if (!r.allFinite()) break;
        if (r.norm() <= opt.newton_tol) return y;
        Mat Jm(g.n, g.n);
        for (int k = 0; k < g.n; ++k) {
            Vec e = Vec::Zero(g.n);
            e[k] = opt.jac_step;
            Jm.col(k) = (g.eval(t, y + e) - g.eval(t, y - e)) / (2.0 * opt.jac_step);
        }
        y -= Jm.partialPivLu().solve(r);
    }
    Vec r = g.eval(t, y) - x;
    if (r.allFinite() && r.norm() <= opt.newton_tol) return y;
    throw InversionError("Newton inversion of gamma_t did not converge");
}

Vec compute_W(const GammaSpec& g, const Vec& t, const Vec& x, const WOptions& opt) {
    if (t.size() != g.N || x.size() != g.n) throw InputError("compute_W: dimension mismatch");
    if (t.norm() > g.rho) throw InputError("compute_W: |t| exceeds the support radius");
    if (t.isZero(0.0)) return Vec::Zero(g.n);
    Vec y = invert_gamma(g, t, x, opt);
    double h = opt.eps_step;
    return (g.eval((1.0 + h) * t, y) - g.eval((1.0 - h) * t, y)) / (2.0 * h);
}

namespace {
std::vector<std::vector<int>> monomials(int N, int order) {
    std::vector<std::vector<int>> out;
    for (int total = 1; total <= order; ++total) {
        std::vector<int> a(N, 0);
        std::function<void(int, int)> rec = [&](int pos, int left) {
            if (pos == N - 1) {
                a[pos] = left;
                out.push_back(a);
                return;
            }
            for (int v = left; v >= 0; --v) {
                a[pos] = v;
                rec(pos + 1, left - v);
            }
        };
        rec(0, total);
    }
    return out;
}

struct TaylorFitter {
    GammaSpec g;
    WOptions w;
    std::vector<Vec> stencil;
    Mat pinv;  // m x S
    Mat fit(const Vec& x) const {
        Mat Wv(stencil.size(), g.n);
        for (size_t s = 0; s < stencil.size(); ++s) Wv.row(s) = compute_W(g, stencil[s], x, w).transpose();
        return pinv * Wv;  // m x n
    }
};
}  // namespace

std::vector<TaylorField> taylor_fields(const GammaSpec& g, const DilationExponents& e, int order,
                                       const TaylorOptions& opt) {
    if (order < 1) throw InputError("taylor_fields: order must be >= 1");
    if (static_cast<int>(e.size()) != g.N) throw InputError("taylor_fields: exponents length must equal N");
    auto fitter = std::make_shared<TaylorFitter>();
    fitter->g = g;
    fitter->w = opt.w;
    const double r = opt.radius_fraction * g.rho;
    const int P = opt.points_per_axis;
    int S = 1;
    for (int i = 0; i < g.N; ++i) S *= P;
    for (int s = 0; s < S; ++s) {
        Vec t(g.N);
        int rem = s;
        for (int i = g.N - 1; i >= 0; --i) {
            t[i] = -r + 2.0 * r * (rem % P) / (P - 1);
            rem /= P;
        }
        fitter->stencil.push_back(t);
    }
    auto alphas = monomials(g.N, order);
    Mat A(S, alphas.size());
    for (int s = 0; s < S; ++s)
        for (size_t a = 0; a < alphas.size(); ++a) {
            double v = 1.0;
            for (int i = 0; i < g.N; ++i) v *= std::pow(fitter->stencil[s][i], alphas[a][i]);
            A(s, a) = v;
        }
    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() < static_cast<int>(alphas.size()) || sv[sv.size() - 1] <= 0.0 ||
        sv[0] / sv[sv.size() - 1] > opt.max_condition)
        throw ConditioningError("Taylor stencil is ill-conditioned for this order");
    fitter->pinv = svd.solve(Mat::Identity(S, S));

    std::vector<TaylorField> out;
    for (size_t a = 0; a < alphas.size(); ++a) {
        std::vector<double> deg(e.front().nu(), 0.0);
        for (int i = 0; i < g.N; ++i)
            for (int mu = 0; mu < e[i].nu(); ++mu) deg[mu] += alphas[a][i] * e[i][mu];
        auto f = VectorFieldSpec::numeric(g.n, [fitter, a](const Vec& x) -> Vec { return fitter->fit(x).row(a).transpose(); });
        out.push_back({alphas[a], f, FormalDegree(deg)});
    }
    return out;
}

std::vector<TaylorField> pure_power_fields(const std::vector<TaylorField>& all) {
    std::vector<TaylorField> out;
    for (const auto& t : all)
        if (t.degree.pure_component() >= 0) out.push_back(t);
    return out;
}

CertificateResult check_commutator_certificate(const FieldList& fields, const std::vector<double>& delta,
                                               const std::vector<Vec>& samples) {
    CertificateResult res;
    const int q = static_cast<int>(fields.size());
    if (q == 0) return res;
    auto scaled = scale_fields(delta, fields);
    std::vector<std::vector<VectorFieldSpec>> br(q, std::vector<VectorFieldSpec>(q));
    for (int i = 0; i < q; ++i)
        for (int j = i + 1; j < q; ++j) br[i][j] = commutator(scaled[i], scaled[j]);
    const int n = fields.front().field.dim();
    for (const auto& x : samples) {
        Mat A(n, q);
        for (int k = 0; k < q; ++k) A.col(k) = checked(scaled[k], x);
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
        for (int i = 0; i < q; ++i)
            for (int j = i + 1; j < q; ++j) {
                Vec v = checked(br[i][j], x);
                Vec c = cod.solve(v);
                res.max_residual = std::max(res.max_residual, (A * c - v).norm());
                if (c.size()) res.max_coefficient = std::max(res.max_coefficient, c.lpNorm<Eigen::Infinity>());
            }
    }
    return res;
}

std::string write_field(const VectorFieldSpec& X) {
    if (!X.is_symbolic()) throw InputError("only symbolic fields serialize");
    std::string s;
    for (const auto& p : X.polys()) s += p.str() + "\n";
    return s;
}

std::string write_field_list(const FieldList& fields) {
    if (fields.empty()) return "dim 0\n";
    std::string s = "dim " + std::to_string(fields.front().field.dim()) + "\n";
    for (const auto& f : fields) s += "field " + f.degree.str() + "\n" + write_field(f.field);
    return s;
}

FieldList read_field_list(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    int n = -1;
    FieldList out;
    std::vector<std::string> body;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        body.push_back(line);
    }
    size_t i = 0;
    if (body.empty() || body[0].rfind("dim ", 0) != 0) throw InputError("field list must start with 'dim n'");
    n = std::stoi(body[i++].substr(4));
    if (n < 1) throw InputError("field list dimension must be positive");
    while (i < body.size()) {
        if (body[i].rfind("field ", 0) != 0) throw InputError("expected 'field <degree>' at '" + body[i] + "'");
        std::vector<double> d;
        for (const auto& c : split(body[i].substr(6), ',')) d.push_back(parse_rational(c));
        ++i;
        if (i + n > body.size()) throw InputError("truncated field entry");
        std::vector<Polynomial> ps;
        for (int k = 0; k < n; ++k) ps.push_back(Polynomial::parse(body[i++], n));
        out.push_back({VectorFieldSpec::symbolic(ps), FormalDegree(d)});
    }
    return out;
}

}  // namespace radonlab::vfalg
