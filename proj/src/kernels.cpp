#include "radonlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace radonlab::kernels {

namespace {

double profile_value(Profile p, double u) {
    if (std::abs(u) >= 1.0) return 0.0;
    double b = 1.0 - u * u;
    switch (p) {
        case Profile::Poly4: return b * b * b * b;
        case Profile::Poly6: return b * b * b * b * b * b;
        case Profile::Odd4: return u * b * b * b * b;
    }
    return 0.0;
}

double profile_derivative(Profile p, double u) {
    if (std::abs(u) >= 1.0) return 0.0;
    double b = 1.0 - u * u;
    switch (p) {
        case Profile::Poly4: return -8.0 * u * b * b * b;
        case Profile::Poly6: return -12.0 * u * b * b * b * b * b;
        case Profile::Odd4: return b * b * b * b - 8.0 * u * u * b * b * b;
    }
    return 0.0;
}

double profile_integral(Profile p, bool absolute) {
    const auto& q = gauss_legendre(32);
    double s = 0.0;
    for (double half : {-0.5, 0.5})
        for (size_t k = 0; k < q.x.size(); ++k) {
            double v = profile_value(p, half + 0.5 * q.x[k]);
            s += 0.5 * q.w[k] * (absolute ? std::abs(v) : v);
        }
    return s;
}

Factor unit_factor(Profile p, double w) {
    Factor f{p, w, 1.0};
    f.s = 1.0 / (w * profile_integral(p, true));
    return f;
}

std::vector<double> breakpoints(const Bump& b, int axis) {
    std::vector<double> pts;
    for (const auto& at : b.atoms()) {
        pts.push_back(-at.f[axis].w);
        pts.push_back(at.f[axis].w);
    }
    pts.push_back(0.0);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

}  // namespace

Profile profile_from_name(const std::string& name) {
    if (name == "poly4") return Profile::Poly4;
    if (name == "poly6") return Profile::Poly6;
    if (name == "odd4") return Profile::Odd4;
    throw InputError("unknown bump profile '" + name + "'");
}

std::string profile_name(Profile p) {
    switch (p) {
        case Profile::Poly4: return "poly4";
        case Profile::Poly6: return "poly6";
        case Profile::Odd4: return "odd4";
    }
    return "?";
}

double Factor::operator()(double x) const { return s * profile_value(profile, x / w); }
double Factor::derivative(double x) const { return s / w * profile_derivative(profile, x / w); }
double Factor::integral() const { return s * w * profile_integral(profile, false); }

Bump::Bump(int N, double a, std::vector<Atom> atoms, std::string tag)
    : N_(N), a_(a), atoms_(std::move(atoms)), tag_(std::move(tag)) {
    for (const auto& at : atoms_)
        if (static_cast<int>(at.f.size()) != N_) throw InputError("bump atom arity mismatch");
}

double Bump::operator()(const double* t) const {
    double s = 0.0;
    for (const auto& at : atoms_) {
        double v = at.c;
        for (int i = 0; i < N_ && v != 0.0; ++i) v *= at.f[i](t[i]);
        s += v;
    }
    return s;
}

Vec Bump::gradient(const Vec& t) const {
    Vec g = Vec::Zero(N_);
    for (const auto& at : atoms_)
        for (int k = 0; k < N_; ++k) {
            double v = at.c;
            for (int i = 0; i < N_; ++i) v *= (i == k) ? at.f[i].derivative(t[i]) : at.f[i](t[i]);
            g[k] += v;
        }
    return g;
}

double Bump::integral() const {
    double s = 0.0;
    for (const auto& at : atoms_) {
        double v = at.c;
        for (const auto& f : at.f) v *= f.integral();
        s += v;
    }
    return s;
}

std::vector<double> Bump::box() const {
    std::vector<double> w(N_, 0.0);
    for (const auto& at : atoms_)
        for (int i = 0; i < N_; ++i) w[i] = std::max(w[i], at.f[i].w);
    return w;
}

namespace {
template <class F>
void sample_box(const std::vector<double>& box, int per_axis, F&& fn) {
    const int N = static_cast<int>(box.size());
    long total = 1;
    for (int i = 0; i < N; ++i) total *= per_axis;
    Vec t(N);
    for (long s = 0; s < total; ++s) {
        long r = s;
        for (int i = N - 1; i >= 0; --i) {
            t[i] = -box[i] + 2.0 * box[i] * (r % per_axis + 0.5) / per_axis;
            r /= per_axis;
        }
        fn(t);
    }
}
}  // namespace

double Bump::c0_norm(int per_axis) const {
    double m = 0.0;
    sample_box(box(), per_axis, [&](const Vec& t) { m = std::max(m, std::abs((*this)(t))); });
    return m;
}

double Bump::c1_norm(int per_axis) const {
    double m = 0.0;
    sample_box(box(), per_axis, [&](const Vec& t) { m = std::max(m, gradient(t).lpNorm<Eigen::Infinity>()); });
    return std::max(m, c0_norm(per_axis));
}

Bump Bump::operator+(const Bump& o) const {
    if (o.N_ != N_) throw InputError("bump dimension mismatch");
    auto at = atoms_;
    at.insert(at.end(), o.atoms_.begin(), o.atoms_.end());
    return Bump(N_, std::max(a_, o.a_), at, tag_);
}

Bump Bump::operator-(const Bump& o) const { return *this + o.scaled(-1.0); }

Bump Bump::scaled(double c) const {
    auto at = atoms_;
    for (auto& a : at) a.c *= c;
    return Bump(N_, a_, at, tag_);
}

std::vector<std::vector<int>> index_set(int mu0, int nu, int J) { return ParamIndexSet{mu0, nu, J}.enumerate(); }

Bump make_bump(const std::string& profile, int N, double a) {
    if (!(a > 0.0)) throw InputError("bump radius must be positive");
    if (N < 1) throw InputError("bump dimension must be positive");
    Profile p = profile_from_name(profile);
    if (std::abs(profile_integral(p, false)) < 1e-14)
        throw InputError("profile '" + profile + "' has zero integral and cannot be mass-normalized");
    return make_tensor_bump(std::vector<std::string>(N, profile), a);
}

Bump make_tensor_bump(const std::vector<std::string>& profiles, double a) {
    const int N = static_cast<int>(profiles.size());
    if (N < 1 || !(a > 0.0)) throw InputError("tensor bump needs N >= 1 and a > 0");
    double w = a / std::sqrt(static_cast<double>(N));
    Atom at;
    std::string tag;
    for (const auto& p : profiles) {
        at.f.push_back(unit_factor(profile_from_name(p), w));
        tag += (tag.empty() ? "" : "*") + p;
    }
    return Bump(N, a, {at}, tag);
}

Bump tensor(const Bump& A, const Bump& B) {
    std::vector<Atom> atoms;
    for (const auto& x : A.atoms())
        for (const auto& y : B.atoms()) {
            Atom at;
            at.c = x.c * y.c;
            at.f = x.f;
            at.f.insert(at.f.end(), y.f.begin(), y.f.end());
            atoms.push_back(at);
        }
    double a = std::hypot(A.support_radius(), B.support_radius());
    return Bump(A.N() + B.N(), a, atoms, A.tag() + "(x)" + B.tag());
}

std::vector<int> block(const DilationExponents& e, int mu) {
    std::vector<int> idx;
    for (size_t i = 0; i < e.size(); ++i)
        if (e[i][mu] != 0.0) idx.push_back(static_cast<int>(i));
    return idx;
}

Bump enforce_cancellation(const Bump& b, const std::set<int>& mus, const DilationExponents& e) {
    if (static_cast<int>(e.size()) != b.N()) throw InputError("enforce_cancellation: exponents length must equal N");
    Bump cur = b;
    for (int mu : mus) {
        if (mu < 0 || mu >= e.front().nu()) throw InputError("enforce_cancellation: mu out of range");
        auto B = block(e, mu);
        if (B.empty()) continue;
        auto box = cur.box();
        std::vector<Atom> corr;
        for (const auto& at : cur.atoms()) {
            double m = at.c;
            for (int i : B) m *= at.f[i].integral();
            if (m == 0.0) continue;
            Atom c;
            c.c = -m;
            c.f = at.f;
            for (int i : B) c.f[i] = unit_factor(Profile::Poly4, box[i]);
            corr.push_back(c);
        }
        auto atoms = cur.atoms();
        atoms.insert(atoms.end(), corr.begin(), corr.end());
        cur = Bump(cur.N(), cur.support_radius(), atoms, cur.tag());
    }
    return cur;
}

Bump dilate_axes(const Bump& b, const std::vector<double>& lambda) {
    if (static_cast<int>(lambda.size()) != b.N()) throw InputError("dilate: scale vector length must equal N");
    auto atoms = b.atoms();
    double minl = 1.0;
    for (auto& at : atoms)
        for (int i = 0; i < b.N(); ++i) {
            if (!(lambda[i] > 0.0)) throw InputError("dilate: scales must be positive");
            at.f[i].w /= lambda[i];
            at.f[i].s *= lambda[i];
        }
    for (double l : lambda) minl = std::min(minl, l);
    return Bump(b.N(), b.support_radius() / minl, atoms, b.tag());
}

Bump dilate_bump(const Bump& b, const std::vector<int>& j, const DilationExponents& e) {
    if (static_cast<int>(e.size()) != b.N()) throw InputError("dilate_bump: exponents length must equal N");
    std::vector<double> lambda(b.N());
    for (int i = 0; i < b.N(); ++i) {
        if (static_cast<int>(j.size()) != e[i].nu()) throw InputError("dilate_bump: j length must equal nu");
        double je = 0.0;
        for (int mu = 0; mu < e[i].nu(); ++mu) je += j[mu] * e[i][mu];
        lambda[i] = std::exp2(je);
    }
    return dilate_axes(b, lambda);
}

double marginal(const Bump& b, const std::vector<int>& idx, const Vec& t, int nodes) {
    const auto& q = gauss_legendre(nodes);
    std::vector<std::vector<double>> xs(idx.size()), ws(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
        auto bp = breakpoints(b, idx[k]);
        for (size_t s = 0; s + 1 < bp.size(); ++s) {
            double mid = 0.5 * (bp[s] + bp[s + 1]), half = 0.5 * (bp[s + 1] - bp[s]);
            for (size_t m = 0; m < q.x.size(); ++m) {
                xs[k].push_back(mid + half * q.x[m]);
                ws[k].push_back(half * q.w[m]);
            }
        }
        if (xs[k].empty()) return 0.0;
    }
    Vec p = t;
    KahanSum sum;
    std::vector<size_t> it(idx.size(), 0);
    while (true) {
        double w = 1.0;
        for (size_t k = 0; k < idx.size(); ++k) {
            p[idx[k]] = xs[k][it[k]];
            w *= ws[k][it[k]];
        }
        sum.add(w * b(p));
        size_t k = 0;
        while (k < idx.size() && ++it[k] == xs[k].size()) it[k++] = 0;
        if (k == idx.size()) break;
    }
    return sum.value();
}

double marginal_max(const Bump& b, const std::vector<int>& idx, int samples) {
    auto box = b.box();
    auto pts = halton_points(samples, b.N(), -1.0, 1.0);
    double m = 0.0;
    for (auto& p : pts) {
        for (int i = 0; i < b.N(); ++i) p[i] *= 0.9 * box[i];
        m = std::max(m, std::abs(marginal(b, idx, p)));
    }
    return m;
}

bool cancellation_required(const std::vector<int>& j, int mu, int mu0) {
    if (j[mu] == 0) return false;
    if (mu + 1 > mu0 && mu > 0 && j[mu] == j[mu - 1]) return false;
    return true;
}

void validate_kernel(const DyadicKernel& K, double tol) {
    for (const auto& [j, piece] : K.pieces) {
        if (piece.N() != K.N) throw InputError("piece dimension differs from kernel N");
        auto box = piece.box();
        double r = 0.0;
        for (double w : box) r += w * w;
        if (std::sqrt(r) > K.a * (1.0 + 1e-12)) throw InputError("piece support exceeds the kernel radius");
        double scale = std::max(1.0, piece.c0_norm(9));
        for (int mu = 0; mu < K.index.nu; ++mu) {
            if (!cancellation_required(j, mu, K.index.mu0)) continue;
            auto B = block(K.e, mu);
            if (B.empty() || marginal_max(piece, B) > tol * scale) {
                std::string js;
                for (int v : j) js += (js.empty() ? "" : ",") + std::to_string(v);
                throw KernelClassError(j, mu + 1,
                                       "cancellation violated at j=(" + js + "), mu=" + std::to_string(mu + 1));
            }
        }
    }
}

DyadicKernel synth_kernel(const FamilyRule& rule, int mu0, int nu, int J, const DilationExponents& e, double a,
                          double tol) {
    if (e.empty()) throw InputError("synth_kernel: empty exponents");
    for (const auto& d : e)
        if (d.nu() != nu) throw InputError("synth_kernel: exponent length must equal nu");
    DyadicKernel K;
    K.index = ParamIndexSet{mu0, nu, J};
    K.e = e;
    K.N = static_cast<int>(e.size());
    K.a = a;
    for (const auto& j : K.index.enumerate()) K.pieces.emplace(j, rule(j));
    validate_kernel(K, tol);
    for (const auto& [j, piece] : K.pieces) {
        K.dilated.emplace(j, dilate_bump(piece, j, e));
        K.sup_bound = std::max(K.sup_bound, piece.c0_norm(9));
    }
    return K;
}

DyadicKernel make_product_kernel(const std::vector<DyadicKernel>& factors, const std::vector<int>& n_split) {
    if (factors.empty() || factors.size() != n_split.size()) throw InputError("product kernel: N-split must list one entry per factor");
    const int nu = static_cast<int>(factors.size());
    const int J = factors.front().index.J;
    DilationExponents e;
    double a2 = 0.0;
    for (int mu = 0; mu < nu; ++mu) {
        const auto& F = factors[mu];
        if (F.index.nu != 1) throw InputError("product kernel: factors must be one-parameter families");
        if (F.N != n_split[mu]) throw InputError("product kernel: N-split does not match factor dimension");
        if (F.index.J != J) throw InputError("product kernel: factors must share J");
        validate_kernel(F);
        for (const auto& d : F.e) {
            std::vector<double> c(nu, 0.0);
            c[mu] = d[0];
            e.emplace_back(c);
        }
        a2 += F.a * F.a;
    }
    auto rule = [&](const std::vector<int>& j) {
        Bump b = factors[0].pieces.at({j[0]});
        for (int mu = 1; mu < nu; ++mu) b = tensor(b, factors[mu].pieces.at({j[mu]}));
        return b;
    };
    return synth_kernel(rule, nu, nu, J, e, std::sqrt(a2));
}

Bump make_phi_j(const Bump& phi, int j, const std::vector<double>& degs) {
    if (static_cast<int>(degs.size()) != phi.N()) throw InputError("make_phi_j: one degree per coordinate required");
    if (j == 0) return phi;
    std::vector<double> lambda;
    for (double d : degs) lambda.push_back(std::exp2(-d));
    return phi - dilate_axes(phi, lambda);
}

DyadicKernel make_delta0_family(const std::vector<Bump>& phis, const std::vector<std::vector<double>>& degs, int J) {
    if (phis.empty() || phis.size() != degs.size()) throw InputError("delta0 family: one degree list per factor");
    const int nu = static_cast<int>(phis.size());
    DilationExponents e;
    double a2 = 0.0;
    for (int mu = 0; mu < nu; ++mu) {
        if (std::abs(phis[mu].integral() - 1.0) > 1e-10) throw InputError("delta0 family: phi must have unit mass");
        for (double d : degs[mu]) {
            std::vector<double> c(nu, 0.0);
            c[mu] = d;
            e.emplace_back(c);
        }
        double r = 0.0;
        for (int i = 0; i < phis[mu].N(); ++i) {
            double w = phis[mu].box()[i] * std::exp2(degs[mu][i]);
            r += w * w;
        }
        a2 += r;
    }
    auto rule = [&](const std::vector<int>& j) {
        Bump b = make_phi_j(phis[0], j[0], degs[0]);
        for (int mu = 1; mu < nu; ++mu) b = tensor(b, make_phi_j(phis[mu], j[mu], degs[mu]));
        return b;
    };
    return synth_kernel(rule, nu, nu, J, e, std::sqrt(a2) * (1.0 + 1e-12));
}

double kernel_eval(const DyadicKernel& K, const Vec& t) {
    if (t.size() != K.N) throw InputError("kernel_eval: t has wrong length");
    KahanSum s;
    for (const auto& [j, b] : K.dilated) s.add(b(t));
    return s.value();
}

double product_estimate_check(const DyadicKernel& K, const std::vector<int>& alpha, const std::vector<int>& n_split,
                              const std::vector<Vec>& samples) {
    if (static_cast<int>(alpha.size()) != K.N) throw InputError("alpha must have N entries");
    int total = 0;
    for (int v : n_split) total += v;
    if (total != K.N) throw InputError("N-split does not sum to N");
    double worst = 0.0;
    for (const auto& t : samples) {
        std::vector<double> h(K.N);
        double weight = 1.0;
        int off = 0;
        for (size_t mu = 0; mu < n_split.size(); ++mu) {
            double r = t.segment(off, n_split[mu]).norm();
            int am = 0;
            for (int i = off; i < off + n_split[mu]; ++i) {
                am += alpha[i];
                h[i] = 1e-3 * r;
            }
            weight *= std::pow(r, n_split[mu] + am);
            off += n_split[mu];
        }
        std::function<double(Vec, std::vector<int>)> D = [&](Vec p, std::vector<int> a) -> double {
            for (int i = 0; i < K.N; ++i)
                if (a[i] > 0) {
                    --a[i];
                    Vec pp = p, pm = p;
                    pp[i] += h[i];
                    pm[i] -= h[i];
                    return (D(pp, a) - D(pm, a)) / (2.0 * h[i]);
                }
            return kernel_eval(K, p);
        };
        worst = std::max(worst, std::abs(D(t, alpha)) * weight);
    }
    return worst;
}

std::vector<Vec> product_samples(const std::vector<int>& n_split, const std::vector<double>& radii, int kmax) {
    const double thetas[] = {0.35, 0.6, 0.85};
    std::vector<std::vector<Vec>> per;
    for (size_t mu = 0; mu < n_split.size(); ++mu) {
        std::vector<Vec> pts;
        for (int k = 0; k <= kmax; ++k)
            for (double th : thetas) {
                Vec v = Vec::Constant(n_split[mu], 1.0 / std::sqrt(static_cast<double>(n_split[mu])));
                pts.push_back(v * th * radii[mu] * std::exp2(-k));
            }
        per.push_back(pts);
    }
    std::vector<Vec> out{Vec(0)};
    for (const auto& pts : per) {
        std::vector<Vec> next;
        for (const auto& a : out)
            for (const auto& b : pts) {
                Vec c(a.size() + b.size());
                c << a, b;
                next.push_back(c);
            }
        out = next;
    }
    return out;
}

// ---------------------------------------------------------------- manifest

Manifest parse_manifest(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::string> body;
    while (std::getline(is, line)) {
        line = trim(line);
        if (!line.empty() && line[0] != '#') body.push_back(line);
    }
    if (body.size() < 2 || body[0] != "N,nu,mu0,J,a") throw InputError("manifest must start with header 'N,nu,mu0,J,a'");
    auto h = split(body[1], ',');
    if (h.size() != 5) throw InputError("manifest header row needs 5 values");
    Manifest m;
    m.N = std::stoi(h[0]);
    m.nu = std::stoi(h[1]);
    m.mu0 = std::stoi(h[2]);
    m.J = std::stoi(h[3]);
    m.a = parse_rational(h[4]);
    size_t i = 2;
    if (i >= body.size() || body[i] != "e") throw InputError("manifest: expected 'e' section");
    ++i;
    for (int k = 0; k < m.N; ++k, ++i) {
        if (i >= body.size()) throw InputError("manifest: truncated e rows");
        std::vector<double> c;
        for (const auto& v : split(body[i], ',')) c.push_back(parse_rational(v));
        if (static_cast<int>(c.size()) != m.nu) throw InputError("manifest: e row length must equal nu");
        m.e.emplace_back(c);
    }
    if (i >= body.size() || body[i] != "pieces") throw InputError("manifest: expected 'pieces' section");
    for (++i; i < body.size(); ++i) {
        auto f = split(body[i], ',');
        if (f.size() != 3) throw InputError("manifest piece line must be 'j-tuple,profile,flags'");
        ManifestLine ml;
        if (trim(f[0]) == "*") {
            ml.is_default = true;
        } else {
            std::istringstream js(f[0]);
            int v;
            while (js >> v) ml.j.push_back(v);
            if (static_cast<int>(ml.j.size()) != m.nu) throw InputError("manifest: j-tuple length must equal nu");
        }
        ml.profiles = split(trim(f[1]), '*');
        if (ml.profiles.size() == 1) ml.profiles.assign(m.N, ml.profiles[0]);
        if (static_cast<int>(ml.profiles.size()) != m.N) throw InputError("manifest: profile count must be 1 or N");
        for (const auto& p : ml.profiles) profile_from_name(p);
        ml.flags = trim(f[2]);
        if (ml.flags != "auto" &&
            (static_cast<int>(ml.flags.size()) != m.nu || ml.flags.find_first_not_of("01") != std::string::npos))
            throw InputError("manifest: flags must be 'auto' or nu characters of 0/1");
        m.lines.push_back(ml);
    }
    return m;
}

std::string write_manifest(const Manifest& m) {
    std::string s = "N,nu,mu0,J,a\n";
    s += std::to_string(m.N) + "," + std::to_string(m.nu) + "," + std::to_string(m.mu0) + "," + std::to_string(m.J) +
         "," + fmt_double(m.a) + "\ne\n";
    for (const auto& d : m.e) s += d.str() + "\n";
    s += "pieces\n";
    for (const auto& l : m.lines) {
        std::string js;
        if (l.is_default) {
            js = "*";
        } else {
            for (int v : l.j) js += (js.empty() ? "" : " ") + std::to_string(v);
        }
        std::string ps;
        for (const auto& p : l.profiles) ps += (ps.empty() ? "" : "*") + p;
        s += js + "," + ps + "," + l.flags + "\n";
    }
    return s;
}

DyadicKernel build_kernel(const Manifest& m) {
    auto rule = [&](const std::vector<int>& j) {
        const ManifestLine* hit = nullptr;
        for (const auto& l : m.lines)
            if (!l.is_default && l.j == j) hit = &l;
        for (const auto& l : m.lines)
            if (l.is_default && !hit) hit = &l;
        if (!hit) throw InputError("manifest has no piece for some index and no default line");
        Bump b = make_tensor_bump(hit->profiles, m.a);
        std::set<int> mus;
        for (int mu = 0; mu < m.nu; ++mu) {
            bool on = hit->flags == "auto" ? cancellation_required(j, mu, m.mu0) : hit->flags[mu] == '1';
            if (on) mus.insert(mu);
        }
        return enforce_cancellation(b, mus, m.e);
    };
    return synth_kernel(rule, m.mu0, m.nu, m.J, m.e, m.a);
}

std::string dump_bump_csv(const Bump& b, int per_axis) {
    std::string s;
    for (int i = 0; i < b.N(); ++i) s += "t" + std::to_string(i + 1) + ",";
    s += "value\n";
    sample_box(b.box(), per_axis, [&](const Vec& t) {
        for (int i = 0; i < b.N(); ++i) s += fmt_double(t[i]) + ",";
        s += fmt_double(b(t)) + "\n";
    });
    return s;
}

}  // namespace radonlab::kernels
