#include "radonlab/flow.hpp"

#include <Eigen/SVD>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <random>

namespace radonlab::flow {

namespace {

void check_box(const Vec& x, const FlowConfig& cfg) {
    if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > cfg.domain_half_width)
        throw EscapeError("trajectory left the domain box");
}

Vec field_sum(const std::vector<VectorFieldSpec>& fields, const Vec& a, const Vec& x) {
    Vec v = Vec::Zero(x.size());
    for (size_t k = 0; k < fields.size(); ++k)
        if (a[k] != 0.0) v += a[k] * fields[k](x);
    return v;
}

Vec rk4_segment(const std::vector<VectorFieldSpec>& fields, const Vec& a, Vec x, double T, const FlowConfig& cfg) {
    int steps = std::max(1, static_cast<int>(std::ceil(T / cfg.h_ode - 1e-12)));
    double h = T / steps;
    for (int s = 0; s < steps; ++s) {
        Vec k1 = field_sum(fields, a, x);
        Vec k2 = field_sum(fields, a, x + 0.5 * h * k1);
        Vec k3 = field_sum(fields, a, x + 0.5 * h * k2);
        Vec k4 = field_sum(fields, a, x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        check_box(x, cfg);
    }
    return x;
}

Vec rk45_segment(const std::vector<VectorFieldSpec>& fields, const Vec& a, const Vec& x0, double T,
                 const FlowConfig& cfg) {
    namespace ode = boost::numeric::odeint;
    using State = std::vector<double>;
    const int n = static_cast<int>(x0.size());
    State s(x0.data(), x0.data() + n);
    auto rhs = [&](const State& y, State& dy, double) {
        Vec v = field_sum(fields, a, Eigen::Map<const Vec>(y.data(), n));
        dy.assign(v.data(), v.data() + n);
    };
    auto obs = [&](const State& y, double) { check_box(Eigen::Map<const Vec>(y.data(), n), cfg); };
    ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_dopri5<State>>(cfg.tol, cfg.tol), rhs, s, 0.0, T,
                            std::min(cfg.h_ode, T), obs);
    return Eigen::Map<Vec>(s.data(), n);
}

Vec segment(const std::vector<VectorFieldSpec>& fields, const Vec& a, const Vec& x, double T, const FlowConfig& cfg) {
    if (a.isZero(0.0)) return x;
    return cfg.integrator == Integrator::RK4 ? rk4_segment(fields, a, x, T, cfg) : rk45_segment(fields, a, x, T, cfg);
}

Mat field_matrix(const std::vector<VectorFieldSpec>& fields, const Vec& x) {
    Mat Z(x.size(), fields.size());
    for (size_t k = 0; k < fields.size(); ++k) Z.col(k) = fields[k](x);
    return Z;
}

void for_each_subset(int q, int k, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    if (k > q) return;
    while (true) {
        fn(idx);
        int i = k - 1;
        while (i >= 0 && idx[i] == q - k + i) --i;
        if (i < 0) return;
        ++idx[i];
        for (int m = i + 1; m < k; ++m) idx[m] = idx[m - 1] + 1;
    }
}

Vec project_ball(Vec v, double r) {
    double nv = v.norm();
    if (nv > r) v *= r / nv;
    return v;
}

Vec uniform_ball(int q, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    Vec v(q);
    for (int i = 0; i < q; ++i) v[i] = nd(rng);
    double nv = v.norm();
    if (nv == 0.0) return Vec::Zero(q);
    return v / nv * std::pow(ud(rng), 1.0 / q);
}

}  // namespace

Vec flow(const std::vector<VectorFieldSpec>& fields, const Controls& a, const Vec& x0, const FlowConfig& cfg) {
    if (cfg.h_ode <= 0.0 || cfg.tol <= 0.0) throw InputError("flow config: h_ode and tol must be positive");
    for (const auto& f : fields)
        if (f.dim() != x0.size()) throw InputError("flow: field dimension mismatch");
    Vec x = x0;
    check_box(x, cfg);
    const int K = static_cast<int>(a.pieces.size());
    for (const auto& p : a.pieces) {
        if (p.size() != static_cast<int>(fields.size())) throw InputError("flow: control width must equal field count");
        if (!p.allFinite()) throw InputError("flow: controls must be finite");
        x = segment(fields, p, x, 1.0 / K, cfg);
    }
    return x;
}

Vec flow_constant(const std::vector<VectorFieldSpec>& fields, const Vec& a, const Vec& x0, const FlowConfig& cfg) {
    return flow(fields, Controls{{a}}, x0, cfg);
}

double det_minor_max(const Mat& A) {
    const int n = static_cast<int>(A.rows()), k = static_cast<int>(A.cols());
    if (k == 0) return 1.0;
    if (k > n) return 0.0;
    if (k == n) return std::abs(A.determinant());
    double best = 0.0;
    for_each_subset(n, k, [&](const std::vector<int>& rows) {
        Mat S(k, k);
        for (int i = 0; i < k; ++i) S.row(i) = A.row(rows[i]);
        best = std::max(best, std::abs(S.determinant()));
    });
    return best;
}

Frame select_frame(const FieldList& fields, const std::vector<double>& delta, const Vec& x0) {
    if (fields.empty()) throw InputError("select_frame: empty field list");
    auto scaled = vfalg::scale_fields(delta, fields);
    Mat Z = field_matrix(scaled, x0);
    Eigen::JacobiSVD<Mat> svd(Z);
    int n0 = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > 1e-10) ++n0;
    if (n0 == 0) throw DegeneratePoint("all fields vanish at the base point");
    Frame fr;
    fr.n0 = n0;
    for_each_subset(static_cast<int>(fields.size()), n0, [&](const std::vector<int>& cols) {
        Mat S(Z.rows(), n0);
        for (int i = 0; i < n0; ++i) S.col(i) = Z.col(cols[i]);
        double d = det_minor_max(S);
        if (fr.J0.empty() || d > fr.det * (1.0 + 1e-12)) {
            fr.det = d;
            fr.J0 = cols;
        }
    });
    return fr;
}

ExpChart::ExpChart(std::vector<VectorFieldSpec> scaled, Frame frame, Vec x0, double eta1, FlowConfig cfg)
    : scaled_(std::move(scaled)), frame_(std::move(frame)), x0_(std::move(x0)), eta1_(eta1), cfg_(cfg) {
    for (int k : frame_.J0) frame_fields_.push_back(scaled_[k]);
}

Vec ExpChart::operator()(const Vec& u) const {
    if (u.size() != frame_.n0) throw InputError("chart: u has wrong length");
    return flow_constant(frame_fields_, u, x0_, cfg_);
}

Mat ExpChart::jacobian(const Vec& u) const {
    const double h = 1e-6;
    Mat D(x0_.size(), frame_.n0);
    for (int k = 0; k < frame_.n0; ++k) {
        Vec e = Vec::Zero(frame_.n0);
        e[k] = h;
        D.col(k) = ((*this)(u + e) - (*this)(u - e)) / (2.0 * h);
    }
    return D;
}

double ExpChart::det(const Vec& u) const { return det_minor_max(jacobian(u)); }

bool ExpChart::check_injectivity(int samples, std::uint64_t seed) const {
    std::vector<Vec> us, xs;
    for (int i = 0; i < samples; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        Vec u = eta1_ * uniform_ball(frame_.n0, rng);
        us.push_back(u);
        xs.push_back((*this)(u));
    }
    for (int i = 0; i < samples; ++i)
        for (int j = i + 1; j < samples; ++j)
            if ((us[i] - us[j]).norm() > 1e-9 && (xs[i] - xs[j]).norm() <= 1e-12) return false;
    return true;
}

ExpChart exp_chart(const FieldList& fields, const std::vector<double>& delta, const Vec& x0, double eta1,
                   const FlowConfig& cfg) {
    Frame fr = select_frame(fields, delta, x0);
    return ExpChart(vfalg::scale_fields(delta, fields), fr, x0, eta1, cfg);
}

MembershipResult ball_membership(const Vec& y, const Vec& x0, const FieldList& fields, const std::vector<double>& delta,
                                 const MembershipBudget& budget, const FlowConfig& cfg) {
    auto scaled = vfalg::scale_fields(delta, fields);
    const int q = static_cast<int>(fields.size());
    const int K = budget.pieces;
    const double rmax = 1.0 - 1e-9;
    int evals = 0;

    MembershipResult best;
    best.gap = std::numeric_limits<double>::infinity();
    auto objective = [&](const Controls& c) {
        ++evals;
        try {
            return (flow(scaled, c, x0, cfg) - y).norm();
        } catch (const EscapeError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    auto consider = [&](const Controls& c, double g) {
        if (g < best.gap) {
            best.gap = g;
            best.control = c;
        }
    };
    auto done = [&] { return best.gap < budget.gap_tol || evals >= budget.max_evals; };

    auto local_search = [&](Controls c) {
        double g = objective(c);
        consider(c, g);
        double step = 0.25;
        while (!done() && step > 1e-4) {
            bool improved = false;
            for (int k = 0; k < K && !done(); ++k)
                for (int i = 0; i < q && !done(); ++i)
                    for (double sgn : {1.0, -1.0}) {
                        Controls trial = c;
                        trial.pieces[k][i] += sgn * step;
                        trial.pieces[k] = project_ball(trial.pieces[k], rmax);
                        double gt = objective(trial);
                        if (gt < g) {
                            c = trial;
                            g = gt;
                            consider(c, g);
                            improved = true;
                            break;
                        }
                        if (done()) break;
                    }
            if (!improved) step *= 0.5;
        }
    };

    Controls zero{std::vector<Vec>(K, Vec::Zero(q))};
    consider(zero, objective(zero));
    if (done()) {
        best.reachable = best.gap < budget.gap_tol;
        return best;
    }
    // linearized constant control
    Mat Z = field_matrix(scaled, x0);
    Vec c0 = Z.completeOrthogonalDecomposition().solve(y - x0);
    local_search(Controls{std::vector<Vec>(K, project_ball(c0, rmax))});
    std::mt19937_64 rng(budget.seed);
    for (int r = 0; r < budget.restarts && !done(); ++r) {
        Controls c;
        for (int k = 0; k < K; ++k) c.pieces.push_back(rmax * uniform_ball(q, rng));
        local_search(c);
    }
    best.reachable = best.gap < budget.gap_tol;
    return best;
}

BallEstimate ball_volume(const Vec& x0, const FieldList& fields, const std::vector<double>& delta, int samples,
                         std::uint64_t seed, const VolumeOptions& opt, const FlowConfig& cfg) {
    if (samples < 1000) throw InputError("ball_volume: at least 1000 samples required");
    BallEstimate est;
    est.delta = delta;
    est.samples = samples;
    est.seed = seed;
    Frame fr = select_frame(fields, delta, x0);
    est.det_prediction = fr.det;
    ExpChart chart(vfalg::scale_fields(delta, fields), fr, x0, opt.chart_extent, cfg);
    const int n0 = fr.n0;

    Mat Zf(x0.size(), n0);
    for (int k = 0; k < n0; ++k) Zf.col(k) = chart.scaled_fields()[fr.J0[k]](x0);
    double frame_scale = Eigen::JacobiSVD<Mat>(Zf).singularValues().minCoeff();
    MembershipBudget mb = opt.membership;
    mb.gap_tol = opt.membership.gap_tol * frame_scale;

    double extent = opt.chart_extent;
    for (int attempt = 0;; ++attempt) {
        std::vector<double> vals(samples, 0.0);
        std::vector<char> member(samples, 0);
        std::vector<Vec> pts(samples);
        std::vector<double> umax(samples, 0.0);
        parallel_for(samples, [&](int i) {
            std::mt19937_64 rng(derive_seed(seed, i));
            std::uniform_real_distribution<double> ud(-extent, extent);
            Vec u(n0);
            for (int k = 0; k < n0; ++k) u[k] = ud(rng);
            Vec y = chart(u);
            bool in = u.norm() < 1.0;
            if (!in) {
                MembershipBudget b = mb;
                b.seed = derive_seed(seed, i) + 1;
                in = ball_membership(y, x0, fields, delta, b, cfg).reachable;
            }
            if (in) {
                member[i] = 1;
                pts[i] = y;
                vals[i] = chart.det(u);
                umax[i] = u.lpNorm<Eigen::Infinity>();
            }
        });
        bool touches = false;
        for (int i = 0; i < samples; ++i) touches = touches || (member[i] && umax[i] > 0.9 * extent);
        if (touches && attempt < opt.max_growth) {
            extent *= 1.5;
            continue;
        }
        double box = std::pow(2.0 * extent, n0);
        KahanSum s, s2;
        for (double v : vals) {
            s.add(v);
            s2.add(v * v);
        }
        double mean = s.value() / samples;
        double var = std::max(0.0, s2.value() / samples - mean * mean);
        est.volume = box * mean;
        est.stderr_ = box * std::sqrt(var / samples);
        for (int i = 0; i < samples; ++i)
            if (member[i]) est.endpoints.push_back(pts[i]);
        break;
    }
    est.ratio = est.det_prediction > 0.0 ? est.volume / est.det_prediction : 0.0;
    return est;
}

DoublingResult doubling_ratio(const Vec& x0, const FieldList& fields, const std::vector<double>& delta, int samples,
                              std::uint64_t seed, const VolumeOptions& opt, const FlowConfig& cfg) {
    DoublingResult r;
    std::vector<double> d2(delta);
    for (double& v : d2) v *= 2.0;
    r.small = ball_volume(x0, fields, delta, samples, seed, opt, cfg);
    r.large = ball_volume(x0, fields, d2, samples, seed, opt, cfg);
    r.measured = r.large.volume / r.small.volume;
    r.predicted = select_frame(fields, d2, x0).det / select_frame(fields, delta, x0).det;
    return r;
}

std::vector<VectorFieldSpec> pullback_fields(const ExpChart& chart, const FieldList& fields) {
    if (fields.empty()) return {};
    std::vector<VectorFieldSpec> out;
    const double ref = chart.det(Vec::Zero(chart.n0()));
    auto scaled = chart.scaled_fields();
    if (scaled.size() != fields.size()) throw InputError("pullback_fields: field list differs from chart list");
    for (size_t j = 0; j < scaled.size(); ++j) {
        auto Zj = scaled[j];
        out.push_back(VectorFieldSpec::numeric(chart.n0(), [chart, Zj, ref](const Vec& u) -> Vec {
            Mat D = chart.jacobian(u);
            if (det_minor_max(D) <= 1e-10 * ref) throw ChartDegenerate("chart Jacobian is singular");
            return D.colPivHouseholderQr().solve(Zj(chart(u)));
        }));
    }
    return out;
}

DistanceEstimate cc_distance(const Vec& x, const Vec& y, const FieldList& fields, double delta_max,
                             const MembershipBudget& budget, const std::vector<double>& scalarization,
                             const FlowConfig& cfg, int bisections) {
    DistanceEstimate d;
    if ((x - y).norm() == 0.0) {
        d.reached = true;
        return d;
    }
    const int nu = fields.front().degree.nu();
    std::vector<double> base = scalarization.empty() ? std::vector<double>(nu, 1.0) : scalarization;
    if (static_cast<int>(base.size()) != nu) throw InputError("cc_distance: scalarization length must equal nu");
    auto test = [&](double d0) {
        std::vector<double> delta(base);
        for (double& v : delta) v *= d0;
        return ball_membership(y, x, fields, delta, budget, cfg);
    };
    auto top = test(delta_max);
    if (!top.reachable) {
        d.gap = top.gap;
        return d;
    }
    double lo = 0.0, hi = delta_max, gap = top.gap;
    for (int it = 0; it < bisections; ++it) {
        double mid = 0.5 * (lo + hi);
        auto r = test(mid);
        if (r.reachable) {
            hi = mid;
            gap = r.gap;
        } else {
            lo = mid;
        }
    }
    d.estimate = hi;
    d.reached = true;
    d.gap = gap;
    return d;
}

std::string ball_estimate_csv(const std::vector<BallEstimate>& rows) {
    std::string s;
    const size_t nu = rows.empty() ? 1 : rows.front().delta.size();
    for (size_t i = 0; i < nu; ++i) s += "delta_" + std::to_string(i + 1) + ",";
    s += "volume,stderr,det_prediction,ratio,samples,seed\n";
    for (const auto& r : rows) {
        for (double d : r.delta) s += fmt_double(d) + ",";
        s += fmt_double(r.volume) + "," + fmt_double(r.stderr_) + "," + fmt_double(r.det_prediction) + "," +
             fmt_double(r.ratio) + "," + std::to_string(r.samples) + "," + std::to_string(r.seed) + "\n";
    }
    return s;
}

}  // namespace radonlab::flow
