#include "radonlab/common.hpp"

#include <Eigen/Eigenvalues>
#include <numeric>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace radonlab {

double pow0(double base, double e) {
    if (e == 0.0) return 1.0;
    if (base == 0.0) return 0.0;
    return std::pow(base, e);
}

namespace {
const int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(int i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}
}  // namespace

std::vector<Vec> halton_points(int count, int dim, double lo, double hi) {
    if (dim > 16) throw InputError("halton_points: dimension > 16");
    std::vector<Vec> pts;
    pts.reserve(count);
    for (int i = 0; i < count; ++i) {
        Vec p(dim);
        for (int d = 0; d < dim; ++d) p[d] = lo + (hi - lo) * radical_inverse(i + 1, kPrimes[d]);
        pts.push_back(p);
    }
    return pts;
}

const Quadrature1D& gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, Quadrature1D> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    if (n < 1) throw InputError("gauss_legendre: n must be positive");
    // Golub-Welsch
    Mat T = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        double b = k / std::sqrt(4.0 * k * k - 1.0);
        T(k, k - 1) = b;
        T(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(T);
    Quadrature1D q;
    for (int k = 0; k < n; ++k) {
        q.x.push_back(es.eigenvalues()[k]);
        double v = es.eigenvectors()(0, k);
        q.w.push_back(2.0 * v * v);
    }
    // symmetrize against eigen solver round-off
    for (int k = 0; k < n / 2; ++k) {
        double x = 0.5 * (q.x[n - 1 - k] - q.x[k]);
        double w = 0.5 * (q.w[n - 1 - k] + q.w[k]);
        q.x[k] = -x;
        q.x[n - 1 - k] = x;
        q.w[k] = w;
        q.w[n - 1 - k] = w;
    }
    if (n % 2 == 1) q.x[n / 2] = 0.0;
    return cache.emplace(n, std::move(q)).first->second;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_rational(double v, int max_den) {
    for (int q = 1; q <= max_den; ++q) {
        double p = std::round(v * q);
        if (std::abs(p / q - v) <= 1e-12 * std::max(1.0, std::abs(v))) {
            long long pi = static_cast<long long>(p);
            if (q == 1) return std::to_string(pi);
            long long g = std::gcd(std::llabs(pi), static_cast<long long>(q));
            return std::to_string(pi / g) + "/" + std::to_string(q / g);
        }
    }
    return fmt_double(v);
}

double parse_rational(const std::string& s) {
    auto t = trim(s);
    auto slash = t.find('/');
    try {
        if (slash == std::string::npos) return std::stod(t);
        double den = std::stod(t.substr(slash + 1));
        if (den == 0.0) throw InputError("zero denominator in '" + t + "'");
        return std::stod(t.substr(0, slash)) / den;
    } catch (const std::logic_error&) {
        throw InputError("cannot parse number '" + t + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) { return base ^ index; }

void KahanSum::add(double v) {
    double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
        comp_ += (sum_ - t) + v;
    else
        comp_ += (v - t) + sum_;
    sum_ = t;
}

namespace {
std::atomic<int> g_jobs{1};
}

void set_jobs(int j) { g_jobs = j < 1 ? 1 : j; }
int jobs() { return g_jobs; }

void parallel_for(int count, const std::function<void(int)>& fn) {
    int nt = std::min(jobs(), count);
    if (nt <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace radonlab
