// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/semigroup_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "fv/errors.hpp"

namespace fv {

using std::numbers::pi;

// ---------------------------------------------------------------------------
// Chains

namespace {

/// Σ_k Poisson(k; λ) P^k, truncated once the Poisson tail is below 1e-16.
Eigen::MatrixXd poisson_mixture(const Eigen::MatrixXd& P, double lambda) {
    const auto n = P.rows();
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    double w = std::exp(-lambda);
    Eigen::MatrixXd sum = w * term;
    for (int k = 1;; ++k) {
        w *= lambda / k;
        term = term * P;
        sum += w * term;
        const double ratio = lambda / (k + 1);
        if (ratio < 1.0 && w * ratio / (1.0 - ratio) < 1e-16) break;
    }
    return sum;
}

}  // namespace

Eigen::MatrixXd chain_semigroup(const AbsorbingChainModel& chain, Time t) {
    require(t >= 0.0 && std::isfinite(t), "semigroup time must be finite and >= 0");
    const auto n = static_cast<Eigen::Index>(chain.n_states());
    const double rate = chain.max_total_rate();
    if (t == 0.0 || rate <= 0.0) return Eigen::MatrixXd::Identity(n, n);

    // Split t so that each uniformized piece has a Poisson mean of at most 32;
    // products of nonnegative sub-stochastic matrices stay nonnegative.
    const double total = rate * t;
    const auto pieces = static_cast<long long>(std::ceil(total / 32.0));
    const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n) + chain.generator() / rate;
    Eigen::MatrixXd base = poisson_mixture(P, total / static_cast<double>(pieces));

    Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
    for (long long e = pieces; e > 0; e >>= 1) {
        if (e & 1) result = result * base;
        if (e > 1) base = base * base;
    }
    return result;
}

Eigen::VectorXd propagate(const AbsorbingChainModel& chain, Time s, const Observable& phi) {
    return chain_semigroup(chain, s) * phi.tabulate(chain);
}

namespace {

class ChainEvaluator final : public SemigroupEvaluator {
public:
    explicit ChainEvaluator(const AbsorbingChainModel& chain) : chain_(chain) {}

    // With no killing the mass is 1 by construction; summing would leave ulp noise.
    double survival(Time t) const override { return chain_.never_killed() ? 1.0 : mass(t).sum(); }

    double survival_rate(Time t) const override {
        return chain_.never_killed() ? 0.0 : -mass(t).dot(chain_.kill_rates());
    }

    double gamma(Time t, const Observable& phi, int power) const override {
        Eigen::VectorXd f = phi.tabulate(chain_);
        if (power == 2) f = f.cwiseProduct(f);
        return mass(t).dot(f);
    }

    Propagated propagated(Time t, Time T, const Observable& phi) const override {
        const Eigen::VectorXd q = semigroup(T - t) * phi.tabulate(chain_);
        const Eigen::VectorXd g = mass(t);
        return {g.dot(q), g.dot(q.cwiseProduct(q))};
    }

    void check(const Observable& phi) const override { phi.validate(chain_); }

private:
    const Eigen::MatrixXd& semigroup(Time t) const {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(t);
        if (it == cache_.end()) it = cache_.emplace(t, chain_semigroup(chain_, t)).first;
        return it->second;
    }

    /// Row vector γ_t = η_0 Q^t, as a column.
    Eigen::VectorXd mass(Time t) const { return semigroup(t).transpose() * chain_.initial_dist(); }

    AbsorbingChainModel chain_;
    mutable std::mutex mutex_;
    mutable std::map<Time, Eigen::MatrixXd> cache_;
};

// ---------------------------------------------------------------------------
// Brownian motion killed at a and b.
//
// Small times use the method of images, where the Gaussian sum converges
// fast; large times use the Dirichlet eigenfunction series.

constexpr double kImageRegime = 0.1;  // images when t < kImageRegime · L²
constexpr int kImageRange = 3;

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * pi); }

/// Φ(hi/√t) - Φ(lo/√t).
double gaussian_mass(double lo, double hi, double t) {
    const double s = std::sqrt(2.0 * t);
    if (lo >= 0.0) return 0.5 * (std::erfc(lo / s) - std::erfc(hi / s));
    if (hi <= 0.0) return 0.5 * (std::erfc(-hi / s) - std::erfc(-lo / s));
    return 1.0 - 0.5 * std::erfc(-lo / s) - 0.5 * std::erfc(hi / s);
}

/// d/dt of gaussian_mass.
double gaussian_mass_rate(double lo, double hi, double t) {
    const double st = std::sqrt(t);
    return -(hi * std_normal_pdf(hi / st) - lo * std_normal_pdf(lo / st)) / (2.0 * t * st);
}

class BrownianKernel {
public:
    BrownianKernel(double a, double b) : a_(a), L_(b - a) {}

    bool images(Time t) const { return t < kImageRegime * L_ * L_; }

    double lambda(int k) const { return 0.5 * (k * pi / L_) * (k * pi / L_); }

    /// Number of eigen terms with e^{-λ_k t} above 1e-18.
    int eigen_terms(Time t) const {
        return std::max(1, static_cast<int>(std::ceil(std::sqrt(41.5 / (t * lambda(1)))))) + 1;
    }

    /// ∫_c^d q_t(x, y) dy for a ≤ c ≤ d ≤ b.
    double mass(double c, double d, double x, Time t) const {
        if (t == 0.0) return (x >= c && x <= d) ? 1.0 : 0.0;
        double sum = 0.0;
        if (images(t)) {
            for (int n = -kImageRange; n <= kImageRange; ++n) {
                const double shift = 2.0 * n * L_;
                sum += gaussian_mass(c - x - shift, d - x - shift, t);
                sum -= gaussian_mass(c + x - 2.0 * a_ - shift, d + x - 2.0 * a_ - shift, t);
            }
            return sum;
        }
        const int K = eigen_terms(t);
        for (int k = 1; k <= K; ++k) sum += eigen_mass_term(k, c, d, x) * std::exp(-lambda(k) * t);
        return sum;
    }

    double mass_rate(double c, double d, double x, Time t) const {
        if (t == 0.0) return 0.0;
        double sum = 0.0;
        if (images(t)) {
            for (int n = -kImageRange; n <= kImageRange; ++n) {
                const double shift = 2.0 * n * L_;
                sum += gaussian_mass_rate(c - x - shift, d - x - shift, t);
                sum -= gaussian_mass_rate(c + x - 2.0 * a_ - shift, d + x - 2.0 * a_ - shift, t);
            }
            return sum;
        }
        const int K = eigen_terms(t);
        for (int k = 1; k <= K; ++k)
            sum -= lambda(k) * eigen_mass_term(k, c, d, x) * std::exp(-lambda(k) * t);
        return sum;
    }

    /// Transition density q_t(x, y), t > 0.
    double density(double x, double y, Time t) const {
        double sum = 0.0;
        if (images(t)) {
            const double st = std::sqrt(t);
            for (int n = -kImageRange; n <= kImageRange; ++n) {
                const double shift = 2.0 * n * L_;
                sum += std_normal_pdf((y - x - shift) / st) - std_normal_pdf((y + x - 2.0 * a_ - shift) / st);
            }
            return sum / st;
        }
        const int K = eigen_terms(t);
        for (int k = 1; k <= K; ++k)
            sum += std::sin(k * pi * (x - a_) / L_) * std::sin(k * pi * (y - a_) / L_) * std::exp(-lambda(k) * t);
        return 2.0 * sum / L_;
    }

private:
    double eigen_mass_term(int k, double c, double d, double x) const {
        const double kp = k * pi;
        return 2.0 / kp * std::sin(kp * (x - a_) / L_) *
               (std::cos(kp * (c - a_) / L_) - std::cos(kp * (d - a_) / L_));
    }

    double a_;
    double L_;
};

/// 16-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre16 {
    std::array<double, 16> x{};
    std::array<double, 16> w{};

    GaussLegendre16() {
        constexpr int n = 16;
        for (int i = 0; i < n; ++i) {
            double z = std::cos(pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 1; j <= n; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
                }
                dp = n * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x[static_cast<std::size_t>(i)] = z;
            w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }
};

const GaussLegendre16& gauss_legendre() {
    static const GaussLegendre16 rule;
    return rule;
}

class BrownianEvaluator final : public SemigroupEvaluator {
public:
    explicit BrownianEvaluator(const KilledBrownianModel& m) : model_(m), kernel_(m.a, m.b) {}

    double survival(Time t) const override { return kernel_.mass(model_.a, model_.b, model_.x0, t); }
    double survival_rate(Time t) const override {
        return kernel_.mass_rate(model_.a, model_.b, model_.x0, t);
    }

    double gamma(Time t, const Observable& phi, int) const override {
        const auto [c, d] = support(phi);
        return kernel_.mass(c, d, model_.x0, t);
    }

    Propagated propagated(Time t, Time T, const Observable& phi) const override {
        const auto [c, d] = support(phi);
        const Time s = T - t;
        if (t == 0.0) {
            const double q = kernel_.mass(c, d, model_.x0, T);
            return {q, q * q};
        }
        if (s <= 0.0) {
            const double g = kernel_.mass(c, d, model_.x0, t);
            return {g, g};
        }
        // ∫ q_t(x0, y) [Q^s 1_[c,d]](y)^k dy with panels refined around x0 on
        // the √t scale and around c, d on the √s scale.
        std::vector<double> breaks{model_.a, model_.b, c, d};
        const double L = model_.b - model_.a;
        for (int j = -10; j <= 10; ++j) {
            breaks.push_back(model_.x0 + j * std::sqrt(t));
            breaks.push_back(c + j * std::sqrt(s));
            breaks.push_back(d + j * std::sqrt(s));
        }
        for (int j = 1; j < 64; ++j) breaks.push_back(model_.a + j * L / 64.0);
        for (auto& br : breaks) br = std::clamp(br, model_.a, model_.b);
        std::sort(breaks.begin(), breaks.end());
        breaks.erase(std::unique(breaks.begin(), breaks.end(),
                                 [L](double u, double v) { return v - u < 1e-14 * L; }),
                     breaks.end());

        const auto& gl = gauss_legendre();
        double first = 0.0, second = 0.0;
        for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
            const double mid = 0.5 * (breaks[k] + breaks[k + 1]);
            const double half = 0.5 * (breaks[k + 1] - breaks[k]);
            for (std::size_t j = 0; j < gl.x.size(); ++j) {
                const double y = mid + half * gl.x[j];
                const double kern = kernel_.density(model_.x0, y, t);
                const double q = kernel_.mass(c, d, y, s);
                first += half * gl.w[j] * kern * q;
                second += half * gl.w[j] * kern * q * q;
            }
        }
        return {first, second};
    }

    bool rough_near_horizon() const override { return true; }

    void check(const Observable& phi) const override {
        phi.validate(model_);
        if (!std::holds_alternative<Observable::IndicatorF>(phi.kind) &&
            !std::holds_alternative<Observable::IndicatorInterval>(phi.kind))
            fail(ErrorKind::UnsupportedObservable,
                 "observable '" + phi.name + "': the Brownian oracle supports indicators only");
    }

private:
    std::pair<double, double> support(const Observable& phi) const {
        check(phi);
        if (const auto* iv = std::get_if<Observable::IndicatorInterval>(&phi.kind)) {
            const double c = std::clamp(iv->lo, model_.a, model_.b);
            const double d = std::clamp(iv->hi, model_.a, model_.b);
            return {c, d};
        }
        return {model_.a, model_.b};
    }

    KilledBrownianModel model_;
    BrownianKernel kernel_;
};

}  // namespace

std::unique_ptr<SemigroupEvaluator> make_evaluator(const ProcessModel& model) {
    validate(model);
    if (const auto* chain = std::get_if<AbsorbingChainModel>(&model))
        return std::make_unique<ChainEvaluator>(*chain);
    if (const auto* bm = std::get_if<KilledBrownianModel>(&model))
        return std::make_unique<BrownianEvaluator>(*bm);
    fail(ErrorKind::UnsupportedModel, "no exact semigroup for general diffusion models");
}

// ---------------------------------------------------------------------------
// Survival

SeriesValue brownian_survival_series(double a, double b, double x, Time t, int terms) {
    require(a < b && a < x && x < b, "survival series needs a < x < b");
    require(t >= 0.0 && terms >= 1, "survival series needs t >= 0 and terms >= 1");
    const double L = b - a;
    const double c = 0.5 * (pi / L) * (pi / L);
    double sum = 0.0;
    for (int k = 1; k <= terms; ++k) {
        const double kp = k * pi;
        sum += 2.0 * (1.0 - std::cos(kp)) / kp * std::sin(kp * (x - a) / L) * std::exp(-k * k * c * t);
    }
    // |term_k| ≤ 4/(kπ) e^{-k² c t}, and k² - (K+1)² ≥ (k - K - 1)(2K + 2).
    double tail = std::numeric_limits<double>::infinity();
    if (t > 0.0) {
        const double K1 = terms + 1.0;
        const double ratio = std::exp(-(2.0 * K1) * c * t);
        tail = 4.0 / (K1 * pi) * std::exp(-K1 * K1 * c * t) / (1.0 - ratio);
    }
    return {sum, tail};
}

SeriesValue exact_survival(const ProcessModel& model, Time t) {
    require(t >= 0.0 && std::isfinite(t), "survival time must be finite and >= 0");
    if (const auto* bm = std::get_if<KilledBrownianModel>(&model)) {
        bm->validate();
        if (t == 0.0) return {1.0, 0.0};
        const auto series = brownian_survival_series(bm->a, bm->b, bm->x0, t, bm->series_terms);
        if (series.tail_bound <= 1e-12) return series;
        // Too few terms for this t: fall back to the kernel, which switches to
        // the image sum at small t and sizes the eigen series itself otherwise.
        const BrownianKernel kernel(bm->a, bm->b);
        return {kernel.mass(bm->a, bm->b, bm->x0, t), 1e-15};
    }
    const auto evaluator = make_evaluator(model);
    return {evaluator->survival(t), 1e-13};
}

double exact_survival_rate(const ProcessModel& model, Time t) {
    return make_evaluator(model)->survival_rate(t);
}

// ---------------------------------------------------------------------------
// Asymptotic variance

namespace {

struct Node {
    double p, dp, first, second;
};

double simpson(const std::vector<double>& f, std::size_t stride, double h) {
    // f sampled on 2n+1 uniform nodes; uses every `stride`-th node.
    const std::size_t m = (f.size() - 1) / stride;
    double odd = 0.0, even = 0.0;
    for (std::size_t k = 1; k < m; ++k) (k % 2 ? odd : even) += f[k * stride];
    return h / 3.0 * (f.front() + f.back() + 4.0 * odd + 2.0 * even);
}

struct VarianceForms {
    Sigma2Result var1;
    Sigma2Result var2;
};

VarianceForms variance_forms(const ProcessModel& model, const Observable& phi, Time T, int n_quad) {
    require(n_quad >= 2, "n_quad must be >= 2");
    require(T >= 0.0 && std::isfinite(T), "T must be finite and >= 0");
    const auto ev = make_evaluator(model);
    ev->check(phi);

    const double pT = ev->survival(T);
    if (!(pT > 0.0)) fail(ErrorKind::Validation, "survival probability at T is zero");
    const double gT = ev->gamma(T, phi, 1);
    const double gT2 = ev->gamma(T, phi, 2);
    const auto at0 = ev->propagated(0.0, T, phi);
    const auto atT = ev->propagated(T, T, phi);
    const double lnp = std::log(pT);

    // Integrands on 2n+1 nodes; Simpson on all of them and on every other one.
    // Rough integrands are integrated in w ∈ [0, 1] with t = T(1 - w²), dt = 2Tw dw.
    const bool substitute = ev->rough_near_horizon();
    const auto n2 = static_cast<std::size_t>(2 * n_quad);
    std::vector<double> f1(n2 + 1), f2(n2 + 1);
    for (std::size_t j = 0; j <= n2; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(n2);
        Time t = (j == n2) ? T : T * u;
        double jacobian = 1.0;
        if (substitute) {
            t = (j == 0) ? T : T * (1.0 - u * u);
            jacobian = 2.0 * u;
        }
        const double p = ev->survival(t);
        const double dp = ev->survival_rate(t);
        const auto pr = ev->propagated(t, T, phi);
        f1[j] = pr.second * dp * jacobian;
        f2[j] = (pr.second - pr.first * pr.first / p) * dp * jacobian;
    }
    // In w the node spacing is 1/n2 and the Jacobian carries T, so h is the same.
    const double h = T / static_cast<double>(n2);
    const double I1 = simpson(f1, 2, 2.0 * h), I1_fine = simpson(f1, 1, h);
    const double I2 = simpson(f2, 2, 2.0 * h), I2_fine = simpson(f2, 1, h);
    const double var_eta0 = at0.second - at0.first * at0.first;
    const auto form1 = [&](double I) {
        return var_eta0 + pT * gT2 - at0.second + atT.first * atT.first * lnp - 2.0 * I;
    };
    const auto form2 = [&](double I) { return (pT * gT2 - gT * gT) - gT * gT * lnp - 2.0 * I; };

    const auto finish = [&](double coarse, double fine, double I, double I_fine, const char* label) {
        const double change = std::abs(fine - coarse);
        if (change > 1e-6 * std::abs(fine) + 1e-15) {
            std::ostringstream msg;
            msg << label << ": doubling n_quad from " << n_quad << " changed the result by " << change << " (stiff rates need a larger n_quad)";
            fail(ErrorKind::QuadratureNotConverged, msg.str());
        }
        return Sigma2Result{coarse, std::abs(I_fine - I) / 15.0, n_quad};
    };
    return {finish(form1(I1), form1(I1_fine), I1, I1_fine, "sigma2_var1"),
            finish(form2(I2), form2(I2_fine), I2, I2_fine, "sigma2_var2")};
}

}  // namespace

Sigma2Result sigma2_var2(const ProcessModel& model, const Observable& phi, Time T, int n_quad) {
    return variance_forms(model, phi, T, n_quad).var2;
}

Sigma2Result sigma2_var1(const ProcessModel& model, const Observable& phi, Time T, int n_quad) {
    return variance_forms(model, phi, T, n_quad).var1;
}

double crude_mc_variance(const ProcessModel& model, const Observable& phi, Time T) {
    const auto ev = make_evaluator(model);
    ev->check(phi);
    const double g = ev->gamma(T, phi, 1);
    return std::max(0.0, ev->gamma(T, phi, 2) - g * g);
}

OracleReport build_oracle_report(const ProcessModel& model, const std::vector<Observable>& observables,
                                 Time T, std::span<const Time> grid, int n_quad) {
    const auto ev = make_evaluator(model);
    OracleReport report;
    report.T = T;
    if (grid.empty()) {
        for (int k = 0; k <= 10; ++k) report.time_grid.push_back(T * k / 10.0);
    } else {
        report.time_grid.assign(grid.begin(), grid.end());
    }
    for (const Time t : report.time_grid) {
        require(t >= 0.0 && t <= T, "oracle grid must lie in [0, T]");
        report.p_vals.push_back(ev->survival(t));
        report.dp_vals.push_back(ev->survival_rate(t));
    }
    for (const auto& phi : observables) {
        ev->check(phi);
        ObservableOracle o;
        o.name = phi.name;
        o.gamma_T = ev->gamma(T, phi, 1);
        o.eta_T = o.gamma_T / ev->survival(T);
        const auto forms = variance_forms(model, phi, T, n_quad);
        o.sigma2_var1 = forms.var1;
        o.sigma2_var2 = forms.var2;
        o.sigma2_crude = crude_mc_variance(model, phi, T);
        for (std::size_t k = 0; k < report.time_grid.size(); ++k) {
            const auto pr = ev->propagated(report.time_grid[k], T, phi);
            const double p = report.p_vals[k];
            o.gamma_q2.push_back(pr.second);
            o.var_eta_q.push_back(pr.second / p - (pr.first / p) * (pr.first / p));
        }
        report.observables.push_back(std::move(o));
    }
    return report;
}

}  // namespace fv
