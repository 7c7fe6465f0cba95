#include "pairsim/estimators.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pairsim {

Link Link::identity() { return {"identity", [](double x) { return x; }}; }
Link Link::log() { return {"log", [](double x) { return std::log(x); }}; }
Link Link::exp() { return {"exp", [](double x) { return std::exp(x); }}; }
Link Link::square() { return {"square", [](double x) { return x * x; }}; }

Link Link::from_string(const std::string& name) {
    if (name == "identity") return identity();
    if (name == "log") return log();
    if (name == "exp") return exp();
    if (name == "square") return square();
    throw std::invalid_argument("unknown link '" + name + "'");
}

namespace {

struct ClusterStats {
    double n = 0.0;
    double mean = 0.0;
    double ssw = 0.0;  // within-cluster sum of squares
    int treated = 0;
    double gx = 0.0;
};

std::vector<ClusterStats> summarize(const ExperimentData& data) {
    std::vector<ClusterStats> out;
    out.reserve(2 * data.pair_count());
    for (const auto& p : data.pairs) {
        for (const auto& c : p.clusters) {
            ClusterStats s;
            s.n = static_cast<double>(c.outcomes.size());
            s.mean = c.mean();
            for (double y : c.outcomes) s.ssw += (y - s.mean) * (y - s.mean);
            s.treated = c.treatment;
            out.push_back(s);
        }
    }
    return out;
}

// Heteroscedastic (arm-variance) regression of cluster means on
// (1, T[, g(X)]) with the within-cluster sums entering the likelihood.
class ArmVarianceModel {
public:
    ArmVarianceModel(std::vector<ClusterStats> stats, bool with_covariate)
        : stats_(std::move(stats)), p_(with_covariate ? 3 : 2) {
        double sum_sq = 0.0, count = 0.0;
        for (const auto& s : stats_) {
            sum_sq += s.ssw + s.n * s.mean * s.mean;
            count += s.n;
        }
        floor_ = std::max(1e-12 * sum_sq / count, 1e-300);
    }

    int dim() const { return p_; }
    double variance_floor() const { return floor_; }

    Eigen::VectorXd row(const ClusterStats& s) const {
        Eigen::VectorXd r(p_);
        r(0) = 1.0;
        r(1) = s.treated;
        if (p_ == 3) r(2) = s.gx;
        return r;
    }

    double clamp(double v) const { return std::max(v, floor_); }

    // GLS coefficients given arm variances.
    Eigen::VectorXd coefficients(double v_control, double v_treated) const {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p_, p_);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(p_);
        for (const auto& s : stats_) {
            const double w = s.n / (s.treated ? v_treated : v_control);
            const Eigen::VectorXd r = row(s);
            a.noalias() += w * r * r.transpose();
            b.noalias() += w * s.mean * r;
        }
        return a.ldlt().solve(b);
    }

    double log_likelihood(const Eigen::VectorXd& beta, double v_control, double v_treated) const {
        double ll = 0.0;
        for (const auto& s : stats_) {
            const double v = s.treated ? v_treated : v_control;
            const double resid = s.mean - row(s).dot(beta);
            ll += -0.5 * s.n * std::log(2.0 * std::numbers::pi * v) -
                  (s.ssw + s.n * resid * resid) / (2.0 * v);
        }
        return ll;
    }

    double profile(double log_vc, double log_vt) const {
        const double vc = clamp(std::exp(log_vc)), vt = clamp(std::exp(log_vt));
        return log_likelihood(coefficients(vc, vt), vc, vt);
    }

    // Residual arm variances of the unweighted fit.
    std::array<double, 2> moment_variances() const {
        const Eigen::VectorXd beta = coefficients(1.0, 1.0);
        double ss[2] = {0.0, 0.0}, n[2] = {0.0, 0.0};
        for (const auto& s : stats_) {
            const double resid = s.mean - row(s).dot(beta);
            ss[s.treated] += s.ssw + s.n * resid * resid;
            n[s.treated] += s.n;
        }
        return {clamp(ss[0] / n[0]), clamp(ss[1] / n[1])};
    }

    // Observed information in (coefficients, log v_control, log v_treated).
    Eigen::MatrixXd observed_information(const Eigen::VectorXd& beta, double vc,
                                         double vt) const {
        const int q = p_ + 2;
        Eigen::MatrixXd info = Eigen::MatrixXd::Zero(q, q);
        for (const auto& s : stats_) {
            const double v = s.treated ? vt : vc;
            const int a = p_ + s.treated;
            const Eigen::VectorXd r = row(s);
            const double resid = s.mean - r.dot(beta);
            info.topLeftCorner(p_, p_).noalias() += (s.n / v) * r * r.transpose();
            const Eigen::VectorXd cross = (s.n / v) * resid * r;
            info.block(0, a, p_, 1) += cross;
            info.block(a, 0, 1, p_) += cross.transpose();
            info(a, a) += (s.ssw + s.n * resid * resid) / (2.0 * v);
        }
        return info;
    }

private:
    std::vector<ClusterStats> stats_;
    int p_;
    double floor_ = 0.0;
};

struct OptimizedVariances {
    double vc = 0.0, vt = 0.0, log_likelihood = 0.0;
    int evaluations = 0;
    bool converged = false;
};

OptimizedVariances optimize_variances(const ArmVarianceModel& model,
                                      const std::vector<std::array<double, 2>>& starts,
                                      const FitOptions& options) {
    const auto objective = [&](const std::vector<double>& s) { return -model.profile(s[0], s[1]); };
    OptimizedVariances best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    bool any_converged = false;
    for (const auto& start : starts) {
        const auto res =
            nelder_mead(objective, {std::log(start[0]), std::log(start[1])}, options.optimizer);
        best.evaluations += res.evaluations;
        any_converged = any_converged || res.converged;
        if (-res.value > best.log_likelihood) {
            best.log_likelihood = -res.value;
            best.vc = model.clamp(std::exp(res.x[0]));
            best.vt = model.clamp(std::exp(res.x[1]));
        }
    }
    best.converged = any_converged;
    return best;
}

std::vector<std::array<double, 2>> perturbed_starts(std::array<double, 2> base, int restarts) {
    // Multiplicative perturbations of the moment-based start.
    static constexpr double kFactors[][2] = {{1.0, 1.0}, {2.0, 0.5}, {0.5, 2.0}, {3.0, 3.0},
                                             {1.0 / 3.0, 1.0 / 3.0}};
    std::vector<std::array<double, 2>> out;
    const int count = std::clamp(restarts, 1, 5);
    for (int i = 0; i < count; ++i) {
        out.push_back({base[0] * kFactors[i][0], base[1] * kFactors[i][1]});
    }
    return out;
}

void require_pairs_for_model(const ExperimentData& data) {
    require_valid(data);
    if (data.pair_count() < 2) {
        throw std::invalid_argument("hierarchical fits need at least 2 pairs");
    }
}

HierFit finish_fit(const ArmVarianceModel& model, const OptimizedVariances& opt,
                   EstimatorKind kind, double level, double gx_center, double gx_scale) {
    HierFit fit;
    const Eigen::VectorXd beta = model.coefficients(opt.vc, opt.vt);
    fit.log_likelihood = model.log_likelihood(beta, opt.vc, opt.vt);
    fit.evaluations = opt.evaluations;
    fit.boundary = std::min(opt.vc, opt.vt) <= 10.0 * model.variance_floor();

    fit.params.tau0 = beta(1);
    fit.params.alpha0 = beta(0);
    if (model.dim() == 3) {
        fit.params.beta = beta(2) / gx_scale;
        fit.params.alpha0 = beta(0) - beta(2) * gx_center / gx_scale;
    }
    fit.params.control_variance = opt.vc;
    fit.params.treated_variance = opt.vt;

    const Eigen::MatrixXd info = model.observed_information(beta, opt.vc, opt.vt);
    const Eigen::MatrixXd cov = info.inverse();
    const double var_tau = cov(1, 1);

    EstimateResult& est = fit.estimate;
    est.estimator = kind;
    est.estimate = fit.params.tau0;
    est.level = level;
    est.converged = opt.converged;
    if (std::isfinite(var_tau) && var_tau >= 0.0) {
        est.std_error = std::sqrt(var_tau);
        est.ci = wald_interval(est.estimate, *est.std_error, level);
    } else {
        est.warnings.emplace_back("observed information is singular; no standard error");
    }
    if (!opt.converged) est.warnings.emplace_back("variance optimizer hit the evaluation cap");
    if (fit.boundary) est.warnings.emplace_back("variance component at boundary");
    return fit;
}

}  // namespace

double pooled_difference_in_means(const ExperimentData& data) {
    double sum[2] = {0.0, 0.0}, n[2] = {0.0, 0.0};
    for (const auto& p : data.pairs) {
        for (const auto& c : p.clusters) {
            const int t = c.treatment == 1 ? 1 : 0;
            for (double y : c.outcomes) sum[t] += y;
            n[t] += static_cast<double>(c.outcomes.size());
        }
    }
    if (n[0] == 0.0 || n[1] == 0.0) {
        throw std::invalid_argument("pooled difference needs individuals in both arms");
    }
    return sum[1] / n[1] - sum[0] / n[0];
}

EstimateResult estimate_design_based(const ExperimentData& data, double level) {
    require_valid(data);
    const std::size_t k_pairs = data.pair_count();
    const double total = static_cast<double>(data.individual_count());
    const double kd = static_cast<double>(k_pairs);

    std::vector<double> d(k_pairs);
    double d_sum = 0.0;
    for (std::size_t k = 0; k < k_pairs; ++k) {
        const Pair& p = data.pairs[k];
        const double w =
            kd * static_cast<double>(p.clusters[0].size + p.clusters[1].size) / total;
        d[k] = w * (p.treated().mean() - p.control().mean());
        d_sum += d[k];
    }

    EstimateResult r;
    r.estimator = EstimatorKind::DesignBased;
    r.level = level;
    r.estimate = d_sum / kd;
    if (k_pairs < 2) {
        r.warnings.emplace_back("standard error undefined with a single pair");
        return r;
    }
    double ss = 0.0;
    for (double dk : d) ss += (dk - r.estimate) * (dk - r.estimate);
    r.std_error = std::sqrt(ss / (kd * (kd - 1.0)));
    r.ci = wald_interval(r.estimate, *r.std_error, level);
    return r;
}

double hier_log_likelihood(const ExperimentData& data, const HierarchicalParams& params,
                           const Link* g) {
    if (g && !params.beta) throw std::invalid_argument("covariate link given without beta");
    double ll = 0.0;
    for (const auto& p : data.pairs) {
        for (const auto& c : p.clusters) {
            const double v = c.treatment ? params.treated_variance : params.control_variance;
            if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
            double mu = params.alpha0 + params.tau0 * c.treatment;
            if (g) {
                if (!c.covariate) throw std::invalid_argument("cluster without covariate");
                mu += *params.beta * (*g)(*c.covariate);
            }
            for (double y : c.outcomes) {
                ll += -0.5 * std::log(2.0 * std::numbers::pi * v) - (y - mu) * (y - mu) / (2.0 * v);
            }
        }
    }
    return ll;
}

HierFit fit_hier_nocov(const ExperimentData& data, const FitOptions& options) {
    require_pairs_for_model(data);
    const ArmVarianceModel model(summarize(data), false);
    const auto opt = optimize_variances(model, perturbed_starts(model.moment_variances(), options.restarts),
                                        options);
    return finish_fit(model, opt, EstimatorKind::HierNoCov, options.level, 0.0, 1.0);
}

HierFit fit_hier_cov(const ExperimentData& data, const Link& g, const FitOptions& options) {
    require_pairs_for_model(data);
    if (!data.has_covariates()) {
        throw std::invalid_argument("covariate model needs a covariate for every cluster");
    }

    auto stats = summarize(data);
    std::vector<double> gx;
    std::size_t idx = 0;
    for (const auto& p : data.pairs) {
        for (const auto& c : p.clusters) {
            const double v = g(*c.covariate);
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "g(X) is not finite for pair " << idx / 2 + 1 << " cluster " << idx % 2 + 1;
                throw std::domain_error(msg.str());
            }
            gx.push_back(v);
            ++idx;
        }
    }

    // Standardize g(X); τ₀ is unaffected and the normal equations stay well
    // conditioned even for exp-scale covariates.
    const double center = std::accumulate(gx.begin(), gx.end(), 0.0) / static_cast<double>(gx.size());
    double ss = 0.0;
    for (double v : gx) ss += (v - center) * (v - center);
    const double scale = std::sqrt(ss / static_cast<double>(gx.size()));

    // Covariate must vary within at least one arm, otherwise it is
    // collinear with (1, T).
    bool estimable = scale > 0.0 && std::isfinite(scale);
    if (estimable) {
        double arm_mean[2] = {0.0, 0.0}, arm_n[2] = {0.0, 0.0}, within = 0.0;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            arm_mean[stats[i].treated] += (gx[i] - center) / scale;
            arm_n[stats[i].treated] += 1.0;
        }
        for (int a = 0; a < 2; ++a) arm_mean[a] /= arm_n[a];
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double z = (gx[i] - center) / scale - arm_mean[stats[i].treated];
            within += z * z;
        }
        estimable = within / static_cast<double>(gx.size()) > 1e-12;
    }

    if (!estimable) {
        HierFit fit = fit_hier_nocov(data, options);
        fit.estimate.estimator = EstimatorKind::HierCov;
        fit.beta_estimable = false;
        fit.estimate.warnings.emplace_back("covariate is collinear with treatment; beta inestimable");
        return fit;
    }

    for (std::size_t i = 0; i < gx.size(); ++i) stats[i].gx = (gx[i] - center) / scale;
    const ArmVarianceModel model(std::move(stats), true);

    auto starts = perturbed_starts(model.moment_variances(), options.restarts);
    // The no-covariate optimum is always a start, so the fitted likelihood
    // can never fall below the nested model's.
    const ArmVarianceModel nested(summarize(data), false);
    starts.push_back(nested.moment_variances());
    const auto opt = optimize_variances(model, starts, options);
    return finish_fit(model, opt, EstimatorKind::HierCov, options.level, center, scale);
}

double chi_square_critical_value(double alpha, int dof) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    const boost::math::chi_squared_distribution<double> chi(dof);
    return boost::math::quantile(boost::math::complement(chi, alpha));
}

EstimateResult lr_pretest_estimate(const ExperimentData& data, double alpha, const Link& g,
                                   const FitOptions& options) {
    const HierFit nocov = fit_hier_nocov(data, options);
    PretestInfo info;
    info.threshold = chi_square_critical_value(alpha);

    std::optional<HierFit> cov;
    std::string failure;
    try {
        cov = fit_hier_cov(data, g, options);
    } catch (const std::exception& e) {
        failure = e.what();
    }

    EstimateResult out;
    if (!cov) {
        info.fallback = true;
        info.branch = EstimatorKind::HierNoCov;
        out = nocov.estimate;
        out.warnings.push_back("covariate fit failed, using the no-covariate model: " + failure);
    } else {
        info.lr_statistic =
            cov->beta_estimable ? std::max(0.0, 2.0 * (cov->log_likelihood - nocov.log_likelihood))
                                : 0.0;
        const bool include = info.lr_statistic > info.threshold;
        info.branch = include ? EstimatorKind::HierCov : EstimatorKind::HierNoCov;
        out = include ? cov->estimate : nocov.estimate;
    }
    out.estimator = EstimatorKind::Pretest;
    out.pretest = info;
    return out;
}

EstimateResult estimate(const ExperimentData& data, EstimatorKind kind, double level) {
    FitOptions options;
    options.level = level;
    switch (kind) {
        case EstimatorKind::DesignBased: return estimate_design_based(data, level);
        case EstimatorKind::HierNoCov: return fit_hier_nocov(data, options).estimate;
        case EstimatorKind::HierCov: return fit_hier_cov(data, Link::identity(), options).estimate;
        case EstimatorKind::Pretest:
            return lr_pretest_estimate(data, 0.05, Link::identity(), options);
    }
    throw std::invalid_argument("unknown estimator");
}

DiscrepancyResult bias_discrepancy(const Link& g, const DgpConfig& dgp, double beta,
                                   std::size_t n_mc, std::uint64_t seed) {
    dgp.validate();
    if (n_mc < 2) throw std::invalid_argument("bias_discrepancy needs at least 2 draws");
    Rng rng(seed);
    const std::size_t n_pairs = (n_mc + 1) / 2;

    // Each antithetic pair contributes the mean of its two integrands.
    double mean = 0.0, m2 = 0.0, target_sum = 0.0;
    std::size_t used = 0, non_finite = 0;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const double y1 = dgp.truncation
                              ? truncated_normal(rng, dgp.mu0, dgp.sigma0, *dgp.truncation)
                              : rng.normal(dgp.mu0, dgp.sigma0);
        const double delta = rng.normal(0.0, dgp.sigma_delta);
        const double zeta = rng.normal(0.0, dgp.sigma_zeta);
        const double base = y1 + zeta;
        const double g_base = g(base);
        const double plus = g(base + delta) - g_base;
        const double minus = g(base - delta) - g_base;
        target_sum += dgp.effect_numerator / y1;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            non_finite += 2;
            continue;
        }
        const double value = beta == 0.0 ? 0.0 : 0.5 * (plus + minus) * beta;
        ++used;
        const double dlt = value - mean;
        mean += dlt / static_cast<double>(used);
        m2 += dlt * (value - mean);
    }

    const std::size_t draws = 2 * n_pairs;
    if (static_cast<double>(non_finite) > 0.001 * static_cast<double>(draws)) {
        std::ostringstream msg;
        msg << "bias_discrepancy: " << non_finite << " of " << draws
            << " integrand evaluations are not finite (limit 0.1%)";
        throw std::domain_error(msg.str());
    }

    DiscrepancyResult r;
    r.draws = draws;
    r.non_finite = non_finite;
    r.discrepancy = mean;
    r.mc_std_error =
        used > 1 ? std::sqrt(m2 / static_cast<double>(used - 1) / static_cast<double>(used)) : 0.0;
    r.target = target_sum / static_cast<double>(n_pairs);
    r.tau_star = r.target + r.discrepancy;
    return r;
}

}  // namespace pairsim
