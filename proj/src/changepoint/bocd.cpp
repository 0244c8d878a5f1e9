#include "slicekit/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace slicekit::changepoint {

void NigPrior::validate() const {
    if (!std::isfinite(mu0) || !(kappa0 > 0.0) || !(alpha0 > 0.0) || !(beta0 > 0.0)) {
        throw std::invalid_argument("NigPrior: kappa0, alpha0 and beta0 must be positive, mu0 finite");
    }
}

namespace {

double log_student_t(double x, double mu, double kappa, double alpha, double beta) {
    const double nu = 2.0 * alpha;
    const double scale2 = beta * (kappa + 1.0) / (alpha * kappa);
    const double z = (x - mu) * (x - mu) / (nu * scale2);
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi * scale2) -
           0.5 * (nu + 1.0) * std::log1p(z);
}

}  // namespace

double student_t_predictive(double x, double mu, double kappa, double alpha, double beta) {
    return std::exp(log_student_t(x, mu, kappa, alpha, beta));
}

BocdState::BocdState(NigPrior prior, double hazard, double prune_below)
    : prior_(prior), hazard_(hazard), prune_(prune_below) {
    prior_.validate();
    if (!(hazard > 0.0 && hazard <= 1.0)) {
        throw std::invalid_argument("BocdState: hazard must lie in (0, 1]");
    }
    if (!(prune_below >= 0.0 && prune_below < 1.0)) {
        throw std::invalid_argument("BocdState: prune threshold must lie in [0, 1)");
    }
    runs_.push_back({0, 1.0, prior_.mu0, prior_.kappa0, prior_.alpha0, prior_.beta0});
}

BocdState::Step BocdState::update(double obs) {
    if (!std::isfinite(obs)) {
        throw std::invalid_argument("bocd_update: observation must be finite");
    }
    const double log_h = std::log(hazard_);
    const double log_1mh = hazard_ < 1.0 ? std::log1p(-hazard_) : -std::numeric_limits<double>::infinity();

    std::vector<Run> next;
    std::vector<double> logw;
    next.reserve(runs_.size() + 1);
    logw.reserve(runs_.size() + 1);

    // Changepoint mass sums over every hypothesis; computed in log space.
    double cp_max = -std::numeric_limits<double>::infinity();
    std::vector<double> joint(runs_.size());
    for (std::size_t i = 0; i < runs_.size(); ++i) {
        const Run& r = runs_[i];
        joint[i] = std::log(r.prob) + log_student_t(obs, r.mu, r.kappa, r.alpha, r.beta);
        cp_max = std::max(cp_max, joint[i]);
    }
    double cp_sum = 0.0;
    for (const double j : joint) {
        cp_sum += std::exp(j - cp_max);
    }
    next.push_back({0, 0.0, prior_.mu0, prior_.kappa0, prior_.alpha0, prior_.beta0});
    logw.push_back(cp_max + std::log(cp_sum) + log_h);

    for (std::size_t i = 0; i < runs_.size(); ++i) {
        const Run& r = runs_[i];
        Run g;
        g.length = r.length + 1;
        g.prob = 0.0;
        g.kappa = r.kappa + 1.0;
        g.mu = (r.kappa * r.mu + obs) / g.kappa;
        g.alpha = r.alpha + 0.5;
        g.beta = r.beta + r.kappa * (obs - r.mu) * (obs - r.mu) / (2.0 * g.kappa);
        next.push_back(g);
        logw.push_back(joint[i] + log_1mh);
    }

    const double top = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
        next[i].prob = std::isfinite(logw[i]) ? std::exp(logw[i] - top) : 0.0;
        total += next[i].prob;
    }
    // Prune small hypotheses, always keeping the changepoint hypothesis.
    std::vector<Run> kept;
    kept.reserve(next.size());
    double kept_total = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
        next[i].prob /= total;
        if (i == 0 || next[i].prob >= prune_) {
            kept.push_back(next[i]);
            kept_total += next[i].prob;
        }
    }
    for (Run& r : kept) {
        r.prob /= kept_total;
    }
    runs_ = std::move(kept);
    ++count_;

    std::size_t best = 0;
    for (std::size_t i = 1; i < runs_.size(); ++i) {
        if (runs_[i].prob > runs_[best].prob) {
            best = i;
        }
    }
    Step step;
    step.map_run_length = runs_[best].length;
    step.reset = count_ > 1 && step.map_run_length < map_;
    step.changepoint = count_ - step.map_run_length;
    map_ = step.map_run_length;
    return step;
}

std::vector<double> BocdState::posterior() const {
    std::size_t longest = 0;
    for (const Run& r : runs_) {
        longest = std::max(longest, r.length);
    }
    std::vector<double> dense(longest + 1, 0.0);
    for (const Run& r : runs_) {
        dense[r.length] += r.prob;
    }
    return dense;
}

bool force_gradient_trigger(std::span<const double> trace, double threshold) {
    if (trace.size() < 2) {
        throw std::invalid_argument("force_gradient_trigger: at least 2 samples are required");
    }
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (std::abs(trace[i] - trace[i - 1]) > threshold) {
            return true;
        }
    }
    return false;
}

}  // namespace slicekit::changepoint
