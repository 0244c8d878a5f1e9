#include <catch_amalgamated.hpp>

#include "slicekit/changepoint.hpp"
#include "slicekit/common.hpp"

#include <cmath>
#include <numbers>

using namespace slicekit;
using namespace slicekit::changepoint;
using Catch::Approx;

namespace {

// Vague on the mean, fairly confident about the noise variance (0.01).
const NigPrior kPrior{0.0, 0.01, 10.0, 0.1};

// Dense Adams-MacKay recursion without pruning, written out directly.
std::vector<double> dense_posterior(const std::vector<double>& xs, const NigPrior& p, double h) {
    std::vector<double> prob{1.0}, mu{p.mu0}, kappa{p.kappa0}, alpha{p.alpha0}, beta{p.beta0};
    for (const double x : xs) {
        const std::size_t n = prob.size();
        std::vector<double> pred(n);
        for (std::size_t r = 0; r < n; ++r) {
            const double nu = 2 * alpha[r];
            const double s2 = beta[r] * (kappa[r] + 1) / (alpha[r] * kappa[r]);
            pred[r] = std::tgamma((nu + 1) / 2) / (std::tgamma(nu / 2) * std::sqrt(nu * std::numbers::pi * s2)) *
                      std::pow(1 + (x - mu[r]) * (x - mu[r]) / (nu * s2), -(nu + 1) / 2);
        }
        std::vector<double> np(n + 1, 0.0), nm(n + 1), nk(n + 1), na(n + 1), nb(n + 1);
        for (std::size_t r = 0; r < n; ++r) {
            np[r + 1] = prob[r] * pred[r] * (1 - h);
            np[0] += prob[r] * pred[r] * h;
            nk[r + 1] = kappa[r] + 1;
            nm[r + 1] = (kappa[r] * mu[r] + x) / nk[r + 1];
            na[r + 1] = alpha[r] + 0.5;
            nb[r + 1] = beta[r] + kappa[r] * (x - mu[r]) * (x - mu[r]) / (2 * nk[r + 1]);
        }
        nm[0] = p.mu0;
        nk[0] = p.kappa0;
        na[0] = p.alpha0;
        nb[0] = p.beta0;
        double z = 0;
        for (const double v : np) {
            z += v;
        }
        for (double& v : np) {
            v /= z;
        }
        prob = np;
        mu = nm;
        kappa = nk;
        alpha = na;
        beta = nb;
    }
    return prob;
}

std::vector<double> stream(Rng& rng, std::size_t n, double sd, std::size_t shift_at = 0, double shift = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal(0.0, sd) + (shift_at > 0 && i >= shift_at ? shift : 0.0);
    }
    return x;
}

}  // namespace

TEST_CASE("posterior matches the dense recursion", "[changepoint]") {
    Rng rng(1);
    const auto xs = stream(rng, 60, 0.1, 30, 0.5);
    BocdState s(kPrior, 0.05, 0.0);
    for (const double x : xs) {
        s.update(x);
    }
    const auto got = s.posterior();
    const auto want = dense_posterior(xs, kPrior, 0.05);
    REQUIRE(got.size() == want.size());
    for (std::size_t r = 0; r < want.size(); ++r) {
        REQUIRE(got[r] == Approx(want[r]).margin(1e-9));
    }
}

TEST_CASE("posterior stays a distribution", "[changepoint]") {
    Rng rng(2);
    BocdState s(kPrior, 1.0 / 200.0);
    for (const double x : stream(rng, 500, 0.1, 250, 1.0)) {
        s.update(x);
        const auto p = s.posterior();
        double sum = 0.0;
        for (const double v : p) {
            REQUIRE(v >= 0.0);
            sum += v;
        }
        REQUIRE(sum == Approx(1.0).margin(1e-9));
    }
    // Pruning drops the runs that predate the change at t = 250.
    CHECK(s.hypotheses() < 300);
}

TEST_CASE("stationary stream keeps growing the run", "[changepoint]") {
    Rng rng(3);
    BocdState s(kPrior, 1.0 / 200.0);
    const auto xs = stream(rng, 200, 0.1);
    std::size_t agree = 0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        if (s.update(xs[t]).map_run_length == t + 1) {
            ++agree;
        }
    }
    CHECK(agree >= 195);
}

TEST_CASE("mean shift resets the run length", "[changepoint]") {
    Rng rng(4);
    BocdState s(kPrior, 1.0 / 200.0);
    const auto xs = stream(rng, 150, 0.1, 100, 0.5);
    bool reset = false;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        const auto step = s.update(xs[t]);
        if (t >= 100 && t < 110 && step.map_run_length < 5) {
            reset = true;
        }
    }
    CHECK(reset);
}

TEST_CASE("hazard of one forces a changepoint every step", "[changepoint]") {
    Rng rng(5);
    BocdState s(kPrior, 1.0);
    for (const double x : stream(rng, 20, 0.1)) {
        s.update(x);
        const auto p = s.posterior();
        REQUIRE(p[0] == Approx(1.0));
    }
}

TEST_CASE("detection latency and false alarms over seeded trials", "[changepoint]") {
    std::size_t detected = 0;
    std::size_t false_alarms = 0;
    std::size_t stationary_windows = 0;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Rng rng(derive_seed(99, "latency", trial));
        const auto xs = stream(rng, 160, 0.1, 100, 0.5);
        BocdState s(kPrior, 1.0 / 200.0);
        bool hit = false;
        for (std::size_t t = 0; t < xs.size(); ++t) {
            const auto step = s.update(xs[t]);
            if (t < 100) {
                ++stationary_windows;
                false_alarms += step.reset ? 1 : 0;
            } else if (step.reset && t < 110) {
                hit = true;
            }
        }
        detected += hit ? 1 : 0;
    }
    CHECK(detected >= 48);
    CHECK(static_cast<double>(false_alarms) / static_cast<double>(stationary_windows) < 0.01);
}

TEST_CASE("bocd rejects bad input", "[changepoint]") {
    BocdState s(kPrior, 0.01);
    CHECK_THROWS_AS(s.update(std::nan("")), std::invalid_argument);
    CHECK_THROWS_AS(s.update(INFINITY), std::invalid_argument);
    CHECK_THROWS_AS(BocdState(kPrior, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(BocdState(NigPrior{0, 0, 1, 1}, 0.1), std::invalid_argument);
}

TEST_CASE("force gradient trigger", "[changepoint]") {
    const std::vector<double> flat(10, 3.0);
    CHECK_FALSE(force_gradient_trigger(flat, 2.0));
    std::vector<double> step(10, 0.0);
    for (std::size_t i = 5; i < step.size(); ++i) {
        step[i] = 5.0;
    }
    CHECK(force_gradient_trigger(step, 2.0));
    std::vector<double> ramp(10);
    for (std::size_t i = 0; i < ramp.size(); ++i) {
        ramp[i] = 0.1 * static_cast<double>(i);
    }
    CHECK_FALSE(force_gradient_trigger(ramp, 2.0));
    CHECK(force_gradient_trigger(std::vector<double>{0.0, -2.5}, 2.0));
    CHECK_THROWS_AS(force_gradient_trigger(std::vector<double>{1.0}, 2.0), std::invalid_argument);
}

namespace {

// Quiet windows, then louder knife-mic noise with a force step at `contact`.
std::vector<signals::SensorWindow> contact_episode(std::size_t n, std::size_t contact, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<signals::SensorWindow> ws(n, signals::SensorWindow::silent());
    for (std::size_t w = 0; w < n; ++w) {
        const double sd = w >= contact ? 0.05 : 0.003;
        for (auto& ch : ws[w].vibration) {
            for (double& v : ch) {
                v = rng.normal(0.0, sd);
            }
        }
        for (std::size_t t = 0; t < signals::kForceSamples; ++t) {
            ws[w].forces[t][signals::Fz] = rng.normal(0.0, 0.05) + (w >= contact ? 12.0 : 0.0);
        }
    }
    return ws;
}

}  // namespace

TEST_CASE("labeling an approach skill", "[changepoint]") {
    const auto ws = contact_episode(30, 12, 7);
    const std::vector<SkillSpan> timeline{{"move_down_on_board", 0, 30, SkillKind::Approach, "in air",
                                           "hitting cutting board", signals::Fz}};
    const LabelResult r = label_episode(ws, timeline);
    REQUIRE(r.segments.size() == 2);
    CHECK(r.warnings.empty());
    CHECK(r.segments[0].label == "in air");
    CHECK(r.segments[1].label == "hitting cutting board");
    CHECK(std::abs(static_cast<long>(r.segments[1].start) - 12) <= 2);
    const auto per_window = expand(r.segments, ws.size());
    CHECK(per_window.front() == "in air");
    CHECK(per_window.back() == "hitting cutting board");
}

TEST_CASE("sound change without force change is not contact", "[changepoint]") {
    auto ws = contact_episode(30, 12, 8);
    for (auto& w : ws) {
        for (auto& s : w.forces) {
            s[signals::Fz] = 0.0;
        }
    }
    const std::vector<SkillSpan> timeline{
        {"move_down_on_board", 0, 30, SkillKind::Approach, "in air", "hitting cutting board", signals::Fz}};
    const LabelResult r = label_episode(ws, timeline);
    REQUIRE(r.segments.size() == 1);
    CHECK(r.segments[0].label == "in air");
    CHECK(r.warnings.size() == 1);
}

TEST_CASE("constant-contact skills take the skill label", "[changepoint]") {
    const auto ws = contact_episode(20, 5, 9);
    const std::vector<SkillSpan> timeline{
        {"slicing_action", 0, 20, SkillKind::ConstantContact, "", "slicing object", signals::Fx}};
    const LabelResult r = label_episode(ws, timeline);
    REQUIRE(r.segments.size() == 1);
    CHECK(r.segments[0].label == "slicing object");
    CHECK(r.segments[0].source == LabelSource::SkillContext);
}

TEST_CASE("labels partition multi-skill episodes", "[changepoint]") {
    const auto ws = contact_episode(40, 10, 10);
    const std::vector<SkillSpan> timeline{
        {"move_down_on_board", 0, 20, SkillKind::Approach, "in air", "hitting cutting board", signals::Fz},
        {"scrape", 20, 40, SkillKind::ConstantContact, "", "scraping cutting board", signals::Fx}};
    const LabelResult r = label_episode(ws, timeline);
    std::size_t cursor = 0;
    for (const auto& s : r.segments) {
        REQUIRE(s.start == cursor);
        REQUIRE(s.end > s.start);
        cursor = s.end;
    }
    CHECK(cursor == 40);
}

TEST_CASE("bad timelines are rejected", "[changepoint]") {
    const auto ws = contact_episode(10, 5, 11);
    CHECK_THROWS_AS(label_episode(ws, std::vector<SkillSpan>{}), std::invalid_argument);
    const std::vector<SkillSpan> gap{{"a", 0, 4, SkillKind::ConstantContact, "", "x", signals::Fz},
                                     {"b", 5, 10, SkillKind::ConstantContact, "", "y", signals::Fz}};
    CHECK_THROWS_AS(label_episode(ws, gap), std::invalid_argument);
    const std::vector<SkillSpan> shortfall{{"a", 0, 8, SkillKind::ConstantContact, "", "x", signals::Fz}};
    CHECK_THROWS_AS(label_episode(ws, shortfall), std::invalid_argument);
}
