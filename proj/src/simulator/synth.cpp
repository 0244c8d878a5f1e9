#include "slicekit/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slicekit::sim {

namespace {

constexpr double kFs = signals::kSampleRate;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kHumHarmonics = 12;
constexpr double kHumBase = 120.0;
constexpr double kClickDecay = 0.003;  // s
constexpr double kMicX1 = -0.15;
constexpr double kMicX2 = 0.35;

using Gains = std::array<double, signals::kChannels>;

double mic_gain(double x, double mic_x) { return 1.0 / (1.0 + 8.0 * std::abs(x - mic_x)); }

Gains board_gains(double x) { return {mic_gain(x, kMicX1), mic_gain(x, kMicX2), 0.35, 0.12}; }

Gains food_gains(double x, const MaterialSpec& m) {
    return {0.3 * mic_gain(x, kMicX1), 0.3 * mic_gain(x, kMicX2), 1.0, 0.6 * (1.0 - 0.5 * m.damping)};
}

// Band-pass output scale that brings unit white noise back to roughly unit RMS.
double band_norm(double center, double q) {
    const double bw = center / q;
    return 0.8 * std::sqrt(kFs / (2.0 * bw));
}

Voice board_voice(double speed, double x, Rng& rng) {
    Voice v;
    v.freq = {850.0, 2300.0, 5200.0};
    v.weight = {1.0, 0.6, 0.35};
    v.decay = 0.025;
    v.amplitude = 6.0 * speed * 1.1;
    v.gain = board_gains(x);
    for (double& p : v.phase) {
        p = rng.uniform(0.0, kTwoPi);
    }
    return v;
}

Voice food_voice(double speed, double x, const MaterialSpec& m, Rng& rng) {
    Voice v;
    const double f0 = m.resonance_hz;
    v.freq = {f0, 2.14 * f0, std::min(3.6 * f0, 0.45 * kFs)};
    v.weight = {1.0, 0.5, 0.25};
    v.decay = 0.006 + 0.04 * (1.0 - m.damping);
    v.amplitude = 6.0 * speed * (0.2 + m.hardness);
    v.gain = food_gains(x, m);
    for (double& p : v.phase) {
        p = rng.uniform(0.0, kTwoPi);
    }
    return v;
}

constexpr std::size_t kCoupledHarmonics = 48;

struct Hum {
    std::array<double, kCoupledHarmonics> tong{};     // heard by the tong mic at all times
    std::array<double, kCoupledHarmonics> coupled{};  // reaches the knife through the item while touching it
    std::array<double, kCoupledHarmonics> phase{};
};

// The tong holds the item, so its motor hum is damped near the item's resonance
// on the tong mic and passes through the item's resonance into the knife.
Hum make_hum(const MaterialSpec& m, const SimConfig& c) {
    Hum h;
    Rng rng(derive_seed(hash_string(m.name), "hum"));
    const double q = 2.0 + 6.0 * (1.0 - m.damping);
    for (std::size_t k = 0; k < kCoupledHarmonics; ++k) {
        const double n = static_cast<double>(k + 1);
        const double f = kHumBase * n;
        const double base = c.hum_amplitude / std::sqrt(n);
        if (k < kHumHarmonics) {
            const double octaves = std::log2(f / m.resonance_hz);
            h.tong[k] = base * (1.0 - 0.8 * m.damping * std::exp(-octaves * octaves / 0.5));
        }
        const double r = f / m.resonance_hz;
        const double response = 1.0 / std::sqrt((1.0 - r * r) * (1.0 - r * r) + (r / q) * (r / q));
        h.coupled[k] = 0.5 * base * response;
        h.phase[k] = rng.uniform(0.0, kTwoPi);
    }
    return h;
}

// Harmonic oscillator bank advanced by rotation so each sample costs no trig calls.
struct Phasors {
    std::array<double, kCoupledHarmonics> re{}, im{}, rot_re{}, rot_im{};

    Phasors(const Hum& hum, std::size_t clock) {
        const double t0 = static_cast<double>(clock) / kFs;
        for (std::size_t k = 0; k < kCoupledHarmonics; ++k) {
            const double w = kTwoPi * kHumBase * static_cast<double>(k + 1);
            const double theta = std::fmod(w * t0, kTwoPi) + hum.phase[k];
            re[k] = std::cos(theta);
            im[k] = std::sin(theta);
            rot_re[k] = std::cos(w / kFs);
            rot_im[k] = std::sin(w / kFs);
        }
    }

    void advance() {
        for (std::size_t k = 0; k < kCoupledHarmonics; ++k) {
            const double r = re[k] * rot_re[k] - im[k] * rot_im[k];
            im[k] = re[k] * rot_im[k] + im[k] * rot_re[k];
            re[k] = r;
        }
    }
};

Event majority(const std::vector<StepRecord>& steps) {
    std::array<int, kEventCount> count{};
    std::array<std::size_t, kEventCount> last{};
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto e = static_cast<std::size_t>(steps[i].event);
        ++count[e];
        last[e] = i;
    }
    std::size_t best = 0;
    for (std::size_t e = 1; e < kEventCount; ++e) {
        if (count[e] > count[best] || (count[e] == count[best] && count[e] > 0 && last[e] > last[best])) {
            best = e;
        }
    }
    return static_cast<Event>(best);
}

}  // namespace

Biquad Biquad::bandpass(double center_hz, double q) {
    // Constant 0 dB peak gain band-pass.
    const double w0 = kTwoPi * center_hz / kFs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad f;
    f.b0 = alpha / a0;
    f.b2 = -alpha / a0;
    f.a1 = -2.0 * std::cos(w0) / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
}

double Biquad::process(double x) {
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
}

EmittedWindow emit_sensors(WorldState& s, const MaterialSpec& m, const SimConfig& c) {
    constexpr std::size_t per_step = signals::kWindowSamples / signals::kForceSamples;
    if (s.pending.size() != signals::kForceSamples) {
        throw std::logic_error("emit_sensors: expected " + std::to_string(signals::kForceSamples) +
                               " pending steps, have " + std::to_string(s.pending.size()));
    }
    const double f0 = m.resonance_hz;
    const double board_q = 0.9;
    const double food_q = 1.2;
    const double slice_q = 2.0 + 4.0 * (1.0 - m.damping);
    // Coefficients are fixed per material; only the delay state carries over.
    auto retune = [](Biquad& f, double center, double q) {
        const Biquad fresh = Biquad::bandpass(center, q);
        f.b0 = fresh.b0;
        f.b2 = fresh.b2;
        f.a1 = fresh.a1;
        f.a2 = fresh.a2;
    };
    retune(s.scrape_board_filter, 3000.0, board_q);
    retune(s.scrape_food_filter, std::min(1.6 * f0, 0.45 * kFs), food_q);
    retune(s.slice_filter, f0, slice_q);
    const double board_norm = band_norm(3000.0, board_q);
    const double food_norm = band_norm(std::min(1.6 * f0, 0.45 * kFs), food_q);
    const double slice_norm = band_norm(f0, slice_q);
    const Hum hum = make_hum(m, c);
    Phasors osc(hum, s.sample_clock);
    Rng& rng = s.noise_rng;

    EmittedWindow out;
    for (auto& ch : out.window.vibration) {
        ch.assign(signals::kWindowSamples, 0.0);
    }

    for (std::size_t step = 0; step < s.pending.size(); ++step) {
        const StepRecord& r = s.pending[step];
        out.window.forces[step] = r.force;
        if (r.impact_speed > 0.0) {
            if (r.impact_on_board) {
                s.voices.push_back(board_voice(r.impact_speed, r.x, rng));
            } else {
                s.voices.push_back(food_voice(r.impact_speed, r.x, m, rng));
            }
        }
        const bool sliding = r.vx > c.slide_speed;
        const double board_amp =
            r.board_contact && sliding ? 0.6 * r.vx * (0.5 + std::min(std::max(r.force[signals::Fz], 0.0), 20.0) / 20.0)
                                       : 0.0;
        const double food_amp =
            (r.food_contact && !r.cutting && sliding) || r.slipping ? 0.5 * std::max(r.vx, c.slide_speed) *
                                                                          (0.3 + m.friction)
                                                                    : 0.0;
        const double slice_amp =
            r.cutting ? 1.2 * (0.2 + m.hardness) * (r.vx + 0.5 * std::abs(r.vz_cmd)) : 0.0;
        const bool touching = r.food_contact || r.cutting || r.slipping;
        const Gains bg = board_gains(r.x);
        const Gains fg = food_gains(r.x, m);

        for (std::size_t i = 0; i < per_step; ++i) {
            const std::size_t n = step * per_step + i;
            const double t = static_cast<double>(s.sample_clock) / kFs;
            std::array<double, signals::kChannels> acc{};

            for (auto& v : s.voices) {
                const double age = v.age / kFs;
                const double env = std::exp(-age / v.decay);
                double ring = 0.0;
                for (std::size_t k = 0; k < 3; ++k) {
                    ring += v.weight[k] * std::sin(kTwoPi * v.freq[k] * age + v.phase[k]);
                }
                const double click = 0.3 * std::exp(-age / kClickDecay) * rng.normal();
                const double val = v.amplitude * (env * ring + click);
                for (std::size_t ch = 0; ch < signals::kChannels; ++ch) {
                    acc[ch] += v.gain[ch] * val;
                }
                v.age += 1.0;
            }

            const double nb = s.scrape_board_filter.process(rng.normal()) * board_norm;
            const double nf = s.scrape_food_filter.process(rng.normal()) * food_norm;
            const double crunch = 1.0 + m.skin_toughness * std::sin(kTwoPi * (8.0 + 25.0 * m.hardness) * t);
            const double ns = s.slice_filter.process(rng.normal()) * slice_norm * crunch;
            for (std::size_t ch = 0; ch < signals::kChannels; ++ch) {
                acc[ch] += bg[ch] * board_amp * nb + fg[ch] * (food_amp * nf + slice_amp * ns);
            }

            double tong_hum = 0.0;
            for (std::size_t k = 0; k < kHumHarmonics; ++k) {
                tong_hum += hum.tong[k] * osc.im[k];
            }
            acc[3] += tong_hum;
            if (touching) {
                double through = 0.0;
                for (std::size_t k = 0; k < kCoupledHarmonics; ++k) {
                    through += hum.coupled[k] * osc.im[k];
                }
                acc[2] += through;
            }
            osc.advance();

            for (std::size_t ch = 0; ch < signals::kChannels; ++ch) {
                out.window.vibration[ch][n] = std::tanh(acc[ch] + c.sensor_noise * rng.normal());
            }
            ++s.sample_clock;
        }
        std::erase_if(s.voices, [](const Voice& v) { return v.age / kFs > 10.0 * v.decay; });
    }

    out.truth = majority(s.pending);
    s.pending.clear();
    return out;
}

}  // namespace slicekit::sim
