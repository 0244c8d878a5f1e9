#pragma once

// Straightforward reference implementations used only by the tests.
// They share no code with the library: O(n^2) DFT and DCT, the mel
// filterbank rebuilt from the HTK formula.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

inline std::vector<double> naive_power(const std::vector<double>& x, std::size_t n) {
    // Twiddles from an index table so the cost stays n^2 multiplies, not n^2 trig calls.
    std::vector<std::complex<double>> tw(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        tw[m] = {std::cos(a), std::sin(a)};
    }
    std::vector<double> out(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        std::complex<double> acc = 0.0;
        std::size_t idx = 0;
        for (std::size_t t = 0; t < x.size(); ++t) {
            acc += x[t] * tw[idx];
            idx += k;
            if (idx >= n) {
                idx -= n;
            }
        }
        out[k] = std::norm(acc);
    }
    return out;
}

inline std::vector<std::vector<double>> naive_stft(const std::vector<double>& x) {
    constexpr std::size_t frame = 1024;
    constexpr std::size_t hop = 512;
    constexpr std::size_t nfft = 2048;
    std::vector<std::vector<double>> frames;
    for (std::size_t start = 0;; start += hop) {
        std::vector<double> buf(frame, 0.0);
        for (std::size_t i = 0; i < frame; ++i) {
            const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / frame));
            if (start + i < x.size()) {
                buf[i] = x[start + i] * w;
            }
        }
        frames.push_back(naive_power(buf, nfft));
        if (start + frame >= x.size()) {
            break;
        }
    }
    return frames;
}

inline std::vector<std::vector<double>> mel_matrix() {
    const double sr = 44100.0;
    const std::size_t nfft = 2048;
    auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const double top = mel(sr / 2);
    std::vector<std::vector<double>> m(128, std::vector<double>(nfft / 2 + 1, 0.0));
    for (std::size_t b = 0; b < 128; ++b) {
        const double lo = hz(top * b / 129.0);
        const double c = hz(top * (b + 1) / 129.0);
        const double hi = hz(top * (b + 2) / 129.0);
        for (std::size_t k = 0; k <= nfft / 2; ++k) {
            const double f = k * sr / nfft;
            const double up = (f - lo) / (c - lo);
            const double down = (hi - f) / (hi - c);
            m[b][k] = std::max(0.0, std::min(up, down));
        }
    }
    return m;
}

inline std::vector<double> log_mel(const std::vector<std::vector<double>>& frames) {
    static const auto m = mel_matrix();
    std::vector<double> out(128, 0.0);
    for (const auto& fr : frames) {
        for (std::size_t b = 0; b < 128; ++b) {
            double e = 0.0;
            for (std::size_t k = 0; k < fr.size(); ++k) {
                e += m[b][k] * fr[k];
            }
            out[b] += std::log(std::max(e, 1e-10)) / static_cast<double>(frames.size());
        }
    }
    return out;
}

inline std::vector<double> naive_dct(const std::vector<double>& x, std::size_t keep) {
    const double n = static_cast<double>(x.size());
    std::vector<double> out(keep);
    for (std::size_t k = 0; k < keep; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            acc += x[i] * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
        }
        out[k] = acc * (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
    }
    return out;
}

inline std::vector<double> chroma(const std::vector<std::vector<double>>& frames) {
    std::vector<double> c(12, 0.0);
    for (std::size_t k = 1; k < frames[0].size(); ++k) {
        double mean = 0.0;
        for (const auto& fr : frames) {
            mean += fr[k];
        }
        mean /= static_cast<double>(frames.size());
        const double f = k * 44100.0 / 2048.0;
        const double midi = std::round(69.0 + 12.0 * std::log2(f / 440.0));
        const int pc = static_cast<int>(std::fmod(std::fmod(midi, 12.0) + 12.0, 12.0));
        c[static_cast<std::size_t>(pc)] += mean;
    }
    double norm = 0.0;
    for (const double v : c) {
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : c) {
        v = norm > 0 ? v / norm : 0.0;
    }
    return c;
}

/// max_i |a_i - b_i| / max(|b|_inf, tiny): relative to the vector's scale.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0;
    double scale = 1e-300;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return num / scale;
}

}  // namespace oracle
