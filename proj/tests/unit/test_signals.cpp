#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "slicekit/common.hpp"
#include "slicekit/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace slicekit;
using namespace slicekit::signals;
using Catch::Approx;

namespace {

std::vector<double> sine(double hz, double amp = 1.0, std::size_t n = kWindowSamples) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate);
    }
    return x;
}

std::vector<double> noise(Rng& rng, double sd, std::size_t n = kWindowSamples) {
    std::vector<double> x(n);
    for (double& v : x) {
        v = rng.normal(0.0, sd);
    }
    return x;
}

SensorWindow random_window(Rng& rng) {
    SensorWindow w;
    for (std::size_t c = 0; c < kChannels; ++c) {
        w.vibration[c] = noise(rng, 0.05 * static_cast<double>(c + 1));
        const auto tone = sine(rng.uniform(100.0, 5000.0), 0.3);
        for (std::size_t i = 0; i < kWindowSamples; ++i) {
            w.vibration[c][i] += tone[i];
        }
    }
    for (auto& s : w.forces) {
        for (double& v : s) {
            v = rng.normal(0.0, 3.0);
        }
    }
    return w;
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("layout constants", "[signals]") {
    CHECK(kPerChannel == 193);
    CHECK(kFullLength == 832);
    CHECK(stft(std::vector<double>(kWindowSamples, 0.0)).frames.size() == 8);
}

TEST_CASE("power spectrum", "[signals]") {
    SECTION("zero input") {
        const auto p = power_spectrum(std::vector<double>(kWindowSamples, 0.0));
        CHECK(p.size() == 4097);
        CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; }));
    }
    SECTION("1 kHz sine peaks at 1 kHz") {
        const auto x = sine(1000.0);
        const auto p = power_spectrum(x);
        const double width = kSampleRate / 8192.0;
        CHECK(std::abs(bin_frequency(argmax(p), 8192) - 1000.0) <= width);
        CHECK(argmax(oracle::naive_power(x, 8192)) == argmax(p));
    }
    SECTION("matches the naive DFT") {
        Rng rng(3);
        const auto x = noise(rng, 0.2, 1500);
        const auto p = power_spectrum(x, 2048);
        CHECK(oracle::rel_error(p, oracle::naive_power(x, 2048)) < 1e-10);
    }
    SECTION("Parseval with one-sided weighting") {
        Rng rng(4);
        for (std::size_t n : {2048UL, 8192UL}) {
            const auto x = noise(rng, 0.3, std::min<std::size_t>(n, kWindowSamples));
            const auto p = power_spectrum(x, n);
            double time = 0.0;
            for (const double v : x) {
                time += v * v;
            }
            double freq = p.front() + p.back();
            for (std::size_t k = 1; k + 1 < p.size(); ++k) {
                freq += 2.0 * p[k];
            }
            CHECK(freq / static_cast<double>(n) == Approx(time).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS(power_spectrum(std::vector<double>(10), 8), std::invalid_argument);
    CHECK_THROWS_AS(power_spectrum(std::vector<double>(4), 7), std::invalid_argument);
}

TEST_CASE("mel features", "[signals]") {
    SECTION("zero spectrum sits on the floor") {
        const auto m = mel_features(stft(std::vector<double>(kWindowSamples, 0.0)));
        for (const double v : m) {
            REQUIRE(v == Approx(std::log(kLogFloor)).epsilon(1e-14));
        }
    }
    SECTION("every filter covers at least one bin") {
        for (const auto& f : mel_filterbank()) {
            REQUIRE_FALSE(f.weights.empty());
        }
    }
    SECTION("1 kHz sine lands in the band centered nearest 1 kHz") {
        const auto m = mel_features(stft(sine(1000.0)));
        const auto& bank = mel_filterbank();
        std::size_t nearest = 0;
        for (std::size_t b = 0; b < bank.size(); ++b) {
            if (std::abs(bank[b].center_hz - 1000.0) < std::abs(bank[nearest].center_hz - 1000.0)) {
                nearest = b;
            }
        }
        CHECK(argmax(m) == nearest);
    }
    SECTION("white noise energy follows filter bandwidth") {
        Rng rng(21);
        std::vector<double> acc(kMelBands, 0.0);
        for (int w = 0; w < 100; ++w) {
            const auto spec = stft(noise(rng, 0.1));
            // Full frames only; the padded tail frame carries less energy.
            for (std::size_t f = 0; f + 1 < spec.frames.size(); ++f) {
                const auto p = mel_power(spec.frames[f]);
                for (std::size_t b = 0; b < kMelBands; ++b) {
                    acc[b] += p[b];
                }
            }
        }
        std::vector<double> ratio(kMelBands);
        for (std::size_t b = 0; b < kMelBands; ++b) {
            const auto& wts = mel_filterbank()[b].weights;
            double sum = 0.0;
            for (const double v : wts) {
                sum += v;
            }
            ratio[b] = acc[b] / sum;
        }
        double mean = 0.0;
        for (const double r : ratio) {
            mean += r / kMelBands;
        }
        for (const double r : ratio) {
            REQUIRE(r / mean == Approx(1.0).margin(0.2));
        }
    }
}

TEST_CASE("mfcc", "[signals]") {
    SECTION("constant input") {
        const std::vector<double> c(kMelBands, 2.5);
        const auto m = mfcc(c);
        CHECK(m[0] == Approx(2.5 * std::sqrt(128.0)).epsilon(1e-12));
        for (std::size_t k = 1; k < kMfcc; ++k) {
            REQUIRE(std::abs(m[k]) < 1e-12);
        }
    }
    SECTION("zero signal") {
        const auto f = channel_features(std::vector<double>(kWindowSamples, 0.0));
        CHECK(f.mfcc[0] == Approx(std::log(kLogFloor) * std::sqrt(128.0)).epsilon(1e-12));
        for (std::size_t k = 1; k < kMfcc; ++k) {
            REQUIRE(std::abs(f.mfcc[k]) < 1e-9);
        }
    }
    SECTION("random input matches the naive DCT") {
        Rng rng(1);
        for (int t = 0; t < 20; ++t) {
            std::vector<double> x(kMelBands);
            for (double& v : x) {
                v = rng.uniform(-20.0, 5.0);
            }
            const auto m = mfcc(x);
            const auto ref = oracle::naive_dct(x, kMfcc);
            for (std::size_t k = 0; k < kMfcc; ++k) {
                REQUIRE(m[k] == Approx(ref[k]).margin(1e-9));
            }
        }
    }
    CHECK_THROWS_AS(mfcc(std::vector<double>(12)), std::invalid_argument);
}

TEST_CASE("chroma", "[signals]") {
    CHECK(pitch_class(440.0) == 9);
    CHECK(pitch_class(261.63) == 0);
    CHECK(pitch_class(880.0) == 9);
    CHECK(pitch_class(27.5) == 9);
    CHECK(argmax(chroma(stft(sine(440.0)))) == 9);
    CHECK(argmax(chroma(stft(sine(880.0)))) == 9);
    CHECK(argmax(chroma(stft(sine(1318.5)))) == 4);
    const auto z = chroma(stft(std::vector<double>(kWindowSamples, 0.0)));
    CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));

    const auto c = chroma(stft(sine(523.25, 0.4)));
    double norm = 0.0;
    for (const double v : c) {
        norm += v * v;
    }
    CHECK(norm == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectral contrast", "[signals]") {
    SECTION("flat and zero spectra") {
        const std::vector<double> flat(kBins, 3.0);
        for (const double v : spectral_contrast(std::span<const double>(flat))) {
            REQUIRE(v == Approx(0.0).margin(1e-12));
        }
        const auto z = spectral_contrast(stft(std::vector<double>(kWindowSamples, 0.0)));
        for (const double v : z) {
            REQUIRE(v == 0.0);
        }
    }
    SECTION("tone raises the contrast of its band") {
        Rng rng(9);
        // Band 2 covers [800, 1600) Hz.
        const auto n1 = noise(rng, 0.05);
        auto tone = sine(1100.0, 0.5);
        for (std::size_t i = 0; i < tone.size(); ++i) {
            tone[i] += n1[i];
        }
        const auto with_tone = spectral_contrast(stft(tone));
        const auto only_noise = spectral_contrast(stft(noise(rng, 0.05)));
        CHECK(with_tone[2] > only_noise[2] + 1.0);
    }
}

TEST_CASE("tonnetz", "[signals]") {
    const std::vector<double> uniform(kChroma, 0.3);
    for (const double v : tonnetz(uniform)) {
        REQUIRE(v == Approx(0.0).margin(1e-12));
    }
    for (std::size_t k = 0; k < kChroma; ++k) {
        std::vector<double> one(kChroma, 0.0);
        one[k] = 0.7;
        const auto t = tonnetz(one);
        const double a5 = k * 7.0 * std::numbers::pi / 6.0;
        const double am3 = k * 3.0 * std::numbers::pi / 2.0;
        const double aM3 = k * 2.0 * std::numbers::pi / 3.0;
        const std::array<double, 6> expect{std::sin(a5),  std::cos(a5),        std::sin(am3),
                                           std::cos(am3), 0.5 * std::sin(aM3), 0.5 * std::cos(aM3)};
        for (std::size_t d = 0; d < kTonnetz; ++d) {
            REQUIRE(t[d] == Approx(expect[d]).margin(1e-12));
        }
    }
    Rng rng(2);
    std::vector<double> c(kChroma);
    for (double& v : c) {
        v = rng.uniform(0.0, 1.0);
    }
    auto scaled = c;
    for (double& v : scaled) {
        v *= 17.0;
    }
    const auto a = tonnetz(c);
    const auto b = tonnetz(scaled);
    for (std::size_t d = 0; d < kTonnetz; ++d) {
        CHECK(a[d] == Approx(b[d]).margin(1e-14));
    }
    const auto zero = tonnetz(std::vector<double>(kChroma, 0.0));
    CHECK(std::all_of(zero.begin(), zero.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("force features", "[signals]") {
    ForceBuffer b{};
    const auto z = force_features(b);
    CHECK(z.size() == 60);
    CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));
    b[3][Fz] = -4.0;
    const auto f = force_features(b);
    for (std::size_t i = 0; i < f.size(); ++i) {
        REQUIRE((f[i] != 0.0) == (i == 3 * 6 + 2));
    }
    Rng rng(5);
    for (auto& s : b) {
        for (double& v : s) {
            v = rng.normal();
        }
    }
    CHECK(unflatten_forces(force_features(b)) == b);
}

TEST_CASE("fused layout", "[signals]") {
    Rng rng(77);
    const SensorWindow w = random_window(rng);
    CHECK(fuse(w).values.size() == 832);
    CHECK(fuse(w, FeatureMask::families_only({Mfcc}, true)).values.size() == 220);
    CHECK(fuse(w, FeatureMask::single_channel(KnifeMic)).values.size() == 193);
    CHECK(fuse(w, FeatureMask::forces_only()).values.size() == 60);

    const auto full = fuse(w).values;
    CHECK(fuse(w).values == full);
    for (const std::string m : {"forces", "sound", "mic1", "mic2", "mic3", "mic4", "mfcc", "chroma", "mel",
                                "contrast", "tonnetz", "mfcc+forces", "chroma+mel+mic2+forces"}) {
        const FeatureMask mask = FeatureMask::parse(m);
        const auto direct = fuse(w, mask).values;
        REQUIRE(direct.size() == mask.length());
        REQUIRE(direct == select(full, mask));
    }
}

TEST_CASE("mask parsing and serialization", "[signals]") {
    CHECK(FeatureMask::parse("full") == FeatureMask::full());
    CHECK(FeatureMask::parse("forces") == FeatureMask::forces_only());
    CHECK(FeatureMask::parse("sound") == FeatureMask::sound_only());
    CHECK(FeatureMask::parse("mic3") == FeatureMask::single_channel(KnifeMic));
    CHECK(FeatureMask::parse("mfcc+forces") == FeatureMask::families_only({Mfcc}, true));
    CHECK_THROWS_AS(FeatureMask::parse("mfcc+bogus"), std::invalid_argument);
    for (const std::string m : {"full", "forces", "sound", "mic1", "mfcc+forces", "chroma+mel+mic2+forces", "tonnetz"}) {
        const FeatureMask mask = FeatureMask::parse(m);
        CHECK(FeatureMask::parse(mask.to_string()) == mask);
        CHECK(mask_from_json(to_json(mask)) == mask);
    }
    CHECK(FeatureMask{}.length() == 0);
}

TEST_CASE("amplitude robustness", "[signals]") {
    Rng rng(42);
    for (int t = 0; t < 5; ++t) {
        const auto x = noise(rng, 0.05);
        const double c = rng.uniform(0.2, 5.0);
        auto y = x;
        for (double& v : y) {
            v *= c;
        }
        const auto fx = channel_features(x);
        const auto fy = channel_features(y);
        CHECK(fy.mfcc[0] - fx.mfcc[0] == Approx(2.0 * std::log(c) * std::sqrt(128.0)).epsilon(1e-9));
        for (std::size_t k = 1; k < kMfcc; ++k) {
            REQUIRE(fy.mfcc[k] == Approx(fx.mfcc[k]).margin(1e-9));
        }
        for (std::size_t k = 0; k < kChroma; ++k) {
            REQUIRE(fy.chroma[k] == Approx(fx.chroma[k]).margin(1e-12));
        }
        for (std::size_t k = 0; k < kTonnetz; ++k) {
            REQUIRE(fy.tonnetz[k] == Approx(fx.tonnetz[k]).margin(1e-12));
        }
    }
}

TEST_CASE("features are finite for extreme input", "[signals]") {
    std::vector<double> spikes(kWindowSamples, 0.0);
    spikes[0] = 1.0;
    spikes[4000] = -1.0;
    std::vector<double> tiny(kWindowSamples, 1e-200);
    std::vector<double> clipped(kWindowSamples, 1.0);
    for (const auto* x : {&spikes, &tiny, &clipped}) {
        const auto f = channel_features(*x);
        for (const auto* block : {&f.mfcc, &f.chroma, &f.mel, &f.contrast, &f.tonnetz}) {
            for (const double v : *block) {
                REQUIRE(std::isfinite(v));
            }
        }
    }
}

TEST_CASE("pipeline matches naive oracles", "[signals][oracle]") {
    Rng rng(1234);
    for (int t = 0; t < 8; ++t) {
        const auto x = random_window(rng).vibration[static_cast<std::size_t>(t) % kChannels];
        const auto frames = oracle::naive_stft(x);
        const auto lm = oracle::log_mel(frames);
        const auto f = channel_features(x);
        REQUIRE(oracle::rel_error(f.mel, lm) < 1e-6);
        REQUIRE(oracle::rel_error(f.mfcc, oracle::naive_dct(lm, 40)) < 1e-6);
        REQUIRE(oracle::rel_error(f.chroma, oracle::chroma(frames)) < 1e-6);
    }
}

TEST_CASE("window validation", "[signals]") {
    SensorWindow w = SensorWindow::silent();
    CHECK_NOTHROW(w.validate());
    w.vibration[2].pop_back();
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = SensorWindow::silent();
    w.forces[0][0] = std::nan("");
    CHECK_THROWS_AS(fuse(w), std::invalid_argument);
}
