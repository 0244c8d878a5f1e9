#include "slicekit/signals.hpp"

#include "fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace slicekit::signals {

namespace {

constexpr double kPi = std::numbers::pi;

const std::vector<double>& hann_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kFrameSize);
        for (std::size_t n = 0; n < kFrameSize; ++n) {
            v[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(kFrameSize));
        }
        return v;
    }();
    return w;
}

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

std::vector<double> mean_frame(const Spectrogram& spec) {
    std::vector<double> mean(kBins, 0.0);
    if (spec.frames.empty()) {
        return mean;
    }
    for (const auto& f : spec.frames) {
        for (std::size_t k = 0; k < kBins; ++k) {
            mean[k] += f[k];
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(spec.frames.size());
    }
    return mean;
}

void check_frame(std::span<const double> frame) {
    if (frame.size() != kBins) {
        throw std::invalid_argument("spectrum frame must have " + std::to_string(kBins) + " bins");
    }
}

double band_contrast(std::vector<double>& values) {
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const std::size_t q = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.02 * static_cast<double>(n))));
    double valley = 0.0;
    double peak = 0.0;
    for (std::size_t i = 0; i < q; ++i) {
        valley += values[i];
        peak += values[n - 1 - i];
    }
    return safe_log(peak / static_cast<double>(q)) - safe_log(valley / static_cast<double>(q));
}

constexpr std::array<std::size_t, kFamilies> kFamilyOffsets{0, kMfcc, kMfcc + kChroma, kMfcc + kChroma + kMelBands,
                                                            kMfcc + kChroma + kMelBands + kContrast};

}  // namespace

const char* channel_name(std::size_t channel) {
    static constexpr std::array<const char*, kChannels> names{"board-mic-1", "board-mic-2", "knife-mic", "tong-mic"};
    if (channel >= kChannels) {
        throw std::invalid_argument("channel index out of range");
    }
    return names[channel];
}

SensorWindow SensorWindow::silent() {
    SensorWindow w;
    for (auto& ch : w.vibration) {
        ch.assign(kWindowSamples, 0.0);
    }
    return w;
}

void SensorWindow::validate() const {
    for (std::size_t c = 0; c < kChannels; ++c) {
        if (vibration[c].size() != kWindowSamples) {
            throw std::invalid_argument(std::string("SensorWindow: channel ") + channel_name(c) + " has " +
                                        std::to_string(vibration[c].size()) + " samples, expected 4410");
        }
        for (const double v : vibration[c]) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("SensorWindow: non-finite vibration sample");
            }
        }
    }
    for (const auto& s : forces) {
        for (const double v : s) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("SensorWindow: non-finite force sample");
            }
        }
    }
}

std::vector<double> power_spectrum(std::span<const double> samples, std::size_t fft_size) {
    if (fft_size < 2 || fft_size % 2 != 0) {
        throw std::invalid_argument("power_spectrum: fft size must be even and at least 2");
    }
    if (samples.size() > fft_size) {
        throw std::invalid_argument("power_spectrum: more samples than the fft size");
    }
    std::vector<double> out(fft_size / 2 + 1);
    detail::power_spectrum_into(samples, fft_size, out);
    return out;
}

std::vector<double> power_spectrum(std::span<const double> samples) {
    std::size_t n = 2;
    while (n < samples.size()) {
        n *= 2;
    }
    return power_spectrum(samples, n);
}

Spectrogram stft(std::span<const double> samples) {
    Spectrogram spec;
    if (samples.empty()) {
        return spec;
    }
    const auto& window = hann_window();
    std::size_t frames = 1;
    if (samples.size() > kFrameSize) {
        frames += (samples.size() - kFrameSize + kHopSize - 1) / kHopSize;
    }
    std::vector<double> buf(kFrameSize);
    spec.frames.assign(frames, std::vector<double>(kBins));
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t start = f * kHopSize;
        for (std::size_t n = 0; n < kFrameSize; ++n) {
            const std::size_t i = start + n;
            buf[n] = i < samples.size() ? samples[i] * window[n] : 0.0;
        }
        detail::power_spectrum_into(buf, kFftSize, spec.frames[f]);
    }
    return spec;
}

double bin_frequency(std::size_t bin, std::size_t fft_size) {
    return static_cast<double>(bin) * kSampleRate / static_cast<double>(fft_size);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

const std::vector<MelFilter>& mel_filterbank() {
    static const std::vector<MelFilter> bank = [] {
        std::vector<MelFilter> filters(kMelBands);
        const double top = hz_to_mel(kSampleRate / 2.0);
        std::vector<double> edges(kMelBands + 2);
        for (std::size_t i = 0; i < edges.size(); ++i) {
            edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(kMelBands + 1));
        }
        for (std::size_t b = 0; b < kMelBands; ++b) {
            const double lo = edges[b];
            const double mid = edges[b + 1];
            const double hi = edges[b + 2];
            MelFilter& f = filters[b];
            f.center_hz = mid;
            bool started = false;
            for (std::size_t k = 0; k < kBins; ++k) {
                const double hz = bin_frequency(k);
                double w = 0.0;
                if (hz > lo && hz <= mid) {
                    w = (hz - lo) / (mid - lo);
                } else if (hz > mid && hz < hi) {
                    w = (hi - hz) / (hi - mid);
                }
                if (w > 0.0) {
                    if (!started) {
                        f.first_bin = k;
                        started = true;
                    }
                    f.weights.resize(k - f.first_bin + 1, 0.0);
                    f.weights.back() = w;
                }
            }
        }
        return filters;
    }();
    return bank;
}

std::vector<double> mel_power(std::span<const double> frame) {
    check_frame(frame);
    const auto& bank = mel_filterbank();
    std::vector<double> out(kMelBands, 0.0);
    for (std::size_t b = 0; b < kMelBands; ++b) {
        const MelFilter& f = bank[b];
        double acc = 0.0;
        for (std::size_t i = 0; i < f.weights.size(); ++i) {
            acc += f.weights[i] * frame[f.first_bin + i];
        }
        out[b] = acc;
    }
    return out;
}

std::vector<double> mel_features(const Spectrogram& spec) {
    std::vector<double> out(kMelBands, 0.0);
    if (spec.frames.empty()) {
        std::fill(out.begin(), out.end(), safe_log(0.0));
        return out;
    }
    for (const auto& frame : spec.frames) {
        const std::vector<double> p = mel_power(frame);
        for (std::size_t b = 0; b < kMelBands; ++b) {
            out[b] += safe_log(p[b]);
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(spec.frames.size());
    }
    return out;
}

std::vector<double> mfcc(std::span<const double> log_mel) {
    if (log_mel.size() != kMelBands) {
        throw std::invalid_argument("mfcc: expected 128 log-mel values");
    }
    std::vector<double> full(kMelBands);
    detail::dct2_unnormalized(log_mel, full);
    const double n = static_cast<double>(kMelBands);
    std::vector<double> out(kMfcc);
    out[0] = full[0] * 0.5 * std::sqrt(1.0 / n);
    for (std::size_t k = 1; k < kMfcc; ++k) {
        out[k] = full[k] * 0.5 * std::sqrt(2.0 / n);
    }
    return out;
}

int pitch_class(double hz) {
    if (!(hz > 0.0)) {
        throw std::invalid_argument("pitch_class: frequency must be positive");
    }
    const long midi = std::lround(12.0 * std::log2(hz / 440.0) + 69.0);
    return static_cast<int>(((midi % 12) + 12) % 12);
}

std::vector<double> chroma(std::span<const double> frame) {
    check_frame(frame);
    std::vector<double> out(kChroma, 0.0);
    for (std::size_t k = 1; k < kBins; ++k) {
        out[static_cast<std::size_t>(pitch_class(bin_frequency(k)))] += frame[k];
    }
    double norm = 0.0;
    for (const double v : out) {
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-300 || !std::isfinite(norm)) {
        std::fill(out.begin(), out.end(), 0.0);
        return out;
    }
    for (double& v : out) {
        v /= norm;
    }
    return out;
}

std::vector<double> chroma(const Spectrogram& spec) { return chroma(mean_frame(spec)); }

std::vector<double> spectral_contrast(std::span<const double> frame) {
    check_frame(frame);
    std::vector<double> out(kContrast, 0.0);
    std::vector<double> band;
    for (std::size_t i = 0; i + 1 < kContrast; ++i) {
        const double lo = 200.0 * std::pow(2.0, static_cast<double>(i));
        const double hi = 2.0 * lo;
        band.clear();
        for (std::size_t k = 1; k < kBins; ++k) {
            const double hz = bin_frequency(k);
            if (hz >= lo && hz < hi) {
                band.push_back(frame[k]);
            }
        }
        out[i] = band_contrast(band);
    }
    band.assign(frame.begin() + 1, frame.end());
    out[kContrast - 1] = band_contrast(band);
    return out;
}

std::vector<double> spectral_contrast(const Spectrogram& spec) {
    std::vector<double> out(kContrast, 0.0);
    if (spec.frames.empty()) {
        return out;
    }
    for (const auto& frame : spec.frames) {
        const auto c = spectral_contrast(std::span<const double>(frame));
        for (std::size_t i = 0; i < kContrast; ++i) {
            out[i] += c[i];
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(spec.frames.size());
    }
    return out;
}

double tonnetz_basis(std::size_t d, std::size_t k) {
    static constexpr std::array<double, 3> angle{7.0 * kPi / 6.0, 3.0 * kPi / 2.0, 2.0 * kPi / 3.0};
    static constexpr std::array<double, 3> radius{1.0, 1.0, 0.5};
    if (d >= kTonnetz || k >= kChroma) {
        throw std::invalid_argument("tonnetz_basis: index out of range");
    }
    const double a = static_cast<double>(k) * angle[d / 2];
    return radius[d / 2] * (d % 2 == 0 ? std::sin(a) : std::cos(a));
}

std::vector<double> tonnetz(std::span<const double> chroma12) {
    if (chroma12.size() != kChroma) {
        throw std::invalid_argument("tonnetz: expected 12 chroma values");
    }
    std::vector<double> out(kTonnetz, 0.0);
    double l1 = 0.0;
    for (const double v : chroma12) {
        l1 += std::abs(v);
    }
    if (l1 < 1e-300) {
        return out;
    }
    for (std::size_t d = 0; d < kTonnetz; ++d) {
        double acc = 0.0;
        for (std::size_t k = 0; k < kChroma; ++k) {
            acc += tonnetz_basis(d, k) * chroma12[k] / l1;
        }
        out[d] = acc;
    }
    return out;
}

std::vector<double> force_features(const ForceBuffer& forces) {
    std::vector<double> out;
    out.reserve(kForceFeatures);
    for (const auto& sample : forces) {
        out.insert(out.end(), sample.begin(), sample.end());
    }
    return out;
}

ForceBuffer unflatten_forces(std::span<const double> flat) {
    if (flat.size() != kForceFeatures) {
        throw std::invalid_argument("unflatten_forces: expected 60 values");
    }
    ForceBuffer b{};
    for (std::size_t t = 0; t < kForceSamples; ++t) {
        for (std::size_t a = 0; a < kForceAxes; ++a) {
            b[t][a] = flat[t * kForceAxes + a];
        }
    }
    return b;
}

std::size_t family_size(Family f) {
    static constexpr std::array<std::size_t, kFamilies> sizes{kMfcc, kChroma, kMelBands, kContrast, kTonnetz};
    return sizes.at(f);
}

const char* family_name(Family f) {
    static constexpr std::array<const char*, kFamilies> names{"mfcc", "chroma", "mel", "contrast", "tonnetz"};
    return names.at(f);
}

FeatureMask FeatureMask::full() {
    FeatureMask m;
    m.families.set();
    m.channels.set();
    m.forces = true;
    return m;
}

FeatureMask FeatureMask::forces_only() {
    FeatureMask m;
    m.channels.set();
    m.forces = true;
    return m;
}

FeatureMask FeatureMask::sound_only() {
    FeatureMask m = full();
    m.forces = false;
    return m;
}

FeatureMask FeatureMask::single_channel(std::size_t channel) {
    if (channel >= kChannels) {
        throw std::invalid_argument("single_channel: channel out of range");
    }
    FeatureMask m;
    m.families.set();
    m.channels.set(channel);
    return m;
}

FeatureMask FeatureMask::families_only(std::initializer_list<Family> fams, bool with_forces) {
    FeatureMask m;
    m.channels.set();
    for (const Family f : fams) {
        m.families.set(f);
    }
    m.forces = with_forces;
    return m;
}

FeatureMask FeatureMask::parse(const std::string& text) {
    if (text == "full" || text == "combined") {
        return full();
    }
    FeatureMask m;
    bool any_family = false;
    bool any_mic = false;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, '+')) {
        if (token == "forces") {
            m.forces = true;
            continue;
        }
        if (token == "sound") {
            m.families.set();
            any_family = true;
            continue;
        }
        if (token.size() == 4 && token.starts_with("mic") && token[3] >= '1' && token[3] <= '4') {
            m.channels.set(static_cast<std::size_t>(token[3] - '1'));
            any_mic = true;
            continue;
        }
        bool matched = false;
        for (std::size_t f = 0; f < kFamilies; ++f) {
            if (token == family_name(static_cast<Family>(f))) {
                m.families.set(f);
                any_family = matched = true;
            }
        }
        if (!matched) {
            throw std::invalid_argument("unknown feature mask token '" + token + "'");
        }
    }
    if (any_mic && !any_family) {
        m.families.set();
    }
    if (!any_mic) {
        m.channels.set();
    }
    return m;
}

std::string FeatureMask::to_string() const {
    if (*this == full()) {
        return "full";
    }
    std::vector<std::string> parts;
    if (families.all()) {
        if (!channels.all() && channels.any()) {
            // "micN" alone already implies every family.
        } else {
            parts.emplace_back("sound");
        }
    } else {
        for (std::size_t f = 0; f < kFamilies; ++f) {
            if (families.test(f)) {
                parts.emplace_back(family_name(static_cast<Family>(f)));
            }
        }
    }
    if (families.any() && !channels.all()) {
        for (std::size_t c = 0; c < kChannels; ++c) {
            if (channels.test(c)) {
                parts.push_back("mic" + std::to_string(c + 1));
            }
        }
    }
    if (forces) {
        parts.emplace_back("forces");
    }
    std::string out;
    for (const auto& p : parts) {
        out += (out.empty() ? "" : "+") + p;
    }
    return out.empty() ? "empty" : out;
}

std::size_t FeatureMask::length() const {
    std::size_t per_channel = 0;
    for (std::size_t f = 0; f < kFamilies; ++f) {
        if (families.test(f)) {
            per_channel += family_size(static_cast<Family>(f));
        }
    }
    return per_channel * channels.count() + (forces ? kForceFeatures : 0);
}

std::vector<std::size_t> FeatureMask::indices() const {
    std::vector<std::size_t> idx;
    idx.reserve(length());
    for (std::size_t c = 0; c < kChannels; ++c) {
        if (!channels.test(c)) {
            continue;
        }
        for (std::size_t f = 0; f < kFamilies; ++f) {
            if (!families.test(f)) {
                continue;
            }
            const std::size_t base = c * kPerChannel + kFamilyOffsets[f];
            for (std::size_t i = 0; i < family_size(static_cast<Family>(f)); ++i) {
                idx.push_back(base + i);
            }
        }
    }
    if (forces) {
        for (std::size_t i = 0; i < kForceFeatures; ++i) {
            idx.push_back(kChannels * kPerChannel + i);
        }
    }
    return idx;
}

nlohmann::json to_json(const FeatureMask& mask) {
    nlohmann::json fams = nlohmann::json::array();
    for (std::size_t f = 0; f < kFamilies; ++f) {
        if (mask.families.test(f)) {
            fams.push_back(family_name(static_cast<Family>(f)));
        }
    }
    nlohmann::json chans = nlohmann::json::array();
    for (std::size_t c = 0; c < kChannels; ++c) {
        if (mask.channels.test(c)) {
            chans.push_back(c);
        }
    }
    return {{"families", fams}, {"channels", chans}, {"forces", mask.forces}};
}

FeatureMask mask_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        return FeatureMask::parse(j.get<std::string>());
    }
    FeatureMask m;
    for (const auto& name : j.at("families")) {
        bool matched = false;
        for (std::size_t f = 0; f < kFamilies; ++f) {
            if (name.get<std::string>() == family_name(static_cast<Family>(f))) {
                m.families.set(f);
                matched = true;
            }
        }
        if (!matched) {
            throw std::invalid_argument("unknown feature family " + name.dump());
        }
    }
    for (const auto& c : j.at("channels")) {
        const auto idx = c.get<std::size_t>();
        if (idx >= kChannels) {
            throw std::invalid_argument("mask channel out of range");
        }
        m.channels.set(idx);
    }
    m.forces = j.at("forces").get<bool>();
    return m;
}

ChannelFeatures channel_features(std::span<const double> samples) {
    const Spectrogram spec = stft(samples);
    ChannelFeatures f;
    f.mel = mel_features(spec);
    f.mfcc = mfcc(f.mel);
    f.chroma = chroma(spec);
    f.contrast = spectral_contrast(spec);
    f.tonnetz = tonnetz(f.chroma);
    return f;
}

FeatureVector fuse(const SensorWindow& window, const FeatureMask& mask) {
    window.validate();
    FeatureVector out;
    out.mask = mask;
    out.values.reserve(mask.length());
    if (mask.families.any()) {
        for (std::size_t c = 0; c < kChannels; ++c) {
            if (!mask.channels.test(c)) {
                continue;
            }
            const ChannelFeatures f = channel_features(window.vibration[c]);
            const std::array<const std::vector<double>*, kFamilies> blocks{&f.mfcc, &f.chroma, &f.mel, &f.contrast,
                                                                            &f.tonnetz};
            for (std::size_t fam = 0; fam < kFamilies; ++fam) {
                if (mask.families.test(fam)) {
                    out.values.insert(out.values.end(), blocks[fam]->begin(), blocks[fam]->end());
                }
            }
        }
    }
    if (mask.forces) {
        const auto ff = force_features(window.forces);
        out.values.insert(out.values.end(), ff.begin(), ff.end());
    }
    return out;
}

std::vector<double> select(std::span<const double> full, const FeatureMask& mask) {
    if (full.size() != kFullLength) {
        throw std::invalid_argument("select: expected a full 832-value feature vector");
    }
    std::vector<double> out;
    const auto idx = mask.indices();
    out.reserve(idx.size());
    for (const std::size_t i : idx) {
        out.push_back(full[i]);
    }
    return out;
}

double rms(std::span<const double> samples) {
    if (samples.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (const double v : samples) {
        acc += v * v;
    }
    return std::sqrt(acc / static_cast<double>(samples.size()));
}

}  // namespace slicekit::signals
