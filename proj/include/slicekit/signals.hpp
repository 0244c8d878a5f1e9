#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace slicekit::signals {

inline constexpr double kSampleRate = 44100.0;
inline constexpr std::size_t kWindowSamples = 4410;
inline constexpr std::size_t kChannels = 4;
inline constexpr std::size_t kForceSamples = 10;
inline constexpr std::size_t kForceAxes = 6;

// STFT layout used for every spectral family.
inline constexpr std::size_t kFrameSize = 1024;
inline constexpr std::size_t kHopSize = 512;
inline constexpr std::size_t kFftSize = 2048;
inline constexpr std::size_t kBins = kFftSize / 2 + 1;

inline constexpr std::size_t kMfcc = 40;
inline constexpr std::size_t kChroma = 12;
inline constexpr std::size_t kMelBands = 128;
inline constexpr std::size_t kContrast = 7;
inline constexpr std::size_t kTonnetz = 6;
inline constexpr std::size_t kPerChannel = kMfcc + kChroma + kMelBands + kContrast + kTonnetz;
inline constexpr std::size_t kForceFeatures = kForceSamples * kForceAxes;
inline constexpr std::size_t kFullLength = kChannels * kPerChannel + kForceFeatures;

inline constexpr double kLogFloor = 1e-10;

enum Channel : std::size_t { BoardMic1 = 0, BoardMic2 = 1, KnifeMic = 2, TongMic = 3 };

/// Force axes in buffer order.
enum ForceAxis : std::size_t { Fx = 0, Fy = 1, Fz = 2, Roll = 3, Pitch = 4, Yaw = 5 };

const char* channel_name(std::size_t channel);

using ForceSample = std::array<double, kForceAxes>;
using ForceBuffer = std::array<ForceSample, kForceSamples>;

/// One 0.1 s snapshot: 4 x 4410 vibration samples and the last 10 force samples.
struct SensorWindow {
    std::array<std::vector<double>, kChannels> vibration;
    ForceBuffer forces{};

    static SensorWindow silent();
    void validate() const;
};

/// One-sided power spectrum |X_k|^2, k = 0 .. fft_size/2, of `samples`
/// zero-padded to `fft_size` (no window applied).
std::vector<double> power_spectrum(std::span<const double> samples, std::size_t fft_size);

/// Power spectrum of a whole window padded to the next power of two (8192).
std::vector<double> power_spectrum(std::span<const double> samples);

/// Hann-windowed frames of kFrameSize every kHopSize, zero-padded to kFftSize.
/// A 4410-sample window yields 8 frames; the last one is partially padded.
struct Spectrogram {
    std::vector<std::vector<double>> frames;  // each kBins power values
};

Spectrogram stft(std::span<const double> samples);

double bin_frequency(std::size_t bin, std::size_t fft_size = kFftSize);

/// HTK-mel triangular filters from 0 Hz to Nyquist (unnormalized, peak 1).
struct MelFilter {
    std::size_t first_bin = 0;
    std::vector<double> weights;  // consecutive bins starting at first_bin
    double center_hz = 0.0;
};
const std::vector<MelFilter>& mel_filterbank();

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Linear mel-band energies of one power-spectrum frame.
std::vector<double> mel_power(std::span<const double> frame);

/// Mean over frames of log(max(mel energy, floor)).
std::vector<double> mel_features(const Spectrogram& spec);

/// Orthonormal DCT-II of the 128 log-mel values, first 40 coefficients.
std::vector<double> mfcc(std::span<const double> log_mel);

/// Pitch-class energies (C = 0 ... B = 11, A4 = 440 Hz) of the frame-mean
/// power spectrum, L2-normalized; all zeros when the spectrum is empty.
std::vector<double> chroma(const Spectrogram& spec);
std::vector<double> chroma(std::span<const double> frame);

int pitch_class(double hz);

/// Six octave bands [200 * 2^i, 200 * 2^(i+1)) Hz and one whole-spectrum
/// aggregate: log peak - log valley of the top/bottom 2% of in-band bins,
/// averaged over frames.
std::vector<double> spectral_contrast(const Spectrogram& spec);
std::vector<double> spectral_contrast(std::span<const double> frame);

/// Tonal centroid of L1-normalized chroma: fifths, minor thirds, major thirds
/// as (sin, cos) pairs with radii 1, 1, 0.5.
std::vector<double> tonnetz(std::span<const double> chroma12);

/// Basis value of dimension d (0..5) for pitch class k.
double tonnetz_basis(std::size_t d, std::size_t k);

/// Time-major flattening [t0 axes..., t9 axes...].
std::vector<double> force_features(const ForceBuffer& forces);
ForceBuffer unflatten_forces(std::span<const double> flat);

enum Family : std::size_t { Mfcc = 0, Chroma = 1, Mel = 2, Contrast = 3, Tonnetz = 4 };
inline constexpr std::size_t kFamilies = 5;

std::size_t family_size(Family f);
const char* family_name(Family f);

/// Which feature families, microphones and force block are active.
/// Active entries keep their full-layout order.
struct FeatureMask {
    std::bitset<kFamilies> families;
    std::bitset<kChannels> channels;
    bool forces = false;

    static FeatureMask full();
    static FeatureMask forces_only();
    static FeatureMask sound_only();
    static FeatureMask single_channel(std::size_t channel);
    static FeatureMask families_only(std::initializer_list<Family> fams, bool with_forces);

    /// Parses "full", "forces", "sound", "mic1".."mic4", or a '+'-joined list of
    /// family names (mfcc, chroma, mel, contrast, tonnetz) and "forces".
    static FeatureMask parse(const std::string& text);
    std::string to_string() const;

    std::size_t length() const;
    /// Positions of the active features inside the full 832 layout.
    std::vector<std::size_t> indices() const;

    bool operator==(const FeatureMask&) const = default;
};

nlohmann::json to_json(const FeatureMask& mask);
FeatureMask mask_from_json(const nlohmann::json& j);

struct ChannelFeatures {
    std::vector<double> mfcc;
    std::vector<double> chroma;
    std::vector<double> mel;
    std::vector<double> contrast;
    std::vector<double> tonnetz;
};

ChannelFeatures channel_features(std::span<const double> samples);

struct FeatureVector {
    std::vector<double> values;
    FeatureMask mask;
};

FeatureVector fuse(const SensorWindow& window, const FeatureMask& mask = FeatureMask::full());

/// Picks the masked entries out of a full-layout vector.
std::vector<double> select(std::span<const double> full, const FeatureMask& mask);

/// Vibration RMS of one channel.
double rms(std::span<const double> samples);

}  // namespace slicekit::signals
