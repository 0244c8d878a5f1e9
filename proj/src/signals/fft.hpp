#pragma once

#include <cstddef>
#include <span>

namespace slicekit::signals::detail {

/// |X_k|^2 for k = 0 .. fft_size/2 of samples zero-padded to fft_size.
void power_spectrum_into(std::span<const double> samples, std::size_t fft_size, std::span<double> out);

/// FFTW REDFT10: out_k = 2 * sum_n in_n cos(pi k (2n + 1) / (2N)).
void dct2_unnormalized(std::span<const double> in, std::span<double> out);

}  // namespace slicekit::signals::detail
