#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace tdae::metrics::detail {

using Complex = std::complex<double>;

/// In-place 2-D DFT of a row-major rows x cols array. `inverse` applies the 1/(rows*cols) scale.
void fft2(std::vector<Complex>& data, std::size_t rows, std::size_t cols, bool inverse);

}  // namespace tdae::metrics::detail
