#pragma once

#include <cstddef>
#include <vector>

#include "misfit/tensor.hpp"

namespace misfit {

/// H×W complex grid stored as two row-major real planes.
struct ComplexGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> re;
    std::vector<double> im;

    ComplexGrid() = default;
    ComplexGrid(std::size_t h, std::size_t w) : height(h), width(w), re(h * w, 0.0), im(h * w, 0.0) {}

    std::size_t size() const noexcept { return re.size(); }
    bool well_formed() const noexcept {
        return re.size() == height * width && im.size() == re.size();
    }
};

/// Unnormalized forward 2-D DFT of a real H×W grid (rank-2 tensor).
ComplexGrid dft2(const Tensor& channel);

/// Complex inverse with 1/(H·W) normalization.
ComplexGrid idft2_complex(const ComplexGrid& spectrum);

/// Largest imaginary part tolerated by idft2 for spectra of real origin.
inline constexpr double kRealResidueTolerance = 1e-6;

/// Inverse transform of a spectrum of real origin. Throws NumericError when the
/// imaginary residue exceeds kRealResidueTolerance.
Tensor idft2(const ComplexGrid& spectrum);

double max_abs_imag(const ComplexGrid& grid);

}  // namespace misfit
