#include "misfit/fourier.hpp"

#include <algorithm>
#include <cmath>

#include "misfit/errors.hpp"
#include "misfit/kernels.hpp"

namespace misfit {

namespace {

// Rows first, then columns, both in separate buffers.
ComplexGrid transform(const double* re, const double* im, std::size_t h, std::size_t w, bool inverse) {
    ComplexGrid tmp(h, w);
    kernels::dft_lines(re, im, tmp.re.data(), tmp.im.data(), h, w, w, 1, inverse);
    ComplexGrid out(h, w);
    kernels::dft_lines(tmp.re.data(), tmp.im.data(), out.re.data(), out.im.data(), w, h, 1, w, inverse);
    return out;
}

}  // namespace

ComplexGrid dft2(const Tensor& channel) {
    if (channel.rank() != 2) throw InvalidInput("dft2: expected a rank-2 grid, got " + shape_string(channel.shape()));
    const std::size_t h = channel.dim(0), w = channel.dim(1);
    if (h == 0 || w == 0) throw InvalidInput("dft2: empty grid");
    return transform(channel.raw(), nullptr, h, w, false);
}

ComplexGrid idft2_complex(const ComplexGrid& spectrum) {
    if (!spectrum.well_formed()) throw InvalidInput("idft2: malformed spectrum");
    if (spectrum.height == 0 || spectrum.width == 0) throw InvalidInput("idft2: empty spectrum");
    ComplexGrid out = transform(spectrum.re.data(), spectrum.im.data(), spectrum.height, spectrum.width, true);
    const double scale = 1.0 / static_cast<double>(spectrum.height * spectrum.width);
    for (auto& v : out.re) v *= scale;
    for (auto& v : out.im) v *= scale;
    return out;
}

double max_abs_imag(const ComplexGrid& grid) {
    double m = 0.0;
    for (double v : grid.im) m = std::max(m, std::abs(v));
    return m;
}

Tensor idft2(const ComplexGrid& spectrum) {
    ComplexGrid out = idft2_complex(spectrum);
    const double residue = max_abs_imag(out);
    if (residue > kRealResidueTolerance) {
        throw NumericError("idft2: imaginary residue " + std::to_string(residue) +
                           " exceeds tolerance for a spectrum of real origin");
    }
    return Tensor({out.height, out.width}, std::move(out.re));
}

}  // namespace misfit
