#pragma once

#include <Eigen/Dense>
#include <complex>

namespace ecg {

using ComplexVector = Eigen::VectorXcd;

/// Unnormalized forward DFT, any length. Radix-2 for powers of two,
/// Bluestein's chirp-z otherwise.
ComplexVector fft(const ComplexVector& x);

/// Inverse DFT, scaled by 1/n so that ifft(fft(x)) == x.
ComplexVector ifft(const ComplexVector& x);

}  // namespace ecg
