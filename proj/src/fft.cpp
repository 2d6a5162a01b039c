#include "ecg/fft.hpp"

#include <cstdint>
#include <numbers>

#include "ecg/errors.hpp"

namespace ecg {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey. sign = -1 forward, +1 inverse.
void radix2(ComplexVector& x, int sign) {
  const Eigen::Index n = x.size();
  if (n <= 1) return;
  for (Eigen::Index i = 1, j = 0; i < n; ++i) {
    Eigen::Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (Eigen::Index len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    for (Eigen::Index i = 0; i < n; i += len) {
      for (Eigen::Index j = 0; j < len / 2; ++j) {
        const std::complex<double> w =
            std::polar(1.0, ang * static_cast<double>(j));
        const std::complex<double> u = x[i + j];
        const std::complex<double> v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
      }
    }
  }
}

// Chirp of index k for length n: exp(sign * i * pi * k^2 / n). k^2 is reduced
// mod 2n in exact integer arithmetic so the angle stays small and precise.
std::complex<double> chirp(std::int64_t k, std::int64_t n, int sign) {
  const std::int64_t r = (k * k) % (2 * n);
  return std::polar(1.0, sign * kPi * static_cast<double>(r) /
                             static_cast<double>(n));
}

// Bluestein's algorithm: DFT of arbitrary length via one power-of-two
// convolution.
ComplexVector bluestein(const ComplexVector& x, int sign) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = next_pow2(2 * n - 1);

  ComplexVector a = ComplexVector::Zero(m);
  ComplexVector b = ComplexVector::Zero(m);
  for (Eigen::Index j = 0; j < n; ++j) {
    a[j] = x[j] * chirp(j, n, sign);
    const std::complex<double> c = chirp(j, n, -sign);
    b[j] = c;
    if (j > 0) b[m - j] = c;
  }

  radix2(a, -1);
  radix2(b, -1);
  a.array() *= b.array();
  radix2(a, +1);
  a /= static_cast<double>(m);

  ComplexVector out(n);
  for (Eigen::Index k = 0; k < n; ++k) out[k] = a[k] * chirp(k, n, sign);
  return out;
}

ComplexVector transform(const ComplexVector& x, int sign) {
  if (x.size() == 0) throw EmptySignal("cannot transform an empty sequence");
  if (is_pow2(x.size())) {
    ComplexVector y = x;
    radix2(y, sign);
    return y;
  }
  return bluestein(x, sign);
}

}  // namespace

ComplexVector fft(const ComplexVector& x) { return transform(x, -1); }

ComplexVector ifft(const ComplexVector& x) {
  ComplexVector y = transform(x, +1);
  y /= static_cast<double>(x.size());
  return y;
}

}  // namespace ecg
