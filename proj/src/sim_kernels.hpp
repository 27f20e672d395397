#pragma once

// Stride-indexed kernels shared by the generic simulator and the fused
// ansatz engine. Internal header.

#include <complex>
#include <cstddef>
#include <span>

namespace poisonlab::kernels {

using Complex = std::complex<double>;

/// Row-major 2x2 complex matrix.
struct Mat2 {
  Complex a00, a01, a10, a11;

  Mat2 operator*(const Mat2& o) const {
    return {a00 * o.a00 + a01 * o.a10, a00 * o.a01 + a01 * o.a11,
            a10 * o.a00 + a11 * o.a10, a10 * o.a01 + a11 * o.a11};
  }
  Mat2 adjoint() const {
    return {std::conj(a00), std::conj(a10), std::conj(a01), std::conj(a11)};
  }
};

/// Calls f(i0, i1) for every index pair differing only in bit q.
template <typename F>
inline void for_each_pair(std::size_t dim, std::size_t q, F&& f) {
  const std::size_t stride = std::size_t{1} << q;
  for (std::size_t base = 0; base < dim; base += 2 * stride) {
    for (std::size_t off = 0; off < stride; ++off) {
      const std::size_t i0 = base + off;
      f(i0, i0 + stride);
    }
  }
}

inline void apply_1q(std::span<Complex> amps, std::size_t q, const Mat2& m) {
  for_each_pair(amps.size(), q, [&](std::size_t i0, std::size_t i1) {
    const Complex x0 = amps[i0];
    const Complex x1 = amps[i1];
    amps[i0] = m.a00 * x0 + m.a01 * x1;
    amps[i1] = m.a10 * x0 + m.a11 * x1;
  });
}

/// +1 when bits a and b of index agree, -1 otherwise.
inline double zz_sign(std::size_t index, std::size_t a, std::size_t b) {
  return (((index >> a) ^ (index >> b)) & 1U) ? -1.0 : 1.0;
}

Mat2 rx_matrix(double theta);
Mat2 ry_matrix(double theta);
Mat2 rz_matrix(double theta);

}  // namespace poisonlab::kernels
