#include "critq/kernels.hpp"

namespace critq::kernels::scalar {

namespace {

void band_matvec(const BandView& h, const cplx* x, cplx* y) {
  const std::size_t n = h.dim;
  for (std::size_t i = 0; i < n; ++i) {
    cplx acc = h.d0[i] * x[i];
    if (i + 2 < n) acc += h.d2[i] * x[i + 2];
    if (i >= 2) acc += h.d2[i - 2] * x[i - 2];
    if (i + 4 < n) acc += h.d4[i] * x[i + 4];
    if (i >= 4) acc += h.d4[i - 4] * x[i - 4];
    y[i] = acc;
  }
}

void axpy(cplx a, const cplx* x, cplx* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

cplx dot(const cplx* x, const cplx* y, std::size_t n) {
  double re = 0, im = 0;
  for (std::size_t i = 0; i < n; ++i) {
    re += x[i].real() * y[i].real() + x[i].imag() * y[i].imag();
    im += x[i].real() * y[i].imag() - x[i].imag() * y[i].real();
  }
  return {re, im};
}

double norm_sq(const cplx* x, std::size_t n) {
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::norm(x[i]);
  return acc;
}

void scale(double a, cplx* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace

const KernelTable table{band_matvec, axpy, dot, norm_sq, scale};

}  // namespace critq::kernels::scalar
