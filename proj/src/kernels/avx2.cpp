#include "critq/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define CRITQ_HAVE_AVX2 1
#endif

namespace critq::kernels::avx2 {

#ifdef CRITQ_HAVE_AVX2

namespace {

// Two complex values packed as [re0, im0, re1, im1].
inline __m256d load2(const cplx* p) { return _mm256_loadu_pd(reinterpret_cast<const double*>(p)); }
inline void store2(cplx* p, __m256d v) { _mm256_storeu_pd(reinterpret_cast<double*>(p), v); }

// [d0, d0, d1, d1]
inline __m256d dup2(const double* d) {
  const __m256d v = _mm256_castpd128_pd256(_mm_loadu_pd(d));
  return _mm256_permute4x64_pd(v, _MM_SHUFFLE(1, 1, 0, 0));
}

inline cplx row(const BandView& h, const cplx* x, std::size_t i) {
  const std::size_t n = h.dim;
  cplx acc = h.d0[i] * x[i];
  if (i + 2 < n) acc += h.d2[i] * x[i + 2];
  if (i >= 2) acc += h.d2[i - 2] * x[i - 2];
  if (i + 4 < n) acc += h.d4[i] * x[i + 4];
  if (i >= 4) acc += h.d4[i - 4] * x[i - 4];
  return acc;
}

void band_matvec(const BandView& h, const cplx* x, cplx* y) {
  const std::size_t n = h.dim;
  std::size_t i = 0;
  for (; i < 4 && i < n; ++i) y[i] = row(h, x, i);
  for (; i + 5 < n; i += 2) {
    __m256d acc = _mm256_mul_pd(dup2(h.d0 + i), load2(x + i));
    acc = _mm256_fmadd_pd(dup2(h.d2 + i), load2(x + i + 2), acc);
    acc = _mm256_fmadd_pd(dup2(h.d2 + i - 2), load2(x + i - 2), acc);
    acc = _mm256_fmadd_pd(dup2(h.d4 + i), load2(x + i + 4), acc);
    acc = _mm256_fmadd_pd(dup2(h.d4 + i - 4), load2(x + i - 4), acc);
    store2(y + i, acc);
  }
  for (; i < n; ++i) y[i] = row(h, x, i);
}

void axpy(cplx a, const cplx* x, cplx* y, std::size_t n) {
  const __m256d ar = _mm256_set1_pd(a.real());
  const __m256d ai = _mm256_set_pd(a.imag(), -a.imag(), a.imag(), -a.imag());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = load2(x + i);
    const __m256d xs = _mm256_permute_pd(xv, 0b0101);
    __m256d yv = load2(y + i);
    yv = _mm256_fmadd_pd(ar, xv, yv);
    yv = _mm256_fmadd_pd(ai, xs, yv);
    store2(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

cplx dot(const cplx* x, const cplx* y, std::size_t n) {
  __m256d re = _mm256_setzero_pd();
  __m256d im = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = load2(x + i);
    const __m256d yv = load2(y + i);
    re = _mm256_fmadd_pd(xv, yv, re);
    im = _mm256_fmadd_pd(xv, _mm256_permute_pd(yv, 0b0101), im);
  }
  alignas(32) double r[4], m[4];
  _mm256_store_pd(r, re);
  _mm256_store_pd(m, im);
  double sre = (r[0] + r[1]) + (r[2] + r[3]);
  double sim = (m[0] - m[1]) + (m[2] - m[3]);
  for (; i < n; ++i) {
    sre += x[i].real() * y[i].real() + x[i].imag() * y[i].imag();
    sim += x[i].real() * y[i].imag() - x[i].imag() * y[i].real();
  }
  return {sre, sim};
}

double norm_sq(const cplx* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = load2(x + i);
    acc = _mm256_fmadd_pd(xv, xv, acc);
  }
  alignas(32) double r[4];
  _mm256_store_pd(r, acc);
  double s = (r[0] + r[1]) + (r[2] + r[3]);
  for (; i < n; ++i) s += std::norm(x[i]);
  return s;
}

void scale(double a, cplx* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) store2(x + i, _mm256_mul_pd(av, load2(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

}  // namespace

const KernelTable table{band_matvec, axpy, dot, norm_sq, scale};
bool compiled() { return true; }

#else

const KernelTable table{nullptr, nullptr, nullptr, nullptr, nullptr};
bool compiled() { return false; }

#endif

}  // namespace critq::kernels::avx2
