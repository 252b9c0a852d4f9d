#pragma once

// Dense-vector and banded matrix-vector kernels for Fock-space propagation.
// A portable scalar reference and an AVX2/FMA variant; the variant is picked
// once at startup (CRITQ_KERNELS=scalar|avx2|auto overrides) and can be
// switched explicitly for equivalence testing.

#include <complex>
#include <cstddef>
#include <string_view>

namespace critq::kernels {

using cplx = std::complex<double>;

// Real symmetric matrix with non-zero diagonals at offsets 0, +-2, +-4.
// d0 has dim entries, d2 has dim-2, d4 has dim-4.
struct BandView {
  const double* d0;
  const double* d2;
  const double* d4;
  std::size_t dim;
};

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  void (*band_matvec)(const BandView& h, const cplx* x, cplx* y);
  void (*axpy)(cplx a, const cplx* x, cplx* y, std::size_t n);  // y += a x
  cplx (*dot)(const cplx* x, const cplx* y, std::size_t n);     // sum conj(x_i) y_i
  double (*norm_sq)(const cplx* x, std::size_t n);
  void (*scale)(double a, cplx* x, std::size_t n);
};

namespace scalar {
extern const KernelTable table;
}
namespace avx2 {
// Null function pointers when the translation unit was built without AVX2 support.
extern const KernelTable table;
bool compiled();
}  // namespace avx2

bool avx2_supported();  // compiled in and supported by this CPU
Backend active_backend();
std::string_view backend_name(Backend b);
// Throws ValidationError if the backend is unavailable.
void set_backend(Backend b);
const KernelTable& active();

inline void band_matvec(const BandView& h, const cplx* x, cplx* y) { active().band_matvec(h, x, y); }
inline void axpy(cplx a, const cplx* x, cplx* y, std::size_t n) { active().axpy(a, x, y, n); }
inline cplx dot(const cplx* x, const cplx* y, std::size_t n) { return active().dot(x, y, n); }
inline double norm_sq(const cplx* x, std::size_t n) { return active().norm_sq(x, n); }
inline void scale(double a, cplx* x, std::size_t n) { active().scale(a, x, n); }

}  // namespace critq::kernels
