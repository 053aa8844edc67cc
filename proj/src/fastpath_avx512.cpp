// AVX-512 conv kernels for the scoring hot path. Compiled with -mavx512f
// -mavx512dq regardless of the host; callers gate on fastpath_has_avx512().

#include <immintrin.h>

#include "discnn/fastpath.hpp"
#include "fastpath_impl.h"

namespace discnn::detail {
namespace {

template <int OV>
inline void pool_pair(const float* r0, const float* r1, int S, float* dst) {
  constexpr int O = OV * 16;
  for (int x = 0; x < S / 2; ++x) {
    for (int v = 0; v < OV; ++v) {
      __m512 a = _mm512_loadu_ps(r0 + 2 * x * O + 16 * v);
      __m512 b = _mm512_loadu_ps(r0 + (2 * x + 1) * O + 16 * v);
      __m512 c = _mm512_loadu_ps(r1 + 2 * x * O + 16 * v);
      __m512 d = _mm512_loadu_ps(r1 + (2 * x + 1) * O + 16 * v);
      _mm512_storeu_ps(dst + x * O + 16 * v,
                       _mm512_max_ps(_mm512_max_ps(a, b), _mm512_max_ps(c, d)));
    }
  }
}

// OV out-channel vectors of 16, XB output pixels per register block.
template <int OV, int XB>
void conv_stage(const float* inp, int S, int C, const float* w,
                const float* scale, const float* shift, float* rowbuf,
                float* out, int out_row_stride) {
  constexpr int O = OV * 16;
  const int Wp = S + 2;
  __m512 sv[OV], hv[OV];
  for (int v = 0; v < OV; ++v) {
    sv[v] = _mm512_loadu_ps(scale + 16 * v);
    hv[v] = _mm512_loadu_ps(shift + 16 * v);
  }
  const __m512 zero = _mm512_setzero_ps();
  for (int y = 0; y < S; ++y) {
    float* orow = rowbuf + (y & 1) * S * O;
    for (int x0 = 0; x0 < S; x0 += XB) {
      __m512 acc[XB * OV];
      for (int i = 0; i < XB * OV; ++i) acc[i] = zero;
      for (int ky = 0; ky < 3; ++ky) {
        const float* irow = inp + ((y + ky) * Wp + x0) * C;
        const float* wk = w + ky * 3 * C * O;
        for (int kx = 0; kx < 3; ++kx) {
          const float* ip = irow + kx * C;
          const float* wp = wk + kx * C * O;
          for (int c = 0; c < C; ++c) {
            __m512 wv[OV];
            for (int v = 0; v < OV; ++v)
              wv[v] = _mm512_loadu_ps(wp + c * O + 16 * v);
            for (int xb = 0; xb < XB; ++xb) {
              const __m512 bc = _mm512_set1_ps(ip[xb * C + c]);
              for (int v = 0; v < OV; ++v)
                acc[xb * OV + v] = _mm512_fmadd_ps(bc, wv[v], acc[xb * OV + v]);
            }
          }
        }
      }
      for (int xb = 0; xb < XB; ++xb)
        for (int v = 0; v < OV; ++v) {
          __m512 t = _mm512_fmadd_ps(acc[xb * OV + v], sv[v], hv[v]);
          _mm512_storeu_ps(orow + (x0 + xb) * O + 16 * v, _mm512_max_ps(t, zero));
        }
    }
    if (y & 1)
      pool_pair<OV>(rowbuf, rowbuf + S * O, S, out + (y / 2) * out_row_stride);
  }
}

}  // namespace

void infer_convs_avx512(const InferencePlan& plan, InferScratch& s) {
  const auto& st = plan.stages;
  conv_stage<4, 4>(s.in0.data(), 96, 3, st[0].w.data(), st[0].scale.data(),
                   st[0].shift.data(), s.row.data(), s.a1.data() + (50 + 1) * 64,
                   50 * 64);
  conv_stage<2, 8>(s.a1.data(), 48, 64, st[1].w.data(), st[1].scale.data(),
                   st[1].shift.data(), s.row.data(), s.a2.data() + (26 + 1) * 32,
                   26 * 32);
  conv_stage<1, 8>(s.a2.data(), 24, 32, st[2].w.data(), st[2].scale.data(),
                   st[2].shift.data(), s.row.data(), s.a3.data() + (14 + 1) * 16,
                   14 * 16);
  // final 12x12x16 -> 6x6x8 stage is too narrow for 16-wide vectors
  conv_stage_scalar(s.a3.data(), 12, 16, 8, st[3].w.data(), st[3].scale.data(),
                    st[3].shift.data(), s.row.data(), s.a4.data(), 6 * 8);
}

}  // namespace discnn::detail
