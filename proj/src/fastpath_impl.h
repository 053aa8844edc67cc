#pragma once

// Internal to the fastpath translation units.
//
// Each conv stage reads a zero-padded [(S+2),(S+2),C] buffer, applies the
// folded affine + ReLU, and max-pools pairs of finished rows straight into
// the interior of the next stage's padded buffer. `out` points at the first
// interior element, `out_row_stride` is the padded row pitch in floats.

namespace discnn::detail {

inline void conv_stage_scalar(const float* inp, int S, int C, int O,
                              const float* w, const float* scale,
                              const float* shift, float* rowbuf, float* out,
                              int out_row_stride) {
  const int Wp = S + 2;
  for (int y = 0; y < S; ++y) {
    float* orow = rowbuf + (y & 1) * S * O;
    for (int x = 0; x < S; ++x) {
      float acc[64] = {};
      for (int ky = 0; ky < 3; ++ky) {
        const float* irow = inp + ((y + ky) * Wp + x) * C;
        const float* wk = w + ky * 3 * C * O;
        for (int kx = 0; kx < 3; ++kx) {
          const float* ip = irow + kx * C;
          const float* wp = wk + kx * C * O;
          for (int c = 0; c < C; ++c) {
            const float v = ip[c];
            const float* wo = wp + c * O;
            for (int o = 0; o < O; ++o) acc[o] += v * wo[o];
          }
        }
      }
      float* dst = orow + x * O;
      for (int o = 0; o < O; ++o) {
        float t = acc[o] * scale[o] + shift[o];
        dst[o] = t > 0.f ? t : 0.f;
      }
    }
    if (y & 1) {
      const float* r0 = rowbuf;
      const float* r1 = rowbuf + S * O;
      float* prow = out + (y / 2) * out_row_stride;
      for (int x = 0; x < S / 2; ++x) {
        const float* a = r0 + 2 * x * O;
        const float* b = a + O;
        const float* c = r1 + 2 * x * O;
        const float* d = c + O;
        float* q = prow + x * O;
        for (int o = 0; o < O; ++o) {
          float m0 = a[o] > b[o] ? a[o] : b[o];
          float m1 = c[o] > d[o] ? c[o] : d[o];
          q[o] = m0 > m1 ? m0 : m1;
        }
      }
    }
  }
}

inline void fc_apply(const float* w, const float* b, int din, int dout,
                     const float* x, float* y) {
  for (int o = 0; o < dout; ++o) y[o] = b[o];
  for (int i = 0; i < din; ++i) {
    const float v = x[i];
    const float* wr = w + i * dout;
    for (int o = 0; o < dout; ++o) y[o] += v * wr[o];
  }
}

}  // namespace discnn::detail
