#include "discnn/fastpath.hpp"

#include <cmath>

#include "discnn/model.hpp"
#include "fastpath_impl.h"

namespace discnn {

InferScratch::InferScratch()
    : in0(98 * 98 * 3, 0.f),
      row(2 * 96 * 64, 0.f),
      a1(50 * 50 * 64, 0.f),
      a2(26 * 26 * 32, 0.f),
      a3(14 * 14 * 16, 0.f),
      a4(6 * 6 * 8, 0.f),
      fc1(288, 0.f),
      fc2(128, 0.f) {}

bool fastpath_has_avx512() {
  return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq");
}

InferencePlan make_inference_plan(const DisCNNModelT<float>& model) {
  InferencePlan plan;
  int size = kInputSize;
  for (int i = 0; i < 4; ++i) {
    const auto& blk = model.blocks[i];
    InferStage& st = plan.stages[i];
    st.size = size;
    st.in_ch = static_cast<int>(blk.w.dim(2));
    st.out_ch = static_cast<int>(blk.w.dim(3));
    st.w = blk.w.values;
    st.scale.resize(st.out_ch);
    st.shift.resize(st.out_ch);
    for (int o = 0; o < st.out_ch; ++o) {
      float inv = 1.f / std::sqrt(blk.running.var[o] + kBNEps);
      st.scale[o] = blk.gamma.values[o] * inv;
      st.shift[o] = blk.beta.values[o] +
                    (blk.b.values[o] - blk.running.mean[o]) * st.scale[o];
    }
    size /= 2;
  }
  for (int i = 0; i < 3; ++i) {
    plan.fc_w[i] = model.fc_w[i].values;
    plan.fc_b[i] = model.fc_b[i].values;
  }
  plan.use_avx512 = fastpath_has_avx512();
  return plan;
}

namespace detail {

void infer_convs_generic(const InferencePlan& plan, InferScratch& s) {
  const auto& st = plan.stages;
  conv_stage_scalar(s.in0.data(), 96, 3, 64, st[0].w.data(), st[0].scale.data(),
                    st[0].shift.data(), s.row.data(), s.a1.data() + (50 + 1) * 64,
                    50 * 64);
  conv_stage_scalar(s.a1.data(), 48, 64, 32, st[1].w.data(), st[1].scale.data(),
                    st[1].shift.data(), s.row.data(), s.a2.data() + (26 + 1) * 32,
                    26 * 32);
  conv_stage_scalar(s.a2.data(), 24, 32, 16, st[2].w.data(), st[2].scale.data(),
                    st[2].shift.data(), s.row.data(), s.a3.data() + (14 + 1) * 16,
                    14 * 16);
  conv_stage_scalar(s.a3.data(), 12, 16, 8, st[3].w.data(), st[3].scale.data(),
                    st[3].shift.data(), s.row.data(), s.a4.data(), 6 * 8);
}

}  // namespace detail

void infer_run(const InferencePlan& plan, InferScratch& s, float out[16]) {
  if (plan.use_avx512)
    detail::infer_convs_avx512(plan, s);
  else
    detail::infer_convs_generic(plan, s);
  detail::fc_apply(plan.fc_w[0].data(), plan.fc_b[0].data(), 288, 288,
                   s.a4.data(), s.fc1.data());
  detail::fc_apply(plan.fc_w[1].data(), plan.fc_b[1].data(), 288, 128,
                   s.fc1.data(), s.fc2.data());
  detail::fc_apply(plan.fc_w[2].data(), plan.fc_b[2].data(), 128, 16,
                   s.fc2.data(), out);
}

}  // namespace discnn
