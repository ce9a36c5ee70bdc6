#include "cmtda/blending.hpp"

namespace cmtda {

Tensor confidence_mask(const Tensor& q_pre, const Tensor& q_cur) {
    if (!q_pre.same_shape(q_cur)) throw ShapeError("confidence_mask: shape mismatch");
    Tensor m(1, q_pre.h, q_pre.w);
    for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = q_pre.v[i] > q_cur.v[i] ? 1.f : 0.f;
    return m;
}

BlendResult blend_pseudo_label(const BlendInputs& in) {
    if (!in.probs_cur.same_shape(in.probs_pre))
        throw ShapeError("blend_pseudo_label: probability shape mismatch");
    if (in.q_cur.h != in.probs_cur.h || in.q_cur.w != in.probs_cur.w ||
        !in.q_cur.same_shape(in.q_pre) || !in.q_cur.same_shape(in.m_feat_pre))
        throw ShapeError("blend_pseudo_label: mask shape mismatch");

    const Tensor m_con = confidence_mask(in.q_pre, in.q_cur);
    const int C = in.probs_cur.c;
    const std::size_t n = static_cast<std::size_t>(in.probs_cur.h) * in.probs_cur.w;

    BlendResult out{LabelMap(in.probs_cur.h, in.probs_cur.w), Tensor(1, in.probs_cur.h, in.probs_cur.w)};
    for (std::size_t j = 0; j < n; ++j) {
        const float gate = m_con.v[j] * in.m_feat_pre.v[j];
        int best = 0;
        float bv = in.probs_cur.v[j] + gate * in.probs_pre.v[j];
        for (int c = 1; c < C; ++c) {
            const float v = in.probs_cur.v[static_cast<std::size_t>(c) * n + j] +
                            gate * in.probs_pre.v[static_cast<std::size_t>(c) * n + j];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        out.pseudo_label.v[j] = static_cast<std::uint8_t>(best);
        out.blend_score.v[j] = bv;
    }
    return out;
}

}  // namespace cmtda
