#pragma once

#include "cmtda/tensor.hpp"

namespace cmtda {

// Binary map marking pixels where the previous teacher is strictly more
// confident than the current one. Equality favors the current teacher.
Tensor confidence_mask(const Tensor& q_pre, const Tensor& q_cur);

struct BlendInputs {
    const Tensor& probs_cur;   // (C,H,W)
    const Tensor& probs_pre;   // (C,H,W)
    const Tensor& q_cur;       // (1,H,W)
    const Tensor& q_pre;       // (1,H,W)
    const Tensor& m_feat_pre;  // (1,H,W) in [0,1]
};

struct BlendResult {
    LabelMap pseudo_label;     // argmax of the combined score
    Tensor blend_score;        // (1,H,W) maximal combined value, for logging
};

// Refined pseudo-label: argmax_c(probs_cur + M_con * M_feat_pre * probs_pre),
// ties broken toward the lowest class index.
BlendResult blend_pseudo_label(const BlendInputs& in);

}  // namespace cmtda
