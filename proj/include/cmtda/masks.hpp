#pragma once

#include <string>
#include <vector>

#include "cmtda/tensor.hpp"

namespace cmtda {

// Linear ramp from alpha_start at iteration 0 to alpha_end at total_iters,
// clamped afterwards. Controls how much weight the previous teacher's
// confidence carries in the model-level mask.
struct AlphaSchedule {
    double alpha_start = 0.8;
    double alpha_end = 0.2;
    int total_iters = 1;
};

double alpha_at(const AlphaSchedule& schedule, int iter);

// Pixel-wise blend of current- and previous-teacher confidences:
// (1-alpha)*q_cur + alpha*q_pre.
Tensor model_level_mask(const Tensor& q_cur, const Tensor& q_pre, double alpha);

// EMA class prototypes of source encoder features. Rows with count == 0 have
// never been observed and are skipped by the feature mask.
struct ClassPrototypes {
    int num_classes = 0;
    int dim = 0;
    float decay = 0.99f;
    std::vector<float> sr;    // num_classes x dim, row-major
    std::vector<int> count;

    ClassPrototypes() = default;
    ClassPrototypes(int c, int d, float decay_)
        : num_classes(c), dim(d), decay(decay_),
          sr(static_cast<std::size_t>(c) * d, 0.f), count(static_cast<std::size_t>(c), 0) {}

    const float* row(int c) const { return sr.data() + static_cast<std::size_t>(c) * dim; }
    float* row(int c) { return sr.data() + static_cast<std::size_t>(c) * dim; }
    bool initialized(int c) const { return count[static_cast<std::size_t>(c)] > 0; }
};

// Per-image class mean features partitioned by a label map at feature
// resolution; rows are valid only where the class occurs.
struct TargetRepresentation {
    int num_classes = 0;
    int dim = 0;
    std::vector<float> tr;            // num_classes x dim
    std::vector<std::uint8_t> present;

    const float* row(int c) const { return tr.data() + static_cast<std::size_t>(c) * dim; }
    bool has(int c) const { return present[static_cast<std::size_t>(c)] != 0; }
};

// Folds one labeled feature map into the source prototypes. Classes absent
// from `labels` are untouched; a class's first update seeds its row with the
// plain mean.
void update_source_prototypes(ClassPrototypes& protos, const Tensor& features,
                              const LabelMap& labels);

TargetRepresentation target_representation(const Tensor& features, const LabelMap& pseudo_label);

// Feature-level weighting: for each class c1 present in TR and initialized in
// SR, m(c1) = max(0, 1 - |TR_c1-SR_c1|^2 / sum_c |TR_c-SR_{c1}|^2), the sum
// running over classes that are present in TR and initialized in SR. Classes
// without evidence get weight 1, as does everything when the denominator is
// below 1e-8. With `alt_denominator` the sum uses |TR_c-SR_c|^2 instead.
Tensor feature_level_mask(const TargetRepresentation& tr, const ClassPrototypes& sr,
                          const LabelMap& pred_class_map, bool alt_denominator = false);

// Per-class weights without the pixel mapping; exposed for tests.
std::vector<float> feature_level_class_weights(const TargetRepresentation& tr,
                                               const ClassPrototypes& sr, bool alt_denominator);

// Prototype snapshots share the checkpoint container format.
void save_prototypes(const ClassPrototypes& protos, const std::string& path);
ClassPrototypes load_prototypes(const std::string& path);

}  // namespace cmtda
