#pragma once

#include <memory>
#include <optional>
#include <string>

#include "cmtda/net.hpp"

namespace cmtda {

using SegNet = Net<float>;

// Per-pixel confidence: the winning class probability at every pixel.
Tensor confidence_from_probs(const Tensor& probs);
Tensor confidence(SegNet& model, const Tensor& image);

// Argmax class map; ties go to the lowest class index.
LabelMap argmax_map(const Tensor& probs);

// Student plus its EMA teacher, and the frozen teacher handed over from the
// preceding adaptation step (absent during step 1).
struct TeacherEnsemble {
    SegNet student;
    SegNet teacher;
    std::optional<SegNet> previous_teacher;
    float ema_decay = 0.999f;

    explicit TeacherEnsemble(SegNet s, float decay = 0.999f)
        : student(s), teacher(std::move(s)), ema_decay(decay) {}
};

// teacher <- d * teacher + (1-d) * student, element-wise over the flat
// parameter vectors. Student and previous teacher are untouched.
void ema_update(TeacherEnsemble& ens);

// Plain momentum SGD over the flat parameter vector.
class SgdMomentum {
  public:
    SgdMomentum(std::size_t n_params, float lr, float momentum)
        : velocity_(n_params, 0.f), lr_(lr), momentum_(momentum) {}

    void step(std::vector<float>& params, const std::vector<float>& grads);

    float learning_rate() const { return lr_; }

  private:
    std::vector<float> velocity_;
    float lr_, momentum_;
};

// Versioned checkpoint: descriptor header plus float32 parameter block in
// declaration order. load_checkpoint validates the embedded descriptor
// against `expect` when given.
void save_checkpoint(const SegNet& model, const std::string& path);
SegNet load_checkpoint(const std::string& path, const ArchDescriptor* expect = nullptr);

// FNV-1a digest of the raw parameter bytes; used for frozen-model contracts.
std::uint64_t params_digest(const SegNet& model);

}  // namespace cmtda
