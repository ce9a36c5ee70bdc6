#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmtda/config.hpp"
#include "cmtda/masks.hpp"
#include "cmtda/metrics.hpp"
#include "cmtda/model.hpp"
#include "cmtda/synthdata.hpp"
#include "cmtda/weather.hpp"

namespace cmtda {

// Substream tags for the per-run RNG tree; each concern draws from its own
// stream so toggling one mechanism never shifts another's randomness.
enum RngTag : std::uint64_t {
    kRngInit = 1,
    kRngSourceTrain = 2,
    kRngTargetBatch = 3,
    kRngSourceBatch = 4,
    kRngCompose = 5,
    kRngJitter = 6,
    kRngTargetJitter = 7,
};

// Brightness/contrast jitter applied to source crops during supervised
// passes; keeps the source model usable under the targets' global
// photometric shifts.
Tensor photometric_jitter(const Tensor& image, Rng& rng);

inline Rng step_stream(std::uint64_t seed, RngTag tag, int step_index) {
    return Rng::derive(seed, static_cast<std::uint64_t>(tag) * 1000003ULL +
                                 static_cast<std::uint64_t>(step_index));
}

struct CropDraw {
    int index, y0, x0;
};

// Batch sampling used by both training loops: per slot, draw the image index
// then the crop origin. Exposed so tests can reproduce the exact batches.
std::vector<CropDraw> draw_crops(Rng& rng, const DatasetView& data, int crop, int batch);

Tensor crop_view(const DatasetView& data, const CropDraw& d, int size);

// Mean of sum_ij W_ij * CE_ij over all pixels of the batch, with gradients
// accumulated into the student (grads are not zeroed here). `weights` may be
// empty for unweighted CE.
double weighted_target_loss(SegNet& student, const std::vector<Tensor>& images,
                            const std::vector<LabelMap>& labels,
                            const std::vector<Tensor>& weights);

// Supervised pixel-wise cross-entropy on the source split; mutates `model`
// in place. Zero iters leaves the parameters untouched.
void train_source(SegNet& model, const DatasetView& source_train, int iters, float lr,
                  float momentum, int batch, int crop_size, std::uint64_t seed,
                  const std::string& log_path = "");

struct StepArtifacts {
    WeatherVector weather;                 // this step's domain
    std::string dir;                       // step directory with all files
    std::uint64_t prev_teacher_digest_before = 0;
    std::uint64_t prev_teacher_digest_after = 0;
    double first_logged_target_loss = 0.0;
};

// One adaptation step: teacher-driven self-training on the target with
// replay composition, blended pseudo-labels, and mask-weighted loss, per the
// step flags. Writes student.ckpt, teacher.ckpt, weather.wv, protos.pt0, and
// log.jsonl under step_dir. The previous teacher is verified frozen.
StepArtifacts adapt_step(TeacherEnsemble& ens, const DatasetView& target_train,
                         const DatasetView* source_train,
                         const std::vector<const WeatherVector*>& stored_vectors,
                         ClassPrototypes& protos, const StepConfig& cfg, std::uint64_t run_seed,
                         const std::string& domain_tag, const std::string& step_dir);

struct EvalResult {
    double miou = 0.0;
    std::vector<double> per_class;
};

EvalResult evaluate_model(SegNet& model, const DatasetView& val, int num_classes);

// Full sequential run: source training (or checkpoint load), K adaptation
// steps with teacher handoff, evaluation of every seen target after each
// step, and persistence of all artifacts under out_dir.
MetricMatrix run_sequence(const RunConfig& cfg, const std::string& out_dir, bool resume = false);

}  // namespace cmtda
