#pragma once

#include <string>
#include <vector>

#include "cmtda/tensor.hpp"

namespace cmtda {

// C x C pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
  public:
    explicit ConfusionMatrix(int num_classes)
        : c_(num_classes), m_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

    int num_classes() const { return c_; }
    long long at(int truth, int pred) const {
        return m_[static_cast<std::size_t>(truth) * c_ + pred];
    }
    long long& at(int truth, int pred) { return m_[static_cast<std::size_t>(truth) * c_ + pred]; }
    long long total() const;

    // Pixels with ignore labels or out-of-range predictions are skipped.
    void add(const LabelMap& prediction, const LabelMap& ground_truth);
    void merge(const ConfusionMatrix& other);

  private:
    int c_;
    std::vector<long long> m_;
};

struct IouReport {
    std::vector<double> iou;        // per class, NaN where union is zero
    std::vector<bool> valid;        // union > 0
    double miou = 0.0;              // mean over valid classes
};

// IoU_c = TP / (TP + FP + FN); zero-union classes are excluded from the mean.
// Throws on an all-empty matrix.
IouReport iou_scores(const ConfusionMatrix& cm);

// mIoU of target k measured after step s (both 0-based here), defined for
// s >= k. Stored per run and consumed by the forgetting metrics.
class MetricMatrix {
  public:
    MetricMatrix() = default;
    MetricMatrix(std::vector<std::string> targets);

    int num_targets() const { return static_cast<int>(targets_.size()); }
    const std::vector<std::string>& targets() const { return targets_; }

    void set(int target, int step, double miou, std::vector<double> per_class = {});
    bool has(int target, int step) const;
    double get(int target, int step) const;           // throws if absent
    const std::vector<double>& per_class(int target, int step) const;

  private:
    std::vector<std::string> targets_;
    std::vector<std::vector<double>> miou_;               // [target][step], NaN = absent
    std::vector<std::vector<std::vector<double>>> per_class_;
};

// Eq.-style accumulated forgetting: sum over targets k < K-1..: initial
// minus final mIoU. A single-target matrix yields 0. Requires every entry
// with s >= k to be present.
double accumulated_forgetting(const MetricMatrix& m);

// Mean over targets of the final-step mIoU.
double miou_average(const MetricMatrix& m);

void save_metrics_json(const MetricMatrix& m, const std::string& path);
MetricMatrix load_metrics_json(const std::string& path);

// Table-shaped text + CSV report plus per-target forgetting curves rendered
// as PNG line charts.
void render_report(const MetricMatrix& m, const std::string& out_dir,
                   const std::string& run_label = "run");

// Side-by-side comparison of two runs with a delta-A.F. line.
void render_comparison(const MetricMatrix& a, const std::string& label_a, const MetricMatrix& b,
                       const std::string& label_b, const std::string& out_dir);

}  // namespace cmtda
