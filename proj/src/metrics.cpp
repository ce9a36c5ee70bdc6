#include "cmtda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cmtda/image_io.hpp"

namespace cmtda {

using nlohmann::json;

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (long long v : m_) t += v;
    return t;
}

void ConfusionMatrix::add(const LabelMap& prediction, const LabelMap& ground_truth) {
    if (prediction.h != ground_truth.h || prediction.w != ground_truth.w)
        throw ShapeError("ConfusionMatrix::add: shape mismatch");
    for (std::size_t j = 0; j < prediction.v.size(); ++j) {
        const int gt = ground_truth.v[j];
        const int pr = prediction.v[j];
        if (gt >= c_ || pr >= c_) continue;  // ignore label or foreign class
        ++at(gt, pr);
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.c_ != c_) throw ShapeError("ConfusionMatrix::merge: class count mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += other.m_[i];
}

IouReport iou_scores(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ConfigError("iou_scores: empty confusion matrix");
    const int C = cm.num_classes();
    IouReport rep;
    rep.iou.assign(static_cast<std::size_t>(C), std::numeric_limits<double>::quiet_NaN());
    rep.valid.assign(static_cast<std::size_t>(C), false);
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < C; ++c) {
        const long long tp = cm.at(c, c);
        long long fp = 0, fn = 0;
        for (int o = 0; o < C; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const long long uni = tp + fp + fn;
        if (uni == 0) continue;
        rep.iou[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(uni);
        rep.valid[static_cast<std::size_t>(c)] = true;
        sum += rep.iou[static_cast<std::size_t>(c)];
        ++n;
    }
    if (n == 0) throw ConfigError("iou_scores: no class has a nonzero union");
    rep.miou = sum / n;
    return rep;
}

MetricMatrix::MetricMatrix(std::vector<std::string> targets) : targets_(std::move(targets)) {
    const std::size_t k = targets_.size();
    miou_.assign(k, std::vector<double>(k, std::numeric_limits<double>::quiet_NaN()));
    per_class_.assign(k, std::vector<std::vector<double>>(k));
}

void MetricMatrix::set(int target, int step, double miou, std::vector<double> per_class) {
    if (step < target) throw ConfigError("MetricMatrix: entry defined only for step >= target");
    miou_.at(static_cast<std::size_t>(target)).at(static_cast<std::size_t>(step)) = miou;
    per_class_.at(static_cast<std::size_t>(target)).at(static_cast<std::size_t>(step)) =
        std::move(per_class);
}

bool MetricMatrix::has(int target, int step) const {
    if (target < 0 || step < 0 || target >= num_targets() || step >= num_targets() || step < target)
        return false;
    return !std::isnan(miou_[static_cast<std::size_t>(target)][static_cast<std::size_t>(step)]);
}

double MetricMatrix::get(int target, int step) const {
    if (!has(target, step)) throw ConfigError("MetricMatrix: missing entry");
    return miou_[static_cast<std::size_t>(target)][static_cast<std::size_t>(step)];
}

const std::vector<double>& MetricMatrix::per_class(int target, int step) const {
    if (!has(target, step)) throw ConfigError("MetricMatrix: missing entry");
    return per_class_[static_cast<std::size_t>(target)][static_cast<std::size_t>(step)];
}

double accumulated_forgetting(const MetricMatrix& m) {
    const int K = m.num_targets();
    if (K < 1) throw ConfigError("accumulated_forgetting: empty matrix");
    double af = 0.0;
    for (int k = 0; k + 1 < K; ++k) af += m.get(k, k) - m.get(k, K - 1);
    return af;
}

double miou_average(const MetricMatrix& m) {
    const int K = m.num_targets();
    if (K < 1) throw ConfigError("miou_average: empty matrix");
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += m.get(k, K - 1);
    return sum / K;
}

void save_metrics_json(const MetricMatrix& m, const std::string& path) {
    const int K = m.num_targets();
    json j;
    j["targets"] = m.targets();
    std::vector<int> steps;
    for (int s = 1; s <= K; ++s) steps.push_back(s);
    j["steps"] = steps;
    json miou = json::array();
    for (int k = 0; k < K; ++k) {
        json row = json::array();
        for (int s = 0; s < K; ++s) {
            if (m.has(k, s))
                row.push_back(m.get(k, s));
            else
                row.push_back(nullptr);
        }
        miou.push_back(row);
    }
    j["miou"] = miou;
    json per_class = json::object();
    for (int k = 0; k < K; ++k) {
        json rows = json::object();
        for (int s = k; s < K; ++s)
            if (m.has(k, s) && !m.per_class(k, s).empty())
                rows["step_" + std::to_string(s + 1)] = m.per_class(k, s);
        per_class[m.targets()[static_cast<std::size_t>(k)]] = rows;
    }
    j["per_class"] = per_class;
    bool complete = true;
    for (int k = 0; k < K; ++k)
        for (int s = k; s < K; ++s)
            if (!m.has(k, s)) complete = false;
    if (complete) {
        j["af"] = accumulated_forgetting(m);
        j["miou_avg"] = miou_average(m);
    } else {  // run still in progress
        j["af"] = nullptr;
        j["miou_avg"] = nullptr;
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FileMissingError("cannot write " + path);
    os << j.dump(2) << '\n';
}

MetricMatrix load_metrics_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FileMissingError("cannot open " + path);
    json j;
    is >> j;
    MetricMatrix m(j.at("targets").get<std::vector<std::string>>());
    const auto& miou = j.at("miou");
    const auto& pc = j.at("per_class");
    for (int k = 0; k < m.num_targets(); ++k) {
        for (int s = k; s < m.num_targets(); ++s) {
            const auto& cell = miou.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(s));
            if (cell.is_null()) continue;
            std::vector<double> per_class;
            const std::string key = "step_" + std::to_string(s + 1);
            const auto& rows = pc.at(m.targets()[static_cast<std::size_t>(k)]);
            if (rows.contains(key)) per_class = rows.at(key).get<std::vector<double>>();
            m.set(k, s, cell.get<double>(), std::move(per_class));
        }
    }
    return m;
}

namespace {

std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

// One Table-style line: per-target final mIoU with the change from its
// initial score in parentheses, then the average and A.F.
std::string table_row(const MetricMatrix& m, const std::string& label) {
    const int K = m.num_targets();
    std::ostringstream os;
    os << label;
    for (int k = 0; k < K; ++k) {
        const double fin = 100.0 * m.get(k, K - 1);
        os << '\t' << fmt1(fin);
        if (k + 1 < K) {
            const double delta = fin - 100.0 * m.get(k, k);
            os << " (" << (delta >= 0 ? "+" : "") << fmt1(delta) << ")";
        }
    }
    os << '\t' << fmt1(100.0 * miou_average(m));
    os << '\t' << fmt1(100.0 * accumulated_forgetting(m));
    return os.str();
}

std::string table_header(const MetricMatrix& m) {
    std::ostringstream os;
    os << "method";
    for (const auto& t : m.targets()) os << '\t' << t;
    os << "\tmIoU Avg.\tA.F.";
    return os.str();
}

void write_forgetting_curves(const MetricMatrix& m, const std::string& path) {
    const int K = m.num_targets();
    const int W = 360, H = 240, pad = 30;
    Tensor img(3, H, W, 1.f);
    auto put = [&](int y, int x, float r, float g, float b) {
        if (y < 0 || y >= H || x < 0 || x >= W) return;
        img.at(0, y, x) = r;
        img.at(1, y, x) = g;
        img.at(2, y, x) = b;
    };
    for (int x = pad; x < W - pad; ++x) put(H - pad, x, 0.f, 0.f, 0.f);
    for (int y = pad; y <= H - pad; ++y) put(y, pad, 0.f, 0.f, 0.f);

    const float colors[][3] = {{0.85f, 0.2f, 0.2f}, {0.2f, 0.5f, 0.9f},
                               {0.2f, 0.7f, 0.3f},  {0.8f, 0.6f, 0.1f},
                               {0.6f, 0.3f, 0.7f},  {0.3f, 0.3f, 0.3f}};
    auto px = [&](int step) {
        return pad + (K == 1 ? 0 : (W - 2 * pad) * step / (K - 1));
    };
    auto py = [&](double miou) {
        return H - pad - static_cast<int>((H - 2 * pad) * std::clamp(miou, 0.0, 1.0));
    };
    for (int k = 0; k < K; ++k) {
        const auto& col = colors[k % 6];
        for (int s = k; s + 1 < K; ++s) {
            int x0 = px(s), y0 = py(m.get(k, s));
            int x1 = px(s + 1), y1 = py(m.get(k, s + 1));
            const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
            for (int t = 0; t <= steps; ++t) {
                const int x = x0 + (x1 - x0) * t / steps;
                const int y = y0 + (y1 - y0) * t / steps;
                put(y, x, col[0], col[1], col[2]);
                put(y + 1, x, col[0], col[1], col[2]);
            }
        }
        // legend tick
        for (int t = 0; t < 12; ++t) put(10 + 8 * k, W - pad - 20 + t, col[0], col[1], col[2]);
    }
    write_png_rgb(path, img);
}

}  // namespace

void render_report(const MetricMatrix& m, const std::string& out_dir, const std::string& run_label) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os(out_dir + "/report.txt", std::ios::trunc);
        os << table_header(m) << '\n' << table_row(m, run_label) << '\n';
    }
    {
        std::ofstream os(out_dir + "/report.csv", std::ios::trunc);
        const int K = m.num_targets();
        os << "target,step,miou\n";
        for (int k = 0; k < K; ++k)
            for (int s = k; s < K; ++s)
                os << m.targets()[static_cast<std::size_t>(k)] << ',' << (s + 1) << ','
                   << json(m.get(k, s)).dump() << '\n';
    }
    write_forgetting_curves(m, out_dir + "/forgetting_curves.png");
}

void render_comparison(const MetricMatrix& a, const std::string& label_a, const MetricMatrix& b,
                       const std::string& label_b, const std::string& out_dir) {
    if (a.targets() != b.targets())
        throw ConfigError("render_comparison: runs cover different targets");
    std::filesystem::create_directories(out_dir);
    std::ofstream os(out_dir + "/compare.txt", std::ios::trunc);
    os << table_header(a) << '\n';
    os << table_row(a, label_a) << '\n';
    os << table_row(b, label_b) << '\n';
    const double daf = 100.0 * (accumulated_forgetting(a) - accumulated_forgetting(b));
    os << "delta A.F. (" << label_a << " - " << label_b << ")\t" << fmt1(daf) << '\n';
}

}  // namespace cmtda
