#include "cmtda/masks.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "cmtda/container.hpp"

namespace cmtda {

double alpha_at(const AlphaSchedule& s, int iter) {
    if (iter < 0) throw ConfigError("alpha_at: negative iteration");
    if (iter >= s.total_iters) return s.alpha_end;
    const double t = static_cast<double>(iter) / static_cast<double>(s.total_iters);
    return s.alpha_start + (s.alpha_end - s.alpha_start) * t;
}

Tensor model_level_mask(const Tensor& q_cur, const Tensor& q_pre, double alpha) {
    if (!q_cur.same_shape(q_pre)) throw ShapeError("model_level_mask: confidence shape mismatch");
    Tensor m(1, q_cur.h, q_cur.w);
    const float a = static_cast<float>(alpha);
    for (std::size_t i = 0; i < m.v.size(); ++i)
        m.v[i] = (1.f - a) * q_cur.v[i] + a * q_pre.v[i];
    return m;
}

void update_source_prototypes(ClassPrototypes& protos, const Tensor& features,
                              const LabelMap& labels) {
    if (features.h != labels.h || features.w != labels.w)
        throw ShapeError("update_source_prototypes: feature/label resolution mismatch");
    if (features.c != protos.dim)
        throw ShapeError("update_source_prototypes: feature dim mismatch");
    const int n = features.h * features.w;
    std::vector<double> sums(static_cast<std::size_t>(protos.num_classes) * protos.dim, 0.0);
    std::vector<int> npix(static_cast<std::size_t>(protos.num_classes), 0);
    for (int j = 0; j < n; ++j) {
        const std::uint8_t y = labels.v[static_cast<std::size_t>(j)];
        if (y == kIgnoreLabel) continue;
        if (y >= protos.num_classes) throw ShapeError("update_source_prototypes: label out of range");
        ++npix[y];
        for (int d = 0; d < protos.dim; ++d)
            sums[static_cast<std::size_t>(y) * protos.dim + d] +=
                features.v[static_cast<std::size_t>(d) * n + j];
    }
    for (int c = 0; c < protos.num_classes; ++c) {
        if (npix[static_cast<std::size_t>(c)] == 0) continue;
        float* row = protos.row(c);
        const double inv = 1.0 / npix[static_cast<std::size_t>(c)];
        if (!protos.initialized(c)) {
            for (int d = 0; d < protos.dim; ++d)
                row[d] = static_cast<float>(sums[static_cast<std::size_t>(c) * protos.dim + d] * inv);
        } else {
            const float dec = protos.decay;
            for (int d = 0; d < protos.dim; ++d) {
                const float mean =
                    static_cast<float>(sums[static_cast<std::size_t>(c) * protos.dim + d] * inv);
                row[d] = dec * row[d] + (1.f - dec) * mean;
            }
        }
        ++protos.count[static_cast<std::size_t>(c)];
    }
}

TargetRepresentation target_representation(const Tensor& features, const LabelMap& pseudo_label) {
    if (features.h != pseudo_label.h || features.w != pseudo_label.w)
        throw ShapeError("target_representation: feature/label resolution mismatch");
    int num_classes = 0;
    for (std::uint8_t y : pseudo_label.v)
        if (y != kIgnoreLabel) num_classes = std::max(num_classes, static_cast<int>(y) + 1);

    TargetRepresentation out;
    out.num_classes = num_classes;
    out.dim = features.c;
    out.tr.assign(static_cast<std::size_t>(num_classes) * features.c, 0.f);
    out.present.assign(static_cast<std::size_t>(num_classes), 0);

    const int n = features.h * features.w;
    std::vector<double> sums(out.tr.size(), 0.0);
    std::vector<int> npix(static_cast<std::size_t>(num_classes), 0);
    for (int j = 0; j < n; ++j) {
        const std::uint8_t y = pseudo_label.v[static_cast<std::size_t>(j)];
        if (y == kIgnoreLabel) continue;
        ++npix[y];
        for (int d = 0; d < features.c; ++d)
            sums[static_cast<std::size_t>(y) * features.c + d] +=
                features.v[static_cast<std::size_t>(d) * n + j];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (npix[static_cast<std::size_t>(c)] == 0) continue;
        out.present[static_cast<std::size_t>(c)] = 1;
        const double inv = 1.0 / npix[static_cast<std::size_t>(c)];
        for (int d = 0; d < features.c; ++d)
            out.tr[static_cast<std::size_t>(c) * features.c + d] =
                static_cast<float>(sums[static_cast<std::size_t>(c) * features.c + d] * inv);
    }
    return out;
}

std::vector<float> feature_level_class_weights(const TargetRepresentation& tr,
                                               const ClassPrototypes& sr, bool alt_denominator) {
    if (tr.dim != sr.dim) throw ShapeError("feature_level_mask: SR/TR dim mismatch");
    const int C = std::max(tr.num_classes, sr.num_classes);
    auto sqdist = [&](const float* a, const float* b) {
        double s = 0.0;
        for (int d = 0; d < tr.dim; ++d) {
            const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
            s += diff * diff;
        }
        return s;
    };
    auto usable = [&](int c) {
        return c < tr.num_classes && tr.has(c) && c < sr.num_classes && sr.initialized(c);
    };

    std::vector<float> m(static_cast<std::size_t>(C), 1.f);
    for (int c1 = 0; c1 < C; ++c1) {
        if (!usable(c1)) continue;  // no evidence of shift: full weight
        const double num = sqdist(tr.row(c1), sr.row(c1));
        double den = 0.0;
        for (int c = 0; c < C; ++c) {
            if (!usable(c)) continue;
            den += sqdist(tr.row(c), alt_denominator ? sr.row(c) : sr.row(c1));
        }
        if (den < 1e-8) {
            m[static_cast<std::size_t>(c1)] = 1.f;
        } else {
            m[static_cast<std::size_t>(c1)] = static_cast<float>(std::max(0.0, 1.0 - num / den));
        }
    }
    return m;
}

Tensor feature_level_mask(const TargetRepresentation& tr, const ClassPrototypes& sr,
                          const LabelMap& pred_class_map, bool alt_denominator) {
    const std::vector<float> m = feature_level_class_weights(tr, sr, alt_denominator);
    Tensor mask(1, pred_class_map.h, pred_class_map.w);
    for (std::size_t j = 0; j < pred_class_map.v.size(); ++j) {
        const std::uint8_t y = pred_class_map.v[j];
        mask.v[j] = (y != kIgnoreLabel && y < m.size()) ? m[y] : 1.f;
    }
    return mask;
}

void save_prototypes(const ClassPrototypes& protos, const std::string& path) {
    std::vector<std::pair<std::string, std::string>> fields;
    fields.emplace_back("num_classes", std::to_string(protos.num_classes));
    fields.emplace_back("dim", std::to_string(protos.dim));
    fields.emplace_back("decay", std::to_string(protos.decay));
    std::string counts;
    for (int c = 0; c < protos.num_classes; ++c) {
        if (c) counts += ',';
        counts += std::to_string(protos.count[static_cast<std::size_t>(c)]);
    }
    fields.emplace_back("counts", counts);
    write_container(path, "PROT", fields, protos.sr.data(), protos.sr.size() * sizeof(float));
}

ClassPrototypes load_prototypes(const std::string& path) {
    Container c = read_container(path, "PROT");
    const int num_classes = std::stoi(c.fields.at("num_classes"));
    const int dim = std::stoi(c.fields.at("dim"));
    ClassPrototypes p(num_classes, dim, std::stof(c.fields.at("decay")));
    if (c.payload.size() != p.sr.size() * sizeof(float))
        throw FormatError("prototype payload size mismatch: " + path);
    std::memcpy(p.sr.data(), c.payload.data(), c.payload.size());
    std::stringstream ss(c.fields.at("counts"));
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',') && i < num_classes)
        p.count[static_cast<std::size_t>(i++)] = std::stoi(tok);
    if (i != num_classes) throw FormatError("prototype counts field malformed: " + path);
    return p;
}

}  // namespace cmtda
