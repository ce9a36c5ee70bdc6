#include "cmtda/model.hpp"

#include <cstring>
#include <sstream>

#include "cmtda/container.hpp"

namespace cmtda {

Tensor confidence_from_probs(const Tensor& probs) {
    Tensor q(1, probs.h, probs.w);
    const std::size_t n = static_cast<std::size_t>(probs.h) * probs.w;
    for (std::size_t j = 0; j < n; ++j) {
        float mx = probs.v[j];
        for (int c = 1; c < probs.c; ++c) mx = std::max(mx, probs.v[static_cast<std::size_t>(c) * n + j]);
        q.v[j] = mx;
    }
    return q;
}

Tensor confidence(SegNet& model, const Tensor& image) {
    return confidence_from_probs(model.forward_probs(image));
}

LabelMap argmax_map(const Tensor& probs) {
    LabelMap out(probs.h, probs.w);
    const std::size_t n = static_cast<std::size_t>(probs.h) * probs.w;
    for (std::size_t j = 0; j < n; ++j) {
        int best = 0;
        float bv = probs.v[j];
        for (int c = 1; c < probs.c; ++c) {
            const float v = probs.v[static_cast<std::size_t>(c) * n + j];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        out.v[j] = static_cast<std::uint8_t>(best);
    }
    return out;
}

void ema_update(TeacherEnsemble& ens) {
    auto& t = ens.teacher.params();
    const auto& s = ens.student.params();
    if (t.size() != s.size() || !(ens.teacher.arch() == ens.student.arch()))
        throw DescriptorMismatchError("ema_update: student/teacher architecture mismatch");
    const float d = ens.ema_decay;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = d * t[i] + (1.f - d) * s[i];
}

void SgdMomentum::step(std::vector<float>& params, const std::vector<float>& grads) {
    if (params.size() != velocity_.size() || grads.size() != velocity_.size())
        throw ShapeError("SgdMomentum: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = momentum_ * velocity_[i] + grads[i];
        params[i] -= lr_ * velocity_[i];
    }
}

void save_checkpoint(const SegNet& model, const std::string& path) {
    const ArchDescriptor& a = model.arch();
    std::vector<std::pair<std::string, std::string>> fields;
    std::istringstream ss(a.to_text());
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find('=');
        fields.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    fields.emplace_back("param_count", std::to_string(model.params().size()));
    write_container(path, "CKPT", fields, model.params().data(),
                    model.params().size() * sizeof(float));
}

SegNet load_checkpoint(const std::string& path, const ArchDescriptor* expect) {
    Container c = read_container(path, "CKPT");
    ArchDescriptor a = ArchDescriptor::from_fields(c.fields);
    if (expect && !(a == *expect))
        throw DescriptorMismatchError("checkpoint descriptor does not match expected architecture: " +
                                      path);
    SegNet model(a);
    const auto it = c.fields.find("param_count");
    if (it == c.fields.end()) throw FormatError("checkpoint missing param_count: " + path);
    const std::size_t count = std::stoull(it->second);
    if (count != model.params().size())
        throw DescriptorMismatchError("checkpoint param_count disagrees with descriptor: " + path);
    if (c.payload.size() != count * sizeof(float))
        throw FormatError("checkpoint payload size mismatch: " + path);
    std::memcpy(model.params().data(), c.payload.data(), c.payload.size());
    return model;
}

std::uint64_t params_digest(const SegNet& model) {
    return fnv1a(model.params().data(), model.params().size() * sizeof(float));
}

}  // namespace cmtda
