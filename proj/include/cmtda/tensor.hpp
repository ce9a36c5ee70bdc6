#pragma once

#include <cstdint>
#include <vector>

#include "cmtda/common.hpp"

namespace cmtda {

// Planar float array, channel-major: v[(c*h + y)*w + x]. Images are (3,H,W)
// in [0,1]; single-channel maps are (1,H,W).
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, float fill = 0.f)
        : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    float& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    float at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }

    float* plane(int ch) { return v.data() + static_cast<std::size_t>(ch) * h * w; }
    const float* plane(int ch) const { return v.data() + static_cast<std::size_t>(ch) * h * w; }
};

constexpr std::uint8_t kIgnoreLabel = 255;

// Per-pixel class ids; 255 marks unlabeled pixels.
struct LabelMap {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    LabelMap() = default;
    LabelMap(int h_, int w_, std::uint8_t fill = 0)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

inline void clamp01(Tensor& t) {
    for (float& x : t.v) x = x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
}

// Bilinear resize of every channel to (oh, ow). Pixel centers are aligned at
// half-integer coordinates.
inline Tensor resize_bilinear(const Tensor& in, int oh, int ow) {
    if (in.h == oh && in.w == ow) return in;
    Tensor out(in.c, oh, ow);
    const double sy = static_cast<double>(in.h) / oh;
    const double sx = static_cast<double>(in.w) / ow;
    for (int ch = 0; ch < in.c; ++ch) {
        for (int y = 0; y < oh; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            if (fy < 0) fy = 0;
            int y0 = static_cast<int>(fy);
            if (y0 > in.h - 2) y0 = in.h - 2;
            if (y0 < 0) y0 = 0;
            const double wy = in.h == 1 ? 0.0 : fy - y0;
            for (int x = 0; x < ow; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                if (fx < 0) fx = 0;
                int x0 = static_cast<int>(fx);
                if (x0 > in.w - 2) x0 = in.w - 2;
                if (x0 < 0) x0 = 0;
                const double wx = in.w == 1 ? 0.0 : fx - x0;
                const int y1 = in.h == 1 ? y0 : y0 + 1;
                const int x1 = in.w == 1 ? x0 : x0 + 1;
                const double a = in.at(ch, y0, x0), b = in.at(ch, y0, x1);
                const double cc = in.at(ch, y1, x0), d = in.at(ch, y1, x1);
                out.at(ch, y, x) = static_cast<float>((a * (1 - wx) + b * wx) * (1 - wy) +
                                                      (cc * (1 - wx) + d * wx) * wy);
            }
        }
    }
    return out;
}

// Nearest-neighbor label downsample by an integer stride; preserves class ids.
inline LabelMap downsample_labels(const LabelMap& in, int stride) {
    if (stride <= 1) return in;
    if (in.h % stride != 0 || in.w % stride != 0)
        throw ShapeError("downsample_labels: dims not divisible by stride");
    LabelMap out(in.h / stride, in.w / stride);
    const int off = stride / 2;
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.at(y, x) = in.at(y * stride + off, x * stride + off);
    return out;
}

inline Tensor crop(const Tensor& in, int y0, int x0, int ch_, int cw) {
    if (y0 < 0 || x0 < 0 || y0 + ch_ > in.h || x0 + cw > in.w)
        throw ShapeError("crop: window outside image");
    Tensor out(in.c, ch_, cw);
    for (int ch = 0; ch < in.c; ++ch)
        for (int y = 0; y < ch_; ++y)
            for (int x = 0; x < cw; ++x) out.at(ch, y, x) = in.at(ch, y0 + y, x0 + x);
    return out;
}

inline LabelMap crop(const LabelMap& in, int y0, int x0, int ch_, int cw) {
    if (y0 < 0 || x0 < 0 || y0 + ch_ > in.h || x0 + cw > in.w)
        throw ShapeError("crop: window outside label map");
    LabelMap out(ch_, cw);
    for (int y = 0; y < ch_; ++y)
        for (int x = 0; x < cw; ++x) out.at(y, x) = in.at(y0 + y, x0 + x);
    return out;
}

}  // namespace cmtda
