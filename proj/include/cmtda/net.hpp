#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cmtda/common.hpp"
#include "cmtda/tensor.hpp"

namespace cmtda {

// Shape contract of the segmentation network: a chain of 3x3 convs whose last
// log2(stride) encoder stages are stride-2, a 3x3 decoder chain at feature
// resolution, a 1x1 class head, and a bilinear x-stride upsample back to input
// resolution. The last encoder width is the feature dimension exposed for
// prototype tracking.
struct ArchDescriptor {
    std::vector<int> encoder_widths{16, 32, 64};
    std::vector<int> decoder_widths{32};
    int num_classes = 5;
    int stride = 4;

    int feature_dim() const { return encoder_widths.back(); }
    bool operator==(const ArchDescriptor&) const = default;

    std::string to_text() const {
        std::ostringstream os;
        os << "encoder_widths=" << join(encoder_widths) << "\n";
        os << "decoder_widths=" << join(decoder_widths) << "\n";
        os << "num_classes=" << num_classes << "\n";
        os << "stride=" << stride << "\n";
        return os.str();
    }

    static ArchDescriptor from_fields(const std::map<std::string, std::string>& kv) {
        ArchDescriptor a;
        a.encoder_widths = split_ints(fetch(kv, "encoder_widths"));
        a.decoder_widths = split_ints(fetch(kv, "decoder_widths"));
        a.num_classes = std::stoi(fetch(kv, "num_classes"));
        a.stride = std::stoi(fetch(kv, "stride"));
        a.validate();
        return a;
    }

    void validate() const {
        if (encoder_widths.empty() || num_classes < 2 || stride < 1)
            throw ConfigError("invalid architecture descriptor");
        if ((stride & (stride - 1)) != 0) throw ConfigError("stride must be a power of two");
        int s2 = 0;
        for (int s = stride; s > 1; s /= 2) ++s2;
        if (s2 > static_cast<int>(encoder_widths.size()))
            throw ConfigError("not enough encoder stages for the requested stride");
    }

  private:
    static std::string join(const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(v[i]);
        }
        return s;
    }
    static std::vector<int> split_ints(const std::string& s) {
        std::vector<int> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
        return out;
    }
    static const std::string& fetch(const std::map<std::string, std::string>& kv,
                                    const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("descriptor missing field: " + key);
        return it->second;
    }
};

// Encoder-decoder conv net with manual backprop (im2col + GEMM). All
// parameters live in one flat vector so EMA updates, checkpoints, and digests
// can treat the model as a single block.
template <class S>
class Net {
  public:
    // Row-major throughout: an activation matrix (channels, pixels) then has
    // contiguous per-channel planes, which im2col and the feature tap rely on.
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    explicit Net(ArchDescriptor arch) : arch_(std::move(arch)) {
        arch_.validate();
        build();
    }

    const ArchDescriptor& arch() const { return arch_; }
    std::vector<S>& params() { return params_; }
    const std::vector<S>& params() const { return params_; }
    std::vector<S>& grads() { return grads_; }
    void zero_grads() { std::fill(grads_.begin(), grads_.end(), S(0)); }

    // He-normal conv weights, zero biases, zero class head. A zero head makes
    // a fresh model predict the uniform distribution at every pixel.
    void init_params(Rng& rng) {
        std::fill(params_.begin(), params_.end(), S(0));
        for (std::size_t li = 0; li + 1 < convs_.size(); ++li) {
            const ConvDef& c = convs_[li];
            const double stddev = std::sqrt(2.0 / (c.cin * c.k * c.k));
            for (int i = 0; i < c.cout * c.cin * c.k * c.k; ++i)
                params_[c.woff + static_cast<std::size_t>(i)] = static_cast<S>(rng.normal() * stddev);
        }
    }

    // Per-pixel class probabilities at input resolution.
    Tensor forward_probs(const Tensor& image) {
        run_forward(image);
        Tensor probs(arch_.num_classes, image.h, image.w);
        softmax_into(probs);
        return probs;
    }

    struct Inference {
        Tensor probs;     // (C,H,W)
        Tensor features;  // (D,H/s,W/s)
    };

    Inference forward_with_features(const Tensor& image) {
        run_forward(image);
        Inference out;
        out.probs = Tensor(arch_.num_classes, image.h, image.w);
        softmax_into(out.probs);
        out.features = features_tensor();
        return out;
    }

    // Encoder feature map only (prototype updates); skips decoder and head.
    Tensor encoder_features(const Tensor& image) {
        check_input(image);
        forward_convs(image, n_encoder_);
        return features_tensor();
    }

    // Forward + weighted cross-entropy backward. `weights` is an optional
    // (1,H,W) map; `loss_scale` multiplies both the returned loss and the
    // accumulated gradients (pass 1/(batch*H*W) to realize a batch pixel
    // mean). Pixels labeled kIgnoreLabel contribute nothing.
    double train_accumulate(const Tensor& image, const LabelMap& labels, const Tensor* weights,
                            double loss_scale) {
        if (labels.h != image.h || labels.w != image.w)
            throw ShapeError("train_accumulate: label/image shape mismatch");
        if (weights && (weights->h != image.h || weights->w != image.w || weights->c != 1))
            throw ShapeError("train_accumulate: weight/image shape mismatch");
        run_forward(image);

        const int C = arch_.num_classes;
        const int n = image.h * image.w;
        Mat dlogits(C, n);
        double loss = 0.0;
        for (int j = 0; j < n; ++j) {
            const std::uint8_t y = labels.v[static_cast<std::size_t>(j)];
            if (y == kIgnoreLabel) {
                dlogits.col(j).setZero();
                continue;
            }
            if (y >= C) throw ShapeError("train_accumulate: label id out of range");
            const double wgt =
                (weights ? static_cast<double>(weights->v[static_cast<std::size_t>(j)]) : 1.0) *
                loss_scale;
            // softmax with max subtraction
            S mx = logits_full_(0, j);
            for (int c = 1; c < C; ++c) mx = std::max(mx, logits_full_(c, j));
            double z = 0.0;
            for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(logits_full_(c, j) - mx));
            const double logz = std::log(z);
            loss += wgt * (logz - static_cast<double>(logits_full_(y, j) - mx));
            for (int c = 0; c < C; ++c) {
                const double p = std::exp(static_cast<double>(logits_full_(c, j) - mx)) / z;
                dlogits(c, j) = static_cast<S>(wgt * (p - (c == y ? 1.0 : 0.0)));
            }
        }
        run_backward(dlogits);
        return loss;
    }

    // Cross-entropy against per-pixel soft target distributions (C,H,W).
    double train_accumulate_soft(const Tensor& image, const Tensor& target_probs,
                                 const Tensor* weights, double loss_scale) {
        if (target_probs.h != image.h || target_probs.w != image.w ||
            target_probs.c != arch_.num_classes)
            throw ShapeError("train_accumulate_soft: target shape mismatch");
        if (weights && (weights->h != image.h || weights->w != image.w || weights->c != 1))
            throw ShapeError("train_accumulate_soft: weight shape mismatch");
        run_forward(image);

        const int C = arch_.num_classes;
        const int n = image.h * image.w;
        Mat dlogits(C, n);
        double loss = 0.0;
        for (int j = 0; j < n; ++j) {
            const double wgt =
                (weights ? static_cast<double>(weights->v[static_cast<std::size_t>(j)]) : 1.0) *
                loss_scale;
            S mx = logits_full_(0, j);
            for (int c = 1; c < C; ++c) mx = std::max(mx, logits_full_(c, j));
            double z = 0.0;
            for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(logits_full_(c, j) - mx));
            const double logz = std::log(z);
            for (int c = 0; c < C; ++c) {
                const double t = target_probs.v[static_cast<std::size_t>(c) * n + j];
                const double logp = static_cast<double>(logits_full_(c, j) - mx) - logz;
                loss -= wgt * t * logp;
                const double p = std::exp(logp);
                dlogits(c, j) = static_cast<S>(wgt * (p - t));
            }
        }
        run_backward(dlogits);
        return loss;
    }

  private:
    struct ConvDef {
        int cin, cout, k, stride;
        std::size_t woff, boff;
    };
    struct StageState {           // per conv, resized to the current input
        int ih = 0, iw = 0, oh = 0, ow = 0;
        Mat col;                  // (cin*k*k, oh*ow); unused for 1x1
        Mat out;                  // post-ReLU activation (cout, oh*ow)
    };

    ArchDescriptor arch_;
    std::vector<ConvDef> convs_;  // encoder..., decoder..., head(1x1)
    int n_encoder_ = 0;
    std::vector<S> params_, grads_;
    std::vector<StageState> st_;
    const Tensor* cur_input_ = nullptr;  // valid during forward/backward pair
    Mat logits_full_;                    // (C, H*W)
    std::vector<int> up_x0_, up_y0_;     // upsample taps for current size
    std::vector<S> up_wx_, up_wy_;

    void build() {
        std::size_t off = 0;
        auto add = [&](int cin, int cout, int k, int stride) {
            ConvDef c{cin, cout, k, stride, 0, 0};
            c.woff = off;
            off += static_cast<std::size_t>(cout) * cin * k * k;
            c.boff = off;
            off += static_cast<std::size_t>(cout);
            convs_.push_back(c);
        };
        int s2 = 0;
        for (int s = arch_.stride; s > 1; s /= 2) ++s2;
        int cin = 3;
        const int ne = static_cast<int>(arch_.encoder_widths.size());
        for (int i = 0; i < ne; ++i) {
            const int stride = (i >= ne - s2) ? 2 : 1;
            add(cin, arch_.encoder_widths[static_cast<std::size_t>(i)], 3, stride);
            cin = arch_.encoder_widths[static_cast<std::size_t>(i)];
        }
        n_encoder_ = ne;
        for (int wd : arch_.decoder_widths) {
            add(cin, wd, 3, 1);
            cin = wd;
        }
        add(cin, arch_.num_classes, 1, 1);  // head
        params_.assign(off, S(0));
        grads_.assign(off, S(0));
        st_.resize(convs_.size());
    }

    void check_input(const Tensor& image) const {
        if (image.c != 3) throw ShapeError("expected a 3-channel image");
        if (image.h % arch_.stride != 0 || image.w % arch_.stride != 0)
            throw ShapeError("image dims must be divisible by the feature stride");
        if (image.h < arch_.stride || image.w < arch_.stride) throw ShapeError("image too small");
    }

    Eigen::Map<Mat> weight(const ConvDef& c, std::vector<S>& buf) {
        return Eigen::Map<Mat>(buf.data() + c.woff, c.cout, c.cin * c.k * c.k);
    }
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> bias(const ConvDef& c, std::vector<S>& buf) {
        return Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(buf.data() + c.boff, c.cout);
    }

    void im2col(const S* src, int cin, int ih, int iw, const ConvDef& c, Mat& col, int oh, int ow) {
        const int pad = c.k / 2;
        col.resize(c.cin * c.k * c.k, oh * ow);
        for (int ci = 0; ci < cin; ++ci) {
            const S* plane = src + static_cast<std::size_t>(ci) * ih * iw;
            for (int ky = 0; ky < c.k; ++ky) {
                for (int kx = 0; kx < c.k; ++kx) {
                    const int row = (ci * c.k + ky) * c.k + kx;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * c.stride + ky - pad;
                        if (iy < 0 || iy >= ih) {
                            for (int ox = 0; ox < ow; ++ox)
                                col(row, oy * ow + ox) = S(0);
                            continue;
                        }
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * c.stride + kx - pad;
                            col(row, oy * ow + ox) =
                                (ix < 0 || ix >= iw) ? S(0) : plane[static_cast<std::size_t>(iy) * iw + ix];
                        }
                    }
                }
            }
        }
    }

    void col2im_add(const Mat& dcol, int cin, int ih, int iw, const ConvDef& c, S* dst, int oh,
                    int ow) {
        const int pad = c.k / 2;
        for (int ci = 0; ci < cin; ++ci) {
            S* plane = dst + static_cast<std::size_t>(ci) * ih * iw;
            for (int ky = 0; ky < c.k; ++ky) {
                for (int kx = 0; kx < c.k; ++kx) {
                    const int row = (ci * c.k + ky) * c.k + kx;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * c.stride + ky - pad;
                        if (iy < 0 || iy >= ih) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * c.stride + kx - pad;
                            if (ix < 0 || ix >= iw) continue;
                            plane[static_cast<std::size_t>(iy) * iw + ix] += dcol(row, oy * ow + ox);
                        }
                    }
                }
            }
        }
    }

    // Runs convs [0, upto); input image converted to S and centered ([0,1]
    // pixels map to [-1,1]) on the fly.
    void forward_convs(const Tensor& image, int upto) {
        std::vector<S> input(image.v.size());
        for (std::size_t i = 0; i < image.v.size(); ++i)
            input[i] = static_cast<S>(image.v[i]) * S(2) - S(1);
        int ih = image.h, iw = image.w;
        const S* src = input.data();
        int cin = 3;
        for (int li = 0; li < upto; ++li) {
            const ConvDef& c = convs_[static_cast<std::size_t>(li)];
            StageState& s = st_[static_cast<std::size_t>(li)];
            s.ih = ih;
            s.iw = iw;
            s.oh = (ih + c.stride - 1) / c.stride;
            s.ow = (iw + c.stride - 1) / c.stride;
            if (c.k == 1) {
                Eigen::Map<const Mat> x(src, cin, static_cast<Eigen::Index>(ih) * iw);
                s.out.noalias() = weight(c, params_) * x;
            } else {
                im2col(src, cin, ih, iw, c, s.col, s.oh, s.ow);
                s.out.noalias() = weight(c, params_) * s.col;
            }
            s.out.colwise() += bias(c, params_);
            const bool is_head = (li + 1 == static_cast<int>(convs_.size()));
            if (!is_head) s.out = s.out.cwiseMax(S(0));
            src = s.out.data();
            cin = c.cout;
            ih = s.oh;
            iw = s.ow;
        }
    }

    void run_forward(const Tensor& image) {
        check_input(image);
        cur_input_ = &image;
        forward_convs(image, static_cast<int>(convs_.size()));
        upsample_forward(image.h, image.w);
    }

    void build_upsample_taps(int H, int W, int fh, int fw) {
        up_y0_.resize(static_cast<std::size_t>(H));
        up_wy_.resize(static_cast<std::size_t>(H));
        up_x0_.resize(static_cast<std::size_t>(W));
        up_wx_.resize(static_cast<std::size_t>(W));
        const double sy = static_cast<double>(fh) / H, sx = static_cast<double>(fw) / W;
        for (int y = 0; y < H; ++y) {
            double f = (y + 0.5) * sy - 0.5;
            if (f < 0) f = 0;
            int y0 = static_cast<int>(f);
            if (y0 > fh - 2) y0 = fh - 2;
            if (y0 < 0) y0 = 0;
            up_y0_[static_cast<std::size_t>(y)] = y0;
            up_wy_[static_cast<std::size_t>(y)] = fh == 1 ? S(0) : static_cast<S>(f - y0);
        }
        for (int x = 0; x < W; ++x) {
            double f = (x + 0.5) * sx - 0.5;
            if (f < 0) f = 0;
            int x0 = static_cast<int>(f);
            if (x0 > fw - 2) x0 = fw - 2;
            if (x0 < 0) x0 = 0;
            up_x0_[static_cast<std::size_t>(x)] = x0;
            up_wx_[static_cast<std::size_t>(x)] = fw == 1 ? S(0) : static_cast<S>(f - x0);
        }
    }

    void upsample_forward(int H, int W) {
        const StageState& head = st_.back();
        const int fh = head.oh, fw = head.ow, C = arch_.num_classes;
        build_upsample_taps(H, W, fh, fw);
        logits_full_.resize(C, static_cast<Eigen::Index>(H) * W);
        for (int y = 0; y < H; ++y) {
            const int y0 = up_y0_[static_cast<std::size_t>(y)];
            const int y1 = fh == 1 ? y0 : y0 + 1;
            const S wy = up_wy_[static_cast<std::size_t>(y)];
            for (int x = 0; x < W; ++x) {
                const int x0 = up_x0_[static_cast<std::size_t>(x)];
                const int x1 = fw == 1 ? x0 : x0 + 1;
                const S wx = up_wx_[static_cast<std::size_t>(x)];
                logits_full_.col(static_cast<Eigen::Index>(y) * W + x).noalias() =
                    head.out.col(y0 * fw + x0) * ((S(1) - wy) * (S(1) - wx)) +
                    head.out.col(y0 * fw + x1) * ((S(1) - wy) * wx) +
                    head.out.col(y1 * fw + x0) * (wy * (S(1) - wx)) +
                    head.out.col(y1 * fw + x1) * (wy * wx);
            }
        }
    }

    void softmax_into(Tensor& probs) {
        const int C = arch_.num_classes;
        const int n = probs.h * probs.w;
        for (int j = 0; j < n; ++j) {
            S mx = logits_full_(0, j);
            for (int c = 1; c < C; ++c) mx = std::max(mx, logits_full_(c, j));
            double z = 0.0;
            for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(logits_full_(c, j) - mx));
            for (int c = 0; c < C; ++c)
                probs.v[static_cast<std::size_t>(c) * n + j] =
                    static_cast<float>(std::exp(static_cast<double>(logits_full_(c, j) - mx)) / z);
        }
    }

    Tensor features_tensor() const {
        const StageState& enc = st_[static_cast<std::size_t>(n_encoder_ - 1)];
        Tensor f(arch_.feature_dim(), enc.oh, enc.ow);
        const int n = enc.oh * enc.ow;
        for (int d = 0; d < f.c; ++d)
            for (int j = 0; j < n; ++j)
                f.v[static_cast<std::size_t>(d) * n + j] = static_cast<float>(enc.out(d, j));
        return f;
    }

    void run_backward(const Mat& dlogits_full) {
        const Tensor& image = *cur_input_;
        const int H = image.h, W = image.w;
        const StageState& head_st = st_.back();
        const int fh = head_st.oh, fw = head_st.ow;

        // upsample adjoint
        Mat dhead(arch_.num_classes, fh * fw);
        dhead.setZero();
        for (int y = 0; y < H; ++y) {
            const int y0 = up_y0_[static_cast<std::size_t>(y)];
            const int y1 = fh == 1 ? y0 : y0 + 1;
            const S wy = up_wy_[static_cast<std::size_t>(y)];
            for (int x = 0; x < W; ++x) {
                const int x0 = up_x0_[static_cast<std::size_t>(x)];
                const int x1 = fw == 1 ? x0 : x0 + 1;
                const S wx = up_wx_[static_cast<std::size_t>(x)];
                const auto g = dlogits_full.col(static_cast<Eigen::Index>(y) * W + x);
                dhead.col(y0 * fw + x0) += g * ((S(1) - wy) * (S(1) - wx));
                dhead.col(y0 * fw + x1) += g * ((S(1) - wy) * wx);
                dhead.col(y1 * fw + x0) += g * (wy * (S(1) - wx));
                dhead.col(y1 * fw + x1) += g * (wy * wx);
            }
        }

        Mat dout = dhead;
        for (int li = static_cast<int>(convs_.size()) - 1; li >= 0; --li) {
            const ConvDef& c = convs_[static_cast<std::size_t>(li)];
            StageState& s = st_[static_cast<std::size_t>(li)];
            const bool is_head = (li + 1 == static_cast<int>(convs_.size()));
            if (!is_head) {
                // ReLU gate on the stored post-activation
                dout = dout.cwiseProduct((s.out.array() > S(0)).template cast<S>().matrix());
            }
            bias(c, grads_) += dout.rowwise().sum();
            if (c.k == 1) {
                const StageState& prev = st_[static_cast<std::size_t>(li - 1)];
                Eigen::Map<const Mat> x(prev.out.data(), c.cin,
                                        static_cast<Eigen::Index>(s.ih) * s.iw);
                weight(c, grads_) += dout * x.transpose();
                if (li > 0) {
                    Mat dx(c.cin, static_cast<Eigen::Index>(s.ih) * s.iw);
                    dx.noalias() = weight(c, params_).transpose() * dout;
                    dout = std::move(dx);
                }
            } else {
                weight(c, grads_) += dout * s.col.transpose();
                if (li > 0) {
                    Mat dcol(c.cin * c.k * c.k, static_cast<Eigen::Index>(s.oh) * s.ow);
                    dcol.noalias() = weight(c, params_).transpose() * dout;
                    Mat dx(c.cin, static_cast<Eigen::Index>(s.ih) * s.iw);
                    dx.setZero();
                    col2im_add(dcol, c.cin, s.ih, s.iw, c, dx.data(), s.oh, s.ow);
                    dout = std::move(dx);
                }
            }
        }
        cur_input_ = nullptr;
    }
};

}  // namespace cmtda
