#include "cmtda/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <vector>

namespace cmtda {
namespace {

// FFTW plans are reused per (h, w, direction). Plans are created with
// FFTW_ESTIMATE so planning never benchmarks (keeps results reproducible) and
// executed on the cached buffers. std::complex<double> is layout-compatible
// with fftw_complex.
struct PlanSlot {
    fftw_plan plan = nullptr;
    std::vector<std::complex<double>> in, out;
};

class PlanCache {
  public:
    PlanSlot& get(int h, int w, int sign) {
        const auto key = std::make_tuple(h, w, sign);
        auto it = slots_.find(key);
        if (it != slots_.end()) return it->second;
        PlanSlot& s = slots_[key];
        s.in.resize(static_cast<std::size_t>(h) * w);
        s.out.resize(static_cast<std::size_t>(h) * w);
        s.plan = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(s.in.data()),
                                  reinterpret_cast<fftw_complex*>(s.out.data()), sign,
                                  FFTW_ESTIMATE);
        return s;
    }

    ~PlanCache() {
        for (auto& [k, s] : slots_)
            if (s.plan) fftw_destroy_plan(s.plan);
    }

  private:
    std::map<std::tuple<int, int, int>, PlanSlot> slots_;
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

}  // namespace

Spectrum amplitude_of(const Tensor& image) {
    for (float x : image.v)
        if (!std::isfinite(x)) throw ShapeError("amplitude_of: non-finite pixel value");
    Spectrum sp{Tensor(image.c, image.h, image.w), Tensor(image.c, image.h, image.w)};
    PlanSlot& s = cache().get(image.h, image.w, FFTW_FORWARD);
    const std::size_t n = static_cast<std::size_t>(image.h) * image.w;
    for (int ch = 0; ch < image.c; ++ch) {
        const float* src = image.plane(ch);
        for (std::size_t i = 0; i < n; ++i) s.in[i] = {static_cast<double>(src[i]), 0.0};
        fftw_execute(s.plan);
        float* amp = sp.amplitude.plane(ch);
        float* ph = sp.phase.plane(ch);
        for (std::size_t i = 0; i < n; ++i) {
            amp[i] = static_cast<float>(std::hypot(s.out[i].real(), s.out[i].imag()));
            ph[i] = static_cast<float>(std::atan2(s.out[i].imag(), s.out[i].real()));
        }
    }
    return sp;
}

Tensor inverse_of(const Tensor& amplitude, const Tensor& phase) {
    if (!amplitude.same_shape(phase)) throw ShapeError("inverse_of: amplitude/phase shape mismatch");
    Tensor img(amplitude.c, amplitude.h, amplitude.w);
    PlanSlot& s = cache().get(amplitude.h, amplitude.w, FFTW_BACKWARD);
    const std::size_t n = static_cast<std::size_t>(amplitude.h) * amplitude.w;
    const double scale = 1.0 / static_cast<double>(n);
    for (int ch = 0; ch < amplitude.c; ++ch) {
        const float* amp = amplitude.plane(ch);
        const float* ph = phase.plane(ch);
        for (std::size_t i = 0; i < n; ++i)
            s.in[i] = {static_cast<double>(amp[i]) * std::cos(static_cast<double>(ph[i])),
                       static_cast<double>(amp[i]) * std::sin(static_cast<double>(ph[i]))};
        fftw_execute(s.plan);
        float* dst = img.plane(ch);
        for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(s.out[i].real() * scale);
    }
    return img;
}

}  // namespace cmtda
