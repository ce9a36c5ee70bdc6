#pragma once

#include <string>
#include <vector>

#include "cmtda/common.hpp"
#include "cmtda/fft.hpp"
#include "cmtda/tensor.hpp"

namespace cmtda {

// Running mean of per-channel DFT amplitude spectra over one domain's
// images. Accumulation is kept in double so the mean is independent of image
// order to well below 1e-6.
class WeatherVector {
  public:
    WeatherVector() = default;
    WeatherVector(std::string domain_tag, int channels, int h, int w)
        : domain_tag_(std::move(domain_tag)), c_(channels), h_(h), w_(w),
          sum_(static_cast<std::size_t>(channels) * h * w, 0.0) {}

    const std::string& domain_tag() const { return domain_tag_; }
    long n_samples() const { return n_; }
    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }

    // Mean amplitude (C,H,W); requires n_samples >= 1.
    Tensor mean_amplitude() const;

    void add_amplitude(const Tensor& amplitude);

    void save(const std::string& path) const;
    static WeatherVector load(const std::string& path);

  private:
    std::string domain_tag_;
    int c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> sum_;
    long n_ = 0;
};

// Folds one image of canonical size into the running amplitude mean.
// The caller resizes the image to the vector's canonical size first.
void accumulate_weather(WeatherVector& vec, const Tensor& image);

// Random-volume and random-segment parameters for composition.
struct ComposeParams {
    double sigma_lo = 0.2, sigma_hi = 1.2;
    double area_lo = 1.0 / 3.0, area_hi = 0.5;  // fraction of image area
    double aspect_lo = 0.5, aspect_hi = 2.0;
};

struct ComposeResult {
    Tensor image;              // composed image, clipped to [0,1]
    int rect_y0 = 0, rect_x0 = 0, rect_h = 0, rect_w = 0;  // replaced segment
};

// Injects a stored weather amplitude into a random rectangle of the image:
// inside the rectangle the pixel becomes iFT(phase(image), sigma * amplitude),
// outside it is passed through untouched. Draw order from `rng`: sigma, area,
// aspect, y0, x0.
ComposeResult compose(const Tensor& image, const WeatherVector& vec, const ComposeParams& params,
                      Rng& rng);

// Applies compose once per stored vector, in order, each with fresh draws
// from `rng`. An empty list is the identity.
Tensor replay_all(const Tensor& image, const std::vector<const WeatherVector*>& vectors,
                  const ComposeParams& params, Rng& rng);

}  // namespace cmtda
