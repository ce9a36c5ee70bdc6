#include "cmtda/weather.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cmtda/container.hpp"

namespace cmtda {

Tensor WeatherVector::mean_amplitude() const {
    if (n_ < 1) throw ConfigError("WeatherVector: no samples accumulated");
    Tensor amp(c_, h_, w_);
    const double inv = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < sum_.size(); ++i) amp.v[i] = static_cast<float>(sum_[i] * inv);
    return amp;
}

void WeatherVector::add_amplitude(const Tensor& amplitude) {
    if (amplitude.c != c_ || amplitude.h != h_ || amplitude.w != w_)
        throw ShapeError("WeatherVector: amplitude size mismatch");
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += static_cast<double>(amplitude.v[i]);
    ++n_;
}

void WeatherVector::save(const std::string& path) const {
    std::vector<std::pair<std::string, std::string>> fields;
    fields.emplace_back("domain_tag", domain_tag_);
    fields.emplace_back("n_samples", std::to_string(n_));
    fields.emplace_back("channels", std::to_string(c_));
    fields.emplace_back("height", std::to_string(h_));
    fields.emplace_back("width", std::to_string(w_));
    const Tensor amp = mean_amplitude();
    write_container(path, "WVEC", fields, amp.v.data(), amp.v.size() * sizeof(float));
}

WeatherVector WeatherVector::load(const std::string& path) {
    Container c = read_container(path, "WVEC");
    WeatherVector v(c.fields.at("domain_tag"), std::stoi(c.fields.at("channels")),
                    std::stoi(c.fields.at("height")), std::stoi(c.fields.at("width")));
    const long n = std::stol(c.fields.at("n_samples"));
    if (n < 1) throw FormatError("weather vector without samples: " + path);
    if (c.payload.size() != v.sum_.size() * sizeof(float))
        throw FormatError("weather vector payload size mismatch: " + path);
    // The file stores the mean; reconstruct an equivalent sum.
    const float* mean = reinterpret_cast<const float*>(c.payload.data());
    for (std::size_t i = 0; i < v.sum_.size(); ++i)
        v.sum_[i] = static_cast<double>(mean[i]) * static_cast<double>(n);
    v.n_ = n;
    return v;
}

void accumulate_weather(WeatherVector& vec, const Tensor& image) {
    if (image.c != vec.channels() || image.h != vec.height() || image.w != vec.width())
        throw ShapeError("accumulate_weather: image not at canonical size");
    vec.add_amplitude(amplitude_of(image).amplitude);
}

ComposeResult compose(const Tensor& image, const WeatherVector& vec, const ComposeParams& params,
                      Rng& rng) {
    if (image.h < 8 || image.w < 8) throw ShapeError("compose: image smaller than 8px per side");

    const double sigma = rng.uniform(params.sigma_lo, params.sigma_hi);
    const double area = rng.uniform(params.area_lo, params.area_hi) *
                        static_cast<double>(image.h) * image.w;
    const double aspect = rng.uniform(params.aspect_lo, params.aspect_hi);  // w/h
    int rw = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    int rh = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    rw = std::min(std::max(rw, 1), image.w);
    rh = std::min(std::max(rh, 1), image.h);
    const int y0 = rng.uniform_int(0, image.h - rh);
    const int x0 = rng.uniform_int(0, image.w - rw);

    Tensor amp = vec.mean_amplitude();
    if (amp.h != image.h || amp.w != image.w) amp = resize_bilinear(amp, image.h, image.w);
    for (float& a : amp.v) a = static_cast<float>(a * sigma);

    const Spectrum sp = amplitude_of(image);
    Tensor stylized = inverse_of(amp, sp.phase);
    clamp01(stylized);

    ComposeResult out{image, y0, x0, rh, rw};
    for (int ch = 0; ch < image.c; ++ch)
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) out.image.at(ch, y, x) = stylized.at(ch, y, x);
    return out;
}

Tensor replay_all(const Tensor& image, const std::vector<const WeatherVector*>& vectors,
                  const ComposeParams& params, Rng& rng) {
    Tensor out = image;
    for (const WeatherVector* v : vectors) out = compose(out, *v, params, rng).image;
    return out;
}

}  // namespace cmtda
