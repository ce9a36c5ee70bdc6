#pragma once

#include <string>
#include <vector>

#include "cmtda/common.hpp"
#include "cmtda/tensor.hpp"

namespace cmtda {

// Class ids of the synthetic street scenes.
enum SceneClass : std::uint8_t { kSky = 0, kRoad = 1, kBuilding = 2, kVehicle = 3, kVegetation = 4 };
constexpr int kNumSceneClasses = 5;

struct LabeledImage {
    Tensor image;   // (3,H,W) in [0,1]
    LabelMap labels;
};

struct SceneSpec {
    int image_size = 128;
    int num_classes = kNumSceneClasses;
    float noise_amp = 0.03f;
};

// Layered geometric street scene: sky band, road, building blocks on the
// horizon, vegetation blobs, vehicle boxes; label map painted in lockstep.
LabeledImage generate_scene(const SceneSpec& spec, Rng& rng);

enum class WeatherKind { night, rain, fog, snow };

WeatherKind weather_kind_from_tag(const std::string& tag);
std::string weather_tag(WeatherKind kind);

struct WeatherSpec {
    WeatherKind kind = WeatherKind::fog;
    double severity = 1.0;  // 0 = untouched clear image

    // fog: airlight blend along a row-depth proxy (sky far, road near);
    // rain reuses the same additive airlight as its veiling term.
    float fog_airlight[3] = {0.78f, 0.80f, 0.84f};
    float fog_density = 1.5f;
    float fog_near_depth = 0.35f;

    float night_gamma = 1.2f;    // extra exponent at severity 1
    float night_dim = 0.50f;
    float night_noise = 0.03f;

    int rain_streaks = 700;      // at severity 1, per 128x128
    float rain_veil = 0.26f;
    float rain_dim = 0.38f;      // overcast: rain scenes sit well below snow
    float rain_angle_deg = 78.f; // from horizontal, +-6 deg per image

    float snow_density = 0.10f;  // flake centers per 5 px // speckle fraction at severity 1
    float snow_desat = 0.40f;
    float snow_veil = 0.30f;
};

// Kind-specific degradation of a clear image; labels are never touched and
// the output stays in [0,1]. severity == 0 returns the input unchanged.
Tensor apply_weather(const Tensor& image, const WeatherSpec& spec, Rng& rng);

struct ManifestEntry {
    std::string domain;      // "source", "night", ...
    std::string split;       // "train" / "val"
    std::string image_path;  // relative to the manifest directory
    std::string label_path;  // "-" when unlabeled
    std::uint64_t seed = 0;
};

struct Manifest {
    std::string root;  // directory holding the manifest file
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> select(const std::string& domain,
                                             const std::string& split) const;
    std::vector<std::string> target_domains() const;  // everything but source, in first-seen order
};

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

struct DatasetSizes {
    int source_train = 400;
    int source_val = 100;
    int target_train = 200;
    int target_val = 50;
};

struct BenchmarkSpec {
    std::uint64_t seed = 7;
    int image_size = 128;
    float noise_amp = 0.03f;
    DatasetSizes sizes;
    std::vector<std::string> domains = {"night", "rain", "fog", "snow"};
    double severity_lo = 0.35;
    double severity_hi = 0.85;
};

// Writes the labeled source splits and the four weather target domains
// (train unlabeled, val labeled) plus manifest.tsv under out_dir. Partial
// output is removed if generation fails. Returns the manifest.
Manifest build_benchmark(const std::string& out_dir, const BenchmarkSpec& spec);

// Images decoded once and kept; labels optional (target train is unlabeled).
class DatasetView {
  public:
    DatasetView(const Manifest& manifest, const std::string& domain, const std::string& split,
                bool with_labels);

    int size() const { return static_cast<int>(items_.size()); }
    const std::string& domain() const { return domain_; }
    const Tensor& image(int i) const;
    const LabelMap& labels(int i) const;
    bool has_labels() const { return with_labels_; }

  private:
    struct Item {
        std::string image_path, label_path;
        mutable bool loaded = false;
        mutable Tensor image;
        mutable LabelMap labels;
    };
    void ensure(const Item& it) const;

    std::string domain_;
    bool with_labels_;
    std::vector<Item> items_;
};

}  // namespace cmtda
