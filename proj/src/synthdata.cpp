#include "cmtda/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmtda/image_io.hpp"

namespace fs = std::filesystem;

namespace cmtda {
namespace {

void paint_rect(LabeledImage& im, int y0, int x0, int h, int w, const float rgb[3],
                std::uint8_t cls) {
    y0 = std::max(y0, 0);
    x0 = std::max(x0, 0);
    const int y1 = std::min(y0 + h, im.image.h);
    const int x1 = std::min(x0 + w, im.image.w);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) im.image.at(c, y, x) = rgb[c];
            im.labels.at(y, x) = cls;
        }
}

void paint_ellipse(LabeledImage& im, double cy, double cx, double ry, double rx,
                   const float rgb[3], std::uint8_t cls) {
    const int y0 = std::max(0, static_cast<int>(cy - ry));
    const int y1 = std::min(im.image.h - 1, static_cast<int>(cy + ry));
    const int x0 = std::max(0, static_cast<int>(cx - rx));
    const int x1 = std::min(im.image.w - 1, static_cast<int>(cx + rx));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = (y - cy) / ry, dx = (x - cx) / rx;
            if (dy * dy + dx * dx > 1.0) continue;
            for (int c = 0; c < 3; ++c) im.image.at(c, y, x) = rgb[c];
            im.labels.at(y, x) = cls;
        }
}

float luminance(const Tensor& img, int y, int x) {
    return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
}

}  // namespace

LabeledImage generate_scene(const SceneSpec& spec, Rng& rng) {
    const int H = spec.image_size, W = spec.image_size;
    LabeledImage im{Tensor(3, H, W), LabelMap(H, W, kSky)};

    const int horizon = static_cast<int>(H * rng.uniform(0.38, 0.52));

    // sky gradient
    const float sky_top[3] = {static_cast<float>(0.50 + 0.12 * rng.uniform()),
                              static_cast<float>(0.66 + 0.10 * rng.uniform()),
                              static_cast<float>(0.88 + 0.08 * rng.uniform())};
    const float sky_hor[3] = {0.78f, 0.82f, 0.88f};
    for (int y = 0; y < horizon; ++y) {
        const float t = static_cast<float>(y) / std::max(1, horizon - 1);
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                im.image.at(c, y, x) = sky_top[c] * (1.f - t) + sky_hor[c] * t;
    }

    // road with a mild vertical gradient and a dashed center line
    const float road_base = static_cast<float>(0.28 + 0.10 * rng.uniform());
    for (int y = horizon; y < H; ++y) {
        const float t = static_cast<float>(y - horizon) / std::max(1, H - 1 - horizon);
        const float v = road_base * (0.85f + 0.3f * t);
        for (int x = 0; x < W; ++x) {
            im.image.at(0, y, x) = v;
            im.image.at(1, y, x) = v;
            im.image.at(2, y, x) = v * 1.04f;
            im.labels.at(y, x) = kRoad;
        }
    }
    {
        const int cx = W / 2 + rng.uniform_int(-W / 8, W / 8);
        for (int y = horizon + 4; y < H; y += 8)
            for (int yy = y; yy < std::min(y + 4, H); ++yy)
                for (int x = std::max(0, cx - 1); x < std::min(W, cx + 1); ++x)
                    if (im.labels.at(yy, x) == kRoad)
                        for (int c = 0; c < 3; ++c) im.image.at(c, yy, x) = 0.78f;
    }

    // buildings sit on the horizon
    const int nb = rng.uniform_int(2, 4);
    for (int i = 0; i < nb; ++i) {
        const int bw = static_cast<int>(W * rng.uniform(0.12, 0.30));
        const int bh = static_cast<int>(H * rng.uniform(0.16, 0.42));
        const int bx = rng.uniform_int(-bw / 3, W - 2 * bw / 3);
        const double pal = rng.uniform();
        float col[3];
        if (pal < 0.34) {
            col[0] = 0.62f; col[1] = 0.50f; col[2] = 0.40f;  // tan
        } else if (pal < 0.67) {
            col[0] = 0.55f; col[1] = 0.33f; col[2] = 0.28f;  // brick
        } else {
            col[0] = 0.52f; col[1] = 0.54f; col[2] = 0.58f;  // concrete
        }
        const float jit = static_cast<float>(rng.uniform(-0.08, 0.08));
        for (float& c : col) c = std::clamp(c + jit, 0.05f, 0.95f);
        paint_rect(im, horizon - bh, bx, bh, bw, col, kBuilding);
        // lit window texture, never road-gray
        const float win[3] = {0.82f, 0.74f, 0.45f};
        for (int wy = horizon - bh + 3; wy < horizon - 2; wy += 6)
            for (int wx = bx + 2; wx < bx + bw - 2; wx += 5)
                paint_rect(im, wy, wx, 2, 2, win, kBuilding);
    }

    // vegetation blobs near the horizon, in front of buildings
    const int nv = rng.uniform_int(1, 3);
    for (int i = 0; i < nv; ++i) {
        const double ry = H * rng.uniform(0.07, 0.16);
        const double rx = W * rng.uniform(0.08, 0.18);
        const double cy = horizon - ry * rng.uniform(0.1, 0.8);
        const double cx = W * rng.uniform(0.05, 0.95);
        float col[3] = {static_cast<float>(0.12 + 0.10 * rng.uniform()),
                        static_cast<float>(0.38 + 0.18 * rng.uniform()),
                        static_cast<float>(0.12 + 0.10 * rng.uniform())};
        paint_ellipse(im, cy, cx, ry, rx, col, kVegetation);
    }

    // vehicles on the road, nearer ones bigger
    const int nveh = rng.uniform_int(2, 3);
    for (int i = 0; i < nveh; ++i) {
        const double depth = rng.uniform(0.2, 0.9);  // 0 = horizon, 1 = camera
        const int vy = horizon + static_cast<int>((H - 1 - horizon) * depth);
        const int vw = static_cast<int>(W * (0.13 + 0.19 * depth));
        const int vh = static_cast<int>(vw * 0.55);
        const int vx = rng.uniform_int(0, std::max(1, W - vw));
        const double pal = rng.uniform();
        float col[3];
        if (pal < 0.25) {
            col[0] = 0.75f; col[1] = 0.16f; col[2] = 0.14f;
        } else if (pal < 0.5) {
            col[0] = 0.16f; col[1] = 0.25f; col[2] = 0.68f;
        } else if (pal < 0.75) {
            col[0] = 0.88f; col[1] = 0.88f; col[2] = 0.88f;
        } else {
            col[0] = 0.14f; col[1] = 0.14f; col[2] = 0.16f;
        }
        paint_rect(im, vy - vh, vx, vh, vw, col, kVehicle);
    }

    // texture noise
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float& p = im.image.at(c, y, x);
                p = std::clamp(
                    p + spec.noise_amp * static_cast<float>(rng.uniform(-1.0, 1.0)), 0.f, 1.f);
            }
    return im;
}

WeatherKind weather_kind_from_tag(const std::string& tag) {
    if (tag == "night") return WeatherKind::night;
    if (tag == "rain") return WeatherKind::rain;
    if (tag == "fog") return WeatherKind::fog;
    if (tag == "snow") return WeatherKind::snow;
    throw ConfigError("unknown weather kind: " + tag);
}

std::string weather_tag(WeatherKind kind) {
    switch (kind) {
        case WeatherKind::night: return "night";
        case WeatherKind::rain: return "rain";
        case WeatherKind::fog: return "fog";
        case WeatherKind::snow: return "snow";
    }
    throw ConfigError("unknown weather kind");
}

Tensor apply_weather(const Tensor& image, const WeatherSpec& spec, Rng& rng) {
    if (spec.severity < 0.0 || spec.severity > 1.0)
        throw ConfigError("apply_weather: severity outside [0,1]");
    if (spec.severity == 0.0) return image;
    const int H = image.h, W = image.w;
    const float sev = static_cast<float>(spec.severity);
    Tensor out = image;

    switch (spec.kind) {
        case WeatherKind::fog: {
            // depth proxy: sky rows far, road rows fade toward the camera
            const int horizon = static_cast<int>(0.45 * H);
            for (int y = 0; y < H; ++y) {
                float depth = 1.f;
                if (y >= horizon)
                    depth = 1.f + (spec.fog_near_depth - 1.f) * static_cast<float>(y - horizon) /
                                      std::max(1, H - 1 - horizon);
                const float t = std::exp(-spec.fog_density * sev * depth);
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < 3; ++c)
                        out.at(c, y, x) =
                            out.at(c, y, x) * t + spec.fog_airlight[c] * (1.f - t);
            }
            break;
        }
        case WeatherKind::night: {
            const float gamma = 1.f + spec.night_gamma * sev;
            const float scale = 1.f - spec.night_dim * sev;
            const float tint[3] = {1.f - 0.22f * sev, 1.f - 0.10f * sev, 1.f};
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        float v = std::pow(std::max(out.at(c, y, x), 0.f), gamma) * scale * tint[c];
                        out.at(c, y, x) = v;
                    }
            const float ns = spec.night_noise * sev;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        out.at(c, y, x) += ns * static_cast<float>(rng.normal());
            break;
        }
        case WeatherKind::rain: {
            // overcast dimming + the same additive airlight veil as fog
            const float veil = spec.rain_veil * sev;
            const float dim = 1.f - spec.rain_dim * sev;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        out.at(c, y, x) =
                            out.at(c, y, x) * dim * (1.f - veil) + spec.fog_airlight[c] * veil;
            const int n = static_cast<int>(spec.rain_streaks * sev * (static_cast<double>(H) * W) /
                                           (128.0 * 128.0));
            const double angle =
                (spec.rain_angle_deg + rng.uniform(-6.0, 6.0)) * 3.14159265358979 / 180.0;
            const double dy = std::sin(angle), dx = std::cos(angle);
            for (int i = 0; i < n; ++i) {
                double y = rng.uniform(0.0, H - 1.0);
                double x = rng.uniform(0.0, W - 1.0);
                const int len = rng.uniform_int(8, 18);
                const float bright = static_cast<float>(rng.uniform(0.75, 0.95));
                for (int t = 0; t < len; ++t) {
                    const int yi = static_cast<int>(y), xi = static_cast<int>(x);
                    if (yi < 0 || yi >= H || xi < 0 || xi >= W) break;
                    for (int xw = xi; xw < std::min(xi + 2, W); ++xw)
                        for (int c = 0; c < 3; ++c)
                            out.at(c, yi, xw) = out.at(c, yi, xw) * 0.35f + 0.65f * bright;
                    y += dy;
                    x += dx;
                }
            }
            break;
        }
        case WeatherKind::snow: {
            const float veil = spec.snow_veil * sev;
            const float white[3] = {0.92f, 0.92f, 0.94f};
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const float g = luminance(out, y, x);
                    for (int c = 0; c < 3; ++c) {
                        float v = out.at(c, y, x);
                        v = v * (1.f - spec.snow_desat * sev) + g * spec.snow_desat * sev;
                        out.at(c, y, x) = v * (1.f - veil) + white[c] * veil;
                    }
                }
            const long nflakes = static_cast<long>(spec.snow_density * sev * H * W / 5.0);
            for (long i = 0; i < nflakes; ++i) {
                const int y = rng.uniform_int(0, H - 1);
                const int x = rng.uniform_int(0, W - 1);
                const int r = rng.uniform_int(1, 2);
                const float b = static_cast<float>(rng.uniform(0.82, 1.0));
                for (int fy = std::max(0, y - r); fy <= std::min(H - 1, y + r); ++fy)
                    for (int fx = std::max(0, x - r); fx <= std::min(W - 1, x + r); ++fx) {
                        const int d2 = (fy - y) * (fy - y) + (fx - x) * (fx - x);
                        if (d2 > r * r) continue;
                        for (int c = 0; c < 3; ++c) out.at(c, fy, fx) = b;
                    }
            }
            break;
        }
    }
    clamp01(out);
    return out;
}

std::vector<const ManifestEntry*> Manifest::select(const std::string& domain,
                                                   const std::string& split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.domain == domain && e.split == split) out.push_back(&e);
    return out;
}

std::vector<std::string> Manifest::target_domains() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (e.domain != "source" && std::find(out.begin(), out.end(), e.domain) == out.end())
            out.push_back(e.domain);
    return out;
}

void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FileMissingError("cannot write manifest: " + path);
    os << "domain\tsplit\timage\tlabel\tseed\n";
    for (const auto& e : m.entries)
        os << e.domain << '\t' << e.split << '\t' << e.image_path << '\t' << e.label_path << '\t'
           << e.seed << '\n';
}

Manifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FileMissingError("cannot open manifest: " + path);
    Manifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    std::string line;
    if (!std::getline(is, line) || line != "domain\tsplit\timage\tlabel\tseed")
        throw FormatError("manifest header mismatch: " + path);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string seed;
        if (!std::getline(ls, e.domain, '\t') || !std::getline(ls, e.split, '\t') ||
            !std::getline(ls, e.image_path, '\t') || !std::getline(ls, e.label_path, '\t') ||
            !std::getline(ls, seed))
            throw FormatError("malformed manifest row: " + line);
        e.seed = std::stoull(seed);
        m.entries.push_back(std::move(e));
    }
    return m;
}

Manifest build_benchmark(const std::string& out_dir, const BenchmarkSpec& spec) {
    const bool existed = fs::exists(out_dir);
    Manifest m;
    m.root = out_dir;
    std::uint64_t counter = 0;

    try {
        fs::create_directories(out_dir);
        SceneSpec scene{spec.image_size, kNumSceneClasses, spec.noise_amp};

        auto emit = [&](const std::string& domain, const std::string& split, int count,
                        bool labeled) {
            fs::create_directories(fs::path(out_dir) / domain / split);
            for (int i = 0; i < count; ++i) {
                const std::uint64_t img_seed = splitmix64(spec.seed ^ (0x51ed2700ULL + counter));
                ++counter;
                Rng rng(img_seed);
                LabeledImage li = generate_scene(scene, rng);
                Tensor img = li.image;
                if (domain != "source") {
                    WeatherSpec w;
                    w.kind = weather_kind_from_tag(domain);
                    w.severity = rng.uniform(spec.severity_lo, spec.severity_hi);
                    img = apply_weather(img, w, rng);
                }
                char name[64];
                std::snprintf(name, sizeof name, "img_%05d.png", i);
                const std::string rel_img = domain + "/" + split + "/" + name;
                write_png_rgb(out_dir + "/" + rel_img, img);
                std::string rel_lab = "-";
                if (labeled) {
                    std::snprintf(name, sizeof name, "lab_%05d.png", i);
                    rel_lab = domain + "/" + split + "/" + name;
                    write_png_labels(out_dir + "/" + rel_lab, li.labels);
                }
                m.entries.push_back({domain, split, rel_img, rel_lab, img_seed});
            }
        };

        emit("source", "train", spec.sizes.source_train, true);
        emit("source", "val", spec.sizes.source_val, true);
        for (const auto& d : spec.domains) {
            emit(d, "train", spec.sizes.target_train, false);
            emit(d, "val", spec.sizes.target_val, true);
        }
        save_manifest(m, out_dir + "/manifest.tsv");
    } catch (...) {
        if (!existed) {
            std::error_code ec;
            fs::remove_all(out_dir, ec);
        }
        throw;
    }
    return m;
}

DatasetView::DatasetView(const Manifest& manifest, const std::string& domain,
                         const std::string& split, bool with_labels)
    : domain_(domain), with_labels_(with_labels) {
    for (const ManifestEntry* e : manifest.select(domain, split)) {
        Item it;
        it.image_path = manifest.root + "/" + e->image_path;
        if (with_labels) {
            if (e->label_path == "-")
                throw ConfigError("split " + domain + "/" + split + " has no labels");
            it.label_path = manifest.root + "/" + e->label_path;
        }
        items_.push_back(std::move(it));
    }
    if (items_.empty()) throw ConfigError("empty dataset selection: " + domain + "/" + split);
}

void DatasetView::ensure(const Item& it) const {
    if (it.loaded) return;
    it.image = read_png_rgb(it.image_path);
    if (with_labels_) it.labels = read_png_labels(it.label_path);
    it.loaded = true;
}

const Tensor& DatasetView::image(int i) const {
    const Item& it = items_.at(static_cast<std::size_t>(i));
    ensure(it);
    return it.image;
}

const LabelMap& DatasetView::labels(int i) const {
    if (!with_labels_) throw ConfigError("dataset view has no labels: " + domain_);
    const Item& it = items_.at(static_cast<std::size_t>(i));
    ensure(it);
    return it.labels;
}

}  // namespace cmtda
