#include "polyper/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "polyper/error.hpp"
#include "polyper/image_io.hpp"

namespace polyper {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
    if (count < 1) throw ConfigError("synth: count must be >= 1");
    if (image_size < 8) throw ConfigError("synth: image_size must be >= 8");
    if (blobs_min < 1 || blobs_max < blobs_min) throw ConfigError("synth: bad blob count range");
    if (!(proportion_lo > 0.0 && proportion_hi <= 0.5 && proportion_lo <= proportion_hi))
        throw ConfigError("synth: proportion range must lie in (0, 0.5]");
    if (blur_lo < 0.0 || blur_hi < blur_lo) throw ConfigError("synth: bad blur range");
    if (contrast_lo < 0.0 || contrast_hi > 1.0 || contrast_hi < contrast_lo)
        throw ConfigError("synth: contrast range must lie in [0, 1]");
    if (noise < 0.0) throw ConfigError("synth: noise must be >= 0");
}

Tensor<double> gaussian_blur(const Tensor<double>& field, double sigma) {
    if (sigma <= 0.0) return field;
    const int h = field.shape[0], w = field.shape[1];
    const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        kernel[i + half] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + half];
    }
    for (auto& k : kernel) k /= sum;

    Tensor<double> tmp({h, w}), out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i)
                acc += kernel[i + half] * field.at(y, std::clamp(x + i, 0, w - 1));
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i)
                acc += kernel[i + half] * tmp.at(std::clamp(y + i, 0, h - 1), x);
            out.at(y, x) = acc;
        }
    return out;
}

namespace {

/// One perturbed ellipse; a point is inside when its normalized radius is
/// under the angular perturbation profile.
struct Blob {
    double cx, cy;       // center in pixels
    double rx, ry;       // base radii at scale 1
    double rot;          // rotation
    double wob_amp[3];   // cosine perturbation amplitudes (harmonics 2..4)
    double wob_phase[3];

    bool contains(double x, double y, double scale) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(rot), s = std::sin(rot);
        const double u = (dx * c + dy * s) / (rx * scale);
        const double v = (-dx * s + dy * c) / (ry * scale);
        const double r = std::sqrt(u * u + v * v);
        const double phi = std::atan2(v, u);
        double lim = 1.0;
        for (int k = 0; k < 3; ++k) lim += wob_amp[k] * std::cos((k + 2) * phi + wob_phase[k]);
        return r <= lim;
    }
};

BinaryMask render(const std::vector<Blob>& blobs, int size, double scale) {
    BinaryMask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            for (const Blob& b : blobs)
                if (b.contains(x + 0.5, y + 0.5, scale)) {
                    m.set(y, x, true);
                    break;
                }
        }
    return m;
}

/// Shrink or grow all blobs together until the rendered area fraction hits
/// the target. Area is monotone in the shared scale, so bisection converges.
BinaryMask render_at_proportion(const std::vector<Blob>& blobs, int size, double target) {
    double lo = 0.02, hi = 1.0;
    const double total = static_cast<double>(size) * size;
    while (render(blobs, size, hi).popcount() / total < target && hi < 16.0) hi *= 1.5;
    for (int it = 0; it < 28; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (render(blobs, size, mid).popcount() / total < target)
            lo = mid;
        else
            hi = mid;
    }
    return render(blobs, size, hi);
}

}  // namespace

std::vector<Sample> generate_synth(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int n = spec.image_size;
    std::vector<Sample> out;
    out.reserve(spec.count);

    const bool can_force_small = spec.proportion_lo < 0.06;
    for (int idx = 0; idx < spec.count; ++idx) {
        const bool force_small = can_force_small && idx % 3 == 0;
        const double hi = force_small ? std::min(spec.proportion_hi, 0.055) : spec.proportion_hi;
        const double target = rng.uniform(spec.proportion_lo, hi);

        const int blob_count = rng.uniform_int(spec.blobs_min, spec.blobs_max);
        std::vector<Blob> blobs(blob_count);
        for (Blob& b : blobs) {
            b.cx = rng.uniform(0.2 * n, 0.8 * n);
            b.cy = rng.uniform(0.2 * n, 0.8 * n);
            const double aspect = rng.uniform(0.6, 1.6);
            b.rx = 0.25 * n * aspect;
            b.ry = 0.25 * n / aspect;
            b.rot = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            for (int k = 0; k < 3; ++k) {
                b.wob_amp[k] = rng.uniform(-0.12, 0.12);
                b.wob_phase[k] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            }
        }
        Sample s;
        s.mask = render_at_proportion(blobs, n, target);

        const double contrast = rng.uniform(spec.contrast_lo, spec.contrast_hi);
        const double blur = rng.uniform(spec.blur_lo, spec.blur_hi);
        const double bg = 0.5 - 0.5 * contrast;
        const double fg = 0.5 + 0.5 * contrast;
        Tensor<double> field({n, n});
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) field.at(y, x) = s.mask.at(y, x) ? fg : bg;
        field = gaussian_blur(field, blur);

        s.image = TensorF({3, n, n});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const double v = field.at(y, x) + rng.uniform(-spec.noise, spec.noise);
                    s.image.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth_%04d", idx);
        s.id = buf;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> load_folder(const std::string& images_dir, const std::string& masks_dir,
                                int target_size) {
    if (!fs::is_directory(images_dir)) throw DataError("images directory not found: " + images_dir);
    if (!fs::is_directory(masks_dir)) throw DataError("masks directory not found: " + masks_dir);
    const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp"};

    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(images_dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (exts.count(ext)) images.push_back(e.path());
    }
    std::sort(images.begin(), images.end());

    std::vector<Sample> out;
    out.reserve(images.size());
    for (const auto& img_path : images) {
        const std::string stem = img_path.stem().string();
        fs::path mask_path;
        for (const auto& ext : exts) {
            fs::path cand = fs::path(masks_dir) / (stem + ext);
            if (fs::exists(cand)) {
                mask_path = cand;
                break;
            }
        }
        if (mask_path.empty())
            throw DataError("no mask for image: " + img_path.string());

        Sample s;
        s.id = stem;
        s.image = load_image_rgb(img_path.string());
        s.mask = load_mask(mask_path.string());
        if (s.image.shape[1] != s.mask.height || s.image.shape[2] != s.mask.width)
            throw DataError("image/mask size mismatch: " + img_path.string());
        if (target_size > 0) {
            s.image = resize_image(s.image, target_size, target_size);
            s.mask = resize_mask(s.mask, target_size, target_size);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_dataset(const std::string& root, const std::vector<Sample>& samples) {
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "masks");
    for (const Sample& s : samples) {
        save_image_rgb((fs::path(root) / "images" / (s.id + ".png")).string(), s.image);
        save_mask((fs::path(root) / "masks" / (s.id + ".png")).string(), s.mask);
    }
}

Sample flip_sample(const Sample& s, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return s;
    const int h = s.mask.height, w = s.mask.width;
    Sample out;
    out.id = s.id;
    out.image = TensorF({3, h, w});
    out.mask = BinaryMask(h, w);
    for (int y = 0; y < h; ++y) {
        const int sy = vertical ? h - 1 - y : y;
        for (int x = 0; x < w; ++x) {
            const int sx = horizontal ? w - 1 - x : x;
            out.mask.set(y, x, s.mask.at(sy, sx));
            for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = s.image.at(c, sy, sx);
        }
    }
    return out;
}

}  // namespace polyper
