#include "declust/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "declust/rng.hpp"

namespace declust {

void AugmentConfig::validate() const {
    for (double p : {flip_p, grayscale_p, jitter_p, blur_p})
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("AugmentConfig: probabilities must be in [0, 1]");
    if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
        throw std::invalid_argument("AugmentConfig: bad crop scale range");
    if (!(crop_aspect_min > 0.0 && crop_aspect_min <= crop_aspect_max))
        throw std::invalid_argument("AugmentConfig: bad crop aspect range");
    if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max))
        throw std::invalid_argument("AugmentConfig: bad blur sigma range");
    if (!(blur_kernel_frac > 0.0)) throw std::invalid_argument("AugmentConfig: bad blur kernel");
}

namespace {

struct Image {
    std::size_t c, h, w;
    std::vector<double> px;  // (c,h,w) row-major

    double at(std::size_t ch, std::size_t y, std::size_t x) const {
        return px[(ch * h + y) * w + x];
    }
    double& at(std::size_t ch, std::size_t y, std::size_t x) { return px[(ch * h + y) * w + x]; }
};

// Bilinear resize; same-size resize is an exact copy (endpoint-aligned map).
Image resize(const Image& in, std::size_t oh, std::size_t ow) {
    Image out{in.c, oh, ow, std::vector<double>(in.c * oh * ow)};
    for (std::size_t y = 0; y < oh; ++y) {
        double sy = oh > 1 ? static_cast<double>(y) * static_cast<double>(in.h - 1) /
                                 static_cast<double>(oh - 1)
                           : static_cast<double>(in.h - 1) / 2.0;
        std::size_t y0 = static_cast<std::size_t>(sy);
        std::size_t y1 = std::min(y0 + 1, in.h - 1);
        double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < ow; ++x) {
            double sx = ow > 1 ? static_cast<double>(x) * static_cast<double>(in.w - 1) /
                                     static_cast<double>(ow - 1)
                               : static_cast<double>(in.w - 1) / 2.0;
            std::size_t x0 = static_cast<std::size_t>(sx);
            std::size_t x1 = std::min(x0 + 1, in.w - 1);
            double fx = sx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < in.c; ++ch) {
                double top = (1.0 - fx) * in.at(ch, y0, x0) + fx * in.at(ch, y0, x1);
                double bot = (1.0 - fx) * in.at(ch, y1, x0) + fx * in.at(ch, y1, x1);
                out.at(ch, y, x) = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    return out;
}

Image crop(const Image& in, std::size_t y0, std::size_t x0, std::size_t ch_h, std::size_t ch_w) {
    Image out{in.c, ch_h, ch_w, std::vector<double>(in.c * ch_h * ch_w)};
    for (std::size_t ch = 0; ch < in.c; ++ch)
        for (std::size_t y = 0; y < ch_h; ++y)
            for (std::size_t x = 0; x < ch_w; ++x) out.at(ch, y, x) = in.at(ch, y0 + y, x0 + x);
    return out;
}

void random_resized_crop(Image& img, const AugmentConfig& cfg, Rng& rng) {
    std::size_t h = img.h, w = img.w;
    double area = static_cast<double>(h * w);
    std::size_t cw = 0, chh = 0;
    bool found = false;
    for (int attempt = 0; attempt < 10 && !found; ++attempt) {
        double target = area * rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
        double aspect = rng.uniform(cfg.crop_aspect_min, cfg.crop_aspect_max);
        long long tw = std::llround(std::sqrt(target * aspect));
        long long th = std::llround(std::sqrt(target / aspect));
        if (tw >= 1 && th >= 1 && tw <= static_cast<long long>(w) &&
            th <= static_cast<long long>(h)) {
            cw = static_cast<std::size_t>(tw);
            chh = static_cast<std::size_t>(th);
            found = true;
        } else {
            cw = static_cast<std::size_t>(std::clamp<long long>(tw, 1, static_cast<long long>(w)));
            chh = static_cast<std::size_t>(std::clamp<long long>(th, 1, static_cast<long long>(h)));
        }
    }
    std::size_t x0, y0;
    if (found) {
        x0 = static_cast<std::size_t>(rng.below(w - cw + 1));
        y0 = static_cast<std::size_t>(rng.below(h - chh + 1));
    } else {  // degenerate window: clamped center crop
        x0 = (w - cw) / 2;
        y0 = (h - chh) / 2;
    }
    if (cw == w && chh == h && x0 == 0 && y0 == 0) return;  // full-frame crop
    img = resize(crop(img, y0, x0, chh, cw), h, w);
}

void hflip(Image& img) {
    for (std::size_t ch = 0; ch < img.c; ++ch)
        for (std::size_t y = 0; y < img.h; ++y)
            for (std::size_t x = 0; x < img.w / 2; ++x)
                std::swap(img.at(ch, y, x), img.at(ch, y, img.w - 1 - x));
}

// Rec.601 luma for RGB; plain channel mean otherwise.
double pixel_luma(const Image& img, std::size_t y, std::size_t x) {
    if (img.c == 3)
        return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
    double acc = 0.0;
    for (std::size_t ch = 0; ch < img.c; ++ch) acc += img.at(ch, y, x);
    return acc / static_cast<double>(img.c);
}

void color_jitter(Image& img, const AugmentConfig& cfg, Rng& rng) {
    double fb = rng.uniform(1.0 - cfg.jitter_brightness, 1.0 + cfg.jitter_brightness);
    double fc = rng.uniform(1.0 - cfg.jitter_contrast, 1.0 + cfg.jitter_contrast);
    double fs = rng.uniform(1.0 - cfg.jitter_saturation, 1.0 + cfg.jitter_saturation);
    double hue = rng.uniform(-cfg.jitter_hue, cfg.jitter_hue);

    for (double& v : img.px) v *= fb;

    double mean_luma = 0.0;
    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < img.w; ++x) mean_luma += pixel_luma(img, y, x);
    mean_luma /= static_cast<double>(img.h * img.w);
    for (double& v : img.px) v = mean_luma + fc * (v - mean_luma);

    if (img.c != 3) return;  // saturation/hue need RGB semantics

    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < img.w; ++x) {
            double luma = pixel_luma(img, y, x);
            for (std::size_t ch = 0; ch < 3; ++ch)
                img.at(ch, y, x) = luma + fs * (img.at(ch, y, x) - luma);
        }

    // hue rotation in YIQ space (linear, range-agnostic)
    double theta = hue * 2.0 * std::numbers::pi;
    double cs = std::cos(theta), sn = std::sin(theta);
    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < img.w; ++x) {
            double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
            double yy = 0.299 * r + 0.587 * g + 0.114 * b;
            double ii = 0.596 * r - 0.274 * g - 0.322 * b;
            double qq = 0.211 * r - 0.523 * g + 0.312 * b;
            double i2 = ii * cs - qq * sn;
            double q2 = ii * sn + qq * cs;
            img.at(0, y, x) = yy + 0.956 * i2 + 0.621 * q2;
            img.at(1, y, x) = yy - 0.272 * i2 - 0.647 * q2;
            img.at(2, y, x) = yy - 1.106 * i2 + 1.703 * q2;
        }
}

void to_grayscale(Image& img) {
    if (img.c != 3) return;
    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < img.w; ++x) {
            double luma = pixel_luma(img, y, x);
            for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, y, x) = luma;
        }
}

// symmetric padding: ..., 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
std::size_t mirror(long long i, std::size_t n) {
    long long nn = static_cast<long long>(n);
    if (i < 0) i = -i - 1;
    if (i >= nn) i = 2 * nn - i - 1;
    return static_cast<std::size_t>(std::clamp<long long>(i, 0, nn - 1));
}

void gaussian_blur(Image& img, const AugmentConfig& cfg, Rng& rng) {
    std::size_t side = std::min(img.h, img.w);
    long long ks = std::llround(cfg.blur_kernel_frac * static_cast<double>(side));
    if (ks < 1) ks = 1;
    if (ks % 2 == 0) ks += 1;  // odd kernel for symmetric padding
    double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
    if (ks == 1) return;

    std::size_t k = static_cast<std::size_t>(ks);
    long long r = ks / 2;
    std::vector<double> kernel(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double d = static_cast<double>(static_cast<long long>(i) - r);
        kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += kernel[i];
    }
    for (double& v : kernel) v /= sum;

    Image tmp = img;
    for (std::size_t ch = 0; ch < img.c; ++ch)
        for (std::size_t y = 0; y < img.h; ++y)
            for (std::size_t x = 0; x < img.w; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < k; ++i)
                    acc += kernel[i] *
                           img.at(ch, y, mirror(static_cast<long long>(x + i) - r, img.w));
                tmp.at(ch, y, x) = acc;
            }
    for (std::size_t ch = 0; ch < img.c; ++ch)
        for (std::size_t y = 0; y < img.h; ++y)
            for (std::size_t x = 0; x < img.w; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < k; ++i)
                    acc += kernel[i] *
                           tmp.at(ch, mirror(static_cast<long long>(y + i) - r, img.h), x);
                img.at(ch, y, x) = acc;
            }
}

}  // namespace

Tensor augment_image(const Tensor& img, const AugmentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (img.rank() != 3)
        throw std::invalid_argument("augment_image: expected (C,H,W), got " +
                                    shape_str(img.shape));
    if (img.shape[1] < 4 || img.shape[2] < 4)
        throw std::invalid_argument("augment_image: image must be at least 4x4");

    Image work{img.shape[0], img.shape[1], img.shape[2], img.data};
    Rng rng(seed);
    random_resized_crop(work, cfg, rng);
    if (rng.bernoulli(cfg.flip_p)) hflip(work);
    if (rng.bernoulli(cfg.jitter_p)) color_jitter(work, cfg, rng);
    if (rng.bernoulli(cfg.grayscale_p)) to_grayscale(work);
    if (rng.bernoulli(cfg.blur_p)) gaussian_blur(work, cfg, rng);
    return Tensor(img.shape, std::move(work.px));
}

Tensor augment_vector(const Tensor& v, double noise_sigma, double drop_p, std::uint64_t seed) {
    if (!v.all_finite()) throw std::invalid_argument("augment_vector: non-finite input");
    if (!(noise_sigma >= 0.0) || !(drop_p >= 0.0 && drop_p <= 1.0))
        throw std::invalid_argument("augment_vector: bad noise/drop parameters");
    Rng rng(seed);
    Tensor out = v;
    for (double& x : out.data) x += noise_sigma * rng.normal();
    for (double& x : out.data)
        if (rng.bernoulli(drop_p)) x = 0.0;
    return out;
}

}  // namespace declust
