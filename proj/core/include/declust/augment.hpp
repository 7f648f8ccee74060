#pragma once

#include <cstdint>

#include "declust/tensor.hpp"

namespace declust {

/// Two-view augmentation pipeline: random resized crop, horizontal flip,
/// color jitter, grayscale, Gaussian blur.
struct AugmentConfig {
    double crop_scale_min = 0.08;
    double crop_scale_max = 1.0;
    double crop_aspect_min = 3.0 / 4.0;
    double crop_aspect_max = 4.0 / 3.0;
    double flip_p = 0.5;
    double grayscale_p = 0.2;
    double jitter_p = 0.8;
    double jitter_brightness = 0.4;
    double jitter_contrast = 0.4;
    double jitter_saturation = 0.4;
    double jitter_hue = 0.1;
    double blur_p = 0.5;
    double blur_kernel_frac = 0.10;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;

    void validate() const;
};

/// Applies the pipeline in order: random resized crop (bilinear resize back
/// to the input size) -> horizontal flip -> color jitter
/// (brightness -> contrast -> saturation -> hue) -> grayscale -> Gaussian
/// blur (odd kernel, symmetric padding). Fully determined by (img, cfg, seed).
/// Strength u means a factor uniform in [1-u, 1+u]; hue shifts by a uniform
/// fraction in [-u, u] of the hue circle. Saturation/hue/grayscale act on
/// RGB semantics and are skipped for non-3-channel images.
Tensor augment_image(const Tensor& img, const AugmentConfig& cfg, std::uint64_t seed);

/// Vector analogue for blob datasets: additive Gaussian noise, then
/// coordinate zeroing with probability drop_p.
Tensor augment_vector(const Tensor& v, double noise_sigma, double drop_p, std::uint64_t seed);

}  // namespace declust
