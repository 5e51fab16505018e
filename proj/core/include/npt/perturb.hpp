#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npt/rng.hpp"
#include "npt/tensor.hpp"

namespace npt {

enum class PerturbKind { Elastic, Occlusion, GaussianNoise, Wave, Saturation, Blur };

inline constexpr PerturbKind kAllPerturbKinds[] = {
    PerturbKind::Elastic,   PerturbKind::Occlusion,  PerturbKind::GaussianNoise,
    PerturbKind::Wave,      PerturbKind::Saturation, PerturbKind::Blur,
};

PerturbKind perturb_kind_from_string(const std::string& name);
std::string to_string(PerturbKind kind);
char kind_letter(PerturbKind kind);

// One master severity dial s per kind. Kind-specific parameters derive from it
// at fixed ratios: elastic alpha = s, occlusion radius = s*min(H,W)/2,
// noise sigma = s, wave amplitude = s*W/10, saturation blend = 1-s, blur
// sigma = s. Severity 0 is the identity map for every kind, bit for bit.
struct PerturbationSpec {
    PerturbKind kind = PerturbKind::GaussianNoise;
    float severity = 0.0f;
    float randomization_width = 0.5f;  // per-image jitter, in [0,1)

    float elastic_sigma = 2.0f;       // displacement-field smoothing, pixels
    float occlusion_thickness = 6.0f; // ring thickness, pixels
    float wave_frequency = 1.0f;      // cycles per image height
};

// Per-image realization: everything random about one image's perturbation,
// fully determined by (base_seed, image_index).
struct PerImageDraw {
    std::uint64_t seed = 0;
    float severity = 0.0f;
    float occ_cx = 0.0f;
    float occ_cy = 0.0f;
};

PerImageDraw make_draw(const PerturbationSpec& spec, int height, int width,
                       std::uint64_t base_seed, int image_index);

// Dispatch to the kind-specific operator with the realized parameters.
// `image` is (C,H,W) with values in [0,1]; output has the same shape.
Tensor apply(const PerturbationSpec& spec, const Tensor& image, const PerImageDraw& draw);

// Applies `spec` to every image of an (N,C,H,W) batch with independent
// per-image draws.
Tensor apply_batch(const PerturbationSpec& spec, const Tensor& images, std::uint64_t base_seed);

// Composes several perturbations on each image in a uniformly random,
// seed-deterministic per-image order.
Tensor apply_multi_batch(const std::vector<PerturbationSpec>& specs, const Tensor& images,
                         std::uint64_t base_seed);

// ---- kind-specific operators ------------------------------------------------

// Random Uniform(-1,1) displacement fields, smoothed by a normalized Gaussian
// of std `sigma`, scaled by `alpha`, applied by bilinear resampling with
// reflected boundary. Source coordinates stay within l-inf distance `alpha`.
Tensor elastic(const Tensor& image, float alpha, float sigma, Rng& rng);

// Black ring: zeroes pixels whose distance d from (cx,cy) has |d - r| <= t/2,
// identically across channels. r = 0 and t = 0 is the identity.
Tensor occlusion(const Tensor& image, float cx, float cy, float radius, float thickness);

// i.i.d. additive Gaussian(0, sigma^2) per value, clamped to [0,1].
Tensor gaussian_noise(const Tensor& image, float sigma, Rng& rng);

// Row i is cyclically shifted by round(A * sin(2*pi*w*i/H)) pixels.
Tensor wave(const Tensor& image, float frequency, float amplitude);

// (1-alpha)*gray + alpha*image with ITU-R 601 luminance; alpha=1 is identity.
Tensor saturation(const Tensor& image, float alpha);

// Separable Gaussian filter, kernel radius ceil(3*sigma), renormalized,
// reflected boundary. sigma=0 is the identity.
Tensor blur(const Tensor& image, float sigma);

// Mean squared difference in the 0-255 intensity convention.
double mse(const Tensor& a, const Tensor& b);

}  // namespace npt
