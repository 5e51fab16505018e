#include "npt/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "npt/common.hpp"

namespace npt {

PerturbKind perturb_kind_from_string(const std::string& name) {
    if (name == "elastic") return PerturbKind::Elastic;
    if (name == "occlusion") return PerturbKind::Occlusion;
    if (name == "gaussian_noise" || name == "noise") return PerturbKind::GaussianNoise;
    if (name == "wave") return PerturbKind::Wave;
    if (name == "saturation") return PerturbKind::Saturation;
    if (name == "blur") return PerturbKind::Blur;
    throw std::invalid_argument("unknown perturbation kind: " + name);
}

std::string to_string(PerturbKind kind) {
    switch (kind) {
        case PerturbKind::Elastic: return "elastic";
        case PerturbKind::Occlusion: return "occlusion";
        case PerturbKind::GaussianNoise: return "gaussian_noise";
        case PerturbKind::Wave: return "wave";
        case PerturbKind::Saturation: return "saturation";
        case PerturbKind::Blur: return "blur";
    }
    throw std::invalid_argument("unknown perturbation kind");
}

char kind_letter(PerturbKind kind) {
    switch (kind) {
        case PerturbKind::Elastic: return 'E';
        case PerturbKind::Occlusion: return 'O';
        case PerturbKind::GaussianNoise: return 'N';
        case PerturbKind::Wave: return 'W';
        case PerturbKind::Saturation: return 'S';
        case PerturbKind::Blur: return 'B';
    }
    throw std::invalid_argument("unknown perturbation kind");
}

namespace {

void check_image(const Tensor& image, const char* op) {
    if (image.shape().size() != 3)
        throw ShapeError(op, image.shape(), Shape{-1, -1, -1});
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

std::vector<float> gaussian_kernel(float sigma) {
    const int radius = static_cast<int>(std::ceil(3.0f * sigma));
    std::vector<float> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * double(i) * double(i) / (double(sigma) * double(sigma)));
        k[i + radius] = static_cast<float>(v);
        sum += v;
    }
    for (float& v : k) v = static_cast<float>(v / sum);
    return k;
}

// Separable convolution of one HxW plane with reflected boundary.
void smooth_plane(std::vector<float>& plane, int h, int w, const std::vector<float>& kernel) {
    const int radius = static_cast<int>(kernel.size() / 2);
    std::vector<float> tmp(plane.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += double(kernel[k + radius]) * plane[y * w + reflect_index(x + k, w)];
            tmp[y * w + x] = static_cast<float>(acc);
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += double(kernel[k + radius]) * tmp[reflect_index(y + k, h) * w + x];
            plane[y * w + x] = static_cast<float>(acc);
        }
    }
}

float bilinear(const float* plane, int h, int w, float sy, float sx) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const float fx = sx - static_cast<float>(x0);
    const float fy = sy - static_cast<float>(y0);
    const int x0r = reflect_index(x0, w), x1r = reflect_index(x0 + 1, w);
    const int y0r = reflect_index(y0, h), y1r = reflect_index(y0 + 1, h);
    const float top = plane[y0r * w + x0r] * (1.0f - fx) + plane[y0r * w + x1r] * fx;
    const float bot = plane[y1r * w + x0r] * (1.0f - fx) + plane[y1r * w + x1r] * fx;
    return top * (1.0f - fy) + bot * fy;
}

}  // namespace

PerImageDraw make_draw(const PerturbationSpec& spec, int height, int width,
                       std::uint64_t base_seed, int image_index) {
    PerImageDraw draw;
    draw.seed = derive_seed(base_seed, "perturb", static_cast<std::uint64_t>(image_index));
    Rng rng(draw.seed);
    const float rw = spec.randomization_width;
    draw.severity = spec.severity * static_cast<float>(rng.uniform(1.0 - rw, 1.0 + rw));
    draw.occ_cx = static_cast<float>(rng.uniform(0.0, double(width - 1)));
    draw.occ_cy = static_cast<float>(rng.uniform(0.0, double(height - 1)));
    return draw;
}

Tensor apply(const PerturbationSpec& spec, const Tensor& image, const PerImageDraw& draw) {
    check_image(image, "apply");
    const float s = draw.severity;
    if (s == 0.0f) return image.detached();
    const int h = image.shape()[1], w = image.shape()[2];
    Rng rng(derive_seed(draw.seed, "op"));
    switch (spec.kind) {
        case PerturbKind::Elastic:
            return elastic(image, s, spec.elastic_sigma, rng);
        case PerturbKind::Occlusion:
            return occlusion(image, draw.occ_cx, draw.occ_cy,
                             s * static_cast<float>(std::min(h, w)) / 2.0f,
                             spec.occlusion_thickness);
        case PerturbKind::GaussianNoise:
            return gaussian_noise(image, s, rng);
        case PerturbKind::Wave:
            return wave(image, spec.wave_frequency, s * static_cast<float>(w) / 10.0f);
        case PerturbKind::Saturation:
            return saturation(image, clamp01f(1.0f - s));
        case PerturbKind::Blur:
            return blur(image, s);
    }
    throw std::invalid_argument("apply: unknown perturbation kind");
}

namespace {

Tensor slice_image(const Tensor& batch, int i) {
    const Shape& s = batch.shape();
    const std::int64_t img = std::int64_t(s[1]) * s[2] * s[3];
    std::vector<float> data(batch.data().begin() + i * img, batch.data().begin() + (i + 1) * img);
    return make_tensor<float>({s[1], s[2], s[3]}, std::move(data), false);
}

void store_image(std::vector<float>& buf, const Tensor& image, int i) {
    const std::int64_t img = image.numel();
    std::copy(image.data().begin(), image.data().end(), buf.begin() + i * img);
}

}  // namespace

Tensor apply_batch(const PerturbationSpec& spec, const Tensor& images, std::uint64_t base_seed) {
    if (images.shape().size() != 4)
        throw ShapeError("apply_batch", images.shape(), Shape{-1, -1, -1, -1});
    const int n = images.shape()[0];
    const int h = images.shape()[2], w = images.shape()[3];
    std::vector<float> out(images.numel());
    for (int i = 0; i < n; ++i) {
        const PerImageDraw draw = make_draw(spec, h, w, base_seed, i);
        const Tensor pert = apply(spec, slice_image(images, i), draw);
        store_image(out, pert, i);
    }
    return make_tensor<float>(images.shape(), std::move(out), false);
}

Tensor apply_multi_batch(const std::vector<PerturbationSpec>& specs, const Tensor& images,
                         std::uint64_t base_seed) {
    if (specs.size() < 2)
        throw std::invalid_argument("apply_multi_batch: needs at least 2 perturbation specs");
    if (images.shape().size() != 4)
        throw ShapeError("apply_multi_batch", images.shape(), Shape{-1, -1, -1, -1});
    const int n = images.shape()[0];
    const int h = images.shape()[2], w = images.shape()[3];
    std::vector<std::uint64_t> spec_seeds(specs.size());
    for (std::size_t k = 0; k < specs.size(); ++k)
        spec_seeds[k] = derive_seed(base_seed, "multi", static_cast<std::uint64_t>(k));

    std::vector<float> out(images.numel());
    std::vector<int> order(specs.size());
    for (int i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        Rng order_rng(derive_seed(base_seed, "multi.order", static_cast<std::uint64_t>(i)));
        order_rng.shuffle(order);
        Tensor img = slice_image(images, i);
        for (int k : order) {
            const PerImageDraw draw = make_draw(specs[k], h, w, spec_seeds[k], i);
            img = apply(specs[k], img, draw);
        }
        store_image(out, img, i);
    }
    return make_tensor<float>(images.shape(), std::move(out), false);
}

// ---- operators -----------------------------------------------------------------

Tensor elastic(const Tensor& image, float alpha, float sigma, Rng& rng) {
    check_image(image, "elastic");
    if (alpha == 0.0f) return image.detached();
    if (!(sigma > 0.0f)) throw std::invalid_argument("elastic: sigma must be > 0");
    const int c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    std::vector<float> dx(plane), dy(plane);
    for (float& v : dx) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (float& v : dy) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const auto kernel = gaussian_kernel(sigma);
    smooth_plane(dx, h, w, kernel);
    smooth_plane(dy, h, w, kernel);

    std::vector<float> out(image.numel());
    const float* src = image.data().data();
    for (int ch = 0; ch < c; ++ch) {
        const float* p = src + ch * plane;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const float sx = static_cast<float>(x) + alpha * dx[y * w + x];
                const float sy = static_cast<float>(y) + alpha * dy[y * w + x];
                out[ch * plane + y * w + x] = clamp01f(bilinear(p, h, w, sy, sx));
            }
        }
    }
    return make_tensor<float>(image.shape(), std::move(out), false);
}

Tensor occlusion(const Tensor& image, float cx, float cy, float radius, float thickness) {
    check_image(image, "occlusion");
    if (radius < 0.0f || thickness < 0.0f)
        throw std::invalid_argument("occlusion: radius and thickness must be >= 0");
    if (radius == 0.0f && thickness == 0.0f) return image.detached();
    const int c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    std::vector<float> mask(plane, 1.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
            if (std::abs(d - radius) <= thickness / 2.0f) mask[y * w + x] = 0.0f;
        }
    }
    std::vector<float> out(image.numel());
    const float* src = image.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            out[ch * plane + i] = std::min(src[ch * plane + i], mask[i]);
    return make_tensor<float>(image.shape(), std::move(out), false);
}

Tensor gaussian_noise(const Tensor& image, float sigma, Rng& rng) {
    check_image(image, "gaussian_noise");
    if (sigma < 0.0f) throw std::invalid_argument("gaussian_noise: sigma must be >= 0");
    if (sigma == 0.0f) return image.detached();
    std::vector<float> out(image.numel());
    const float* src = image.data().data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = clamp01f(src[i] + static_cast<float>(rng.normal(0.0, double(sigma))));
    return make_tensor<float>(image.shape(), std::move(out), false);
}

Tensor wave(const Tensor& image, float frequency, float amplitude) {
    check_image(image, "wave");
    if (!(frequency > 0.0f)) throw std::invalid_argument("wave: frequency must be > 0");
    if (amplitude < 0.0f) throw std::invalid_argument("wave: amplitude must be >= 0");
    if (amplitude == 0.0f) return image.detached();
    const int c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    std::vector<int> shift(h);
    for (int y = 0; y < h; ++y) {
        const double phase = 2.0 * 3.14159265358979323846 * double(frequency) * double(y) / double(h);
        shift[y] = static_cast<int>(std::lround(double(amplitude) * std::sin(phase)));
    }
    std::vector<float> out(image.numel());
    const float* src = image.data().data();
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            const int s = shift[y];
            for (int x = 0; x < w; ++x) {
                const int sx = ((x - s) % w + w) % w;
                out[ch * plane + y * w + x] = src[ch * plane + y * w + sx];
            }
        }
    }
    return make_tensor<float>(image.shape(), std::move(out), false);
}

Tensor saturation(const Tensor& image, float alpha) {
    check_image(image, "saturation");
    if (alpha < 0.0f || alpha > 1.0f)
        throw std::invalid_argument("saturation: alpha must be in [0,1]");
    if (alpha == 1.0f) return image.detached();
    const int c = image.shape()[0];
    if (c == 1) return image.detached();
    if (c != 3) throw ShapeError("saturation", image.shape(), Shape{3, -1, -1});
    const int h = image.shape()[1], w = image.shape()[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    std::vector<float> out(image.numel());
    const float* src = image.data().data();
    for (std::size_t i = 0; i < plane; ++i) {
        const float gray = 0.299f * src[i] + 0.587f * src[plane + i] + 0.114f * src[2 * plane + i];
        for (int ch = 0; ch < 3; ++ch)
            out[ch * plane + i] = clamp01f((1.0f - alpha) * gray + alpha * src[ch * plane + i]);
    }
    return make_tensor<float>(image.shape(), std::move(out), false);
}

Tensor blur(const Tensor& image, float sigma) {
    check_image(image, "blur");
    if (sigma < 0.0f) throw std::invalid_argument("blur: sigma must be >= 0");
    if (sigma == 0.0f) return image.detached();
    const int c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const auto kernel = gaussian_kernel(sigma);

    std::vector<float> out(image.numel());
    const float* src = image.data().data();
    std::vector<float> buf(plane);
    for (int ch = 0; ch < c; ++ch) {
        std::copy(src + ch * plane, src + (ch + 1) * plane, buf.begin());
        smooth_plane(buf, h, w, kernel);
        for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = clamp01f(buf[i]);
    }
    return make_tensor<float>(image.shape(), std::move(out), false);
}

double mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("mse", a.shape(), b.shape());
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = 255.0 * (double(pa[i]) - double(pb[i]));
        acc += d * d;
    }
    return acc / double(a.numel());
}

}  // namespace npt
