#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "npt/common.hpp"
#include "npt/perturb.hpp"
#include "npt/rng.hpp"

using namespace npt;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i)
        if (da[i] != db[i]) return false;
    return true;
}

Tensor random_batch(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(n) * c * h * w);
    for (float& x : v) x = static_cast<float>(rng.uniform());
    return make_tensor<float>({n, c, h, w}, std::move(v), false);
}

Tensor random_image(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(c) * h * w);
    for (float& x : v) x = static_cast<float>(rng.uniform());
    return make_tensor<float>({c, h, w}, std::move(v), false);
}

}  // namespace

TEST_CASE("kind names, letters and aliases round trip") {
    const char* names[] = {"elastic", "occlusion", "gaussian_noise", "wave", "saturation", "blur"};
    const char letters[] = {'E', 'O', 'N', 'W', 'S', 'B'};
    for (int i = 0; i < 6; ++i) {
        const PerturbKind k = kAllPerturbKinds[i];
        CHECK(to_string(k) == names[i]);
        CHECK(kind_letter(k) == letters[i]);
        CHECK(perturb_kind_from_string(names[i]) == k);
    }
    CHECK(perturb_kind_from_string("noise") == PerturbKind::GaussianNoise);
    CHECK_THROWS_AS(perturb_kind_from_string("sepia"), std::invalid_argument);
}

TEST_CASE("severity zero is a bit-exact identity for every kind") {
    const Tensor batch = random_batch(4, 3, 16, 16, 99);
    for (PerturbKind k : kAllPerturbKinds) {
        PerturbationSpec spec;
        spec.kind = k;
        spec.severity = 0.0f;
        const Tensor out = apply_batch(spec, batch, 12345);
        CHECK(bitwise_equal(out, batch));
    }
}

TEST_CASE("operator-level identity parameters") {
    const Tensor img = random_image(3, 8, 8, 5);
    Rng rng(1);
    CHECK(bitwise_equal(elastic(img, 0.0f, 2.0f, rng), img));
    CHECK(bitwise_equal(occlusion(img, 3.0f, 3.0f, 0.0f, 0.0f), img));
    CHECK(bitwise_equal(gaussian_noise(img, 0.0f, rng), img));
    CHECK(bitwise_equal(wave(img, 1.0f, 0.0f), img));
    CHECK(bitwise_equal(saturation(img, 1.0f), img));
    CHECK(bitwise_equal(blur(img, 0.0f), img));
}

TEST_CASE("wave shifts rows by round(A*sin(2*pi*w*y/H))") {
    // H = 4, w = 1, A = 1: shifts per row are [0, 1, 0, -1].
    std::vector<float> v(16);
    for (int i = 0; i < 16; ++i) v[i] = static_cast<float>(i) / 16.0f;
    const Tensor img = make_tensor<float>({1, 4, 4}, std::move(v), false);
    const Tensor out = wave(img, 1.0f, 1.0f);
    auto src = img.data();
    auto dst = out.data();
    const int shifts[4] = {0, 1, 0, -1};
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const int sx = ((x - shifts[y]) % 4 + 4) % 4;
            CHECK(dst[y * 4 + x] == src[y * 4 + sx]);
        }
}

TEST_CASE("wave shifts are cyclic and content-preserving") {
    const Tensor img = random_image(3, 12, 12, 7);
    const Tensor out = wave(img, 2.0f, 3.0f);
    // Every row of the output is a permutation of the same row of the input.
    auto src = img.data();
    auto dst = out.data();
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < 12; ++y) {
            double s1 = 0.0, s2 = 0.0;
            for (int x = 0; x < 12; ++x) {
                s1 += src[(ch * 12 + y) * 12 + x];
                s2 += dst[(ch * 12 + y) * 12 + x];
            }
            CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
        }
}

TEST_CASE("saturation closed form on a pure red pixel") {
    const Tensor img = make_tensor<float>({3, 1, 1}, {1.0f, 0.0f, 0.0f}, false);
    const Tensor out = saturation(img, 0.5f);
    auto v = out.data();
    CHECK(v[0] == doctest::Approx(0.6495).epsilon(1e-5));
    CHECK(v[1] == doctest::Approx(0.1495).epsilon(1e-5));
    CHECK(v[2] == doctest::Approx(0.1495).epsilon(1e-5));

    // alpha = 0 collapses all channels onto the ITU-R 601 luminance.
    const Tensor gray = saturation(img, 0.0f);
    auto g = gray.data();
    CHECK(g[0] == doctest::Approx(0.299).epsilon(1e-6));
    CHECK(g[0] == g[1]);
    CHECK(g[1] == g[2]);
}

TEST_CASE("saturation leaves grayscale content unchanged") {
    // All three channels equal means luminance equals the pixel value.
    std::vector<float> v(3 * 4 * 4);
    for (int i = 0; i < 16; ++i) v[i] = v[16 + i] = v[32 + i] = static_cast<float>(i) / 16.0f;
    const Tensor img = make_tensor<float>({3, 4, 4}, std::move(v), false);
    const Tensor out = saturation(img, 0.3f);
    auto a = img.data();
    auto b = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-6));
}

TEST_CASE("blur of a central impulse reproduces the separable kernel") {
    const float sigma = 0.8f;
    std::vector<float> v(9 * 9, 0.0f);
    v[4 * 9 + 4] = 1.0f;
    const Tensor img = make_tensor<float>({1, 9, 9}, std::move(v), false);
    const Tensor out = blur(img, sigma);

    const int radius = static_cast<int>(std::ceil(3.0f * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / double(sigma * sigma));
        sum += k[i + radius];
    }
    for (double& x : k) x /= sum;

    auto o = out.data();
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) {
            const int dy = y - 4, dx = x - 4;
            const double expect =
                (std::abs(dy) <= radius && std::abs(dx) <= radius) ? k[dy + radius] * k[dx + radius] : 0.0;
            CHECK(std::abs(o[y * 9 + x] - expect) <= 1e-6);
        }
}

TEST_CASE("blur preserves a constant image") {
    const Tensor img = make_tensor<float>({2, 6, 6}, std::vector<float>(72, 0.625f), false);
    const Tensor out = blur(img, 1.7f);
    for (float v : out.data()) CHECK(v == doctest::Approx(0.625).epsilon(1e-6));
}

TEST_CASE("gaussian noise matches its nominal mse at mid-gray") {
    const float sigma = 0.1f;
    const Tensor img = make_tensor<float>({3, 64, 64}, std::vector<float>(3 * 64 * 64, 0.5f), false);
    Rng rng(77);
    const Tensor noisy = gaussian_noise(img, sigma, rng);
    const double measured = mse(img, noisy);
    const double nominal = double(sigma) * sigma * 255.0 * 255.0;
    CHECK(measured == doctest::Approx(nominal).epsilon(0.05));
    for (float v : noisy.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("occlusion zeroes exactly the ring in every channel") {
    std::vector<float> v(2 * 7 * 7);
    for (std::size_t i = 0; i < 49; ++i) v[i] = 0.7f;
    for (std::size_t i = 49; i < 98; ++i) v[i] = 0.9f;
    const Tensor img = make_tensor<float>({2, 7, 7}, std::move(v), false);
    const Tensor out = occlusion(img, 3.0f, 3.0f, 2.0f, 1.0f);
    auto o = out.data();
    for (int ch = 0; ch < 2; ++ch)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 7; ++x) {
                const float d = std::sqrt(float((x - 3) * (x - 3) + (y - 3) * (y - 3)));
                const bool ring = std::abs(d - 2.0f) <= 0.5f;
                const float expect = ring ? 0.0f : (ch == 0 ? 0.7f : 0.9f);
                CHECK(o[(ch * 7 + y) * 7 + x] == expect);
            }
    // The 7x7 ring at r=2, t=1 hits the 12 pixels at distance in [1.5, 2.5].
    int zeros = 0;
    for (int i = 0; i < 49; ++i) zeros += o[i] == 0.0f;
    CHECK(zeros == 12);
}

TEST_CASE("occlusion validates its geometry") {
    const Tensor img = random_image(3, 8, 8, 3);
    CHECK_THROWS_AS(occlusion(img, 1.0f, 1.0f, -1.0f, 2.0f), std::invalid_argument);
    CHECK_THROWS_AS(occlusion(img, 1.0f, 1.0f, 2.0f, -1.0f), std::invalid_argument);
}

TEST_CASE("elastic source coordinates stay within alpha") {
    // On a linear ramp, bilinear sampling is exact, so the pixel change bounds
    // the sampling offset: |out - in| <= alpha / (w - 1) away from the border.
    const int h = 16, w = 16;
    const float alpha = 2.0f;
    std::vector<float> v(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v[y * w + x] = static_cast<float>(x) / (w - 1);
    const Tensor img = make_tensor<float>({1, h, w}, std::move(v), false);
    Rng rng(31);
    const Tensor out = elastic(img, alpha, 2.0f, rng);
    auto a = img.data();
    auto b = out.data();
    const float bound = alpha / float(w - 1) + 1e-6f;
    for (int y = 0; y < h; ++y)
        for (int x = static_cast<int>(alpha) + 1; x < w - 1 - static_cast<int>(alpha); ++x)
            CHECK(std::abs(b[y * w + x] - a[y * w + x]) <= bound);
}

TEST_CASE("elastic is rng-deterministic and validates sigma") {
    const Tensor img = random_image(3, 10, 10, 13);
    Rng r1(500), r2(500), r3(501);
    const Tensor a = elastic(img, 4.0f, 2.0f, r1);
    const Tensor b = elastic(img, 4.0f, 2.0f, r2);
    const Tensor c = elastic(img, 4.0f, 2.0f, r3);
    CHECK(bitwise_equal(a, b));
    CHECK_FALSE(bitwise_equal(a, c));
    Rng rng(1);
    CHECK_THROWS_AS(elastic(img, 1.0f, 0.0f, rng), std::invalid_argument);
}

TEST_CASE("per-image draws jitter severity within the width band") {
    PerturbationSpec spec;
    spec.kind = PerturbKind::GaussianNoise;
    spec.severity = 2.0f;
    spec.randomization_width = 0.5f;
    double mean = 0.0;
    for (int i = 0; i < 200; ++i) {
        const PerImageDraw d = make_draw(spec, 32, 32, 9, i);
        CHECK(d.severity >= 1.0f);
        CHECK(d.severity <= 3.0f);
        CHECK(d.occ_cx >= 0.0f);
        CHECK(d.occ_cx <= 31.0f);
        CHECK(d.occ_cy >= 0.0f);
        CHECK(d.occ_cy <= 31.0f);
        mean += d.severity;
    }
    mean /= 200.0;
    CHECK(mean == doctest::Approx(2.0).epsilon(0.1));

    const PerImageDraw d1 = make_draw(spec, 32, 32, 9, 3);
    const PerImageDraw d2 = make_draw(spec, 32, 32, 9, 3);
    const PerImageDraw d3 = make_draw(spec, 32, 32, 9, 4);
    CHECK(d1.seed == d2.seed);
    CHECK(d1.severity == d2.severity);
    CHECK(d1.seed != d3.seed);
}

TEST_CASE("apply_batch is seed-deterministic with independent per-image draws") {
    PerturbationSpec spec;
    spec.kind = PerturbKind::GaussianNoise;
    spec.severity = 0.3f;

    // Two copies of the same image inside one batch get different noise.
    const Tensor one = random_image(3, 8, 8, 21);
    std::vector<float> dup(one.data().begin(), one.data().end());
    dup.insert(dup.end(), one.data().begin(), one.data().end());
    const Tensor batch = make_tensor<float>({2, 3, 8, 8}, std::move(dup), false);

    const Tensor out1 = apply_batch(spec, batch, 400);
    const Tensor out2 = apply_batch(spec, batch, 400);
    const Tensor out3 = apply_batch(spec, batch, 401);
    CHECK(bitwise_equal(out1, out2));
    CHECK_FALSE(bitwise_equal(out1, out3));

    auto o = out1.data();
    bool differs = false;
    for (int i = 0; i < 3 * 64; ++i) differs |= o[i] != o[3 * 64 + i];
    CHECK(differs);
}

TEST_CASE("apply_multi_batch composes at least two perturbations") {
    const Tensor batch = random_batch(3, 3, 12, 12, 55);
    PerturbationSpec noise;
    noise.kind = PerturbKind::GaussianNoise;
    noise.severity = 0.2f;
    PerturbationSpec sat;
    sat.kind = PerturbKind::Saturation;
    sat.severity = 0.6f;

    CHECK_THROWS_AS(apply_multi_batch({noise}, batch, 1), std::invalid_argument);

    const Tensor out1 = apply_multi_batch({noise, sat}, batch, 7);
    const Tensor out2 = apply_multi_batch({noise, sat}, batch, 7);
    CHECK(bitwise_equal(out1, out2));
    CHECK_FALSE(bitwise_equal(out1, batch));

    // Zero-severity specs compose to the identity.
    PerturbationSpec z1 = noise, z2 = sat;
    z1.severity = 0.0f;
    z2.severity = 0.0f;
    CHECK(bitwise_equal(apply_multi_batch({z1, z2}, batch, 7), batch));
}

TEST_CASE("mse uses the 0-255 convention") {
    const Tensor a = make_tensor<float>({1, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f}, false);
    const Tensor b = make_tensor<float>({1, 2, 2}, {0.25f, 0.25f, 0.25f, 0.25f}, false);
    CHECK(mse(a, b) == doctest::Approx(4064.0625).epsilon(1e-12));
    CHECK(mse(a, a) == 0.0);
    const Tensor c = make_tensor<float>({1, 1, 4}, {0.0f, 0.0f, 0.0f, 0.0f}, false);
    CHECK_THROWS_AS(mse(a, c), ShapeError);
}

TEST_CASE("operators validate parameters and shapes") {
    const Tensor img = random_image(3, 6, 6, 2);
    Rng rng(9);
    CHECK_THROWS_AS(gaussian_noise(img, -0.1f, rng), std::invalid_argument);
    CHECK_THROWS_AS(wave(img, 0.0f, 1.0f), std::invalid_argument);
    CHECK_THROWS_AS(wave(img, 1.0f, -1.0f), std::invalid_argument);
    CHECK_THROWS_AS(saturation(img, 1.5f), std::invalid_argument);
    CHECK_THROWS_AS(saturation(img, -0.5f), std::invalid_argument);
    CHECK_THROWS_AS(blur(img, -1.0f), std::invalid_argument);

    const Tensor two = random_image(2, 6, 6, 3);
    CHECK_THROWS_AS(saturation(two, 0.5f), ShapeError);

    const Tensor flat = make_tensor<float>({4, 4}, std::vector<float>(16, 0.0f), false);
    Rng rng2(1);
    CHECK_THROWS_AS(elastic(flat, 1.0f, 2.0f, rng2), ShapeError);
    PerturbationSpec spec;
    CHECK_THROWS_AS(apply_batch(spec, flat, 1), ShapeError);
}
