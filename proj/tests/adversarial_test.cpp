#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "npt/adversarial.hpp"
#include "npt/model.hpp"
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

struct SmallSetup {
    SmallConvNet net;
    ParamList params;
    Tensor x;
    std::vector<int> y;
};

SmallSetup random_setup(std::uint64_t seed) {
    ConvNetSpec spec;
    spec.in_channels = 3;
    spec.in_height = 8;
    spec.in_width = 8;
    spec.conv1_filters = 4;
    spec.conv2_filters = 4;
    spec.num_classes = 3;
    SmallConvNet net(spec);
    return {net, net.init_params(seed), random_batch(4, 3, 8, 8, seed + 1), {0, 1, 2, 0}};
}

// Degenerate pipeline that reduces to a logistic model on the maximal pixel:
// 1x1 convs with weight 1 pass the input through both blocks, so the dense
// layer sees the global max pixel m and the two logits are (+w*m, -w*m).
SmallSetup logistic_setup() {
    ConvNetSpec spec;
    spec.in_channels = 1;
    spec.in_height = 4;
    spec.in_width = 4;
    spec.conv1_filters = 1;
    spec.conv2_filters = 1;
    spec.kernel = 1;
    spec.num_classes = 2;
    SmallConvNet net(spec);
    ParamList params = net.init_params(1);
    auto ones = [](Tensor& t) {
        auto v = t.mutable_data();
        std::fill(v.begin(), v.end(), 1.0f);
    };
    ones(params.get("conv1.weight"));
    ones(params.get("conv2.weight"));
    {
        auto w = params.get("dense.weight").mutable_data();
        w[0] = 1.5f;   // class 0 logit: +1.5 m
        w[1] = -1.5f;  // class 1 logit: -1.5 m
    }
    // Distinct positive pixels with a unique global max at (1,2).
    std::vector<float> px(16);
    for (int i = 0; i < 16; ++i) px[i] = 0.05f + 0.03f * static_cast<float>(i);
    px[1 * 4 + 2] = 0.9f;
    Tensor x = make_tensor<float>({1, 1, 4, 4}, std::move(px), false);
    return {net, std::move(params), std::move(x), {0}};
}

}  // namespace

TEST_CASE("attack config validation and default step") {
    AttackConfig cfg;
    cfg.epsilon = 0.08f;
    CHECK(cfg.effective_step() == doctest::Approx(0.02));
    cfg.step = 0.01f;
    CHECK(cfg.effective_step() == 0.01f);

    AttackConfig bad = cfg;
    bad.epsilon = -0.1f;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.step = -0.5f;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("epsilon zero attacks are exact identities") {
    auto s = random_setup(41);
    AttackConfig cfg;
    cfg.epsilon = 0.0f;
    CHECK(bitwise_equal(bim_attack(s.net, s.params, s.x, s.y, cfg), s.x));
    cfg.random_start = true;
    Rng rng(3);
    CHECK(bitwise_equal(pgd_example(s.net, s.params, s.x, s.y, cfg, rng), s.x));
}

TEST_CASE("bim and pgd enforce their random_start flag and step count") {
    auto s = random_setup(42);
    AttackConfig cfg;
    cfg.epsilon = 0.05f;
    cfg.random_start = true;
    CHECK_THROWS_AS(bim_attack(s.net, s.params, s.x, s.y, cfg), std::invalid_argument);
    cfg.random_start = false;
    Rng rng(1);
    CHECK_THROWS_AS(pgd_example(s.net, s.params, s.x, s.y, cfg, rng), std::invalid_argument);
    cfg.steps = 0;
    CHECK_THROWS_AS(bim_attack(s.net, s.params, s.x, s.y, cfg), std::invalid_argument);
}

TEST_CASE("single-step bim equals a fast gradient sign step") {
    auto s = random_setup(43);
    AttackConfig cfg;
    cfg.epsilon = 0.03f;
    cfg.step = 0.03f;
    cfg.steps = 1;

    const Tensor g = model_input_gradient(s.net, s.params, s.x, s.y);
    auto gp = g.data();
    auto xp = s.x.data();
    std::vector<float> expect(xp.size());
    for (std::size_t i = 0; i < xp.size(); ++i) {
        const float sign = gp[i] > 0.0f ? 1.0f : (gp[i] < 0.0f ? -1.0f : 0.0f);
        float v = xp[i] + cfg.epsilon * sign;
        v = std::min(std::max(v, xp[i] - cfg.epsilon), xp[i] + cfg.epsilon);
        expect[i] = std::min(std::max(v, 0.0f), 1.0f);
    }
    const Tensor adv = bim_attack(s.net, s.params, s.x, s.y, cfg);
    auto ap = adv.data();
    for (std::size_t i = 0; i < ap.size(); ++i) CHECK(ap[i] == expect[i]);
}

TEST_CASE("logistic reduction moves the routed pixel against the label margin") {
    auto s = logistic_setup();
    AttackConfig cfg;
    cfg.epsilon = 0.02f;
    cfg.step = 0.02f;
    cfg.steps = 1;

    // True class 0: the class-0 logit is +1.5 m, so ascending the loss must
    // push the max pixel down by exactly epsilon; all other pixels hold still.
    const Tensor down = bim_attack(s.net, s.params, s.x, {0}, cfg);
    auto xd = s.x.data();
    auto dd = down.data();
    for (int i = 0; i < 16; ++i) {
        if (i == 6)
            CHECK(dd[i] == doctest::Approx(xd[i] - 0.02f));
        else
            CHECK(dd[i] == xd[i]);
    }

    // True class 1 flips the sign: the same pixel moves up.
    const Tensor up = bim_attack(s.net, s.params, s.x, {1}, cfg);
    auto du = up.data();
    for (int i = 0; i < 16; ++i) {
        if (i == 6)
            CHECK(du[i] == doctest::Approx(xd[i] + 0.02f));
        else
            CHECK(du[i] == xd[i]);
    }
}

TEST_CASE("bim ascends the loss on the degenerate linear model") {
    auto s = logistic_setup();
    AttackConfig cfg;
    cfg.epsilon = 0.04f;
    cfg.steps = 1;

    auto loss_of = [&](const Tensor& x) {
        const Tensor logits = s.net.logits(s.params, x);
        return softmax_cross_entropy(logits, s.y).item();
    };
    double prev = loss_of(s.x);
    for (int k = 1; k <= 4; ++k) {
        cfg.steps = k;
        const double cur = loss_of(bim_attack(s.net, s.params, s.x, s.y, cfg));
        CHECK(cur >= prev - 1e-5);
        prev = cur;
    }
}

TEST_CASE("attacks stay inside the epsilon ball and the pixel range") {
    auto s = random_setup(44);
    AttackConfig cfg;
    cfg.epsilon = 0.06f;
    cfg.steps = 5;

    auto check_contained = [&](const Tensor& adv) {
        auto a = adv.data();
        auto x = s.x.data();
        float max_diff = 0.0f;
        for (std::size_t i = 0; i < a.size(); ++i) {
            max_diff = std::max(max_diff, std::abs(a[i] - x[i]));
            CHECK(a[i] >= 0.0f);
            CHECK(a[i] <= 1.0f);
        }
        CHECK(max_diff <= cfg.epsilon + 1e-6f);
        CHECK(max_diff > 0.0f);
    };
    check_contained(bim_attack(s.net, s.params, s.x, s.y, cfg));

    cfg.random_start = true;
    Rng rng(8);
    check_contained(pgd_example(s.net, s.params, s.x, s.y, cfg, rng));
}

TEST_CASE("pgd is reproducible from its rng stream") {
    auto s = random_setup(45);
    AttackConfig cfg;
    cfg.epsilon = 0.05f;
    cfg.steps = 3;
    cfg.random_start = true;

    Rng r1(99), r2(99), r3(100);
    const Tensor a = pgd_example(s.net, s.params, s.x, s.y, cfg, r1);
    const Tensor b = pgd_example(s.net, s.params, s.x, s.y, cfg, r2);
    const Tensor c = pgd_example(s.net, s.params, s.x, s.y, cfg, r3);
    CHECK(bitwise_equal(a, b));
    CHECK_FALSE(bitwise_equal(a, c));
}

TEST_CASE("attack generation never touches parameter gradients") {
    auto s = random_setup(46);
    AttackConfig cfg;
    cfg.epsilon = 0.05f;
    cfg.steps = 2;
    bim_attack(s.net, s.params, s.x, s.y, cfg);
    for (const auto& item : s.params) CHECK_FALSE(item.tensor.has_grad());
}

TEST_CASE("attack_batch is chunked, seeded and deterministic") {
    auto s = random_setup(47);
    LabeledImages data{s.x, s.y, 3};
    AttackConfig cfg;
    cfg.epsilon = 0.05f;
    cfg.steps = 2;
    cfg.random_start = true;

    const Tensor a = attack_batch(s.net, s.params, data, cfg, 5, 2);
    const Tensor b = attack_batch(s.net, s.params, data, cfg, 5, 2);
    const Tensor c = attack_batch(s.net, s.params, data, cfg, 6, 2);
    CHECK(bitwise_equal(a, b));
    CHECK_FALSE(bitwise_equal(a, c));
    CHECK(a.shape() == data.images.shape());

    LabeledImages empty;
    CHECK_THROWS_AS(attack_batch(s.net, s.params, empty, cfg, 1), std::invalid_argument);
    CHECK_THROWS_AS(attack_success_drop(s.net, s.params, empty, cfg, 1), std::invalid_argument);
}

TEST_CASE("attack drop is zero at epsilon zero and grows along the epsilon grid") {
    const auto& fx = npt::testing::trained_fixture();
    const SmallConvNet net(fx.spec);

    AttackConfig cfg;
    cfg.epsilon = 0.0f;
    CHECK(attack_success_drop(net, fx.params, fx.data.val, cfg, 3) == 0.0);

    double prev = -1e9;
    double first = 0.0, last = 0.0;
    const float grid[] = {0.004f, 0.02f, 0.08f};
    for (int i = 0; i < 3; ++i) {
        cfg.epsilon = grid[i];
        const double d = attack_success_drop(net, fx.params, fx.data.val, cfg, 3);
        CHECK(d >= prev - 0.5);  // allow sampling-level wiggle, require the trend
        if (i == 0) first = d;
        last = d;
        prev = d;
    }
    CHECK(last > first);
    CHECK(last > 10.0);
}
