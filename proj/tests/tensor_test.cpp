#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "npt/rng.hpp"
#include "npt/tensor.hpp"

using namespace npt;

namespace {

using DT = TensorT<double>;

DT random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0,
                 double hi = 1.0) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return DT::from_data(std::move(shape), std::move(data), requires_grad);
}

std::vector<int> random_labels(int n, int classes, Rng& rng) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.uniform_below(classes));
    return y;
}

double eval_loss(const std::function<DT(const std::vector<DT>&)>& f,
                 const std::vector<DT>& leaves) {
    TapeScopeT<double> scope;
    return f(leaves).item();
}

// Central finite differences against reverse-mode gradients, 64-bit, step
// 1e-5. Returns the max relative error over every element of every leaf.
double fd_max_rel_err(const std::function<DT(const std::vector<DT>&)>& f, std::vector<DT> leaves) {
    std::vector<std::vector<double>> grads;
    {
        TapeScopeT<double> scope;
        DT loss = f(leaves);
        // leaves may carry grads from an earlier call; backward accumulates
        for (DT& leaf : leaves) leaf.zero_grad();
        scope.tape().backward(loss);
        for (const DT& leaf : leaves) {
            auto g = leaf.grad();
            grads.emplace_back(g.begin(), g.end());
        }
    }
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto data = leaves[li].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double lp = eval_loss(f, leaves);
            data[i] = saved - h;
            const double lm = eval_loss(f, leaves);
            data[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = grads[li][i];
            const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-6});
            worst = std::max(worst, std::fabs(fd - ad) / denom);
        }
    }
    return worst;
}

// Reduces an arbitrary (N,...) output to a scalar through cross-entropy so
// every primitive can be checked by the same harness.
DT reduce_to_scalar(const DT& y, const std::vector<int>& labels) {
    DT flat = y.shape().size() == 2 ? y : flatten(y);
    return softmax_cross_entropy(flat, labels);
}

}  // namespace

TEST_CASE("relu forward") {
    auto x = Tensor::from_data({3}, {-1.0f, 0.0f, 2.0f});
    auto y = relu(x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 0.0f);
    CHECK(y.data()[2] == 2.0f);
}

TEST_CASE("softmax of equal logits is uniform") {
    auto x = Tensor::from_data({1, 3}, {0.0f, 0.0f, 0.0f});
    auto p = softmax(x);
    for (float v : p.data()) CHECK(v == doctest::Approx(1.0f / 3.0f));
}

TEST_CASE("conv2d all-ones 3x3") {
    auto x = Tensor::full({1, 1, 3, 3}, 1.0f);
    auto w = Tensor::full({1, 1, 3, 3}, 1.0f);
    auto b = Tensor::zeros({1});
    auto y = conv2d(x, w, b);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    CHECK(y.data()[4] == 9.0f);  // center: full overlap
    CHECK(y.data()[0] == 4.0f);  // corner
    CHECK(y.data()[1] == 6.0f);  // edge
}

TEST_CASE("backward of a plain sum gives all-ones") {
    TapeScope scope;
    auto x = Tensor::from_data({1, 4}, {0.3f, -2.0f, 5.0f, 0.0f}, true);
    auto ones = Tensor::full({4, 1}, 1.0f);
    auto loss = matmul(x, ones);
    scope.tape().backward(loss);
    for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("backward of sum of squares") {
    TapeScope scope;
    auto x = Tensor::from_data({1, 2}, {1.0f, 2.0f}, true);
    auto ones = Tensor::full({2, 1}, 1.0f);
    auto loss = matmul(multiply(x, x), ones);
    scope.tape().backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0f));
    CHECK(x.grad()[1] == doctest::Approx(4.0f));
}

TEST_CASE("backward twice without reset is an error") {
    TapeScope scope;
    auto x = Tensor::from_data({1, 1}, {2.0f}, true);
    auto loss = multiply(x, x);
    scope.tape().backward(loss);
    CHECK_THROWS_AS(scope.tape().backward(loss), std::logic_error);
}

TEST_CASE("non-scalar loss is an error") {
    TapeScope scope;
    auto x = Tensor::from_data({1, 2}, {1.0f, 2.0f}, true);
    auto y = multiply(x, x);
    CHECK_THROWS_AS(scope.tape().backward(y), std::logic_error);
}

TEST_CASE("detached tensor queried for grad is an error") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f});
    CHECK_THROWS(x.grad());
}

TEST_CASE("shape mismatch errors name the operation and shapes") {
    auto a = Tensor::zeros({2, 2});
    auto b = Tensor::zeros({2, 3});
    try {
        add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("(2x2)") != std::string::npos);
        CHECK(msg.find("(2x3)") != std::string::npos);
    }
}

TEST_CASE("cross entropy is nonnegative and ln(C) at uniform logits") {
    TapeScopeT<double> scope;
    auto logits = DT::zeros({4, 10});
    auto loss = softmax_cross_entropy(logits, std::vector<int>{0, 3, 7, 9});
    CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-9));

    Rng rng(5);
    auto r = random_tensor({6, 5}, rng, false, -3.0, 3.0);
    auto l2 = softmax_cross_entropy(r, random_labels(6, 5, rng));
    CHECK(l2.item() >= 0.0);
}

TEST_CASE("forward determinism") {
    Rng rng1(99), rng2(99);
    auto x1 = random_tensor({2, 3, 8, 8}, rng1, false);
    auto x2 = random_tensor({2, 3, 8, 8}, rng2, false);
    auto w1 = random_tensor({4, 3, 3, 3}, rng1, false);
    auto w2 = random_tensor({4, 3, 3, 3}, rng2, false);
    auto b = DT::zeros({4});
    auto y1 = conv2d(x1, w1, b);
    auto y2 = conv2d(x2, w2, b);
    for (std::size_t i = 0; i < y1.data().size(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("gradient check: elementwise and scale") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_below(4));
        const int m = 2 + static_cast<int>(rng.uniform_below(6));
        auto labels = random_labels(n, m, rng);
        auto a = random_tensor({n, m}, rng);
        auto b = random_tensor({n, m}, rng);

        auto f_add = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(add(in[0], in[1]), labels);
        };
        auto f_sub = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(subtract(in[0], in[1]), labels);
        };
        auto f_mul = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(multiply(in[0], in[1]), labels);
        };
        auto f_scale = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(scale(in[0], 1.7), labels);
        };
        CHECK(fd_max_rel_err(f_add, {a, b}) < 1e-4);
        CHECK(fd_max_rel_err(f_sub, {a, b}) < 1e-4);
        CHECK(fd_max_rel_err(f_mul, {a, b}) < 1e-4);
        CHECK(fd_max_rel_err(f_scale, {a}) < 1e-4);
    }
}

TEST_CASE("gradient check: matmul and affine") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_below(3));
        const int k = 1 + static_cast<int>(rng.uniform_below(5));
        const int m = 2 + static_cast<int>(rng.uniform_below(5));
        auto labels = random_labels(n, m, rng);
        auto x = random_tensor({n, k}, rng);
        auto w = random_tensor({k, m}, rng);
        auto b = random_tensor({m}, rng);

        auto f_mm = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(matmul(in[0], in[1]), labels);
        };
        auto f_aff = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(affine(in[0], in[1], in[2]), labels);
        };
        CHECK(fd_max_rel_err(f_mm, {x, w}) < 1e-4);
        CHECK(fd_max_rel_err(f_aff, {x, w, b}) < 1e-4);
    }
}

TEST_CASE("gradient check: conv2d") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_below(2));
        const int c = 1 + static_cast<int>(rng.uniform_below(3));
        const int f = 1 + static_cast<int>(rng.uniform_below(3));
        const int hw = 3 + static_cast<int>(rng.uniform_below(4));
        const int k = rng.uniform() < 0.5 ? 1 : 3;
        auto labels = random_labels(n, f * hw * hw, rng);
        auto x = random_tensor({n, c, hw, hw}, rng);
        auto w = random_tensor({f, c, k, k}, rng);
        auto b = random_tensor({f}, rng);
        auto fn = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(conv2d(in[0], in[1], in[2]), labels);
        };
        CHECK(fd_max_rel_err(fn, {x, w, b}) < 1e-4);
    }
}

TEST_CASE("gradient check: relu, maxpool, flatten") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_below(2));
        const int c = 1 + static_cast<int>(rng.uniform_below(3));
        const int hw = 2 * (1 + static_cast<int>(rng.uniform_below(3)));
        auto x = random_tensor({n, c, hw, hw}, rng);
        auto labels_full = random_labels(n, c * hw * hw, rng);
        auto labels_pool = random_labels(n, c * (hw / 2) * (hw / 2), rng);

        auto f_relu = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(relu(in[0]), labels_full);
        };
        auto f_pool = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(maxpool2x2(in[0]), labels_pool);
        };
        auto f_flat = [&](const std::vector<DT>& in) {
            return reduce_to_scalar(flatten(in[0]), labels_full);
        };
        CHECK(fd_max_rel_err(f_relu, {x}) < 1e-4);
        CHECK(fd_max_rel_err(f_pool, {x}) < 1e-4);
        CHECK(fd_max_rel_err(f_flat, {x}) < 1e-4);
    }
}

TEST_CASE("gradient check: cross entropy itself") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_below(4));
        const int c = 2 + static_cast<int>(rng.uniform_below(8));
        auto logits = random_tensor({n, c}, rng, true, -2.0, 2.0);
        auto labels = random_labels(n, c, rng);
        auto fn = [&](const std::vector<DT>& in) {
            return softmax_cross_entropy(in[0], labels);
        };
        CHECK(fd_max_rel_err(fn, {logits}) < 1e-4);
    }
}

TEST_CASE("gradient check: random 3-layer net") {
    Rng rng(47);
    for (int trial = 0; trial < 3; ++trial) {
        auto x = random_tensor({2, 1, 4, 4}, rng, true, 0.0, 1.0);
        auto w1 = random_tensor({2, 1, 3, 3}, rng, true, -0.5, 0.5);
        auto b1 = random_tensor({2}, rng, true, -0.1, 0.1);
        auto w2 = random_tensor({8, 3}, rng, true, -0.5, 0.5);
        auto b2 = random_tensor({3}, rng, true, -0.1, 0.1);
        std::vector<int> labels{0, 2};
        auto fn = [&](const std::vector<DT>& in) {
            auto h = maxpool2x2(relu(conv2d(in[0], in[1], in[2])));
            auto logits = affine(flatten(h), in[3], in[4]);
            return softmax_cross_entropy(logits, labels);
        };
        CHECK(fd_max_rel_err(fn, {x, w1, b1, w2, b2}) < 1e-4);
    }
}

TEST_CASE("input gradient leaves input and frozen weights untouched and matches FD") {
    Rng rng(53);
    auto x = random_tensor({1, 1, 4, 4}, rng, true, 0.0, 1.0);
    auto w = random_tensor({16, 2}, rng, true, -0.5, 0.5);
    auto b = random_tensor({2}, rng, true, -0.1, 0.1);
    auto wf = w.detached();
    auto bf = b.detached();
    std::vector<int> labels{1};

    auto f = [&](const DT& input) {
        return softmax_cross_entropy(affine(flatten(input), wf, bf), labels);
    };
    DT g = input_gradient<double>(f, x);
    REQUIRE(g.shape() == x.shape());
    CHECK_FALSE(x.has_grad());
    CHECK_FALSE(wf.has_grad());
    CHECK_FALSE(bf.has_grad());

    // central differences on the same map
    const double h = 1e-5;
    auto xd = x.mutable_data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        const double saved = xd[i];
        xd[i] = saved + h;
        double lp;
        {
            TapeScopeT<double> s;
            lp = f(x).item();
        }
        xd[i] = saved - h;
        double lm;
        {
            TapeScopeT<double> s;
            lm = f(x).item();
        }
        xd[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(g.data()[i]), 1e-6});
        CHECK(std::fabs(fd - g.data()[i]) / denom < 1e-4);
    }
}

TEST_CASE("zero-weight model has zero input gradient") {
    auto x = Tensor::from_data({1, 1, 2, 2}, {0.1f, 0.4f, 0.7f, 0.2f});
    auto w = Tensor::zeros({4, 3});
    auto b = Tensor::zeros({3});
    std::vector<int> labels{2};
    auto f = [&](const Tensor& input) {
        return softmax_cross_entropy(affine(flatten(input), w, b), labels);
    };
    Tensor g = input_gradient<float>(f, x);
    for (float v : g.data()) CHECK(v == 0.0f);
}

TEST_CASE("1-D logistic input gradient sign") {
    // two logits [0, w*x] at x=0: increasing the true-class-1 loss means
    // moving against w, so dL/dx = -(1-p)*w has sign -sign(w)
    auto x = Tensor::from_data({1, 1}, {0.0f});
    auto w = Tensor::from_data({1, 2}, {0.0f, 3.0f});
    auto b = Tensor::zeros({2});
    std::vector<int> labels{1};
    auto f = [&](const Tensor& input) {
        return softmax_cross_entropy(affine(input, w, b), labels);
    };
    Tensor g = input_gradient<float>(f, x);
    CHECK(g.data()[0] < 0.0f);
    CHECK(g.data()[0] == doctest::Approx(-0.5f * 3.0f));
}
