#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "npt/common.hpp"

namespace npt {

namespace detail {

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same length as data when present
    bool requires_grad = false;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

// Dense row-major tensor handle. Copies are shallow (shared storage); use
// clone() for a deep copy. Data is immutable by convention once a tensor has
// entered a graph; grad buffers are the only thing backward() mutates.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(Shape shape, bool requires_grad = false);
    static TensorT full(Shape shape, T value, bool requires_grad = false);
    static TensorT from_data(Shape shape, std::vector<T> data, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t numel() const { return impl_->numel(); }
    bool requires_grad() const { return impl_ && impl_->requires_grad; }

    std::span<const T> data() const { return {impl_->data.data(), impl_->data.size()}; }
    std::span<T> mutable_data() { return {impl_->data.data(), impl_->data.size()}; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    // Gradient of the last backward() pass. Throws if this tensor does not
    // participate in gradients or none has been computed.
    std::span<const T> grad() const;
    void zero_grad() {
        if (impl_ && !impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    }

    // Same storage, detached from gradient tracking.
    TensorT detached() const;
    // Deep copy; fresh leaf with no grad history.
    TensorT clone() const;

    T item() const;

    std::shared_ptr<detail::TensorImpl<T>> impl() const { return impl_; }

private:
    explicit TensorT(std::shared_ptr<detail::TensorImpl<T>> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl<T>> impl_;

    template <typename U>
    friend class TapeT;
    template <typename U>
    friend TensorT<U> make_tensor(Shape, std::vector<U>, bool);
};

template <typename T>
TensorT<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad);

// Wengert list for reverse-mode differentiation. One tape is active per
// thread; TapeScopeT swaps in a fresh one for the duration of a scope.
// Nodes are recorded in construction order, so replaying them in reverse
// visits every node exactly once in valid topological order.
template <typename T>
class TapeT {
public:
    static TapeT& active();

    void clear() {
        nodes_.clear();
        consumed_ = false;
    }
    std::size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    void record(std::function<void()> pull) { nodes_.push_back({std::move(pull)}); }

    // Reverse sweep seeded with d(loss)/d(loss) = 1. loss must be scalar and
    // the tape nonempty; a second call without clear() is an error.
    void backward(const TensorT<T>& loss);

    // Count of completed backward sweeps on this thread (all tapes). Training
    // code uses it to report measured gradient-step counts.
    static std::uint64_t backward_count();

private:
    struct Node {
        std::function<void()> pull;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

template <typename T>
class TapeScopeT {
public:
    TapeScopeT();
    ~TapeScopeT();
    TapeScopeT(const TapeScopeT&) = delete;
    TapeScopeT& operator=(const TapeScopeT&) = delete;

    TapeT<T>& tape() { return own_; }

private:
    TapeT<T> own_;
    TapeT<T>* saved_;
};

// ---- primitive set ---------------------------------------------------------
// Elementwise ops require identical shapes. Outputs join the active tape when
// any input requires grad.

template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> subtract(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> multiply(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> scale(const TensorT<T>& a, T factor);

// (M,K) x (K,N) -> (M,N)
template <typename T> TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

// x (N,C,H,W), w (F,C,kh,kw) with odd kh,kw, bias (F); stride 1, zero padding
// to "same": output (N,F,H,W).
template <typename T> TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias);

template <typename T> TensorT<T> relu(const TensorT<T>& x);

// 2x2 window, stride 2; H and W must be even.
template <typename T> TensorT<T> maxpool2x2(const TensorT<T>& x);

// (N, d1, d2, ...) -> (N, d1*d2*...)
template <typename T> TensorT<T> flatten(const TensorT<T>& x);

// x (N,D), w (D,M), bias (M) -> (N,M)
template <typename T> TensorT<T> affine(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias);

// Row-wise softmax; forward-only convenience (not recorded on the tape).
template <typename T> TensorT<T> softmax(const TensorT<T>& logits);

// Mean over the batch of -log softmax(logits)[label]. logits (N,C); labels
// values in [0,C). Returns a scalar (shape {1}).
template <typename T> TensorT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels);

template <typename T> void backward(const TensorT<T>& loss);

// Gradient of f(x) with respect to x, computed under a fresh tape. x itself
// is untouched; the returned tensor is a plain leaf holding dL/dx.
template <typename T>
TensorT<T> input_gradient(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x);

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using TapeScope = TapeScopeT<float>;

}  // namespace npt
