#include "npt/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace npt {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
TapeT<T>*& active_tape_ptr() {
    thread_local TapeT<T> root;
    thread_local TapeT<T>* ptr = &root;
    return ptr;
}

template <typename T>
std::uint64_t& backward_counter() {
    thread_local std::uint64_t n = 0;
    return n;
}

template <typename T>
void require_same_shape(const char* op, const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

template <typename T>
bool tracked(const TensorT<T>& t) {
    return t.requires_grad();
}

// Accumulate src into impl->grad if the impl participates in gradients.
template <typename T>
void accumulate(const std::shared_ptr<detail::TensorImpl<T>>& impl, const T* src) {
    if (!impl->requires_grad) return;
    impl->ensure_grad();
    T* dst = impl->grad.data();
    const std::size_t n = impl->data.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace

// ---- TensorT ----------------------------------------------------------------

template <typename T>
TensorT<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
        throw std::invalid_argument(str_cat("tensor: data length ", data.size(),
                                            " does not match shape ", shape_str(shape)));
    auto impl = std::make_shared<detail::TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return TensorT<T>(std::move(impl));
}

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape, bool requires_grad) {
    std::vector<T> d(static_cast<std::size_t>(shape_numel(shape)), T(0));
    return make_tensor<T>(std::move(shape), std::move(d), requires_grad);
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value, bool requires_grad) {
    std::vector<T> d(static_cast<std::size_t>(shape_numel(shape)), value);
    return make_tensor<T>(std::move(shape), std::move(d), requires_grad);
}

template <typename T>
TensorT<T> TensorT<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
    return make_tensor<T>(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
std::span<const T> TensorT<T>::grad() const {
    if (!impl_ || !impl_->requires_grad)
        throw std::logic_error("grad: tensor is detached from gradient tracking");
    if (impl_->grad.empty())
        throw std::logic_error("grad: no gradient has been computed for this tensor");
    return {impl_->grad.data(), impl_->grad.size()};
}

template <typename T>
TensorT<T> TensorT<T>::detached() const {
    auto impl = std::make_shared<detail::TensorImpl<T>>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;  // value copy; storage is cheap at this scale
    impl->requires_grad = false;
    return TensorT<T>(std::move(impl));
}

template <typename T>
TensorT<T> TensorT<T>::clone() const {
    auto impl = std::make_shared<detail::TensorImpl<T>>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = impl_->requires_grad;
    return TensorT<T>(std::move(impl));
}

template <typename T>
T TensorT<T>::item() const {
    if (!impl_ || impl_->numel() != 1)
        throw std::logic_error("item: tensor is not scalar");
    return impl_->data[0];
}

// ---- TapeT ------------------------------------------------------------------

template <typename T>
TapeT<T>& TapeT<T>::active() {
    return *active_tape_ptr<T>();
}

template <typename T>
void TapeT<T>::backward(const TensorT<T>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::logic_error("backward: loss must be a scalar tensor");
    if (!loss.requires_grad())
        throw std::logic_error("backward: loss is not connected to the tape");
    if (nodes_.empty())
        throw std::logic_error("backward: tape is empty");
    if (consumed_)
        throw std::logic_error("backward: tape already consumed; clear() before reuse");
    auto impl = loss.impl();
    impl->ensure_grad();
    impl->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->pull();
    consumed_ = true;
    ++backward_counter<T>();
}

template <typename T>
std::uint64_t TapeT<T>::backward_count() {
    return backward_counter<T>();
}

template <typename T>
TapeScopeT<T>::TapeScopeT() {
    saved_ = active_tape_ptr<T>();
    active_tape_ptr<T>() = &own_;
}

template <typename T>
TapeScopeT<T>::~TapeScopeT() {
    active_tape_ptr<T>() = saved_;
}

// ---- recording helper -------------------------------------------------------

namespace {

// Output grad span, or nullptr when this node never received gradient flow.
template <typename T>
const T* out_grad(const std::shared_ptr<detail::TensorImpl<T>>& impl) {
    return impl->grad.empty() ? nullptr : impl->grad.data();
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape("add", a, b);
    const auto n = a.data().size();
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a.data()[i] + b.data()[i];
    const bool trk = tracked(a) || tracked(b);
    auto ai = a.impl(), bi = b.impl();
    TensorT<T> out = make_tensor<T>(a.shape(), std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([ai, bi, oi] {
            const T* g = out_grad(oi);
            if (!g) return;
            accumulate(ai, g);
            accumulate(bi, g);
        });
    }
    return out;
}

template <typename T>
TensorT<T> subtract(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape("subtract", a, b);
    const auto n = a.data().size();
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a.data()[i] - b.data()[i];
    const bool trk = tracked(a) || tracked(b);
    auto ai = a.impl(), bi = b.impl();
    TensorT<T> out = make_tensor<T>(a.shape(), std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([ai, bi, oi] {
            const T* g = out_grad(oi);
            if (!g) return;
            accumulate(ai, g);
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < bi->data.size(); ++i) bi->grad[i] -= g[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> multiply(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape("multiply", a, b);
    const auto n = a.data().size();
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a.data()[i] * b.data()[i];
    const bool trk = tracked(a) || tracked(b);
    auto ai = a.impl(), bi = b.impl();
    TensorT<T> out = make_tensor<T>(a.shape(), std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([ai, bi, oi] {
            const T* g = out_grad(oi);
            if (!g) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < ai->data.size(); ++i) ai->grad[i] += g[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < bi->data.size(); ++i) bi->grad[i] += g[i] * ai->data[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T factor) {
    const auto n = a.data().size();
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a.data()[i] * factor;
    const bool trk = tracked(a);
    auto ai = a.impl();
    TensorT<T> out = make_tensor<T>(a.shape(), std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([ai, oi, factor] {
            const T* g = out_grad(oi);
            if (!g) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < ai->data.size(); ++i) ai->grad[i] += g[i] * factor;
            }
        });
    }
    return out;
}

// ---- matmul -----------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul", a.shape(), b.shape());
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<T> d(static_cast<std::size_t>(m) * n);
    {
        ECMap<T> A(a.data().data(), m, k), B(b.data().data(), k, n);
        EMap<T> C(d.data(), m, n);
        C.noalias() = A * B;
    }
    const bool trk = tracked(a) || tracked(b);
    auto ai = a.impl(), bi = b.impl();
    TensorT<T> out = make_tensor<T>({m, n}, std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([ai, bi, oi, m, k, n] {
            const T* g = out_grad(oi);
            if (!g) return;
            ECMap<T> G(g, m, n);
            if (ai->requires_grad) {
                ai->ensure_grad();
                ECMap<T> B(bi->data.data(), k, n);
                EMap<T> dA(ai->grad.data(), m, k);
                dA.noalias() += G * B.transpose();
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                ECMap<T> A(ai->data.data(), m, k);
                EMap<T> dB(bi->grad.data(), k, n);
                dB.noalias() += A.transpose() * G;
            }
        });
    }
    return out;
}

// ---- conv2d -----------------------------------------------------------------

namespace {

// col has C*kh*kw rows and H*W columns (row-major).
template <typename T>
void im2col(const T* x, int c_in, int h, int w, int kh, int kw, std::vector<T>& col) {
    const int ph = kh / 2, pw = kw / 2;
    const int hw = h * w;
    std::size_t row = 0;
    for (int c = 0; c < c_in; ++c) {
        const T* plane = x + static_cast<std::size_t>(c) * hw;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++row) {
                T* dst = col.data() + row * hw;
                for (int oh = 0; oh < h; ++oh) {
                    const int ih = oh + ki - ph;
                    if (ih < 0 || ih >= h) {
                        std::fill(dst + oh * w, dst + (oh + 1) * w, T(0));
                        continue;
                    }
                    const T* src = plane + ih * w;
                    for (int ow = 0; ow < w; ++ow) {
                        const int iw = ow + kj - pw;
                        dst[oh * w + ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_accumulate(const T* col, int c_in, int h, int w, int kh, int kw, T* dx) {
    const int ph = kh / 2, pw = kw / 2;
    const int hw = h * w;
    std::size_t row = 0;
    for (int c = 0; c < c_in; ++c) {
        T* plane = dx + static_cast<std::size_t>(c) * hw;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++row) {
                const T* src = col + row * hw;
                for (int oh = 0; oh < h; ++oh) {
                    const int ih = oh + ki - ph;
                    if (ih < 0 || ih >= h) continue;
                    T* dst = plane + ih * w;
                    for (int ow = 0; ow < w; ++ow) {
                        const int iw = ow + kj - pw;
                        if (iw >= 0 && iw < w) dst[iw] += src[oh * w + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
        throw ShapeError("conv2d", xs, ws);
    if (ws[2] % 2 == 0 || ws[3] % 2 == 0)
        throw ShapeError("conv2d", str_cat("kernel spatial size must be odd, got ", shape_str(ws)));
    if (bias.shape() != Shape{ws[0]})
        throw ShapeError("conv2d bias", bias.shape(), Shape{ws[0]});
    const int batch = xs[0], c_in = xs[1], h = xs[2], wd = xs[3];
    const int f = ws[0], kh = ws[2], kw = ws[3];
    const int hw = h * wd;
    const int krows = c_in * kh * kw;

    std::vector<T> d(static_cast<std::size_t>(batch) * f * hw);
    auto cols = std::make_shared<std::vector<std::vector<T>>>(batch);
    {
        ECMap<T> Wm(w.data().data(), f, krows);
        for (int n = 0; n < batch; ++n) {
            auto& col = (*cols)[n];
            col.resize(static_cast<std::size_t>(krows) * hw);
            im2col(x.data().data() + static_cast<std::size_t>(n) * c_in * hw, c_in, h, wd, kh, kw, col);
            ECMap<T> Col(col.data(), krows, hw);
            EMap<T> Out(d.data() + static_cast<std::size_t>(n) * f * hw, f, hw);
            Out.noalias() = Wm * Col;
            for (int fi = 0; fi < f; ++fi) Out.row(fi).array() += bias.data()[fi];
        }
    }
    const bool trk = tracked(x) || tracked(w) || tracked(bias);
    auto xi = x.impl(), wi = w.impl(), bi = bias.impl();
    TensorT<T> out = make_tensor<T>({batch, f, h, wd}, std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([xi, wi, bi, oi, cols, batch, c_in, h, wd, f, kh, kw, krows, hw] {
            const T* g = out_grad(oi);
            if (!g) return;
            if (wi->requires_grad) wi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            if (xi->requires_grad) xi->ensure_grad();
            std::vector<T> dcol(static_cast<std::size_t>(krows) * hw);
            for (int n = 0; n < batch; ++n) {
                ECMap<T> G(g + static_cast<std::size_t>(n) * f * hw, f, hw);
                if (wi->requires_grad) {
                    ECMap<T> Col((*cols)[n].data(), krows, hw);
                    EMap<T> dW(wi->grad.data(), f, krows);
                    dW.noalias() += G * Col.transpose();
                }
                if (bi->requires_grad) {
                    for (int fi = 0; fi < f; ++fi) bi->grad[fi] += G.row(fi).sum();
                }
                if (xi->requires_grad) {
                    ECMap<T> Wm(wi->data.data(), f, krows);
                    EMap<T> dCol(dcol.data(), krows, hw);
                    dCol.noalias() = Wm.transpose() * G;
                    col2im_accumulate(dcol.data(), c_in, h, wd, kh, kw,
                                      xi->grad.data() + static_cast<std::size_t>(n) * c_in * hw);
                }
            }
        });
    }
    return out;
}

// ---- relu -------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    const auto n = x.data().size();
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    const bool trk = tracked(x);
    auto xi = x.impl();
    TensorT<T> out = make_tensor<T>(x.shape(), std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([xi, oi] {
            const T* g = out_grad(oi);
            if (!g) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < xi->data.size(); ++i)
                if (xi->data[i] > T(0)) xi->grad[i] += g[i];
        });
    }
    return out;
}

// ---- maxpool2x2 -------------------------------------------------------------

template <typename T>
TensorT<T> maxpool2x2(const TensorT<T>& x) {
    const Shape& xs = x.shape();
    if (xs.size() != 4) throw ShapeError("maxpool2x2", str_cat("expected rank-4 input, got ", shape_str(xs)));
    if (xs[2] % 2 != 0 || xs[3] % 2 != 0)
        throw ShapeError("maxpool2x2", str_cat("spatial dims must be even, got ", shape_str(xs)));
    const int batch = xs[0], c = xs[1], h = xs[2], w = xs[3];
    const int oh = h / 2, ow = w / 2;
    std::vector<T> d(static_cast<std::size_t>(batch) * c * oh * ow);
    auto argmax = std::make_shared<std::vector<std::int64_t>>(d.size());
    const T* src = x.data().data();
    for (int n = 0; n < batch; ++n) {
        for (int ci = 0; ci < c; ++ci) {
            const std::size_t plane = (static_cast<std::size_t>(n) * c + ci) * h * w;
            const std::size_t oplane = (static_cast<std::size_t>(n) * c + ci) * oh * ow;
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    // ties resolve to the first element in scan order
                    std::int64_t best = plane + (2 * i) * w + 2 * j;
                    T bv = src[best];
                    const std::int64_t cand[3] = {best + 1, best + w, best + w + 1};
                    for (std::int64_t idx : cand) {
                        if (src[idx] > bv) {
                            bv = src[idx];
                            best = idx;
                        }
                    }
                    d[oplane + static_cast<std::size_t>(i) * ow + j] = bv;
                    (*argmax)[oplane + static_cast<std::size_t>(i) * ow + j] = best;
                }
            }
        }
    }
    const bool trk = tracked(x);
    auto xi = x.impl();
    TensorT<T> out = make_tensor<T>({batch, c, oh, ow}, std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([xi, oi, argmax] {
            const T* g = out_grad(oi);
            if (!g) return;
            xi->ensure_grad();
            for (std::size_t k = 0; k < argmax->size(); ++k) xi->grad[(*argmax)[k]] += g[k];
        });
    }
    return out;
}

// ---- flatten ----------------------------------------------------------------

template <typename T>
TensorT<T> flatten(const TensorT<T>& x) {
    const Shape& xs = x.shape();
    if (xs.size() < 2) throw ShapeError("flatten", str_cat("expected rank >= 2, got ", shape_str(xs)));
    int rest = 1;
    for (std::size_t i = 1; i < xs.size(); ++i) rest *= xs[i];
    std::vector<T> d(x.data().begin(), x.data().end());
    const bool trk = tracked(x);
    auto xi = x.impl();
    TensorT<T> out = make_tensor<T>({xs[0], rest}, std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([xi, oi] {
            const T* g = out_grad(oi);
            if (!g) return;
            accumulate(xi, g);
        });
    }
    return out;
}

// ---- affine -----------------------------------------------------------------

template <typename T>
TensorT<T> affine(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[0])
        throw ShapeError("affine", x.shape(), w.shape());
    if (bias.shape() != Shape{w.shape()[1]})
        throw ShapeError("affine bias", bias.shape(), Shape{w.shape()[1]});
    const int n = x.shape()[0], din = x.shape()[1], dout = w.shape()[1];
    std::vector<T> d(static_cast<std::size_t>(n) * dout);
    {
        ECMap<T> X(x.data().data(), n, din), W(w.data().data(), din, dout);
        EMap<T> Y(d.data(), n, dout);
        Y.noalias() = X * W;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dout; ++j) Y(i, j) += bias.data()[j];
    }
    const bool trk = tracked(x) || tracked(w) || tracked(bias);
    auto xi = x.impl(), wi = w.impl(), bi = bias.impl();
    TensorT<T> out = make_tensor<T>({n, dout}, std::move(d), trk);
    if (trk) {
        auto oi = out.impl();
        TapeT<T>::active().record([xi, wi, bi, oi, n, din, dout] {
            const T* g = out_grad(oi);
            if (!g) return;
            ECMap<T> G(g, n, dout);
            if (xi->requires_grad) {
                xi->ensure_grad();
                ECMap<T> W(wi->data.data(), din, dout);
                EMap<T> dX(xi->grad.data(), n, din);
                dX.noalias() += G * W.transpose();
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                ECMap<T> X(xi->data.data(), n, din);
                EMap<T> dW(wi->grad.data(), din, dout);
                dW.noalias() += X.transpose() * G;
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < dout; ++j) bi->grad[j] += G(i, j);
            }
        });
    }
    return out;
}

// ---- softmax / cross entropy ------------------------------------------------

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
    if (logits.shape().size() != 2)
        throw ShapeError("softmax", str_cat("expected rank-2 logits, got ", shape_str(logits.shape())));
    const int n = logits.shape()[0], c = logits.shape()[1];
    std::vector<T> d(static_cast<std::size_t>(n) * c);
    const T* src = logits.data().data();
    for (int i = 0; i < n; ++i) {
        const T* row = src + static_cast<std::size_t>(i) * c;
        T m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        T sum = T(0);
        for (int j = 0; j < c; ++j) {
            const T e = std::exp(row[j] - m);
            d[static_cast<std::size_t>(i) * c + j] = e;
            sum += e;
        }
        for (int j = 0; j < c; ++j) d[static_cast<std::size_t>(i) * c + j] /= sum;
    }
    return make_tensor<T>(logits.shape(), std::move(d), false);
}

template <typename T>
TensorT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels) {
    if (logits.shape().size() != 2)
        throw ShapeError("softmax_cross_entropy",
                         str_cat("expected rank-2 logits, got ", shape_str(logits.shape())));
    const int n = logits.shape()[0], c = logits.shape()[1];
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("softmax_cross_entropy",
                         str_cat("labels length ", labels.size(), " vs batch ", n));
    for (int y : labels)
        if (y < 0 || y >= c)
            throw std::out_of_range(str_cat("softmax_cross_entropy: label ", y,
                                            " outside class range [0, ", c, ")"));

    auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * c);
    const T* src = logits.data().data();
    T loss = T(0);
    for (int i = 0; i < n; ++i) {
        const T* row = src + static_cast<std::size_t>(i) * c;
        T m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        T sum = T(0);
        for (int j = 0; j < c; ++j) {
            const T e = std::exp(row[j] - m);
            (*probs)[static_cast<std::size_t>(i) * c + j] = e;
            sum += e;
        }
        for (int j = 0; j < c; ++j) (*probs)[static_cast<std::size_t>(i) * c + j] /= sum;
        loss += std::log(sum) - (row[labels[i]] - m);
    }
    loss /= static_cast<T>(n);

    const bool trk = tracked(logits);
    auto li = logits.impl();
    TensorT<T> out = make_tensor<T>({1}, {loss}, trk);
    if (trk) {
        auto oi = out.impl();
        auto lab = std::make_shared<std::vector<int>>(labels);
        TapeT<T>::active().record([li, oi, probs, lab, n, c] {
            const T* g = out_grad(oi);
            if (!g) return;
            li->ensure_grad();
            const T scale = g[0] / static_cast<T>(n);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < c; ++j) {
                    T v = (*probs)[static_cast<std::size_t>(i) * c + j];
                    if (j == (*lab)[i]) v -= T(1);
                    li->grad[static_cast<std::size_t>(i) * c + j] += scale * v;
                }
            }
        });
    }
    return out;
}

// ---- backward / input gradient ----------------------------------------------

template <typename T>
void backward(const TensorT<T>& loss) {
    TapeT<T>::active().backward(loss);
}

template <typename T>
TensorT<T> input_gradient(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x) {
    TapeScopeT<T> scope;
    TensorT<T> leaf = make_tensor<T>(x.shape(), std::vector<T>(x.data().begin(), x.data().end()), true);
    TensorT<T> loss = f(leaf);
    scope.tape().backward(loss);
    auto g = leaf.grad();
    return make_tensor<T>(x.shape(), std::vector<T>(g.begin(), g.end()), false);
}

// ---- explicit instantiation ---------------------------------------------------

#define NPT_INSTANTIATE_TENSOR(T)                                                                  \
    template class TensorT<T>;                                                                     \
    template class TapeT<T>;                                                                       \
    template class TapeScopeT<T>;                                                                  \
    template TensorT<T> make_tensor<T>(Shape, std::vector<T>, bool);                               \
    template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                              \
    template TensorT<T> subtract<T>(const TensorT<T>&, const TensorT<T>&);                         \
    template TensorT<T> multiply<T>(const TensorT<T>&, const TensorT<T>&);                         \
    template TensorT<T> scale<T>(const TensorT<T>&, T);                                            \
    template TensorT<T> matmul<T>(const TensorT<T>&, const TensorT<T>&);                           \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);        \
    template TensorT<T> relu<T>(const TensorT<T>&);                                                \
    template TensorT<T> maxpool2x2<T>(const TensorT<T>&);                                          \
    template TensorT<T> flatten<T>(const TensorT<T>&);                                             \
    template TensorT<T> affine<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);        \
    template TensorT<T> softmax<T>(const TensorT<T>&);                                             \
    template TensorT<T> softmax_cross_entropy<T>(const TensorT<T>&, const std::vector<int>&);      \
    template void backward<T>(const TensorT<T>&);                                                  \
    template TensorT<T> input_gradient<T>(const std::function<TensorT<T>(const TensorT<T>&)>&,     \
                                          const TensorT<T>&);

NPT_INSTANTIATE_TENSOR(float)
NPT_INSTANTIATE_TENSOR(double)

#undef NPT_INSTANTIATE_TENSOR

}  // namespace npt
