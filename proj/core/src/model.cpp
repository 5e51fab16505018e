#include "npt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "npt/rng.hpp"

namespace npt {

std::string ConvNetSpec::descriptor() const {
    return str_cat("smallconv:v1:in=", in_channels, "x", in_height, "x", in_width,
                   ":k=", kernel, ":c1=", conv1_filters, ":c2=", conv2_filters,
                   ":classes=", num_classes);
}

ConvNetSpec ConvNetSpec::parse_descriptor(const std::string& text) {
    ConvNetSpec s;
    int got = std::sscanf(text.c_str(), "smallconv:v1:in=%dx%dx%d:k=%d:c1=%d:c2=%d:classes=%d",
                          &s.in_channels, &s.in_height, &s.in_width, &s.kernel,
                          &s.conv1_filters, &s.conv2_filters, &s.num_classes);
    if (got != 7)
        throw std::invalid_argument("ConvNetSpec: unrecognized architecture descriptor: " + text);
    return s;
}

std::int64_t ConvNetSpec::param_count() const {
    const std::int64_t k2 = static_cast<std::int64_t>(kernel) * kernel;
    const std::int64_t conv1 = static_cast<std::int64_t>(conv1_filters) * in_channels * k2 + conv1_filters;
    const std::int64_t conv2 = static_cast<std::int64_t>(conv2_filters) * conv1_filters * k2 + conv2_filters;
    const std::int64_t feat = static_cast<std::int64_t>(conv2_filters) * (in_height / 4) * (in_width / 4);
    const std::int64_t dense = feat * num_classes + num_classes;
    return conv1 + conv2 + dense;
}

template <typename T>
const TensorT<T>& ParamListT<T>::get(const std::string& name) const {
    for (const auto& p : items_)
        if (p.name == name) return p.tensor;
    throw std::out_of_range("ParamList: no parameter named " + name);
}

template <typename T>
TensorT<T>& ParamListT<T>::get(const std::string& name) {
    for (auto& p : items_)
        if (p.name == name) return p.tensor;
    throw std::out_of_range("ParamList: no parameter named " + name);
}

template <typename T>
std::int64_t ParamListT<T>::numel() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
}

template <typename T>
ParamListT<T> ParamListT<T>::detached() const {
    ParamListT out;
    for (const auto& p : items_) out.add(p.name, p.tensor.detached());
    return out;
}

template <typename T>
ParamListT<T> ParamListT<T>::clone() const {
    ParamListT out;
    for (const auto& p : items_) out.add(p.name, p.tensor.clone());
    return out;
}

template <typename T>
void ParamListT<T>::zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
}

namespace {

template <typename T>
TensorT<T> he_normal(Shape shape, int fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / fan_in);
    std::vector<T> d(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : d) v = static_cast<T>(rng.normal(0.0, stddev));
    return make_tensor<T>(std::move(shape), std::move(d), true);
}

}  // namespace

template <typename T>
ParamListT<T> SmallConvNetT<T>::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    const int k = spec_.kernel;
    ParamListT<T> p;
    p.add("conv1.weight", he_normal<T>({spec_.conv1_filters, spec_.in_channels, k, k},
                                       spec_.in_channels * k * k, rng));
    p.add("conv1.bias", TensorT<T>::zeros({spec_.conv1_filters}, true));
    p.add("conv2.weight", he_normal<T>({spec_.conv2_filters, spec_.conv1_filters, k, k},
                                       spec_.conv1_filters * k * k, rng));
    p.add("conv2.bias", TensorT<T>::zeros({spec_.conv2_filters}, true));
    const int feat = spec_.conv2_filters * (spec_.in_height / 4) * (spec_.in_width / 4);
    p.add("dense.weight", he_normal<T>({feat, spec_.num_classes}, feat, rng));
    p.add("dense.bias", TensorT<T>::zeros({spec_.num_classes}, true));
    return p;
}

template <typename T>
TensorT<T> SmallConvNetT<T>::logits(const ParamListT<T>& params, const TensorT<T>& x) const {
    if (x.shape().size() != 4 || x.shape()[1] != spec_.in_channels ||
        x.shape()[2] != spec_.in_height || x.shape()[3] != spec_.in_width)
        throw ShapeError("SmallConvNet::logits",
                         x.shape(), {-1, spec_.in_channels, spec_.in_height, spec_.in_width});
    auto h = conv2d(x, params.get("conv1.weight"), params.get("conv1.bias"));
    h = maxpool2x2(relu(h));
    h = conv2d(h, params.get("conv2.weight"), params.get("conv2.bias"));
    h = maxpool2x2(relu(h));
    h = flatten(h);
    return affine(h, params.get("dense.weight"), params.get("dense.bias"));
}

void SgdConfig::validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("SgdConfig: learning_rate must be > 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("SgdConfig: momentum must be in [0,1)");
    if (decay_multiplier <= 0 || decay_multiplier > 1)
        throw std::invalid_argument("SgdConfig: decay_multiplier must be in (0,1]");
    if (batch_size < 1) throw std::invalid_argument("SgdConfig: batch_size must be >= 1");
    for (std::size_t i = 1; i < decay_epochs.size(); ++i)
        if (decay_epochs[i] <= decay_epochs[i - 1])
            throw std::invalid_argument("SgdConfig: decay_epochs must be strictly increasing");
}

double SgdConfig::effective_lr(int epoch) const {
    double lr = learning_rate;
    for (int e : decay_epochs)
        if (epoch >= e) lr *= decay_multiplier;
    return lr;
}

template <typename T>
void sgd_step(ParamListT<T>& params, const SgdConfig& cfg, MomentumStateT<T>& state, int epoch) {
    if (state.velocity.empty()) {
        for (auto& p : params)
            state.velocity.push_back({p.name, TensorT<T>::zeros(p.tensor.shape(), false)});
    }
    if (state.velocity.size() != params.size())
        throw std::logic_error("sgd_step: momentum state does not match parameter list");
    const T lr = static_cast<T>(cfg.effective_lr(epoch));
    const T mu = static_cast<T>(cfg.momentum);
    std::size_t i = 0;
    for (auto& p : params) {
        if (!p.tensor.has_grad())
            throw std::logic_error("sgd_step: missing gradient for parameter " + p.name);
        auto g = p.tensor.grad();
        auto v = state.velocity[i].tensor.mutable_data();
        auto w = p.tensor.mutable_data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = mu * v[j] + g[j];
            w[j] -= lr * v[j];
        }
        ++i;
    }
}

namespace {

template <typename T>
int argmax_row(const T* row, int c) {
    int best = 0;
    for (int j = 1; j < c; ++j)
        if (row[j] > row[best]) best = j;  // ties keep the smaller index
    return best;
}

}  // namespace

template <typename T>
double accuracy(const SmallConvNetT<T>& net, const ParamListT<T>& params,
                const TensorT<T>& images, const std::vector<int>& labels, int batch_size) {
    const int n = images.shape()[0];
    if (n == 0 || labels.empty()) throw std::invalid_argument("accuracy: empty dataset");
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("accuracy", str_cat("labels length ", labels.size(), " vs batch ", n));
    const ParamListT<T> frozen = params.detached();
    const int c = net.spec().num_classes;
    const std::int64_t img_elems = static_cast<std::int64_t>(images.numel()) / n;
    std::int64_t correct = 0;
    for (int start = 0; start < n; start += batch_size) {
        const int bs = std::min(batch_size, n - start);
        Shape bshape = images.shape();
        bshape[0] = bs;
        std::vector<T> buf(images.data().begin() + start * img_elems,
                           images.data().begin() + (start + bs) * img_elems);
        TensorT<T> batch = make_tensor<T>(bshape, std::move(buf), false);
        TapeScopeT<T> scope;  // keeps any outer tape clean
        TensorT<T> lg = net.logits(frozen, batch);
        const T* rows = lg.data().data();
        for (int i = 0; i < bs; ++i)
            if (argmax_row(rows + static_cast<std::size_t>(i) * c, c) == labels[start + i]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

template <typename T>
TensorT<T> model_input_gradient(const SmallConvNetT<T>& net, const ParamListT<T>& params,
                                const TensorT<T>& x, const std::vector<int>& labels) {
    const ParamListT<T> frozen = params.detached();
    return input_gradient<T>(
        [&](const TensorT<T>& leaf) { return softmax_cross_entropy(net.logits(frozen, leaf), labels); },
        x);
}

#define NPT_INSTANTIATE_MODEL(T)                                                                    \
    template class ParamListT<T>;                                                                   \
    template class SmallConvNetT<T>;                                                                \
    template void sgd_step<T>(ParamListT<T>&, const SgdConfig&, MomentumStateT<T>&, int);           \
    template double accuracy<T>(const SmallConvNetT<T>&, const ParamListT<T>&, const TensorT<T>&,   \
                                const std::vector<int>&, int);                                      \
    template TensorT<T> model_input_gradient<T>(const SmallConvNetT<T>&, const ParamListT<T>&,      \
                                                const TensorT<T>&, const std::vector<int>&);

NPT_INSTANTIATE_MODEL(float)
NPT_INSTANTIATE_MODEL(double)

#undef NPT_INSTANTIATE_MODEL

}  // namespace npt
