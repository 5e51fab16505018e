#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npt/tensor.hpp"

namespace npt {

// Fixed two-block convolutional classifier:
//   conv kxk -> relu -> maxpool2 -> conv kxk -> relu -> maxpool2 -> flatten -> dense
struct ConvNetSpec {
    int in_channels = 3;
    int in_height = 32;
    int in_width = 32;
    int conv1_filters = 16;
    int conv2_filters = 32;
    int kernel = 3;
    int num_classes = 10;

    std::string descriptor() const;
    static ConvNetSpec parse_descriptor(const std::string& text);

    // Parameter count is a pure function of the descriptor.
    std::int64_t param_count() const;

    bool operator==(const ConvNetSpec&) const = default;
};

template <typename T>
struct NamedTensorT {
    std::string name;
    TensorT<T> tensor;
};

// Ordered, named parameter collection.
template <typename T>
class ParamListT {
public:
    void add(std::string name, TensorT<T> t) { items_.push_back({std::move(name), std::move(t)}); }
    const TensorT<T>& get(const std::string& name) const;
    TensorT<T>& get(const std::string& name);
    std::size_t size() const { return items_.size(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    std::int64_t numel() const;
    // Same names, detached tensors (shared nothing with the originals' grads).
    ParamListT detached() const;
    ParamListT clone() const;
    void zero_grad();

private:
    std::vector<NamedTensorT<T>> items_;
};

template <typename T>
class SmallConvNetT {
public:
    explicit SmallConvNetT(ConvNetSpec spec) : spec_(spec) {}

    const ConvNetSpec& spec() const { return spec_; }

    // He fan-in scaled Gaussian weights, zero biases; deterministic in seed.
    ParamListT<T> init_params(std::uint64_t seed) const;

    // x (N,C,H,W) -> logits (N,num_classes)
    TensorT<T> logits(const ParamListT<T>& params, const TensorT<T>& x) const;

private:
    ConvNetSpec spec_;
};

struct SgdConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::vector<int> decay_epochs;     // strictly increasing, 1-based
    double decay_multiplier = 0.2;     // in (0, 1]
    int batch_size = 50;

    void validate() const;
    // learning rate after applying every decay boundary at or before `epoch`
    double effective_lr(int epoch) const;
};

template <typename T>
struct MomentumStateT {
    std::vector<NamedTensorT<T>> velocity;  // parallel to the param list
};

// Classic momentum update: v = mu*v + g; p -= lr*v. Every parameter must have
// a populated gradient.
template <typename T>
void sgd_step(ParamListT<T>& params, const SgdConfig& cfg, MomentumStateT<T>& state, int epoch);

// 100 * mean(argmax(logits) == label); argmax ties break toward the smallest
// class index. Throws on an empty dataset.
template <typename T>
double accuracy(const SmallConvNetT<T>& net, const ParamListT<T>& params,
                const TensorT<T>& images, const std::vector<int>& labels, int batch_size);

// dL/dx for the batch cross-entropy loss, with parameters treated as
// constants: their grad buffers are never touched.
template <typename T>
TensorT<T> model_input_gradient(const SmallConvNetT<T>& net, const ParamListT<T>& params,
                                const TensorT<T>& x, const std::vector<int>& labels);

using SmallConvNet = SmallConvNetT<float>;
using ParamList = ParamListT<float>;
using MomentumState = MomentumStateT<float>;

}  // namespace npt
