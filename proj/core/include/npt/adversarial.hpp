#pragma once

#include <cstdint>
#include <vector>

#include "npt/dataset.hpp"
#include "npt/model.hpp"
#include "npt/rng.hpp"
#include "npt/tensor.hpp"

namespace npt {

// l-inf bounded iterative attack parameters. random_start=false is BIM,
// true is PGD.
struct AttackConfig {
    float epsilon = 0.03f;
    float step = 0.0f;  // 0 means use the default epsilon/4
    int steps = 10;
    bool random_start = false;

    float effective_step() const { return step > 0.0f ? step : epsilon / 4.0f; }
    void validate() const;
};

// K iterations of x <- clamp01(clip_{x0 +- eps}(x + step * sign(dL/dx))),
// ascending the true-label loss. Parameter gradients are never touched.
Tensor bim_attack(const SmallConvNet& net, const ParamList& params, const Tensor& x,
                  const std::vector<int>& y, const AttackConfig& cfg);

// BIM from a uniform random start inside the epsilon ball, projected to [0,1].
Tensor pgd_example(const SmallConvNet& net, const ParamList& params, const Tensor& x,
                   const std::vector<int>& y, const AttackConfig& cfg, Rng& rng);

// Attacks a whole labeled set in chunks with seed-derived per-chunk RNG
// streams (PGD) or deterministically (BIM).
Tensor attack_batch(const SmallConvNet& net, const ParamList& params, const LabeledImages& data,
                    const AttackConfig& cfg, std::uint64_t seed, int batch_size = 100);

// accuracy(clean) - accuracy(attacked), percentage points.
double attack_success_drop(const SmallConvNet& net, const ParamList& params,
                           const LabeledImages& data, const AttackConfig& cfg,
                           std::uint64_t seed, int batch_size = 100);

}  // namespace npt
