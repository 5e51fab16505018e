#include "npt/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include "npt/common.hpp"

namespace npt {

void AttackConfig::validate() const {
    if (epsilon < 0.0f) throw std::invalid_argument("attack: epsilon must be >= 0");
    if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
    if (step < 0.0f) throw std::invalid_argument("attack: step must be >= 0");
}

namespace {

Tensor iterate_attack(const SmallConvNet& net, const ParamList& params, const Tensor& x0,
                      const std::vector<int>& y, const AttackConfig& cfg, const Tensor& start) {
    const float eps = cfg.epsilon;
    const float step = cfg.effective_step();
    const float* base = x0.data().data();

    std::vector<float> cur(start.data().begin(), start.data().end());
    for (int k = 0; k < cfg.steps; ++k) {
        const Tensor xt = make_tensor<float>(x0.shape(), std::vector<float>(cur), false);
        const Tensor g = model_input_gradient(net, params, xt, y);
        const float* gp = g.data().data();
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const float sign = gp[i] > 0.0f ? 1.0f : (gp[i] < 0.0f ? -1.0f : 0.0f);
            float v = cur[i] + step * sign;
            v = std::min(std::max(v, base[i] - eps), base[i] + eps);
            cur[i] = clamp01f(v);
        }
    }
    return make_tensor<float>(x0.shape(), std::move(cur), false);
}

}  // namespace

Tensor bim_attack(const SmallConvNet& net, const ParamList& params, const Tensor& x,
                  const std::vector<int>& y, const AttackConfig& cfg) {
    cfg.validate();
    if (cfg.random_start) throw std::invalid_argument("bim_attack: random_start must be false");
    if (cfg.epsilon == 0.0f) return x.detached();
    return iterate_attack(net, params, x, y, cfg, x.detached());
}

Tensor pgd_example(const SmallConvNet& net, const ParamList& params, const Tensor& x,
                   const std::vector<int>& y, const AttackConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!cfg.random_start) throw std::invalid_argument("pgd_example: random_start must be true");
    if (cfg.epsilon == 0.0f) return x.detached();
    std::vector<float> start(x.data().begin(), x.data().end());
    for (float& v : start)
        v = clamp01f(v + static_cast<float>(rng.uniform(-double(cfg.epsilon), double(cfg.epsilon))));
    return iterate_attack(net, params, x, y, cfg,
                          make_tensor<float>(x.shape(), std::move(start), false));
}

Tensor attack_batch(const SmallConvNet& net, const ParamList& params, const LabeledImages& data,
                    const AttackConfig& cfg, std::uint64_t seed, int batch_size) {
    if (data.size() == 0) throw std::invalid_argument("attack_batch: empty dataset");
    const std::int64_t img = static_cast<std::int64_t>(data.images.numel()) / data.size();
    std::vector<float> attacked(data.images.numel());
    int chunk_index = 0;
    for (int i = 0; i < data.size(); i += batch_size, ++chunk_index) {
        const int n = std::min(batch_size, data.size() - i);
        Shape shape = data.images.shape();
        shape[0] = n;
        std::vector<float> buf(data.images.data().begin() + i * img,
                               data.images.data().begin() + (i + n) * img);
        const Tensor x = make_tensor<float>(shape, std::move(buf), false);
        const std::vector<int> y(data.labels.begin() + i, data.labels.begin() + i + n);
        Tensor adv;
        if (cfg.random_start) {
            Rng rng(derive_seed(seed, "attack.chunk", static_cast<std::uint64_t>(chunk_index)));
            adv = pgd_example(net, params, x, y, cfg, rng);
        } else {
            adv = bim_attack(net, params, x, y, cfg);
        }
        std::copy(adv.data().begin(), adv.data().end(), attacked.begin() + i * img);
    }
    return make_tensor<float>(data.images.shape(), std::move(attacked), false);
}

double attack_success_drop(const SmallConvNet& net, const ParamList& params,
                           const LabeledImages& data, const AttackConfig& cfg,
                           std::uint64_t seed, int batch_size) {
    if (data.size() == 0) throw std::invalid_argument("attack_success_drop: empty dataset");
    const double clean = accuracy(net, params, data.images, data.labels, batch_size);
    const Tensor adv = attack_batch(net, params, data, cfg, seed, batch_size);
    const double hit = accuracy(net, params, adv, data.labels, batch_size);
    return clean - hit;
}

}  // namespace npt
