#include <benchmark/benchmark.h>

#include "npt/adversarial.hpp"
#include "npt/perturb.hpp"
#include "npt/schedules.hpp"

using namespace npt;

namespace {

LabeledImages bench_data(int n) { return synthetic_shapes(n, 1234); }

const SmallConvNet& bench_net() {
    static ConvNetSpec spec = [] {
        ConvNetSpec s;
        s.num_classes = 3;
        return s;
    }();
    static SmallConvNet net(spec);
    return net;
}

void BM_ForwardPass(benchmark::State& state) {
    const LabeledImages data = bench_data(static_cast<int>(state.range(0)));
    const ParamList params = bench_net().init_params(7);
    for (auto _ : state) {
        Tensor out = bench_net().logits(params, data.images);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardPass)->Arg(16)->Arg(64);

void BM_LossBackward(benchmark::State& state) {
    const LabeledImages data = bench_data(static_cast<int>(state.range(0)));
    ParamList params = bench_net().init_params(7);
    for (auto _ : state) {
        TapeScope scope;
        Tensor loss = softmax_cross_entropy(bench_net().logits(params, data.images), data.labels);
        backward(loss);
        params.zero_grad();
        benchmark::DoNotOptimize(loss.item());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossBackward)->Arg(16)->Arg(64);

void BM_Matmul(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    Rng rng(5);
    std::vector<float> av(n * n), bv(n * n);
    for (auto& v : av) v = static_cast<float>(rng.uniform());
    for (auto& v : bv) v = static_cast<float>(rng.uniform());
    const Tensor a = make_tensor<float>({n, n}, std::move(av), false);
    const Tensor b = make_tensor<float>({n, n}, std::move(bv), false);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Perturbation(benchmark::State& state) {
    const PerturbKind kind = kAllPerturbKinds[state.range(0)];
    const LabeledImages data = bench_data(32);
    PerturbationSpec spec;
    spec.kind = kind;
    spec.severity = kind == PerturbKind::Elastic ? 20.0f : 0.5f;
    std::uint64_t seed = 1;
    for (auto _ : state) {
        Tensor out = apply_batch(spec, data.images, seed++);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetLabel(to_string(kind));
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Perturbation)->DenseRange(0, 5);

void BM_AttackStep(benchmark::State& state) {
    const LabeledImages data = bench_data(32);
    const ParamList params = bench_net().init_params(7);
    AttackConfig cfg;
    cfg.epsilon = 0.02f;
    cfg.steps = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Tensor adv = bim_attack(bench_net(), params, data.images, data.labels, cfg);
        benchmark::DoNotOptimize(adv.data().data());
    }
    state.SetItemsProcessed(state.iterations() * 32 * state.range(0));
}
BENCHMARK(BM_AttackStep)->Arg(1)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
