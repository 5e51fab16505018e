#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"
#include "npt/evalharness.hpp"
#include "npt/rng.hpp"

using namespace npt;

namespace {

// Threshold classifier on the brightest pixel (see calibrate tests): blur at
// severity 1 flips exactly the faintest of the four impulse images.
struct StubSetup {
    SmallConvNet net;
    ParamList params;
    LabeledImages data;
};

StubSetup threshold_stub() {
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
    params.get("dense.weight").mutable_data()[0] = 1.5f;
    params.get("dense.weight").mutable_data()[1] = -1.5f;
    params.get("dense.bias").mutable_data()[1] = 0.24f;

    const float peaks[4] = {0.9f, 0.8f, 0.7f, 0.3f};
    std::vector<float> px(4 * 16, 0.0f);
    for (int i = 0; i < 4; ++i) px[i * 16 + 2 * 4 + 2] = peaks[i];
    LabeledImages data{make_tensor<float>({4, 1, 4, 4}, std::move(px), false), {0, 0, 0, 0}, 2};
    return {net, std::move(params), std::move(data)};
}

Condition blur_cond() {
    PerturbationSpec spec;
    spec.kind = PerturbKind::Blur;
    spec.severity = 1.0f;
    spec.randomization_width = 0.0f;
    return Condition::natural(spec);
}

Condition wave_cond() {
    PerturbationSpec spec;
    spec.kind = PerturbKind::Wave;
    spec.severity = 2.0f;
    spec.randomization_width = 0.0f;
    return Condition::natural(spec);
}

ConvNetSpec tiny_spec() {
    ConvNetSpec spec;
    spec.conv1_filters = 4;
    spec.conv2_filters = 6;
    spec.num_classes = 3;
    return spec;
}

MatrixOptions micro_options(std::uint64_t seed) {
    MatrixOptions opt;
    opt.netspec = tiny_spec();
    opt.sgd.batch_size = 20;
    opt.sgd.learning_rate = 0.02;  // stable at 240 training images
    opt.n1 = 4;
    opt.n2 = 2;
    opt.rho_target = 8.0;
    opt.tolerance = 4.0;
    opt.max_evals = 12;
    opt.repeats = 1;
    opt.cal_repeats = 2;
    opt.seed = seed;
    opt.eval_batch = 60;
    return opt;
}

}  // namespace

TEST_CASE("delta is the robust-minus-standard-clean difference") {
    auto s = threshold_stub();
    const Condition cond = blur_cond();
    // Same parameters on both sides: the blur flips one of four images.
    CHECK(delta(s.net, s.params, s.params, s.data, cond, 1) == -25.0);

    const double d = delta(s.net, s.params, s.params, s.data, wave_cond(), 1);
    CHECK(d == 0.0);  // cyclic shifts keep the max pixel

    PerturbationSpec uncal;
    uncal.kind = PerturbKind::Blur;
    uncal.severity = 0.0f;
    CHECK_THROWS_AS(delta(s.net, s.params, s.params, s.data, Condition::natural(uncal), 1),
                    std::invalid_argument);
    AttackConfig atk;
    atk.epsilon = 0.0f;
    CHECK_THROWS_AS(delta(s.net, s.params, s.params, s.data, Condition::adversarial(atk), 1),
                    std::invalid_argument);
}

TEST_CASE("experiment_matrix crosses nets with conditions") {
    auto s = threshold_stub();
    const std::vector<Condition> conds = {Condition::clean(), blur_cond(), wave_cond()};
    const std::vector<RobustEntry> robust = {
        {"natural", "blur", &s.params},
        {"natural", "wave", &s.params},
    };
    const auto records =
        experiment_matrix(s.net, s.params, robust, s.data, conds, 10.0, 2, 5, 4, false);
    REQUIRE(records.size() == 9);  // (baseline + 2 robust) x 3 conditions

    for (const auto& r : records) {
        CHECK(r.acc_standard_clean == 100.0);
        CHECK(r.delta == doctest::Approx(r.acc_robust - r.acc_standard_clean).epsilon(1e-12));
        CHECK(r.rho_target == 10.0);
        CHECK(r.seconds == 0.0);
    }
    CHECK(records[0].regime == "standard");
    CHECK(records[0].train_kind.empty());
    CHECK(records[0].condition == "clean");

    int seen_count = 0;
    for (const auto& r : records) seen_count += r.seen;
    CHECK(seen_count == 2);  // (blur net, blur) and (wave net, wave)
    for (const auto& r : records)
        if (r.seen) CHECK(r.train_kind == r.condition);

    // Evaluation seeds are paired: every net shares the per-condition seed.
    for (const auto& r : records)
        for (const auto& q : records)
            if (r.condition == q.condition) CHECK(r.seed == q.seed);

    CHECK_THROWS_AS(experiment_matrix(s.net, s.params, robust, s.data, {}, 10.0, 2, 5, 4, false),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        experiment_matrix(s.net, s.params, robust, s.data, conds, 10.0, 0, 5, 4, false),
        std::invalid_argument);
}

TEST_CASE("records csv round trips and rejects foreign input") {
    auto s = threshold_stub();
    const std::vector<Condition> conds = {Condition::clean(), blur_cond()};
    const std::vector<RobustEntry> robust = {{"natural", "blur", &s.params}};
    const auto records =
        experiment_matrix(s.net, s.params, robust, s.data, conds, 10.0, 1, 5, 4, false);

    const std::string csv = records_csv(records);
    CHECK(csv.rfind("regime,train_kind,condition,seen,acc_standard_clean,acc_robust,delta,"
                    "rho_target,seed,seconds\n",
                    0) == 0);
    const auto back = records_from_csv(csv);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].regime == records[i].regime);
        CHECK(back[i].train_kind == records[i].train_kind);
        CHECK(back[i].condition == records[i].condition);
        CHECK(back[i].seen == records[i].seen);
        CHECK(back[i].acc_robust == doctest::Approx(records[i].acc_robust).epsilon(1e-9));
        CHECK(back[i].delta == doctest::Approx(records[i].delta).epsilon(1e-9));
        CHECK(back[i].seed == records[i].seed);
    }
    CHECK(records_csv(back) == csv);

    CHECK_THROWS_AS(records_from_csv(""), std::runtime_error);
    CHECK_THROWS_AS(records_from_csv("foo,bar\n"), std::runtime_error);
    const std::string header = csv.substr(0, csv.find('\n') + 1);
    CHECK_THROWS_AS(records_from_csv(header + "a,b,c\n"), std::runtime_error);
}

TEST_CASE("ablation names parse") {
    CHECK(ablation_from_string("epoch_budget") == Ablation::EpochBudget);
    CHECK(ablation_from_string("n2_sweep") == Ablation::N2Sweep);
    CHECK(ablation_from_string("rho_sweep") == Ablation::RhoSweep);
    CHECK_THROWS_AS(ablation_from_string("width_sweep"), std::invalid_argument);
}

TEST_CASE("n2 sweep anchors its zero point at the standard baseline") {
    auto data = synthetic_splits({240, 120, 120}, 91);
    const MatrixOptions opt = micro_options(91);
    const AblateResult res = run_ablation(data, Ablation::N2Sweep, opt, {"gaussian_noise"});

    REQUIRE(res.calibrations.size() == 1);
    CHECK(res.calibrations[0].kind == "gaussian_noise");

    // n2 in {0, 1, 2, 3} at n1 = 4, two conditions each.
    REQUIRE(res.records.size() == 8);
    const ExperimentRecord* zero_clean = nullptr;
    for (const auto& r : res.records)
        if (r.regime == "natural:n2=0" && r.condition == "clean") zero_clean = &r;
    REQUIRE(zero_clean != nullptr);
    // The n2=0 net is the standard baseline itself.
    CHECK(zero_clean->acc_robust == zero_clean->acc_standard_clean);
    CHECK(zero_clean->delta == 0.0);

    for (const auto& r : res.records) {
        CHECK(r.train_kind == "gaussian_noise");
        CHECK((r.condition == "clean" || r.condition == "gaussian_noise"));
        CHECK(r.delta == doctest::Approx(r.acc_robust - r.acc_standard_clean).epsilon(1e-12));
    }
}

TEST_CASE("rho sweep emits one record per rho and kind") {
    auto data = synthetic_splits({240, 120, 120}, 92);
    const MatrixOptions opt = micro_options(92);
    const std::vector<double> rhos = {4.0, 8.0};
    const AblateResult res = run_ablation(data, Ablation::RhoSweep, opt, {"gaussian_noise"}, rhos);

    REQUIRE(res.records.size() == rhos.size() * 1);
    REQUIRE(res.calibrations.size() == rhos.size() * 1);
    CHECK(res.records[0].regime == "natural:rho=4");
    CHECK(res.records[1].regime == "natural:rho=8");
    CHECK(res.records[0].rho_target == 4.0);
    CHECK(res.records[1].rho_target == 8.0);
    for (const auto& r : res.records) CHECK(r.condition == "clean");
    for (const auto& c : res.calibrations) {
        CHECK(c.kind == "gaussian_noise");
        CHECK(c.severity > 0.0);
    }

    CHECK_THROWS_AS(run_ablation(data, Ablation::RhoSweep, opt, {}), std::invalid_argument);
}

TEST_CASE("epoch budget ablation compares padded standard vs perturbed training") {
    auto data = synthetic_splits({240, 120, 120}, 93);
    MatrixOptions opt = micro_options(93);
    opt.n1 = 2;
    opt.n2 = 1;
    const AblateResult res = run_ablation(data, Ablation::EpochBudget, opt, {"gaussian_noise"});

    REQUIRE(res.records.size() == 4);
    bool saw_std = false, saw_nat = false;
    for (const auto& r : res.records) {
        if (r.regime == "standard:epochs=4") saw_std = true;
        if (r.regime == "natural:epochs=3") saw_nat = true;
    }
    CHECK(saw_std);
    CHECK(saw_nat);
}

TEST_CASE("scatter svg is deterministic with the paper marker vocabulary") {
    auto s = threshold_stub();
    const std::vector<Condition> conds = {Condition::clean(), blur_cond(), wave_cond()};
    const std::vector<RobustEntry> robust = {
        {"natural", "blur", &s.params},
        {"adversarial", "adversarial", &s.params},
    };
    auto records =
        experiment_matrix(s.net, s.params, robust, s.data, conds, 10.0, 1, 5, 4, false);
    // Cover the remaining marker shapes through records parsed back in.
    for (const char* k : {"elastic", "occlusion", "gaussian_noise", "saturation", "adversarial"}) {
        ExperimentRecord r = records.front();
        r.condition = k;
        r.regime = "natural";
        r.train_kind = k;
        records.push_back(r);
    }

    const std::string svg = render_scatter(records, "condition");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.rfind("</svg>") != std::string::npos);
    CHECK(svg.find("<circle") != std::string::npos);   // elastic marker
    CHECK(svg.find("<rect") != std::string::npos);     // occlusion marker (and frame)
    CHECK(svg.find("<polygon") != std::string::npos);  // triangles and stars
    CHECK(svg.find("<line") != std::string::npos);     // cross and plus markers
    CHECK(svg.find("clean") != std::string::npos);     // legend labels
    CHECK(svg.find("wave") != std::string::npos);

    CHECK(render_scatter(records, "condition") == svg);
    CHECK(render_scatter(records, "regime") != svg);

    CHECK_THROWS_AS(render_scatter({}, "condition"), std::invalid_argument);
    CHECK_THROWS_AS(render_scatter(records, "dataset"), std::invalid_argument);
}
