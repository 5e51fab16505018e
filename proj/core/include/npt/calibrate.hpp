#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "npt/adversarial.hpp"
#include "npt/dataset.hpp"
#include "npt/model.hpp"
#include "npt/perturb.hpp"

namespace npt {

// A test-time condition: clean data, a natural perturbation at a fixed
// severity, or a PGD attack at a fixed epsilon.
struct Condition {
    enum class Type { Clean, Natural, Adversarial };

    Type type = Type::Clean;
    PerturbationSpec spec;  // Natural
    AttackConfig attack;    // Adversarial

    std::string name() const;

    static Condition clean();
    static Condition natural(PerturbationSpec spec);
    static Condition adversarial(AttackConfig cfg);
};

// The seven calibratable kinds in report order: adversarial first, then the
// natural kinds.
std::vector<std::string> all_calibration_kinds();

// Builds the condition for a calibrated (kind, severity) pair. For
// "adversarial" the severity is epsilon and the attack is PGD with
// `attack_steps` iterations.
Condition condition_for(const std::string& kind, double severity, int attack_steps = 10);

// Accuracy of the net on `data` transformed per the condition. `seed` drives
// the per-image perturbation draws or the attack's random starts.
double accuracy_under_condition(const SmallConvNet& net, const ParamList& params,
                                const LabeledImages& data, const Condition& cond,
                                std::uint64_t seed, int batch_size = 100);

// Mean over the given seeds of [accuracy(clean) - accuracy(condition)]; the
// clean accuracy is computed once.
double measure_drop(const SmallConvNet& net, const ParamList& params, const LabeledImages& data,
                    const Condition& cond, const std::vector<std::uint64_t>& seeds,
                    int batch_size = 100);

// Mean squared difference (0-255 convention) between the clean set and the
// condition-transformed set.
double condition_mse(const SmallConvNet& net, const ParamList& params, const LabeledImages& data,
                     const Condition& cond, std::uint64_t seed, int batch_size = 100);

struct CalibrationSettings {
    double target = 10.0;     // drop in percentage points
    double tolerance = 0.5;
    double s_max = 1.0;
    int max_evals = 40;       // severity probes
    int repeats = 3;          // seeded evaluations averaged per probe
    std::uint64_t seed = 1;
};

struct CalibrationResult {
    std::string kind;
    double severity = 0.0;   // calibrated s* (or epsilon*)
    double drop = 0.0;       // achieved mean drop over `repeats` fresh seeds
    double deviation = 0.0;  // |drop - target|
    int evals = 0;
    int repeats = 0;
    std::uint64_t seed = 0;
    bool success = false;
    std::string message;
};

// Bisection on a noisy monotone severity -> drop response. `response(s, seed)`
// returns one seeded drop measurement; each probe averages `repeats` fresh
// seeds, and a passing probe is confirmed by an independent re-measurement.
// Throws if the target is unreachable at s_max; exhausting max_evals returns a
// failure result carrying the best probe.
CalibrationResult calibrate_response(const std::function<double(double, std::uint64_t)>& response,
                                     const CalibrationSettings& cfg);

// Default bisection upper bound for each kind's master severity.
double default_s_max(const std::string& kind);

// Calibrates one kind ("adversarial" or a natural kind) on the given net and
// dataset.
CalibrationResult calibrate_severity(const SmallConvNet& net, const ParamList& params,
                                     const LabeledImages& data, const std::string& kind,
                                     const CalibrationSettings& cfg, int batch_size = 100,
                                     int attack_steps = 10);

// CSV with columns kind,severity,drop,deviation,evals,seed (fixed kind order).
std::string calibration_csv(const std::vector<CalibrationResult>& results);

// CSV with columns kind,severity,drop,deviation,mse (fixed kind order);
// `mse_per_kind` is parallel to `results`.
std::string standardization_report(const std::vector<CalibrationResult>& results,
                                   const std::vector<double>& mse_per_kind);

}  // namespace npt
