#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npt/calibrate.hpp"
#include "npt/schedules.hpp"

namespace npt {

// One (training regime, test condition) cell. delta uses the figure sign
// convention: positive means the robust net beats the standard net's clean
// accuracy.
struct ExperimentRecord {
    std::string regime;      // standard/augment/natural/adversarial/multi, or an ablation tag
    std::string train_kind;  // perturbation kind, "adversarial", "multi"; empty for standard
    std::string condition;   // clean, adversarial, or a natural kind
    bool seen = false;       // train_kind == condition (never for clean)
    double acc_standard_clean = 0.0;
    double acc_robust = 0.0;
    double delta = 0.0;  // acc_robust - acc_standard_clean
    double rho_target = 0.0;
    std::uint64_t seed = 0;
    double seconds = 0.0;
};

// delta = acc(robust net under condition) - acc(standard net on clean).
// Throws if a non-clean condition has no calibrated severity.
double delta(const SmallConvNet& net, const ParamList& standard_params,
             const ParamList& robust_params, const LabeledImages& test, const Condition& cond,
             std::uint64_t seed, int batch_size = 100);

struct RobustEntry {
    std::string regime;
    std::string train_kind;
    const ParamList* params = nullptr;
};

// Full cross product of nets x conditions. Perturbed/attacked accuracies are
// means over `repeats` derived seeds, shared across nets per condition so
// cells are paired. With include_baseline, standard-net rows come first.
std::vector<ExperimentRecord> experiment_matrix(const SmallConvNet& net,
                                                const ParamList& standard_params,
                                                const std::vector<RobustEntry>& robust,
                                                const LabeledImages& test,
                                                const std::vector<Condition>& conditions,
                                                double rho_target, int repeats,
                                                std::uint64_t seed, int batch_size,
                                                bool record_timing, bool include_baseline = true);

struct MatrixOptions {
    ConvNetSpec netspec;
    SgdConfig sgd;
    int n1 = 8;
    int n2 = 4;
    double rho_target = 10.0;
    double tolerance = 0.5;
    int max_evals = 40;
    int repeats = 3;      // eval seeds per matrix cell
    int cal_repeats = 3;  // seeded measurements per calibration probe
    int attack_steps = 10;
    std::uint64_t seed = 1;
    int eval_batch = 100;
    bool record_timing = false;
    bool include_multi = false;
    bool include_augment = false;
};

struct MatrixResult {
    std::vector<CalibrationResult> calibrations;  // fixed kind order
    std::vector<double> mses;                     // test-set MSE per calibration row
    std::vector<ExperimentRecord> records;
    ParamList standard_params;
    std::vector<EpochLog> standard_log;
    std::vector<std::pair<std::string, std::vector<EpochLog>>> robust_logs;  // keyed by train kind
    double acc_standard_clean = 0.0;  // on the test split
};

// End-to-end protocol: train the standard net at the full epoch budget,
// calibrate every kind on the validation split, train one robust net per
// kind, then evaluate all nets on the test split under every condition.
MatrixResult run_matrix(const DatasetSplits& data, const MatrixOptions& opt);

enum class Ablation { EpochBudget, N2Sweep, RhoSweep };
Ablation ablation_from_string(const std::string& name);

struct AblateResult {
    std::vector<ExperimentRecord> records;
    std::vector<CalibrationResult> calibrations;
};

// epoch_budget: standard at n1+n1 epochs vs perturbed at n1+n2 (kinds[0]).
// n2_sweep: n2 in {0} + {25,50,75} scaled by n1/100 (kinds[0]).
// rho_sweep: every rho x kind combination, evaluated on clean data.
AblateResult run_ablation(const DatasetSplits& data, Ablation which, const MatrixOptions& opt,
                          const std::vector<std::string>& kinds,
                          const std::vector<double>& rhos = {5.0, 10.0, 20.0});

// Columns: regime,train_kind,condition,seen,acc_standard_clean,acc_robust,
// delta,rho_target,seed,seconds.
std::string records_csv(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> records_from_csv(const std::string& text);

// Deterministic SVG scatter: x = group (condition or regime), y = delta,
// marker shape = condition, color = training regime. Throws on no records.
std::string render_scatter(const std::vector<ExperimentRecord>& records,
                           const std::string& grouping = "condition");

}  // namespace npt
