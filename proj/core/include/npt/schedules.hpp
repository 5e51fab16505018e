#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npt/adversarial.hpp"
#include "npt/dataset.hpp"
#include "npt/model.hpp"
#include "npt/perturb.hpp"

namespace npt {

enum class Regime { Standard, Augment, Natural, Adversarial, Multi };

Regime regime_from_string(const std::string& name);
std::string to_string(Regime regime);

// n1 clean epochs followed by n2 mixed epochs. The augment regime perturbs
// every epoch; standard requires n2 = 0.
struct TrainSchedule {
    Regime regime = Regime::Standard;
    int n1 = 10;
    int n2 = 0;
    SgdConfig sgd;
    std::uint64_t seed = 1;
    std::vector<PerturbationSpec> specs;  // natural/augment: 1 spec, multi: >= 2
    AttackConfig attack;                  // adversarial regime; random_start must be true
    bool record_timing = false;           // when false, logged seconds are 0

    int total_epochs() const { return n1 + n2; }
    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    std::string regime;
    double loss_clean = 0.0;
    double loss_perturbed = 0.0;
    bool has_clean = false;
    bool has_perturbed = false;
    double val_accuracy = 0.0;
    double seconds = 0.0;  // as logged; zero unless record_timing
};

struct TrainResult {
    ParamList params;
    MomentumState momentum;
    std::vector<EpochLog> log;
    std::int64_t grad_steps = 0;                 // backward passes over the whole run
    std::vector<std::int64_t> epoch_grad_steps;  // per epoch
    std::vector<double> epoch_wall_seconds;      // measured, independent of record_timing
};

// Shared engine; dispatches on schedule.regime.
TrainResult train(const SmallConvNet& net, const LabeledImages& train_data,
                  const LabeledImages& val_data, const TrainSchedule& schedule);

// Regime-checked wrappers over train().
TrainResult standard_train(const SmallConvNet& net, const LabeledImages& train_data,
                           const LabeledImages& val_data, const TrainSchedule& schedule);
TrainResult data_augmentation_train(const SmallConvNet& net, const LabeledImages& train_data,
                                    const LabeledImages& val_data, const TrainSchedule& schedule);
TrainResult natural_perturbed_train(const SmallConvNet& net, const LabeledImages& train_data,
                                    const LabeledImages& val_data, const TrainSchedule& schedule);
TrainResult adversarial_train(const SmallConvNet& net, const LabeledImages& train_data,
                              const LabeledImages& val_data, const TrainSchedule& schedule);
TrainResult multi_perturbation_train(const SmallConvNet& net, const LabeledImages& train_data,
                                     const LabeledImages& val_data, const TrainSchedule& schedule);

// Columns: epoch,regime,loss_clean,loss_perturbed,val_accuracy,seconds.
// Inapplicable loss cells are left empty.
std::string train_log_csv(const std::vector<EpochLog>& log);

}  // namespace npt
