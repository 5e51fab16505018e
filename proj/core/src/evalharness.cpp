#include "npt/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "npt/common.hpp"

namespace npt {

namespace {

void check_calibrated(const Condition& cond, const char* op) {
    if (cond.type == Condition::Type::Natural && !(cond.spec.severity > 0.0f))
        throw std::invalid_argument(str_cat(op, ": condition ", cond.name(), " not calibrated"));
    if (cond.type == Condition::Type::Adversarial && !(cond.attack.epsilon > 0.0f))
        throw std::invalid_argument(str_cat(op, ": adversarial condition not calibrated"));
}

double mean_condition_accuracy(const SmallConvNet& net, const ParamList& params,
                               const LabeledImages& data, const Condition& cond,
                               std::uint64_t seed, int repeats, int batch_size) {
    if (cond.type == Condition::Type::Clean)
        return accuracy(net, params, data.images, data.labels, batch_size);
    double sum = 0.0;
    for (int r = 0; r < repeats; ++r)
        sum += accuracy_under_condition(net, params, data, cond,
                                        derive_seed(seed, static_cast<std::uint64_t>(r)),
                                        batch_size);
    return sum / repeats;
}

}  // namespace

double delta(const SmallConvNet& net, const ParamList& standard_params,
             const ParamList& robust_params, const LabeledImages& test, const Condition& cond,
             std::uint64_t seed, int batch_size) {
    check_calibrated(cond, "delta");
    const double std_clean = accuracy(net, standard_params, test.images, test.labels, batch_size);
    const double robust_acc =
        accuracy_under_condition(net, robust_params, test, cond, seed, batch_size);
    return robust_acc - std_clean;
}

std::vector<ExperimentRecord> experiment_matrix(const SmallConvNet& net,
                                                const ParamList& standard_params,
                                                const std::vector<RobustEntry>& robust,
                                                const LabeledImages& test,
                                                const std::vector<Condition>& conditions,
                                                double rho_target, int repeats,
                                                std::uint64_t seed, int batch_size,
                                                bool record_timing, bool include_baseline) {
    if (conditions.empty()) throw std::invalid_argument("experiment_matrix: no conditions");
    if (repeats < 1) throw std::invalid_argument("experiment_matrix: repeats must be >= 1");
    const double acc_std_clean =
        accuracy(net, standard_params, test.images, test.labels, batch_size);

    std::vector<RobustEntry> nets;
    if (include_baseline) nets.push_back({"standard", "", &standard_params});
    nets.insert(nets.end(), robust.begin(), robust.end());

    std::vector<ExperimentRecord> out;
    out.reserve(nets.size() * conditions.size());
    for (const RobustEntry& entry : nets) {
        for (const Condition& cond : conditions) {
            const std::uint64_t cell_seed = derive_seed(derive_seed(seed, "eval"), cond.name());
            const auto t0 = std::chrono::steady_clock::now();
            const double acc = mean_condition_accuracy(net, *entry.params, test, cond, cell_seed,
                                                       repeats, batch_size);
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            ExperimentRecord rec;
            rec.regime = entry.regime;
            rec.train_kind = entry.train_kind;
            rec.condition = cond.name();
            rec.seen = !entry.train_kind.empty() && rec.condition != "clean" &&
                       entry.train_kind == rec.condition;
            rec.acc_standard_clean = acc_std_clean;
            rec.acc_robust = acc;
            rec.delta = acc - acc_std_clean;
            rec.rho_target = rho_target;
            rec.seed = cell_seed;
            rec.seconds = record_timing ? wall : 0.0;
            out.push_back(rec);
        }
    }
    return out;
}

MatrixResult run_matrix(const DatasetSplits& data, const MatrixOptions& opt) {
    const SmallConvNet net(opt.netspec);
    MatrixResult out;

    TrainSchedule base;
    base.sgd = opt.sgd;
    base.seed = derive_seed(opt.seed, "train");
    base.record_timing = opt.record_timing;

    TrainSchedule std_sch = base;
    std_sch.regime = Regime::Standard;
    std_sch.n1 = opt.n1 + opt.n2;
    std_sch.n2 = 0;
    TrainResult std_res = standard_train(net, data.train, data.val, std_sch);
    out.standard_params = std_res.params;
    out.standard_log = std_res.log;

    const auto kinds = all_calibration_kinds();
    std::map<std::string, double> severity;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        CalibrationSettings cs;
        cs.target = opt.rho_target;
        cs.tolerance = opt.tolerance;
        cs.s_max = default_s_max(kinds[i]);
        cs.max_evals = opt.max_evals;
        cs.repeats = opt.cal_repeats;
        cs.seed = derive_seed(opt.seed, "calibrate", i);
        CalibrationResult r = calibrate_severity(net, std_res.params, data.val, kinds[i], cs,
                                                 opt.eval_batch, opt.attack_steps);
        out.calibrations.push_back(r);
        severity[kinds[i]] = r.severity;
    }

    std::vector<Condition> conditions;
    conditions.push_back(Condition::clean());
    for (const std::string& k : kinds)
        conditions.push_back(condition_for(k, severity[k], opt.attack_steps));

    for (std::size_t i = 0; i < kinds.size(); ++i)
        out.mses.push_back(condition_mse(net, std_res.params, data.test, conditions[i + 1],
                                         derive_seed(opt.seed, "mse", i), opt.eval_batch));

    // one robust net per calibrated kind, all sharing the standard net's
    // training seed so runs are paired
    std::vector<std::pair<RobustEntry, TrainResult>> trained;
    for (const std::string& k : kinds) {
        TrainSchedule sch = base;
        sch.n1 = opt.n1;
        sch.n2 = opt.n2;
        if (k == "adversarial") {
            sch.regime = Regime::Adversarial;
            sch.attack.epsilon = static_cast<float>(severity[k]);
            sch.attack.steps = opt.attack_steps;
            sch.attack.random_start = true;
        } else {
            sch.regime = Regime::Natural;
            PerturbationSpec spec;
            spec.kind = perturb_kind_from_string(k);
            spec.severity = static_cast<float>(severity[k]);
            sch.specs = {spec};
        }
        trained.emplace_back(RobustEntry{to_string(sch.regime), k, nullptr},
                             train(net, data.train, data.val, sch));
    }

    if (opt.include_multi) {
        TrainSchedule sch = base;
        sch.regime = Regime::Multi;
        sch.n1 = opt.n1;
        sch.n2 = opt.n2;
        for (const char* k : {"elastic", "occlusion", "gaussian_noise", "saturation"}) {
            PerturbationSpec spec;
            spec.kind = perturb_kind_from_string(k);
            spec.severity = static_cast<float>(severity[k]);
            sch.specs.push_back(spec);
        }
        trained.emplace_back(RobustEntry{"multi", "multi", nullptr},
                             multi_perturbation_train(net, data.train, data.val, sch));
    }

    if (opt.include_augment) {
        for (const std::string& k : kinds) {
            if (k == "adversarial") continue;
            TrainSchedule sch = base;
            sch.regime = Regime::Augment;
            sch.n1 = opt.n1;
            sch.n2 = opt.n2;
            PerturbationSpec spec;
            spec.kind = perturb_kind_from_string(k);
            spec.severity = static_cast<float>(severity[k]);
            sch.specs = {spec};
            trained.emplace_back(RobustEntry{"augment", k, nullptr},
                                 train(net, data.train, data.val, sch));
        }
    }

    std::vector<RobustEntry> entries;
    for (auto& [entry, result] : trained) {
        entry.params = &result.params;
        entries.push_back(entry);
        out.robust_logs.emplace_back(entry.train_kind, result.log);
    }

    out.records = experiment_matrix(net, std_res.params, entries, data.test, conditions,
                                    opt.rho_target, opt.repeats, derive_seed(opt.seed, "matrix"),
                                    opt.eval_batch, opt.record_timing);
    out.acc_standard_clean = out.records.front().acc_standard_clean;
    return out;
}

Ablation ablation_from_string(const std::string& name) {
    if (name == "epoch_budget") return Ablation::EpochBudget;
    if (name == "n2_sweep") return Ablation::N2Sweep;
    if (name == "rho_sweep") return Ablation::RhoSweep;
    throw std::invalid_argument("unknown ablation: " + name);
}

namespace {

std::string fmt_tag_number(double v) {
    if (v == std::floor(v)) return str_cat(static_cast<long long>(v));
    return fmt_f(v, 2);
}

CalibrationResult calibrate_one(const SmallConvNet& net, const ParamList& params,
                                const LabeledImages& val, const std::string& kind, double rho,
                                const MatrixOptions& opt, std::uint64_t salt) {
    CalibrationSettings cs;
    cs.target = rho;
    cs.tolerance = opt.tolerance;
    cs.s_max = default_s_max(kind);
    cs.max_evals = opt.max_evals;
    cs.repeats = opt.cal_repeats;
    cs.seed = derive_seed(opt.seed, "calibrate", salt);
    return calibrate_severity(net, params, val, kind, cs, opt.eval_batch, opt.attack_steps);
}

TrainSchedule natural_schedule(const MatrixOptions& opt, const std::string& kind, double severity,
                               int n1, int n2) {
    TrainSchedule sch;
    sch.regime = Regime::Natural;
    sch.sgd = opt.sgd;
    sch.seed = derive_seed(opt.seed, "train");
    sch.record_timing = opt.record_timing;
    sch.n1 = n1;
    sch.n2 = n2;
    PerturbationSpec spec;
    spec.kind = perturb_kind_from_string(kind);
    spec.severity = static_cast<float>(severity);
    sch.specs = {spec};
    return sch;
}

}  // namespace

AblateResult run_ablation(const DatasetSplits& data, Ablation which, const MatrixOptions& opt,
                          const std::vector<std::string>& kinds, const std::vector<double>& rhos) {
    if (kinds.empty()) throw std::invalid_argument("run_ablation: needs at least one kind");
    const SmallConvNet net(opt.netspec);
    AblateResult out;

    TrainSchedule std_sch;
    std_sch.regime = Regime::Standard;
    std_sch.sgd = opt.sgd;
    std_sch.seed = derive_seed(opt.seed, "train");
    std_sch.record_timing = opt.record_timing;
    std_sch.n2 = 0;

    const std::uint64_t eval_seed = derive_seed(opt.seed, "matrix");

    switch (which) {
        case Ablation::EpochBudget: {
            const std::string kind = kinds.front();
            std_sch.n1 = opt.n1 + opt.n2;
            TrainResult ref = standard_train(net, data.train, data.val, std_sch);
            CalibrationResult cal =
                calibrate_one(net, ref.params, data.val, kind, opt.rho_target, opt, 0);
            out.calibrations.push_back(cal);
            const std::vector<Condition> conditions = {
                Condition::clean(), condition_for(kind, cal.severity, opt.attack_steps)};

            TrainSchedule big = std_sch;
            big.n1 = opt.n1 + opt.n1;
            TrainResult std_big = standard_train(net, data.train, data.val, big);
            TrainResult nat = natural_perturbed_train(
                net, data.train, data.val,
                natural_schedule(opt, kind, cal.severity, opt.n1, opt.n2));

            const std::vector<RobustEntry> entries = {
                {str_cat("standard:epochs=", big.n1), "", &std_big.params},
                {str_cat("natural:epochs=", opt.n1 + opt.n2), kind, &nat.params},
            };
            out.records = experiment_matrix(net, ref.params, entries, data.test, conditions,
                                            opt.rho_target, opt.repeats, eval_seed,
                                            opt.eval_batch, opt.record_timing, false);
            break;
        }
        case Ablation::N2Sweep: {
            const std::string kind = kinds.front();
            std_sch.n1 = opt.n1;
            TrainResult ref = standard_train(net, data.train, data.val, std_sch);
            CalibrationResult cal =
                calibrate_one(net, ref.params, data.val, kind, opt.rho_target, opt, 0);
            out.calibrations.push_back(cal);
            const std::vector<Condition> conditions = {
                Condition::clean(), condition_for(kind, cal.severity, opt.attack_steps)};

            std::vector<int> n2_values = {0};
            for (int paper_n2 : {25, 50, 75}) {
                const int scaled = static_cast<int>(std::lround(paper_n2 * opt.n1 / 100.0));
                if (scaled > 0 && scaled != n2_values.back()) n2_values.push_back(scaled);
            }

            std::vector<TrainResult> results;
            results.reserve(n2_values.size());
            std::vector<RobustEntry> entries;
            for (int n2v : n2_values)
                results.push_back(natural_perturbed_train(
                    net, data.train, data.val,
                    natural_schedule(opt, kind, cal.severity, opt.n1, n2v)));
            for (std::size_t i = 0; i < n2_values.size(); ++i)
                entries.push_back({str_cat("natural:n2=", n2_values[i]), kind,
                                   &results[i].params});
            out.records = experiment_matrix(net, ref.params, entries, data.test, conditions,
                                            opt.rho_target, opt.repeats, eval_seed,
                                            opt.eval_batch, opt.record_timing, false);
            break;
        }
        case Ablation::RhoSweep: {
            std_sch.n1 = opt.n1 + opt.n2;
            TrainResult ref = standard_train(net, data.train, data.val, std_sch);
            const std::vector<Condition> conditions = {Condition::clean()};

            std::vector<TrainResult> results;
            std::vector<RobustEntry> entries;
            results.reserve(rhos.size() * kinds.size());
            std::uint64_t salt = 0;
            for (double rho : rhos) {
                for (const std::string& kind : kinds) {
                    CalibrationResult cal =
                        calibrate_one(net, ref.params, data.val, kind, rho, opt, salt++);
                    out.calibrations.push_back(cal);
                    results.push_back(natural_perturbed_train(
                        net, data.train, data.val,
                        natural_schedule(opt, kind, cal.severity, opt.n1, opt.n2)));
                }
            }
            std::size_t idx = 0;
            for (double rho : rhos)
                for (const std::string& kind : kinds)
                    entries.push_back({str_cat("natural:rho=", fmt_tag_number(rho)), kind,
                                       &results[idx++].params});
            out.records = experiment_matrix(net, ref.params, entries, data.test, conditions,
                                            rhos.front(), opt.repeats, eval_seed, opt.eval_batch,
                                            opt.record_timing, false);
            // each record's rho_target is the one its net was calibrated to
            idx = 0;
            for (double rho : rhos)
                for (std::size_t k = 0; k < kinds.size(); ++k) out.records[idx++].rho_target = rho;
            break;
        }
    }
    return out;
}

std::string records_csv(const std::vector<ExperimentRecord>& records) {
    std::string out =
        "regime,train_kind,condition,seen,acc_standard_clean,acc_robust,delta,rho_target,seed,"
        "seconds\n";
    for (const ExperimentRecord& r : records) {
        out += str_cat(r.regime, ',', r.train_kind, ',', r.condition, ',', r.seen ? 1 : 0, ',',
                       fmt_f(r.acc_standard_clean), ',', fmt_f(r.acc_robust), ',',
                       fmt_f(r.delta), ',', fmt_f(r.rho_target), ',', r.seed, ',',
                       fmt_f(r.seconds), '\n');
    }
    return out;
}

std::vector<ExperimentRecord> records_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("records csv: empty input");
    const std::string header =
        "regime,train_kind,condition,seen,acc_standard_clean,acc_robust,delta,rho_target,seed,"
        "seconds";
    if (line != header) throw std::runtime_error("records csv: unexpected header: " + line);

    std::vector<ExperimentRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            cells.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cells.size() != 10)
            throw std::runtime_error("records csv: expected 10 cells, got line: " + line);
        ExperimentRecord r;
        r.regime = cells[0];
        r.train_kind = cells[1];
        r.condition = cells[2];
        r.seen = cells[3] == "1";
        r.acc_standard_clean = std::stod(cells[4]);
        r.acc_robust = std::stod(cells[5]);
        r.delta = std::stod(cells[6]);
        r.rho_target = std::stod(cells[7]);
        r.seed = std::stoull(cells[8]);
        r.seconds = std::stod(cells[9]);
        out.push_back(r);
    }
    return out;
}

}  // namespace npt
