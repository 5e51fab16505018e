#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "npt/checkpoint.hpp"
#include "npt/config.hpp"
#include "npt/evalharness.hpp"

namespace fs = std::filesystem;
using namespace npt;

namespace {

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(str_cat("cannot write ", path.string()));
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(str_cat("cannot read ", path.string()));
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string manifest_path;  // replay source
    std::uint64_t seed = 1;
    bool timing = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_out = true) {
    cmd->add_option("--config", a.config_path, "key=value configuration file");
    cmd->add_option("--seed", a.seed, "base RNG seed");
    cmd->add_option("--manifest", a.manifest_path, "seed manifest to replay (overrides --seed)");
    cmd->add_flag("--timing", a.timing, "record wall-clock seconds in CSV output");
    if (with_out) cmd->add_option("--out", a.out_dir, "output directory")->required();
}

Config load_cfg(const CommonArgs& a) {
    if (a.config_path.empty()) return Config{};
    return Config::load(a.config_path, &known_config_keys());
}

std::uint64_t resolve_seed(const CommonArgs& a) {
    if (a.manifest_path.empty()) return a.seed;
    return load_seed_manifest(a.manifest_path).get("seed");
}

fs::path prepare_out(const CommonArgs& a) {
    fs::path dir(a.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_manifest(const fs::path& dir, const std::string& command, SeedManifest m) {
    m.command = command;
    save_seed_manifest((dir / "seed_manifest.txt").string(), m);
}

DatasetSplits load_dataset(const Config& cfg, std::uint64_t seed) {
    const std::string kind = cfg.str("dataset.kind", "synthetic_shapes");
    SplitSizes sizes;
    if (kind == "synthetic_shapes") sizes = {1800, 900, 900};
    sizes.train = cfg.integer("dataset.train", sizes.train);
    sizes.val = cfg.integer("dataset.val", sizes.val);
    sizes.test = cfg.integer("dataset.test", sizes.test);
    const std::uint64_t dseed = derive_seed(seed, "dataset");
    if (kind == "synthetic_shapes") return synthetic_splits(sizes, dseed);
    if (kind == "cifar10_binary") {
        const std::string path = cfg.str("dataset.path", "");
        if (path.empty()) throw ConfigError("dataset.kind=cifar10_binary requires dataset.path");
        return load_cifar10(path, sizes, dseed);
    }
    if (kind == "raw_tensor_dir") {
        const std::string path = cfg.str("dataset.path", "");
        if (path.empty()) throw ConfigError("dataset.kind=raw_tensor_dir requires dataset.path");
        const int classes = cfg.integer("dataset.classes", 10);
        DatasetSplits s;
        s.train = load_raw_dir((fs::path(path) / "train").string(), classes);
        s.val = load_raw_dir((fs::path(path) / "val").string(), classes);
        s.test = load_raw_dir((fs::path(path) / "test").string(), classes);
        return s;
    }
    throw ConfigError(str_cat("unknown dataset.kind \"", kind, "\""));
}

ConvNetSpec netspec_for(const Config& cfg, const LabeledImages& data) {
    ConvNetSpec s;
    s.in_channels = data.channels();
    s.in_height = data.height();
    s.in_width = data.width();
    s.conv1_filters = cfg.integer("net.conv1", s.conv1_filters);
    s.conv2_filters = cfg.integer("net.conv2", s.conv2_filters);
    s.kernel = cfg.integer("net.kernel", s.kernel);
    s.num_classes = data.num_classes;
    return s;
}

SgdConfig sgd_for(const Config& cfg) {
    SgdConfig s;
    s.learning_rate = cfg.real("sgd.learning_rate", s.learning_rate);
    s.momentum = cfg.real("sgd.momentum", s.momentum);
    s.decay_epochs = cfg.int_list("sgd.decay_epochs", s.decay_epochs);
    s.decay_multiplier = cfg.real("sgd.decay_multiplier", s.decay_multiplier);
    s.batch_size = cfg.integer("sgd.batch_size", s.batch_size);
    return s;
}

PerturbationSpec spec_for(const Config& cfg, const std::string& kind, double severity) {
    PerturbationSpec p;
    p.kind = perturb_kind_from_string(kind);
    p.severity = static_cast<float>(severity);
    p.randomization_width =
        static_cast<float>(cfg.real("perturb.randomization_width", p.randomization_width));
    p.elastic_sigma = static_cast<float>(cfg.real("perturb.elastic_sigma", p.elastic_sigma));
    p.occlusion_thickness =
        static_cast<float>(cfg.real("perturb.occlusion_thickness", p.occlusion_thickness));
    p.wave_frequency = static_cast<float>(cfg.real("perturb.wave_frequency", p.wave_frequency));
    return p;
}

AttackConfig attack_for(const Config& cfg) {
    AttackConfig a;
    a.epsilon = static_cast<float>(cfg.real("attack.epsilon", a.epsilon));
    a.step = static_cast<float>(cfg.real("attack.step", a.step));
    a.steps = cfg.integer("attack.steps", a.steps);
    return a;
}

MatrixOptions matrix_options(const Config& cfg, const CommonArgs& args,
                             const LabeledImages& train_data, std::uint64_t seed) {
    MatrixOptions opt;
    opt.netspec = netspec_for(cfg, train_data);
    opt.sgd = sgd_for(cfg);
    opt.n1 = cfg.integer("train.n1", opt.n1);
    opt.n2 = cfg.integer("train.n2", opt.n2);
    opt.rho_target = cfg.real("calibrate.target", opt.rho_target);
    opt.tolerance = cfg.real("calibrate.tolerance", opt.tolerance);
    opt.max_evals = cfg.integer("calibrate.max_evals", opt.max_evals);
    opt.repeats = cfg.integer("matrix.repeats", opt.repeats);
    opt.cal_repeats = cfg.integer("calibrate.repeats", opt.cal_repeats);
    opt.attack_steps = cfg.integer("attack.steps", opt.attack_steps);
    opt.seed = seed;
    opt.eval_batch = cfg.integer("matrix.eval_batch", opt.eval_batch);
    opt.record_timing = args.timing;
    opt.include_multi = cfg.boolean("matrix.include_multi", true);
    opt.include_augment = cfg.boolean("matrix.include_augment", false);
    return opt;
}

Checkpoint make_checkpoint(const SmallConvNet& net, const TrainResult& result, int epochs,
                           std::uint64_t base_seed, const SeedManifest& seeds) {
    Checkpoint c;
    c.descriptor = net.spec().descriptor();
    c.epoch = static_cast<std::uint32_t>(epochs);
    c.base_seed = base_seed;
    c.params = result.params.detached();
    for (const auto& item : result.momentum.velocity)
        c.momentum.velocity.push_back({item.name, item.tensor.detached()});
    c.seed_manifest = seeds.seeds;
    return c;
}

// ---- subcommands --------------------------------------------------------------

int cmd_train(const CommonArgs& args, const std::string& regime_name, const std::string& kind,
              const std::string& kinds_csv, double severity, const std::string& command) {
    const Config cfg = load_cfg(args);
    const std::uint64_t seed = resolve_seed(args);
    const fs::path out = prepare_out(args);
    const DatasetSplits data = load_dataset(cfg, seed);
    const SmallConvNet net(netspec_for(cfg, data.train));

    TrainSchedule s;
    s.regime = regime_from_string(regime_name);
    s.sgd = sgd_for(cfg);
    s.n1 = cfg.integer("train.n1", 8);
    s.n2 = s.regime == Regime::Standard || s.regime == Regime::Augment
               ? 0
               : cfg.integer("train.n2", 4);
    s.seed = derive_seed(seed, "train");
    s.record_timing = args.timing;
    if (s.regime == Regime::Natural || s.regime == Regime::Augment) {
        s.specs = {spec_for(cfg, kind, severity)};
    } else if (s.regime == Regime::Multi) {
        for (const std::string& k : split_list(kinds_csv)) s.specs.push_back(spec_for(cfg, k, severity));
    } else if (s.regime == Regime::Adversarial) {
        s.attack = attack_for(cfg);
        s.attack.random_start = true;
    }

    const TrainResult result = train(net, data.train, data.val, s);

    SeedManifest m;
    m.set("seed", seed);
    m.set("train", s.seed);
    write_text(out / "train_log.csv", train_log_csv(result.log));
    save_checkpoint((out / "checkpoint.npt").string(),
                    make_checkpoint(net, result, s.total_epochs(), seed, m));
    write_manifest(out, command, m);
    std::cout << "trained " << to_string(s.regime) << " for " << s.total_epochs()
              << " epochs, final val accuracy " << fmt_f(result.log.back().val_accuracy, 2)
              << "\n";
    return 0;
}

int cmd_calibrate(const CommonArgs& args, const std::string& checkpoint_path, double rho,
                  double tolerance, const std::string& kinds_csv, const std::string& command) {
    const Config cfg = load_cfg(args);
    const std::uint64_t seed = resolve_seed(args);
    const fs::path out = prepare_out(args);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const SmallConvNet net(ckpt.spec());
    const DatasetSplits data = load_dataset(cfg, ckpt.base_seed);

    std::vector<std::string> kinds =
        kinds_csv.empty() ? all_calibration_kinds() : split_list(kinds_csv);
    const int batch = cfg.integer("calibrate.batch_size", 100);
    const int attack_steps = cfg.integer("attack.steps", 10);

    SeedManifest m;
    m.set("seed", seed);
    std::vector<CalibrationResult> results;
    std::vector<double> mses;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        CalibrationSettings cs;
        cs.target = rho;
        cs.tolerance = tolerance;
        cs.s_max = default_s_max(kinds[i]);
        cs.max_evals = cfg.integer("calibrate.max_evals", cs.max_evals);
        cs.repeats = cfg.integer("calibrate.repeats", cs.repeats);
        cs.seed = derive_seed(seed, "calibrate", static_cast<std::uint64_t>(i));
        m.set(str_cat("calibrate.", kinds[i]), cs.seed);
        const CalibrationResult r =
            calibrate_severity(net, ckpt.params, data.val, kinds[i], cs, batch, attack_steps);
        const Condition cond = condition_for(kinds[i], r.severity, attack_steps);
        mses.push_back(condition_mse(net, ckpt.params, data.test, cond,
                                     derive_seed(seed, "mse", static_cast<std::uint64_t>(i)),
                                     batch));
        results.push_back(r);
        std::cout << kinds[i] << ": severity " << fmt_f(r.severity, 6) << ", drop "
                  << fmt_f(r.drop, 2) << (r.success ? "" : " (NOT CONVERGED)") << "\n";
    }
    write_text(out / "calibration.csv", calibration_csv(results));
    write_text(out / "standardization.csv", standardization_report(results, mses));
    write_manifest(out, command, m);
    const bool all_ok = std::all_of(results.begin(), results.end(),
                                    [](const CalibrationResult& r) { return r.success; });
    return all_ok ? 0 : 1;
}

int cmd_attack(const CommonArgs& args, const std::string& checkpoint_path, double epsilon,
               int steps, bool bim, const std::string& save_adv, const std::string& command) {
    const Config cfg = load_cfg(args);
    const std::uint64_t seed = resolve_seed(args);
    const fs::path out = prepare_out(args);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const SmallConvNet net(ckpt.spec());
    const DatasetSplits data = load_dataset(cfg, ckpt.base_seed);

    AttackConfig a;
    a.epsilon = static_cast<float>(epsilon);
    a.steps = steps;
    a.random_start = !bim;
    const int batch = cfg.integer("calibrate.batch_size", 100);
    const std::uint64_t aseed = derive_seed(seed, "attack");

    const Tensor adv = attack_batch(net, ckpt.params, data.test, a, aseed, batch);
    const double clean_acc =
        accuracy(net, ckpt.params, data.test.images, data.test.labels, batch);
    const double adv_acc = accuracy(net, ckpt.params, adv, data.test.labels, batch);
    double max_linf = 0.0;
    auto src = data.test.images.data();
    auto dst = adv.data();
    for (std::size_t i = 0; i < src.size(); ++i)
        max_linf = std::max(max_linf, std::abs(static_cast<double>(dst[i]) - src[i]));

    std::string csv = "epsilon,steps,random_start,clean_accuracy,attacked_accuracy,drop,max_linf\n";
    csv += str_cat(fmt_f(epsilon, 6), ',', steps, ',', a.random_start ? 1 : 0, ',',
                   fmt_f(clean_acc, 6), ',', fmt_f(adv_acc, 6), ',',
                   fmt_f(clean_acc - adv_acc, 6), ',', fmt_f(max_linf, 6), '\n');
    write_text(out / "attack.csv", csv);
    if (!save_adv.empty()) save_raw_tensor(save_adv, adv);

    SeedManifest m;
    m.set("seed", seed);
    m.set("attack", aseed);
    write_manifest(out, command, m);
    std::cout << "clean " << fmt_f(clean_acc, 2) << " -> attacked " << fmt_f(adv_acc, 2)
              << " (drop " << fmt_f(clean_acc - adv_acc, 2) << ", max linf "
              << fmt_f(max_linf, 6) << ")\n";
    return 0;
}

int cmd_perturb(const CommonArgs& args, const std::string& kind, double severity,
                const std::string& in_path, const std::string& out_path,
                const std::string& command) {
    const Config cfg = load_cfg(args);
    const std::uint64_t seed = resolve_seed(args);
    const Tensor images = load_raw_tensor(in_path);
    if (images.shape().size() != 4)
        throw std::runtime_error("perturb: input tensor must be (N,C,H,W)");
    const PerturbationSpec spec = spec_for(cfg, kind, severity);
    const std::uint64_t pseed = derive_seed(seed, "perturb");
    const Tensor result = apply_batch(spec, images, pseed);
    save_raw_tensor(out_path, result);

    const fs::path manifest = fs::path(out_path).concat(".seeds.txt");
    SeedManifest m;
    m.command = command;
    m.set("seed", seed);
    m.set("perturb", pseed);
    save_seed_manifest(manifest.string(), m);
    std::cout << "wrote " << out_path << " (" << shape_str(result.shape()) << ")\n";
    return 0;
}

void write_matrix_outputs(const fs::path& out, const MatrixResult& res) {
    write_text(out / "records.csv", records_csv(res.records));
    write_text(out / "calibration.csv", calibration_csv(res.calibrations));
    write_text(out / "standardization.csv", standardization_report(res.calibrations, res.mses));
    write_text(out / "scatter.svg", render_scatter(res.records, "condition"));
    fs::create_directories(out / "logs");
    write_text(out / "logs" / "standard.csv", train_log_csv(res.standard_log));
    for (const auto& [kind, log] : res.robust_logs)
        write_text(out / "logs" / (kind + ".csv"), train_log_csv(log));
}

int cmd_matrix(const CommonArgs& args, const std::string& command) {
    const Config cfg = load_cfg(args);
    const std::uint64_t seed = resolve_seed(args);
    const fs::path out = prepare_out(args);
    const DatasetSplits data = load_dataset(cfg, seed);
    const MatrixOptions opt = matrix_options(cfg, args, data.train, seed);

    const MatrixResult res = run_matrix(data, opt);
    write_matrix_outputs(out, res);

    const SmallConvNet net(opt.netspec);
    Checkpoint c;
    c.descriptor = opt.netspec.descriptor();
    c.epoch = static_cast<std::uint32_t>(opt.n1 + opt.n2);
    c.base_seed = seed;
    c.params = res.standard_params.detached();
    SeedManifest m;
    m.set("seed", seed);
    c.seed_manifest = m.seeds;
    save_checkpoint((out / "standard.npt").string(), c);
    write_manifest(out, command, m);
    std::cout << "matrix complete: " << res.records.size() << " records, standard clean accuracy "
              << fmt_f(res.acc_standard_clean, 2) << "\n";
    return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& which, const std::string& kinds_csv,
               const std::string& command) {
    const Config cfg = load_cfg(args);
    const std::uint64_t seed = resolve_seed(args);
    const fs::path out = prepare_out(args);
    const DatasetSplits data = load_dataset(cfg, seed);
    const MatrixOptions opt = matrix_options(cfg, args, data.train, seed);

    std::vector<std::string> kinds = kinds_csv.empty()
                                         ? cfg.str_list("ablate.kinds", {"elastic"})
                                         : split_list(kinds_csv);
    std::vector<double> rhos;
    for (int r : cfg.int_list("ablate.rhos", {5, 10, 20})) rhos.push_back(r);

    const AblateResult res = run_ablation(data, ablation_from_string(which), opt, kinds, rhos);
    write_text(out / "records.csv", records_csv(res.records));
    if (!res.calibrations.empty())
        write_text(out / "calibration.csv", calibration_csv(res.calibrations));
    write_text(out / "scatter.svg", render_scatter(res.records, "regime"));

    SeedManifest m;
    m.set("seed", seed);
    write_manifest(out, command, m);
    std::cout << "ablation " << which << ": " << res.records.size() << " records\n";
    return 0;
}

int cmd_report(const CommonArgs& args, const std::string& in_path, const std::string& grouping,
               const std::string& command) {
    const std::uint64_t seed = resolve_seed(args);
    const fs::path out = prepare_out(args);
    const std::vector<ExperimentRecord> records = records_from_csv(read_text(in_path));
    write_text(out / "scatter.svg", render_scatter(records, grouping));

    SeedManifest m;
    m.set("seed", seed);
    write_manifest(out, command, m);
    std::cout << "rendered " << records.size() << " records to scatter.svg\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string command = join_args(argc, argv);
    CLI::App app{"desk-scale lab for natural and adversarial perturbation robustness"};
    app.require_subcommand(1);

    CommonArgs train_args;
    std::string train_regime = "standard", train_kind = "elastic";
    std::string train_kinds = "elastic,occlusion,gaussian_noise,saturation";
    double train_severity = 0.3;
    auto* train_cmd = app.add_subcommand("train", "train one classifier");
    add_common(train_cmd, train_args);
    train_cmd->add_option("--regime", train_regime,
                          "standard|augment|natural|adversarial|multi");
    train_cmd->add_option("--kind", train_kind, "perturbation kind for natural/augment");
    train_cmd->add_option("--kinds", train_kinds, "comma list of kinds for multi");
    train_cmd->add_option("--severity", train_severity, "master severity for --kind/--kinds");

    CommonArgs cal_args;
    std::string cal_checkpoint, cal_kinds;
    double cal_rho = 10.0, cal_tolerance = 0.5;
    auto* cal_cmd = app.add_subcommand("calibrate", "standardize severities to a target drop");
    add_common(cal_cmd, cal_args);
    cal_cmd->add_option("--checkpoint", cal_checkpoint, "trained standard net")->required();
    cal_cmd->add_option("--rho", cal_rho, "target accuracy drop, percentage points");
    cal_cmd->add_option("--tolerance", cal_tolerance, "acceptable deviation from the target");
    cal_cmd->add_option("--kinds", cal_kinds, "comma list (default: all seven)");

    CommonArgs atk_args;
    std::string atk_checkpoint, atk_save;
    double atk_epsilon = 0.03;
    int atk_steps = 10;
    bool atk_bim = false;
    auto* atk_cmd = app.add_subcommand("attack", "run the iterative attack on the test split");
    add_common(atk_cmd, atk_args);
    atk_cmd->add_option("--checkpoint", atk_checkpoint, "trained net")->required();
    atk_cmd->add_option("--epsilon", atk_epsilon, "l-inf budget");
    atk_cmd->add_option("--steps", atk_steps, "attack iterations");
    atk_cmd->add_flag("--bim", atk_bim, "deterministic start (BIM) instead of PGD");
    atk_cmd->add_option("--save-adv", atk_save, "write attacked images to this raw tensor file");

    CommonArgs per_args;
    std::string per_kind, per_in, per_out;
    double per_severity = 0.0;
    auto* per_cmd = app.add_subcommand("perturb", "apply one perturbation to a raw tensor file");
    add_common(per_cmd, per_args, /*with_out=*/false);
    per_cmd->add_option("--kind", per_kind, "perturbation kind")->required();
    per_cmd->add_option("--severity", per_severity, "master severity")->required();
    per_cmd->add_option("--in", per_in, "input (N,C,H,W) raw tensor file")->required();
    per_cmd->add_option("--out", per_out, "output raw tensor file")->required();

    CommonArgs mat_args;
    auto* mat_cmd = app.add_subcommand("matrix", "full train/calibrate/evaluate experiment grid");
    add_common(mat_cmd, mat_args);

    CommonArgs abl_args;
    std::string abl_which, abl_kinds;
    auto* abl_cmd = app.add_subcommand("ablate", "run one ablation study");
    add_common(abl_cmd, abl_args);
    abl_cmd->add_option("--which", abl_which, "epoch_budget|n2_sweep|rho_sweep")->required();
    abl_cmd->add_option("--kinds", abl_kinds, "comma list of kinds");

    CommonArgs rep_args;
    std::string rep_in, rep_grouping = "condition";
    auto* rep_cmd = app.add_subcommand("report", "render a records CSV as an SVG scatter");
    add_common(rep_cmd, rep_args);
    rep_cmd->add_option("--in", rep_in, "records.csv from matrix/ablate")->required();
    rep_cmd->add_option("--grouping", rep_grouping, "condition|regime");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(train_args, train_regime, train_kind, train_kinds, train_severity,
                             command);
        if (cal_cmd->parsed())
            return cmd_calibrate(cal_args, cal_checkpoint, cal_rho, cal_tolerance, cal_kinds,
                                 command);
        if (atk_cmd->parsed())
            return cmd_attack(atk_args, atk_checkpoint, atk_epsilon, atk_steps, atk_bim, atk_save,
                              command);
        if (per_cmd->parsed())
            return cmd_perturb(per_args, per_kind, per_severity, per_in, per_out, command);
        if (mat_cmd->parsed()) return cmd_matrix(mat_args, command);
        if (abl_cmd->parsed()) return cmd_ablate(abl_args, abl_which, abl_kinds, command);
        if (rep_cmd->parsed()) return cmd_report(rep_args, rep_in, rep_grouping, command);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
