#include "npt/schedules.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "npt/common.hpp"

namespace npt {

Regime regime_from_string(const std::string& name) {
    if (name == "standard") return Regime::Standard;
    if (name == "augment") return Regime::Augment;
    if (name == "natural") return Regime::Natural;
    if (name == "adversarial") return Regime::Adversarial;
    if (name == "multi") return Regime::Multi;
    throw std::invalid_argument("unknown training regime: " + name);
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::Standard: return "standard";
        case Regime::Augment: return "augment";
        case Regime::Natural: return "natural";
        case Regime::Adversarial: return "adversarial";
        case Regime::Multi: return "multi";
    }
    throw std::invalid_argument("unknown training regime");
}

void TrainSchedule::validate() const {
    if (n1 < 0 || n2 < 0) throw std::invalid_argument("schedule: n1 and n2 must be >= 0");
    sgd.validate();
    switch (regime) {
        case Regime::Standard:
            if (n2 != 0) throw std::invalid_argument("schedule: standard regime requires n2 = 0");
            break;
        case Regime::Augment:
        case Regime::Natural:
            if (specs.size() != 1)
                throw std::invalid_argument("schedule: regime needs exactly one perturbation spec");
            break;
        case Regime::Multi:
            if (specs.size() < 2)
                throw std::invalid_argument("schedule: multi regime needs at least 2 specs");
            break;
        case Regime::Adversarial:
            attack.validate();
            if (!attack.random_start)
                throw std::invalid_argument("schedule: adversarial training uses PGD (random_start)");
            break;
    }
}

namespace {

std::uint64_t epoch_batch_seed(std::uint64_t base, std::string_view tag, int epoch, int batch) {
    return derive_seed(derive_seed(base, tag, static_cast<std::uint64_t>(epoch)),
                       static_cast<std::uint64_t>(batch));
}

struct Minibatch {
    Tensor x;
    std::vector<int> y;
};

Minibatch gather(const LabeledImages& data, const std::vector<int>& order, int begin, int end) {
    const std::int64_t img = static_cast<std::int64_t>(data.images.numel()) / data.size();
    Shape shape = data.images.shape();
    shape[0] = end - begin;
    std::vector<float> buf;
    buf.reserve(static_cast<std::size_t>(end - begin) * img);
    std::vector<int> y;
    y.reserve(end - begin);
    const float* src = data.images.data().data();
    for (int i = begin; i < end; ++i) {
        const int idx = order[i];
        buf.insert(buf.end(), src + idx * img, src + (idx + 1) * img);
        y.push_back(data.labels[idx]);
    }
    return {make_tensor<float>(std::move(shape), std::move(buf), false), std::move(y)};
}

}  // namespace

TrainResult train(const SmallConvNet& net, const LabeledImages& train_data,
                  const LabeledImages& val_data, const TrainSchedule& schedule) {
    schedule.validate();
    if (train_data.size() == 0) throw std::invalid_argument("train: empty training set");

    TrainResult res;
    res.params = net.init_params(derive_seed(schedule.seed, "init"));

    const int n = train_data.size();
    const int batch = std::min(schedule.sgd.batch_size, n);
    std::vector<int> order(n);

    for (int epoch = 1; epoch <= schedule.total_epochs(); ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t steps0 = Tape::backward_count();
        const bool mixed = epoch > schedule.n1;

        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(schedule.seed, "epoch.order", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double sum_clean = 0.0, sum_pert = 0.0;
        int batches = 0;
        bool logged_clean = false, logged_pert = false;

        for (int start = 0; start < n; start += batch, ++batches) {
            const int stop = std::min(n, start + batch);
            Minibatch mb = gather(train_data, order, start, stop);

            // Attack generation runs its own tapes; keep it ahead of the
            // recorded forward passes.
            Tensor adv;
            if (schedule.regime == Regime::Adversarial && mixed) {
                Rng rng(epoch_batch_seed(schedule.seed, "pgd", epoch, batches));
                adv = pgd_example(net, res.params, mb.x, mb.y, schedule.attack, rng);
            }

            TapeScope scope;
            Tensor loss;
            switch (schedule.regime) {
                case Regime::Standard: {
                    loss = softmax_cross_entropy(net.logits(res.params, mb.x), mb.y);
                    sum_clean += loss.item();
                    logged_clean = true;
                    break;
                }
                case Regime::Augment: {
                    const Tensor xp = apply_batch(
                        schedule.specs[0], mb.x,
                        epoch_batch_seed(schedule.seed, "perturb", epoch, batches));
                    loss = softmax_cross_entropy(net.logits(res.params, xp), mb.y);
                    sum_pert += loss.item();
                    logged_pert = true;
                    break;
                }
                case Regime::Natural:
                case Regime::Multi: {
                    const Tensor ls = softmax_cross_entropy(net.logits(res.params, mb.x), mb.y);
                    sum_clean += ls.item();
                    logged_clean = true;
                    if (!mixed) {
                        loss = ls;
                        break;
                    }
                    const std::uint64_t ps =
                        epoch_batch_seed(schedule.seed, "perturb", epoch, batches);
                    const Tensor xp = schedule.regime == Regime::Multi
                                          ? apply_multi_batch(schedule.specs, mb.x, ps)
                                          : apply_batch(schedule.specs[0], mb.x, ps);
                    const Tensor lp = softmax_cross_entropy(net.logits(res.params, xp), mb.y);
                    sum_pert += lp.item();
                    logged_pert = true;
                    loss = scale(add(ls, lp), 0.5f);
                    break;
                }
                case Regime::Adversarial: {
                    const Tensor ls = softmax_cross_entropy(net.logits(res.params, mb.x), mb.y);
                    sum_clean += ls.item();
                    logged_clean = true;
                    if (!mixed) {
                        loss = ls;
                        break;
                    }
                    const Tensor ld = softmax_cross_entropy(net.logits(res.params, adv), mb.y);
                    sum_pert += ld.item();
                    logged_pert = true;
                    loss = add(ls, ld);  // summed, not halved
                    break;
                }
            }

            Tape::active().backward(loss);
            sgd_step(res.params, schedule.sgd, res.momentum, epoch);
            res.params.zero_grad();
        }

        const std::uint64_t steps1 = Tape::backward_count();
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        EpochLog log;
        log.epoch = epoch;
        log.regime = to_string(schedule.regime);
        log.has_clean = logged_clean;
        log.has_perturbed = logged_pert;
        log.loss_clean = logged_clean ? sum_clean / batches : 0.0;
        log.loss_perturbed = logged_pert ? sum_pert / batches : 0.0;
        log.val_accuracy =
            val_data.size() > 0
                ? accuracy(net, res.params, val_data.images, val_data.labels, std::max(batch, 1))
                : 0.0;
        log.seconds = schedule.record_timing ? wall : 0.0;
        res.log.push_back(log);
        res.epoch_grad_steps.push_back(static_cast<std::int64_t>(steps1 - steps0));
        res.epoch_wall_seconds.push_back(wall);
    }

    res.grad_steps = std::accumulate(res.epoch_grad_steps.begin(), res.epoch_grad_steps.end(),
                                     std::int64_t{0});
    return res;
}

namespace {

TrainResult train_as(const SmallConvNet& net, const LabeledImages& train_data,
                     const LabeledImages& val_data, const TrainSchedule& schedule,
                     Regime expected, const char* op) {
    if (schedule.regime != expected)
        throw std::invalid_argument(str_cat(op, ": schedule regime is ",
                                            to_string(schedule.regime), ", expected ",
                                            to_string(expected)));
    return train(net, train_data, val_data, schedule);
}

}  // namespace

TrainResult standard_train(const SmallConvNet& net, const LabeledImages& train_data,
                           const LabeledImages& val_data, const TrainSchedule& schedule) {
    return train_as(net, train_data, val_data, schedule, Regime::Standard, "standard_train");
}

TrainResult data_augmentation_train(const SmallConvNet& net, const LabeledImages& train_data,
                                    const LabeledImages& val_data, const TrainSchedule& schedule) {
    return train_as(net, train_data, val_data, schedule, Regime::Augment,
                    "data_augmentation_train");
}

TrainResult natural_perturbed_train(const SmallConvNet& net, const LabeledImages& train_data,
                                    const LabeledImages& val_data, const TrainSchedule& schedule) {
    return train_as(net, train_data, val_data, schedule, Regime::Natural,
                    "natural_perturbed_train");
}

TrainResult adversarial_train(const SmallConvNet& net, const LabeledImages& train_data,
                              const LabeledImages& val_data, const TrainSchedule& schedule) {
    return train_as(net, train_data, val_data, schedule, Regime::Adversarial, "adversarial_train");
}

TrainResult multi_perturbation_train(const SmallConvNet& net, const LabeledImages& train_data,
                                     const LabeledImages& val_data, const TrainSchedule& schedule) {
    return train_as(net, train_data, val_data, schedule, Regime::Multi,
                    "multi_perturbation_train");
}

std::string train_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,regime,loss_clean,loss_perturbed,val_accuracy,seconds\n";
    for (const EpochLog& e : log) {
        out += str_cat(e.epoch, ',', e.regime, ',',
                       e.has_clean ? fmt_f(e.loss_clean) : std::string(), ',',
                       e.has_perturbed ? fmt_f(e.loss_perturbed) : std::string(), ',',
                       fmt_f(e.val_accuracy), ',', fmt_f(e.seconds), '\n');
    }
    return out;
}

}  // namespace npt
