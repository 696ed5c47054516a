#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "awm/attack.hpp"
#include "awm/watermark.hpp"

namespace awm {

struct Metrics {
    double test_accuracy = 0.0;
    double adversarial_accuracy = 0.0;
    std::optional<double> watermark_accuracy;
    std::string config_fingerprint;
};

// Where watermark batches go within an epoch: after all training batches
// (the default), or interleaved among them at seeded positions.
enum class WatermarkTrainMode { EpochEnd, Mixed };

// Bookkeeping for the training-loop contracts: which samples were attacked,
// and the batch order within each epoch ('T' training, 'W' watermark).
struct TrainAudit {
    uint64_t attack_calls = 0;
    uint64_t attacked_samples = 0;
    uint64_t watermark_batch_samples = 0;
    std::vector<std::string> epoch_batch_order;
};

struct EpochStats {
    int epoch = 0;
    float mean_loss = 0.0f;
};

using ProgressFn = std::function<void(const EpochStats&)>;

// Called after each completed epoch with the live model (used by sweeps that
// need per-epoch measurements).
using EpochHook = std::function<void(int epoch, const ConvNet&)>;

namespace detail {

struct BatchView {
    Tensor x;
    std::vector<int> y;
};

inline BatchView gather_batch(const Tensor& images, const std::vector<int>& labels,
                              const std::vector<int>& order, size_t begin, size_t end) {
    const int m = static_cast<int>(end - begin);
    BatchView b;
    b.x = Tensor({m, 1, 28, 28});
    b.y.resize(m);
    for (int i = 0; i < m; ++i) {
        const int s = order[begin + i];
        std::copy(images.ptr() + static_cast<size_t>(s) * 784,
                  images.ptr() + static_cast<size_t>(s) * 784 + 784,
                  b.x.ptr() + static_cast<size_t>(i) * 784);
        b.y[i] = labels[s];
    }
    return b;
}

// One gradient step on a batch; returns the mean loss.
inline float step_on_batch(ConvNet& model, const Tensor& x, const std::vector<int>& y,
                           const TrainConfig& cfg, FwdCache& cache, Tensor& dlogits) {
    const Tensor& logits = model.forward(x, cache);
    const float loss =
        cross_entropy_grad(logits, y, dlogits, 1.0f / static_cast<float>(y.size()));
    model.backward(cache, dlogits, true, nullptr);
    sgd_step(model, cfg);
    return loss;
}

// Shared loop behind the three regimes. atk == nullptr trains plainly;
// otherwise every training batch is replaced by its PGD perturbation before
// the gradient step. Watermark batches always take plain steps.
inline void train_loop(ConvNet& model, const ImageDataset& data, const TrainConfig& cfg,
                       const AttackConfig* atk, const WatermarkSet* wm, WatermarkTrainMode mode,
                       TrainAudit* audit, const ProgressFn& progress,
                       const EpochHook& after_epoch = nullptr) {
    cfg.validate();
    if (atk) atk->validate();
    data.validate();
    const int n = data.count();
    if (n == 0) throw DataError("train: empty dataset");
    const int wm_n = wm ? wm->count() : 0;

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::vector<int> wm_order(wm_n);
    for (int i = 0; i < wm_n; ++i) wm_order[i] = i;

    FwdCache cache;
    Tensor dlogits;
    const uint64_t shuffle_seed = derive_seed(cfg.seed, "train/shuffle");
    const uint64_t attack_seed = derive_seed(cfg.seed, "train/attack");
    const uint64_t mix_seed = derive_seed(cfg.seed, "train/mix");

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(splitmix64(shuffle_seed + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        const size_t train_batches = (static_cast<size_t>(n) + cfg.batch_size - 1) / cfg.batch_size;
        const size_t wm_batches =
            wm_n > 0 ? (static_cast<size_t>(wm_n) + cfg.batch_size - 1) / cfg.batch_size *
                           static_cast<size_t>(cfg.wm_passes)
                     : 0;

        // Batch schedule: 'T' entries consume the next training slice, 'W'
        // entries the next watermark slice (cycling when wm_passes > 1).
        std::string schedule(train_batches, 'T');
        schedule.append(wm_batches, 'W');
        if (mode == WatermarkTrainMode::Mixed && wm_batches > 0) {
            std::vector<char> sched(schedule.begin(), schedule.end());
            Rng mix_rng(splitmix64(mix_seed + static_cast<uint64_t>(epoch)));
            mix_rng.shuffle(sched);
            schedule.assign(sched.begin(), sched.end());
        }

        double loss_sum = 0.0;
        size_t batches_done = 0, train_at = 0, wm_at = 0;
        for (char kind : schedule) {
            float loss;
            if (kind == 'T') {
                const size_t b = train_at * cfg.batch_size;
                const size_t e = std::min<size_t>(b + cfg.batch_size, n);
                BatchView batch = gather_batch(data.images, data.labels, order, b, e);
                ++train_at;
                if (atk) {
                    AttackConfig bcfg = *atk;
                    if (epoch < cfg.attack_warmup_epochs)
                        bcfg.epsilon = atk->epsilon * static_cast<float>(epoch + 1) /
                                       static_cast<float>(cfg.attack_warmup_epochs + 1);
                    bcfg.seed = splitmix64(attack_seed + static_cast<uint64_t>(epoch) * 1000003ull +
                                           train_at);
                    batch.x = pgd_attack(model, batch.x, batch.y, bcfg);
                    if (audit) {
                        ++audit->attack_calls;
                        audit->attacked_samples += batch.y.size();
                    }
                }
                loss = step_on_batch(model, batch.x, batch.y, cfg, cache, dlogits);
            } else {
                const size_t per_pass = (static_cast<size_t>(wm_n) + cfg.batch_size - 1) / cfg.batch_size;
                const size_t slot = wm_at % per_pass;
                const size_t b = slot * cfg.batch_size;
                const size_t e = std::min<size_t>(b + cfg.batch_size, wm_n);
                BatchView batch = gather_batch(wm->inputs, wm->labels, wm_order, b, e);
                ++wm_at;
                if (audit) audit->watermark_batch_samples += batch.y.size();
                loss = step_on_batch(model, batch.x, batch.y, cfg, cache, dlogits);
            }
            if (!std::isfinite(loss))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + " batch " +
                                   std::to_string(batches_done));
            loss_sum += loss;
            ++batches_done;
        }
        if (audit) audit->epoch_batch_order.push_back(schedule);
        if (progress)
            progress({epoch, batches_done ? static_cast<float>(loss_sum / batches_done) : 0.0f});
        if (after_epoch) after_epoch(epoch, model);
    }
}

}  // namespace detail

// Continue training an existing model (any architecture) on a dataset.
inline void train_model(ConvNet& model, const ImageDataset& data, const TrainConfig& cfg,
                        const AttackConfig* atk = nullptr, TrainAudit* audit = nullptr,
                        const ProgressFn& progress = nullptr,
                        const EpochHook& after_epoch = nullptr) {
    detail::train_loop(model, data, cfg, atk, nullptr, WatermarkTrainMode::EpochEnd, audit,
                       progress, after_epoch);
}

// Standard minibatch SGD on the classifier architecture.
inline ConvNet train_plain(const ImageDataset& data, const TrainConfig& cfg,
                           const std::string& arch = "awm-cnn-v1",
                           const ProgressFn& progress = nullptr) {
    ConvNet model = ConvNet::make(arch, derive_seed(cfg.seed, "init"));
    detail::train_loop(model, data, cfg, nullptr, nullptr, WatermarkTrainMode::EpochEnd, nullptr,
                       progress);
    return model;
}

// Adversarial training: every batch is replaced by its PGD perturbation
// before the gradient step.
inline ConvNet train_adversarial(const ImageDataset& data, const TrainConfig& cfg,
                                 const AttackConfig& atk, TrainAudit* audit = nullptr,
                                 const ProgressFn& progress = nullptr) {
    ConvNet model = ConvNet::make("awm-cnn-v1", derive_seed(cfg.seed, "init"));
    detail::train_loop(model, data, cfg, &atk, nullptr, WatermarkTrainMode::EpochEnd, audit,
                       progress);
    return model;
}

// Combined regime: adversarial steps over the training set, then plain steps
// over the watermark set at the end of each epoch (or mixed in, if asked).
// Watermark inputs are never perturbed. For adversarial watermark sets the
// recorded generation budget must exceed the training budget.
inline ConvNet train_adv_watermarked(const ImageDataset& data, const TrainConfig& cfg,
                                     const AttackConfig& atk, const WatermarkSet& wm,
                                     WatermarkTrainMode mode = WatermarkTrainMode::EpochEnd,
                                     TrainAudit* audit = nullptr,
                                     const ProgressFn& progress = nullptr) {
    if (wm.kind == WatermarkKind::Adversarial) {
        for (const auto& p : wm.provenance)
            if (p.budget <= atk.epsilon)
                throw ConfigError("budget separation violated: watermark budget " +
                                  std::to_string(p.budget) + " <= training budget " +
                                  std::to_string(atk.epsilon));
    }
    ConvNet model = ConvNet::make("awm-cnn-v1", derive_seed(cfg.seed, "init"));
    detail::train_loop(model, data, cfg, &atk, &wm, mode, audit, progress);
    return model;
}

// Test / adversarial / watermark accuracy of a model.
inline Metrics evaluate(const ConvNet& model, const ImageDataset& test, const AttackConfig& atk,
                        const WatermarkSet* wm = nullptr) {
    Metrics m;
    m.test_accuracy = clean_accuracy(model, test);
    m.adversarial_accuracy = adversarial_accuracy(model, test, atk);
    if (wm) m.watermark_accuracy = verify(model_oracle(model), *wm).watermark_accuracy;
    return m;
}

}  // namespace awm
