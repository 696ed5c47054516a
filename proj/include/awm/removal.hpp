#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "awm/steal.hpp"
#include "awm/train.hpp"

namespace awm {

struct RemovalConfig {
    std::vector<float> prune_rates = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f};
    int finetune_epochs = 40;
    float finetune_lr = 0.005f;
    float finetune_weight_decay = 5e-4f;
    int finetune_batch = 64;
    uint64_t seed = 0;

    void validate() const {
        for (float p : prune_rates)
            if (p < 0.0f || p >= 1.0f) throw ConfigError("prune rate must be in [0,1)");
        if (finetune_epochs < 0) throw ConfigError("finetune_epochs must be >= 0");
        if (finetune_lr < 0) throw ConfigError("finetune_lr must be >= 0");
    }
};

// Zeroes the floor(p*n) smallest-magnitude entries (ties by index order)
// and clears their mask slots.
inline void prune_weight_tensor(std::vector<float>& values, std::vector<uint8_t>& mask, float p) {
    const size_t n = values.size();
    const size_t k = static_cast<size_t>(std::floor(static_cast<double>(p) * n));
    if (mask.empty()) mask.assign(n, 1);
    if (k == 0) return;
    std::vector<uint32_t> ix(n);
    std::iota(ix.begin(), ix.end(), 0u);
    const float* v = values.data();
    std::sort(ix.begin(), ix.end(), [v](uint32_t a, uint32_t b) {
        const float fa = std::fabs(v[a]), fb = std::fabs(v[b]);
        return fa != fb ? fa < fb : a < b;
    });
    for (size_t i = 0; i < k; ++i) {
        values[ix[i]] = 0.0f;
        mask[ix[i]] = 0;
    }
}

// L1 unstructured pruning: each weight tensor is pruned independently at
// rate p, and the installed masks keep the zeros through later updates.
// Biases are exempt.
inline ConvNet prune_l1(const ConvNet& model, float p) {
    if (p < 0.0f || p >= 1.0f) throw ConfigError("prune rate must be in [0,1)");
    ConvNet out = model;
    if (p == 0.0f) return out;
    for (auto& param : out.params()) {
        if (param.value.shape.size() < 2) continue;
        prune_weight_tensor(param.value.data, param.mask, p);
    }
    return out;
}

// Plain fine-tuning on held-out data; every layer updates, masks persist.
inline ConvNet finetune(const ConvNet& model, const ImageDataset& d_add, const RemovalConfig& cfg,
                        const EpochHook& after_epoch = nullptr) {
    cfg.validate();
    ConvNet out = model;
    if (cfg.finetune_epochs == 0) return out;
    TrainConfig tc;
    tc.learning_rate = cfg.finetune_lr;
    tc.weight_decay = cfg.finetune_weight_decay;
    tc.epochs = cfg.finetune_epochs;
    tc.batch_size = cfg.finetune_batch;
    tc.seed = derive_seed(cfg.seed, "finetune");
    train_model(out, d_add, tc, nullptr, nullptr, nullptr, after_epoch);
    return out;
}

struct CurvePoint {
    double point = 0.0;  // prune rate or epoch number
    Metrics metrics;
};

struct CurveData {
    std::string axis;  // "prune_rate" or "finetune_epoch"
    std::vector<CurvePoint> points;
};

struct RemovalSweep {
    CurveData prune;
    CurveData finetune;
};

// Runs both removal attacks against fresh clones of the model and records
// metrics at every point. The input model itself is never mutated.
inline RemovalSweep removal_sweep(const ConvNet& model, const WatermarkSet& wm,
                                  const ImageDataset& test, const AttackConfig& atk,
                                  const ImageDataset& d_add, const RemovalConfig& cfg) {
    cfg.validate();
    RemovalSweep sweep;
    sweep.prune.axis = "prune_rate";
    for (float p : cfg.prune_rates) {
        ConvNet pruned = prune_l1(model, p);
        sweep.prune.points.push_back({p, evaluate(pruned, test, atk, &wm)});
    }
    sweep.finetune.axis = "finetune_epoch";
    finetune(model, d_add, cfg, [&](int epoch, const ConvNet& m) {
        sweep.finetune.points.push_back(
            {static_cast<double>(epoch + 1), evaluate(m, test, atk, &wm)});
    });
    return sweep;
}

// CSV with columns axis,point,test_acc,adv_acc,wm_acc; accuracies are
// percentages with two decimals.
inline std::string curve_csv(const std::vector<const CurveData*>& curves) {
    std::string out = "axis,point,test_acc,adv_acc,wm_acc\n";
    char buf[160];
    for (const CurveData* c : curves)
        for (const CurvePoint& pt : c->points) {
            const double wm = pt.metrics.watermark_accuracy.value_or(-0.01);
            std::snprintf(buf, sizeof(buf), "%s,%g,%.2f,%.2f,%.2f\n", c->axis.c_str(), pt.point,
                          100.0 * pt.metrics.test_accuracy, 100.0 * pt.metrics.adversarial_accuracy,
                          100.0 * wm);
            out += buf;
        }
    return out;
}

}  // namespace awm
