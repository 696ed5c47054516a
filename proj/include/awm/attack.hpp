#pragma once

#include <atomic>
#include <cmath>
#include <vector>

#include "awm/dataset.hpp"
#include "awm/net.hpp"

namespace awm {

// L-infinity PGD configuration: budget epsilon, iteration count, per-step
// size, and whether to start from a uniform point inside the ball.
struct AttackConfig {
    float epsilon = 0.25f;
    int steps = 25;
    float step_size = 0.01f;
    bool random_start = false;
    uint64_t seed = 0;

    void validate() const {
        if (epsilon < 0.0f || epsilon > 1.0f) throw ConfigError("epsilon must be in [0,1]");
        if (steps < 0) throw ConfigError("steps must be >= 0");
        if (step_size <= 0.0f) throw ConfigError("step_size must be > 0");
    }
};

namespace detail {

// One signed-gradient ascent run on a contiguous batch. The model is only
// read, so several chunks can run concurrently. Per-row loss gradients are
// unscaled, which keeps every sample's trajectory independent of how the
// caller chunked the batch.
inline void pgd_chunk(const ConvNet& model, const float* x0, const int* labels, int n,
                      const AttackConfig& cfg, uint64_t chunk_seed, float* out,
                      std::vector<float>* mean_loss_per_step) {
    const size_t dim = 784;
    const size_t total = static_cast<size_t>(n) * dim;
    Tensor x({n, 1, 28, 28});
    std::copy(x0, x0 + total, x.ptr());

    if (cfg.random_start && cfg.epsilon > 0.0f) {
        for (int s = 0; s < n; ++s) {
            Rng rng(splitmix64(chunk_seed + static_cast<uint64_t>(s)));
            float* row = x.ptr() + static_cast<size_t>(s) * dim;
            const float* orig = x0 + static_cast<size_t>(s) * dim;
            for (size_t i = 0; i < dim; ++i) {
                const float v = row[i] + rng.uniform(-cfg.epsilon, cfg.epsilon);
                row[i] = std::clamp(std::clamp(v, orig[i] - cfg.epsilon, orig[i] + cfg.epsilon),
                                    0.0f, 1.0f);
            }
        }
    }

    std::vector<int> ys(labels, labels + n);
    FwdCache cache;
    Tensor dlogits, grad;
    for (int step = 0; step < cfg.steps; ++step) {
        const Tensor& logits = model.forward(x, cache);
        const float mean_loss = cross_entropy_grad(logits, ys, dlogits, 1.0f);
        if (mean_loss_per_step) (*mean_loss_per_step)[step] += mean_loss * n;
        model.backward_input(cache, dlogits, grad);
        for (size_t i = 0; i < total; ++i) {
            const float g = grad.data[i];
            const float sign = g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
            const float moved = x.data[i] + cfg.step_size * sign;
            const float lo = x0[i] - cfg.epsilon, hi = x0[i] + cfg.epsilon;
            x.data[i] = std::clamp(std::clamp(moved, lo, hi), 0.0f, 1.0f);
        }
    }
    if (mean_loss_per_step) {
        const Tensor& logits = model.forward(x, cache);
        (*mean_loss_per_step)[cfg.steps] += cross_entropy(logits, ys) * n;
    }
    std::copy(x.data.begin(), x.data.end(), out);
}

}  // namespace detail

// Untargeted L-inf PGD on a batch [N,1,28,28] with true labels. Ascends the
// cross-entropy by the sign of the input gradient, projecting onto the
// epsilon ball and [0,1] after every step. Work is split across threads;
// each sample's result is the same regardless of the split.
inline Tensor pgd_attack(const ConvNet& model, const Tensor& x, const std::vector<int>& y,
                         const AttackConfig& cfg) {
    cfg.validate();
    check_labels(y);
    const int n = x.shape.size() == 4 ? x.dim(0) : 1;
    if (static_cast<size_t>(n) != y.size()) throw DataError("pgd: batch/label size mismatch");
    Tensor out({n, 1, 28, 28});
    if (n == 0) return out;
    const uint64_t base_seed = derive_seed(cfg.seed, "pgd/start");
    parallel_chunks(n, [&](int, int64_t b, int64_t e) {
        detail::pgd_chunk(model, x.ptr() + b * 784, y.data() + b, static_cast<int>(e - b), cfg,
                          base_seed + static_cast<uint64_t>(b), out.ptr() + b * 784, nullptr);
    });
    return out;
}

// pgd_attack plus the mean loss before/after every step (index 0 = loss at
// the starting point of step 1, ..., index steps = loss of the result).
inline Tensor pgd_attack_traced(const ConvNet& model, const Tensor& x, const std::vector<int>& y,
                                const AttackConfig& cfg, std::vector<float>& mean_loss_per_step) {
    cfg.validate();
    check_labels(y);
    const int n = x.dim(0);
    Tensor out({n, 1, 28, 28});
    mean_loss_per_step.assign(cfg.steps + 1, 0.0f);
    detail::pgd_chunk(model, x.ptr(), y.data(), n, cfg, derive_seed(cfg.seed, "pgd/start"),
                      out.ptr(), &mean_loss_per_step);
    for (auto& v : mean_loss_per_step) v /= static_cast<float>(n);
    return out;
}

// Fraction of samples still classified to their true label after a PGD
// attack at cfg. Batched and parallel; deterministic.
inline double adversarial_accuracy(const ConvNet& model, const ImageDataset& data,
                                   const AttackConfig& cfg, int batch_size = 256) {
    cfg.validate();
    const int n = data.count();
    if (n == 0) throw DataError("adversarial_accuracy: empty dataset");
    // Random-start seeds key off the global sample index, so the result is
    // the same for any thread count or batch size.
    const uint64_t start_base = derive_seed(cfg.seed, "advacc/pgd");
    std::atomic<int64_t> correct{0};
    parallel_chunks(n, [&](int, int64_t b, int64_t e) {
        FwdCache cache;
        int64_t local = 0;
        for (int64_t at = b; at < e; at += batch_size) {
            const int m = static_cast<int>(std::min<int64_t>(batch_size, e - at));
            Tensor batch({m, 1, 28, 28});
            std::copy(data.images.ptr() + at * 784, data.images.ptr() + (at + m) * 784,
                      batch.ptr());
            std::vector<int> ys(data.labels.begin() + at, data.labels.begin() + at + m);
            Tensor adv({m, 1, 28, 28});
            detail::pgd_chunk(model, batch.ptr(), ys.data(), m, cfg,
                              start_base + static_cast<uint64_t>(at), adv.ptr(), nullptr);
            std::vector<int> pred = predict_batch(model, adv, cache);
            for (int i = 0; i < m; ++i)
                if (pred[i] == ys[i]) ++local;
        }
        correct += local;
    });
    return static_cast<double>(correct.load()) / n;
}

// Plain accuracy on clean inputs; parallel over samples.
inline double clean_accuracy(const ConvNet& model, const ImageDataset& data, int batch_size = 256) {
    const int n = data.count();
    if (n == 0) throw DataError("clean_accuracy: empty dataset");
    std::atomic<int64_t> correct{0};
    parallel_chunks(n, [&](int, int64_t b, int64_t e) {
        FwdCache cache;
        int64_t local = 0;
        for (int64_t at = b; at < e; at += batch_size) {
            const int m = static_cast<int>(std::min<int64_t>(batch_size, e - at));
            Tensor batch({m, 1, 28, 28});
            std::copy(data.images.ptr() + at * 784, data.images.ptr() + (at + m) * 784,
                      batch.ptr());
            std::vector<int> pred = predict_batch(model, batch, cache);
            for (int i = 0; i < m; ++i)
                if (pred[i] == data.labels[at + i]) ++local;
        }
        correct += local;
    });
    return static_cast<double>(correct.load()) / n;
}

}  // namespace awm
