#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "awm/train.hpp"

namespace awm {

enum class StealMode { Black, Grey, White };

inline std::string to_string(StealMode m) {
    switch (m) {
        case StealMode::Black: return "black";
        case StealMode::Grey: return "grey";
        default: return "white";
    }
}

inline StealMode steal_mode_from_string(const std::string& s) {
    if (s == "black") return StealMode::Black;
    if (s == "grey" || s == "gray") return StealMode::Grey;
    if (s == "white") return StealMode::White;
    throw ConfigError("unknown steal mode '" + s + "'");
}

struct StealConfig {
    StealMode mode = StealMode::Black;
    float lambda = 0.1f;               // Jacobian augmentation step
    int rounds = 6;                    // augmentation rounds
    int seed_size = 150;               // initial substitute training set size
    int substitute_epochs_per_round = 10;
    std::string substitute_arch = "awm-mlp-v1";  // black-box guess; grey uses the victim's
    std::optional<uint64_t> oracle_budget;
    float substitute_lr = 0.01f;
    int substitute_batch = 64;
    uint64_t seed = 0;

    void validate() const {
        if (lambda < 0) throw ConfigError("lambda must be >= 0");
        if (rounds < 1) throw ConfigError("rounds must be >= 1");
        if (seed_size < 1) throw ConfigError("seed_size must be >= 1");
        if (substitute_epochs_per_round < 1)
            throw ConfigError("substitute_epochs_per_round must be >= 1");
    }
};

// Label-only view of a victim model: answers argmax class labels, counts
// every query, and optionally enforces a query budget.
class QueryOracle {
public:
    explicit QueryOracle(const ConvNet& model, std::optional<uint64_t> budget = std::nullopt)
        : model_(&model), budget_(budget) {}

    int operator()(const Tensor& x) const {
        charge(1);
        return predict(*model_, x);
    }

    std::vector<int> query_batch(const Tensor& batch) const {
        const int n = batch.dim(0);
        charge(static_cast<uint64_t>(n));
        std::vector<int> out(n);
        parallel_chunks(n, [&](int, int64_t b, int64_t e) {
            FwdCache cache;
            constexpr int kChunk = 256;
            for (int64_t at = b; at < e; at += kChunk) {
                const int m = static_cast<int>(std::min<int64_t>(kChunk, e - at));
                Tensor sub({m, 1, 28, 28});
                std::copy(batch.ptr() + at * 784, batch.ptr() + (at + m) * 784, sub.ptr());
                std::vector<int> pred = predict_batch(*model_, sub, cache);
                std::copy(pred.begin(), pred.end(), out.begin() + at);
            }
        });
        return out;
    }

    uint64_t queries() const { return count_.load(); }

    LabelOracle as_label_oracle() const {
        return [this](const Tensor& x) { return (*this)(x); };
    }

private:
    void charge(uint64_t n) const {
        const uint64_t before = count_.fetch_add(n);
        if (budget_ && before + n > *budget_)
            throw DataError("oracle query budget exhausted (budget " + std::to_string(*budget_) +
                            ")");
    }

    const ConvNet* model_;
    std::optional<uint64_t> budget_;
    mutable std::atomic<uint64_t> count_{0};
};

inline QueryOracle label_oracle(const ConvNet& model,
                                std::optional<uint64_t> budget = std::nullopt) {
    return QueryOracle(model, budget);
}

// Jacobian-based dataset augmentation: for every x in S, adds
// clip01(x + lambda * sign(d substitute_logit[oracle(x)] / dx)). The result
// keeps the originals first, then the new points; |result| == 2|S|.
inline ImageDataset jacobian_augment(const ImageDataset& S, const ConvNet& substitute,
                                     const LabelOracle& oracle, float lambda) {
    const int n = S.count();
    if (n == 0) throw DataError("jacobian_augment: empty dataset");
    std::vector<int> oracle_labels(n);
    for (int i = 0; i < n; ++i) oracle_labels[i] = oracle(S.item(i));

    ImageDataset out;
    out.name = S.name;
    out.images = Tensor({2 * n, 1, 28, 28});
    out.labels.resize(2 * n);
    out.source_index.assign(2 * n, -1);
    std::copy(S.images.data.begin(), S.images.data.end(), out.images.data.begin());
    std::copy(S.labels.begin(), S.labels.end(), out.labels.begin());
    for (int i = 0; i < n; ++i)
        out.source_index[i] = S.source_index.empty() ? -1 : S.source_index[i];

    parallel_chunks(n, [&](int, int64_t b, int64_t e) {
        FwdCache cache;
        Tensor dlogits, grad;
        constexpr int kChunk = 128;
        for (int64_t at = b; at < e; at += kChunk) {
            const int m = static_cast<int>(std::min<int64_t>(kChunk, e - at));
            Tensor batch({m, 1, 28, 28});
            std::copy(S.images.ptr() + at * 784, S.images.ptr() + (at + m) * 784, batch.ptr());
            const Tensor& logits = substitute.forward(batch, cache);
            // gradient of the oracle-labeled logit
            dlogits.shape = logits.shape;
            dlogits.data.assign(logits.size(), 0.0f);
            const int C = substitute.num_classes();
            for (int i = 0; i < m; ++i)
                dlogits.data[static_cast<size_t>(i) * C + oracle_labels[at + i]] = 1.0f;
            substitute.backward_input(cache, dlogits, grad);
            float* dst = out.images.ptr() + (static_cast<size_t>(n) + at) * 784;
            for (size_t i = 0; i < static_cast<size_t>(m) * 784; ++i) {
                const float g = grad.data[i];
                const float sign = g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
                dst[i] = std::clamp(batch.data[i] + lambda * sign, 0.0f, 1.0f);
            }
        }
    });
    // new points inherit the oracle's labels until the next round relabels them
    for (int i = 0; i < n; ++i) out.labels[n + i] = oracle_labels[i];
    return out;
}

struct StealResult {
    ConvNet substitute;
    uint64_t oracle_queries = 0;
    int rounds_completed = 0;
};

// Thrown when the oracle budget runs out mid-attack; carries the last
// substitute that finished a full round.
class StealBudgetExhausted : public Error {
public:
    StealBudgetExhausted(std::string msg, StealResult partial)
        : Error(std::move(msg)), partial_result(std::move(partial)) {}
    StealResult partial_result;
};

// Model extraction. Black mode trains a plainly-fitted substitute with a
// guessed architecture on oracle-labeled, Jacobian-augmented data; grey mode
// knows the victim's architecture and training method, so the substitute is
// adversarially trained with the victim's published budget; white mode is a
// bit-exact copy of the victim.
inline StealResult steal(const ConvNet& victim, const ImageDataset& seed_data,
                         const StealConfig& cfg, const AttackConfig* atk = nullptr) {
    cfg.validate();
    if (cfg.mode == StealMode::White) {
        StealResult r;
        r.substitute = victim;  // deep copy; shares no state with the victim
        return r;
    }
    if (cfg.mode == StealMode::Grey && atk == nullptr)
        throw ConfigError("grey-box stealing requires the victim's training attack config");

    if (seed_data.count() < cfg.seed_size)
        throw ConfigError("steal: seed dataset smaller than seed_size");
    std::vector<int> ix(cfg.seed_size);
    for (int i = 0; i < cfg.seed_size; ++i) ix[i] = i;
    ImageDataset S = seed_data.subset(ix);

    QueryOracle oracle(victim, cfg.oracle_budget);
    const std::string arch =
        cfg.mode == StealMode::Black ? cfg.substitute_arch : victim.arch();
    ConvNet substitute = ConvNet::make(arch, derive_seed(cfg.seed, "steal/init"));

    StealResult result;
    for (int round = 0; round < cfg.rounds; ++round) {
        ImageDataset labeled = S;
        try {
            labeled.labels = oracle.query_batch(S.images);
        } catch (const DataError& e) {
            result.oracle_queries = oracle.queries();
            throw StealBudgetExhausted(std::string(e.what()) + " in round " +
                                           std::to_string(round),
                                       std::move(result));
        }

        TrainConfig tc;
        tc.learning_rate = cfg.substitute_lr;
        tc.weight_decay = 0.0f;
        tc.epochs = cfg.substitute_epochs_per_round;
        tc.batch_size = cfg.substitute_batch;
        // the budget ramp applies once, not per augmentation round
        tc.attack_warmup_epochs = round == 0 ? tc.attack_warmup_epochs : 0;
        tc.seed = splitmix64(derive_seed(cfg.seed, "steal/train") + static_cast<uint64_t>(round));
        train_model(substitute, labeled, tc, cfg.mode == StealMode::Grey ? atk : nullptr);

        result.substitute = substitute;
        result.rounds_completed = round + 1;
        result.oracle_queries = oracle.queries();

        if (round + 1 < cfg.rounds) {
            // Reuse this round's oracle labels for the Jacobian step instead
            // of re-querying: total queries stay sum_r |S_r|.
            const std::vector<int>& cached = labeled.labels;
            size_t served = 0;
            LabelOracle cached_oracle = [&cached, &served](const Tensor&) -> int {
                return cached.at(served++);
            };
            S = jacobian_augment(labeled, substitute, cached_oracle, cfg.lambda);
        }
    }
    result.substitute = std::move(substitute);
    result.oracle_queries = oracle.queries();
    return result;
}

}  // namespace awm
