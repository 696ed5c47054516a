#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "awm/attack.hpp"
#include "awm/dataset.hpp"

namespace awm {

enum class WatermarkKind : uint8_t { OOD = 0, Adversarial = 1 };

inline std::string to_string(WatermarkKind k) {
    return k == WatermarkKind::OOD ? "ood" : "adversarial";
}

struct WatermarkProvenance {
    std::string source_dataset;
    int source_index = -1;
    float budget = 0.0f;
    std::string generator_id;  // fingerprint of the generating checkpoint, "" for OOD
};

inline void to_json(nlohmann::json& j, const WatermarkProvenance& p) {
    j = nlohmann::json{{"source", p.source_dataset},
                       {"index", p.source_index},
                       {"budget", p.budget},
                       {"generator", p.generator_id}};
}

inline void from_json(const nlohmann::json& j, WatermarkProvenance& p) {
    j.at("source").get_to(p.source_dataset);
    j.at("index").get_to(p.source_index);
    j.at("budget").get_to(p.budget);
    j.at("generator").get_to(p.generator_id);
}

// The owner's secret trigger set: n inputs with the labels the embedded
// model is expected to reproduce.
struct WatermarkSet {
    Tensor inputs;  // [n,1,28,28]
    std::vector<int> labels;
    WatermarkKind kind = WatermarkKind::OOD;
    std::vector<WatermarkProvenance> provenance;

    int count() const { return inputs.shape.empty() ? 0 : inputs.dim(0); }

    Tensor item(int i) const {
        Tensor t({1, 28, 28});
        std::copy(inputs.ptr() + static_cast<size_t>(i) * 784,
                  inputs.ptr() + static_cast<size_t>(i) * 784 + 784, t.ptr());
        return t;
    }
};

constexpr int kDefaultWatermarkCount = 100;

// OOD watermarks: seeded draws from the counterpart dataset, each assigned
// a seeded random label so the trigger labels are decoupled from content.
inline WatermarkSet build_ood_watermarks(const ImageDataset& ood, int n, uint64_t seed) {
    if (n <= 0) throw ConfigError("watermark count must be positive");
    if (n > ood.count())
        throw ConfigError("watermark count " + std::to_string(n) + " exceeds OOD dataset size " +
                          std::to_string(ood.count()));
    std::vector<int> ix(ood.count());
    for (size_t i = 0; i < ix.size(); ++i) ix[i] = static_cast<int>(i);
    Rng pick(derive_seed(seed, "wm/ood/pick"));
    pick.shuffle(ix);
    ix.resize(n);

    WatermarkSet wm;
    wm.kind = WatermarkKind::OOD;
    wm.inputs = Tensor({n, 1, 28, 28});
    wm.labels.resize(n);
    wm.provenance.resize(n);
    Rng lab(derive_seed(seed, "wm/ood/labels"));
    for (int i = 0; i < n; ++i) {
        std::copy(ood.images.ptr() + static_cast<size_t>(ix[i]) * 784,
                  ood.images.ptr() + static_cast<size_t>(ix[i]) * 784 + 784,
                  wm.inputs.ptr() + static_cast<size_t>(i) * 784);
        wm.labels[i] = static_cast<int>(lab.next_below(10));
        wm.provenance[i] = {to_string(ood.name),
                            ood.source_index.empty() ? ix[i] : ood.source_index[ix[i]], 0.0f, ""};
    }
    return wm;
}

struct WatermarkGenStats {
    int attempted = 0;
    int kept = 0;
    double yield() const { return attempted > 0 ? static_cast<double>(kept) / attempted : 0.0; }
};

// Adversarial watermarks: PGD at budget beta (no random start) on seeded
// pool samples, keeping only samples the generator then misclassifies; each
// kept watermark carries the ground-truth label of its seed image. beta must
// exceed the training budget so watermarks stay separable from training-time
// adversarial samples.
inline WatermarkSet gen_adversarial_watermarks(const ConvNet& generator, const ImageDataset& pool,
                                               AttackConfig cfg, int n, uint64_t seed,
                                               float training_epsilon,
                                               const std::string& generator_id = "",
                                               WatermarkGenStats* stats = nullptr) {
    cfg.validate();
    if (n <= 0) throw ConfigError("watermark count must be positive");
    if (cfg.epsilon <= training_epsilon)
        throw ConfigError("budget separation violated: watermark budget " +
                          std::to_string(cfg.epsilon) + " must exceed training budget " +
                          std::to_string(training_epsilon));
    cfg.random_start = false;

    std::vector<int> ix(pool.count());
    for (size_t i = 0; i < ix.size(); ++i) ix[i] = static_cast<int>(i);
    Rng pick(derive_seed(seed, "wm/adv/pick"));
    pick.shuffle(ix);

    WatermarkSet wm;
    wm.kind = WatermarkKind::Adversarial;
    wm.inputs = Tensor({n, 1, 28, 28});
    wm.labels.resize(n);
    wm.provenance.resize(n);

    constexpr int kBatch = 128;
    FwdCache cache;
    int kept = 0, attempted = 0;
    for (size_t at = 0; at < ix.size() && kept < n; at += kBatch) {
        const int m = static_cast<int>(std::min<size_t>(kBatch, ix.size() - at));
        Tensor batch({m, 1, 28, 28});
        std::vector<int> ys(m);
        for (int i = 0; i < m; ++i) {
            std::copy(pool.images.ptr() + static_cast<size_t>(ix[at + i]) * 784,
                      pool.images.ptr() + static_cast<size_t>(ix[at + i]) * 784 + 784,
                      batch.ptr() + static_cast<size_t>(i) * 784);
            ys[i] = pool.labels[ix[at + i]];
        }
        Tensor adv = pgd_attack(generator, batch, ys, cfg);
        std::vector<int> pred = predict_batch(generator, adv, cache);
        for (int i = 0; i < m && kept < n; ++i) {
            ++attempted;
            if (pred[i] == ys[i]) continue;  // generator still robust here; not a usable trigger
            std::copy(adv.ptr() + static_cast<size_t>(i) * 784,
                      adv.ptr() + static_cast<size_t>(i) * 784 + 784,
                      wm.inputs.ptr() + static_cast<size_t>(kept) * 784);
            wm.labels[kept] = ys[i];
            wm.provenance[kept] = {to_string(pool.name),
                                   pool.source_index.empty() ? ix[at + i]
                                                             : pool.source_index[ix[at + i]],
                                   cfg.epsilon, generator_id};
            ++kept;
        }
    }
    if (stats) *stats = {attempted, kept};
    if (kept < n) {
        const double yield = attempted > 0 ? 100.0 * kept / attempted : 0.0;
        throw DataError("adversarial watermark pool exhausted: kept " + std::to_string(kept) +
                        " of " + std::to_string(n) + " after " + std::to_string(attempted) +
                        " attempts (yield " + std::to_string(yield) + "%)");
    }
    return wm;
}

// Black-box verification oracle: answers a label for one [1,28,28] input.
using LabelOracle = std::function<int(const Tensor&)>;

struct VerificationResult {
    double watermark_accuracy = 0.0;
    double threshold = 0.5;
    bool claimed = false;
    std::vector<std::pair<int, int>> per_item;  // (predicted, expected)
};

// Queries the oracle once per watermark and claims ownership when the match
// fraction reaches the threshold (>= 0.5 by default).
inline VerificationResult verify(const LabelOracle& oracle, const WatermarkSet& wm,
                                 double threshold = 0.5) {
    const int n = wm.count();
    if (n == 0) throw DataError("verify: empty watermark set");
    VerificationResult r;
    r.threshold = threshold;
    r.per_item.reserve(n);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const int pred = oracle(wm.item(i));
        r.per_item.emplace_back(pred, wm.labels[i]);
        if (pred == wm.labels[i]) ++hits;
    }
    r.watermark_accuracy = static_cast<double>(hits) / n;
    r.claimed = r.watermark_accuracy >= threshold;
    return r;
}

inline LabelOracle model_oracle(const ConvNet& model) {
    return [&model](const Tensor& x) { return predict(model, x); };
}

// ---------------------------------------------------------------------------
// Watermark set file: "AWMWM1", kind byte, u32 count, then per item
// 784 little-endian f32, one label byte, and a length-prefixed JSON
// provenance record. Round-trips are byte-exact.
// ---------------------------------------------------------------------------

inline std::string serialize_watermarks(const WatermarkSet& wm) {
    std::string out;
    out.append("AWMWM1");
    out.push_back(static_cast<char>(wm.kind));
    detail::put_u32(out, static_cast<uint32_t>(wm.count()));
    for (int i = 0; i < wm.count(); ++i) {
        const size_t at = out.size();
        out.resize(at + 784 * 4);
        std::memcpy(out.data() + at, wm.inputs.ptr() + static_cast<size_t>(i) * 784, 784 * 4);
        out.push_back(static_cast<char>(wm.labels[i]));
        nlohmann::json j = wm.provenance[i];
        detail::put_str(out, j.dump());
    }
    return out;
}

inline void save_watermarks(const WatermarkSet& wm, const std::string& path) {
    detail::write_file(path, serialize_watermarks(wm));
}

inline WatermarkSet deserialize_watermarks(const std::vector<uint8_t>& buf) {
    detail::Reader r(buf.data(), buf.size());
    char magic[6];
    r.bytes(reinterpret_cast<uint8_t*>(magic), 6);
    if (std::memcmp(magic, "AWMWM1", 6) != 0) throw DataError("bad magic: not a watermark file");
    const uint8_t kind = r.u8();
    if (kind > 1) throw DataError("bad watermark kind byte");
    const uint32_t n = r.u32();
    WatermarkSet wm;
    wm.kind = static_cast<WatermarkKind>(kind);
    wm.inputs = Tensor({static_cast<int>(n), 1, 28, 28});
    wm.labels.resize(n);
    wm.provenance.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        r.floats(wm.inputs.ptr() + static_cast<size_t>(i) * 784, 784);
        const uint8_t lab = r.u8();
        if (lab > 9) throw DataError("watermark label out of range");
        wm.labels[i] = lab;
        try {
            wm.provenance[i] = nlohmann::json::parse(r.str()).get<WatermarkProvenance>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("bad watermark provenance record: ") + e.what());
        }
    }
    if (r.remaining() != 0) throw DataError("trailing bytes after watermark payload");
    return wm;
}

inline WatermarkSet load_watermarks(const std::string& path) {
    return deserialize_watermarks(detail::read_file(path));
}

}  // namespace awm
