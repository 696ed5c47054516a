#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "awm/removal.hpp"
#include "awm/steal.hpp"

namespace awm {

enum class Regime { Plain, AdvTr, AdvTrOod, AdvTrAdvWm };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::Plain: return "plain";
        case Regime::AdvTr: return "advtr";
        case Regime::AdvTrOod: return "advtr+ood";
        default: return "advtr+advwm";
    }
}

inline Regime regime_from_string(const std::string& s) {
    if (s == "plain") return Regime::Plain;
    if (s == "advtr") return Regime::AdvTr;
    if (s == "advtr+ood") return Regime::AdvTrOod;
    if (s == "advtr+advwm") return Regime::AdvTrAdvWm;
    throw ConfigError("unknown regime '" + s + "'");
}

// Everything one experiment needs. Serialized flat; the fingerprint of the
// canonical JSON names the run directory and tags every metric row.
struct ExperimentConfig {
    std::string dataset = "mnist";
    std::string regime = "advtr+advwm";
    std::string profile = "desk";  // desk | full
    uint64_t seed = 42;

    TrainConfig train;
    AttackConfig train_attack;  // epsilon/steps/step_size for training PGD
    AttackConfig eval_attack;   // evaluation triple
    AttackConfig wm_attack;     // watermark generation triple (budget beta)
    int wm_count = kDefaultWatermarkCount;
    std::string wm_mode = "epoch-end";  // or "mixed"

    StealConfig steal;
    std::vector<std::string> steal_modes = {"black", "grey", "white"};

    RemovalConfig removal;
    SplitPlan split;

    std::string data_root;
    std::string out_dir = "runs";

    DatasetName dataset_name() const { return dataset_from_string(dataset); }
    Regime regime_kind() const { return regime_from_string(regime); }

    void validate() const {
        train.validate();
        train_attack.validate();
        eval_attack.validate();
        wm_attack.validate();
        steal.validate();
        removal.validate();
        if (profile != "desk" && profile != "full")
            throw ConfigError("profile must be 'desk' or 'full'");
        if (wm_mode != "epoch-end" && wm_mode != "mixed")
            throw ConfigError("wm_mode must be 'epoch-end' or 'mixed'");
        if (wm_count < 1) throw ConfigError("wm_count must be >= 1");
        const Regime r = regime_kind();
        if (r == Regime::AdvTrAdvWm && wm_attack.epsilon <= train_attack.epsilon)
            throw ConfigError("budget separation violated: wm_attack.epsilon must exceed "
                              "train_attack.epsilon");
        for (const auto& m : steal_modes) steal_mode_from_string(m);
    }
};

// Published hyperparameters per dataset: training triple (epsilon, steps,
// step size), watermark triple, and the watermark set size.
inline void apply_dataset_defaults(ExperimentConfig& cfg, DatasetName name) {
    if (name == DatasetName::MNIST) {
        cfg.train_attack = {0.25f, 25, 0.01f, true, 0};
        cfg.eval_attack = {0.25f, 25, 0.01f, false, 0};
        cfg.wm_attack = {0.40f, 40, 0.01f, false, 0};
    } else {
        cfg.train_attack = {0.15f, 15, 0.01f, true, 0};
        cfg.eval_attack = {0.15f, 15, 0.01f, false, 0};
        cfg.wm_attack = {0.30f, 40, 0.01f, false, 0};
    }
    cfg.wm_count = kDefaultWatermarkCount;
}

// desk: CPU-sized subset and shorter schedule; the training attack keeps the
// published budget but runs 10 steps with the step size scaled so
// steps * step_size still spans the ball, and the learning rate is scaled up
// to compensate for the much shorter optimization budget. full: the
// published setup.
inline void apply_profile(ExperimentConfig& cfg, const std::string& profile) {
    cfg.profile = profile;
    if (profile == "desk") {
        cfg.train.epochs = 15;
        cfg.train.learning_rate = 0.02f;
        cfg.train_attack.steps = 10;
        cfg.train_attack.step_size = cfg.train_attack.epsilon / 10.0f;
        cfg.split.train_count = 10000;
        cfg.split.test_count = 2000;
        cfg.split.finetune_count = 10000;
        cfg.split.steal_seed_count = 150;
    } else if (profile == "full") {
        cfg.train.epochs = 100;
        cfg.train.learning_rate = 0.005f;
        cfg.train_attack.steps = cfg.eval_attack.steps;
        cfg.train_attack.step_size = cfg.eval_attack.step_size;
        cfg.split.train_count = 50000;
        cfg.split.test_count = 9850;
        cfg.split.finetune_count = 10000;
        cfg.split.steal_seed_count = 150;
    } else {
        throw ConfigError("profile must be 'desk' or 'full'");
    }
}

inline ExperimentConfig default_config(DatasetName name, const std::string& profile = "desk") {
    ExperimentConfig cfg;
    cfg.dataset = to_string(name);
    apply_dataset_defaults(cfg, name);
    apply_profile(cfg, profile);
    return cfg;
}

// ---------------------------------------------------------------------------
// Flat JSON round trip.
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["dataset"] = c.dataset;
    j["regime"] = c.regime;
    j["profile"] = c.profile;
    j["seed"] = c.seed;
    j["lr"] = c.train.learning_rate;
    j["weight_decay"] = c.train.weight_decay;
    j["epochs"] = c.train.epochs;
    j["batch_size"] = c.train.batch_size;
    j["attack_warmup_epochs"] = c.train.attack_warmup_epochs;
    j["wm_passes"] = c.train.wm_passes;
    j["train_eps"] = c.train_attack.epsilon;
    j["train_steps"] = c.train_attack.steps;
    j["train_step_size"] = c.train_attack.step_size;
    j["train_random_start"] = c.train_attack.random_start;
    j["eval_eps"] = c.eval_attack.epsilon;
    j["eval_steps"] = c.eval_attack.steps;
    j["eval_step_size"] = c.eval_attack.step_size;
    j["wm_eps"] = c.wm_attack.epsilon;
    j["wm_steps"] = c.wm_attack.steps;
    j["wm_step_size"] = c.wm_attack.step_size;
    j["wm_count"] = c.wm_count;
    j["wm_mode"] = c.wm_mode;
    j["steal_lambda"] = c.steal.lambda;
    j["steal_rounds"] = c.steal.rounds;
    j["steal_seed_size"] = c.steal.seed_size;
    j["steal_epochs_per_round"] = c.steal.substitute_epochs_per_round;
    j["steal_substitute_arch"] = c.steal.substitute_arch;
    j["steal_lr"] = c.steal.substitute_lr;
    j["steal_batch"] = c.steal.substitute_batch;
    if (c.steal.oracle_budget)
        j["steal_oracle_budget"] = *c.steal.oracle_budget;
    else
        j["steal_oracle_budget"] = nullptr;
    j["steal_modes"] = c.steal_modes;
    j["prune_rates"] = c.removal.prune_rates;
    j["finetune_epochs"] = c.removal.finetune_epochs;
    j["finetune_lr"] = c.removal.finetune_lr;
    j["finetune_weight_decay"] = c.removal.finetune_weight_decay;
    j["finetune_batch"] = c.removal.finetune_batch;
    j["split_train"] = c.split.train_count;
    j["split_test"] = c.split.test_count;
    j["split_finetune"] = c.split.finetune_count;
    j["split_steal_seed"] = c.split.steal_seed_count;
    j["data_root"] = c.data_root;
    j["out_dir"] = c.out_dir;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c = default_config(
        dataset_from_string(j.value("dataset", std::string("mnist"))),
        j.value("profile", std::string("desk")));
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(dst);
    };
    get("dataset", c.dataset);
    get("regime", c.regime);
    get("seed", c.seed);
    get("lr", c.train.learning_rate);
    get("weight_decay", c.train.weight_decay);
    get("epochs", c.train.epochs);
    get("batch_size", c.train.batch_size);
    get("attack_warmup_epochs", c.train.attack_warmup_epochs);
    get("wm_passes", c.train.wm_passes);
    get("train_eps", c.train_attack.epsilon);
    get("train_steps", c.train_attack.steps);
    get("train_step_size", c.train_attack.step_size);
    get("train_random_start", c.train_attack.random_start);
    get("eval_eps", c.eval_attack.epsilon);
    get("eval_steps", c.eval_attack.steps);
    get("eval_step_size", c.eval_attack.step_size);
    get("wm_eps", c.wm_attack.epsilon);
    get("wm_steps", c.wm_attack.steps);
    get("wm_step_size", c.wm_attack.step_size);
    get("wm_count", c.wm_count);
    get("wm_mode", c.wm_mode);
    get("steal_lambda", c.steal.lambda);
    get("steal_rounds", c.steal.rounds);
    get("steal_seed_size", c.steal.seed_size);
    get("steal_epochs_per_round", c.steal.substitute_epochs_per_round);
    get("steal_substitute_arch", c.steal.substitute_arch);
    get("steal_lr", c.steal.substitute_lr);
    get("steal_batch", c.steal.substitute_batch);
    if (j.contains("steal_oracle_budget") && !j.at("steal_oracle_budget").is_null())
        c.steal.oracle_budget = j.at("steal_oracle_budget").get<uint64_t>();
    get("steal_modes", c.steal_modes);
    get("prune_rates", c.removal.prune_rates);
    get("finetune_epochs", c.removal.finetune_epochs);
    get("finetune_lr", c.removal.finetune_lr);
    get("finetune_weight_decay", c.removal.finetune_weight_decay);
    get("finetune_batch", c.removal.finetune_batch);
    get("split_train", c.split.train_count);
    get("split_test", c.split.test_count);
    get("split_finetune", c.split.finetune_count);
    get("split_steal_seed", c.split.steal_seed_count);
    get("data_root", c.data_root);
    get("out_dir", c.out_dir);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

// Stable identity of a run: hash of the canonical config JSON. The output
// directory is where results land, not part of the experiment's identity.
inline std::string config_fingerprint(const ExperimentConfig& c) {
    nlohmann::json j = config_to_json(c);
    j.erase("out_dir");
    return to_hex16(fnv1a64(j.dump()));
}

inline std::string resolve_data_root(const ExperimentConfig& cfg) {
    if (!cfg.data_root.empty()) return cfg.data_root;
    if (const char* env = std::getenv("AWM_DATA_ROOT")) return env;
    return "data";
}

}  // namespace awm
