// awm: train, watermark, attack, steal, prune, fine-tune, verify and report
// on small robust classifiers. See README.md for a tour.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "awm/pipeline.hpp"

using namespace awm;

namespace {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const StageError*>(&e)) return 4;
    return 4;
}

struct CommonOpts {
    std::string config_path;
    std::string data_root;
    std::string out_dir;
    std::string dataset;
    std::string profile;
    std::string regime;
    int64_t seed = -1;
    int epochs = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "experiment config JSON (flags override it)");
    cmd->add_option("--data-root", o.data_root, "dataset root (default $AWM_DATA_ROOT or ./data)");
    cmd->add_option("--out", o.out_dir, "output directory root");
    cmd->add_option("--dataset", o.dataset, "mnist or fmnist");
    cmd->add_option("--profile", o.profile, "desk or full");
    cmd->add_option("--regime", o.regime, "plain, advtr, advtr+ood, advtr+advwm");
    cmd->add_option("--seed", o.seed, "top-level seed");
    cmd->add_option("--epochs", o.epochs, "training epochs override");
}

ExperimentConfig make_config(const CommonOpts& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) {
        cfg = load_config(o.config_path);
    } else {
        const DatasetName d = o.dataset.empty() ? DatasetName::MNIST
                                                : dataset_from_string(o.dataset);
        cfg = default_config(d, o.profile.empty() ? "desk" : o.profile);
    }
    if (!o.dataset.empty()) {
        cfg.dataset = to_string(dataset_from_string(o.dataset));
        apply_dataset_defaults(cfg, cfg.dataset_name());
        apply_profile(cfg, o.profile.empty() ? cfg.profile : o.profile);
    } else if (!o.profile.empty()) {
        apply_profile(cfg, o.profile);
    }
    if (!o.regime.empty()) cfg.regime = to_string(regime_from_string(o.regime));
    if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
    if (o.epochs >= 0) cfg.train.epochs = o.epochs;
    if (!o.data_root.empty()) cfg.data_root = o.data_root;
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    return cfg;
}

LogFn stderr_log() {
    return [](const std::string& msg) { std::cerr << msg << "\n"; };
}

DatasetSplits load_splits(const ExperimentConfig& cfg) {
    SplitPlan plan = cfg.split;
    plan.seed = derive_seed(cfg.seed, "split");
    return load_dataset(cfg.dataset_name(), resolve_data_root(cfg), plan);
}

void print_metrics(const char* label, const Metrics& m) {
    printf("%s: test %.2f%%  adv %.2f%%", label, 100.0 * m.test_accuracy,
           100.0 * m.adversarial_accuracy);
    if (m.watermark_accuracy) printf("  watermark %.2f%%", 100.0 * *m.watermark_accuracy);
    printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarially trained watermarked classifiers: training, stealing and removal "
                 "attack workbench"};
    app.require_subcommand(1);

    // ---- make-synthetic ----------------------------------------------------
    auto* cmd_synth = app.add_subcommand(
        "make-synthetic", "generate stand-in IDX datasets when the real files are unavailable");
    std::string synth_root = "data";
    int synth_train = 25000, synth_test = 5000;
    uint64_t synth_seed = 1;
    bool synth_force = false;
    cmd_synth->add_option("--root", synth_root, "dataset root directory");
    cmd_synth->add_option("--train", synth_train, "training images per dataset");
    cmd_synth->add_option("--test", synth_test, "test images per dataset");
    cmd_synth->add_option("--seed", synth_seed, "generation seed");
    cmd_synth->add_flag("--force", synth_force, "overwrite existing files");

    // ---- train -------------------------------------------------------------
    auto* cmd_train = app.add_subcommand("train", "train a victim model for a regime");
    CommonOpts train_opts;
    add_common(cmd_train, train_opts);
    std::string train_out = "model.ckpt";
    std::string train_wm_file, train_generator;
    cmd_train->add_option("--model-out", train_out, "checkpoint output path");
    cmd_train->add_option("--watermarks", train_wm_file,
                          "watermark set file (for advtr+ood / advtr+advwm)");
    cmd_train->add_option("--generator", train_generator,
                          "adversarially trained generator checkpoint (for gen-watermarks "
                          "convenience; unused by train)");

    // ---- gen-watermarks ----------------------------------------------------
    auto* cmd_wm = app.add_subcommand("gen-watermarks", "build an OOD or adversarial watermark set");
    CommonOpts wm_opts;
    add_common(cmd_wm, wm_opts);
    std::string wm_kind = "ood", wm_out = "watermarks.awm", wm_generator;
    int wm_n = -1;
    cmd_wm->add_option("--kind", wm_kind, "ood or adversarial");
    cmd_wm->add_option("--wm-out", wm_out, "output watermark file");
    cmd_wm->add_option("--generator", wm_generator,
                       "adversarially trained generator checkpoint (adversarial kind)");
    cmd_wm->add_option("--count", wm_n, "watermark count (default 100)");

    // ---- eval --------------------------------------------------------------
    auto* cmd_eval = app.add_subcommand("eval", "test/adversarial/watermark accuracy of a model");
    CommonOpts eval_opts;
    add_common(cmd_eval, eval_opts);
    std::string eval_model, eval_wm_file;
    cmd_eval->add_option("--model", eval_model, "checkpoint to evaluate")->required();
    cmd_eval->add_option("--watermarks", eval_wm_file, "watermark set file");

    // ---- attack ------------------------------------------------------------
    auto* cmd_attack = app.add_subcommand("attack", "adversarial accuracy under a PGD budget");
    CommonOpts attack_opts;
    add_common(cmd_attack, attack_opts);
    std::string attack_model;
    float attack_eps = -1, attack_step = -1;
    int attack_steps = -1;
    cmd_attack->add_option("--model", attack_model, "checkpoint to attack")->required();
    cmd_attack->add_option("--epsilon", attack_eps, "perturbation budget");
    cmd_attack->add_option("--steps", attack_steps, "attack steps");
    cmd_attack->add_option("--step-size", attack_step, "step size");

    // ---- steal -------------------------------------------------------------
    auto* cmd_steal = app.add_subcommand("steal", "model extraction in black/grey/white mode");
    CommonOpts steal_opts;
    add_common(cmd_steal, steal_opts);
    std::string steal_victim, steal_mode = "black", steal_out = "stolen.ckpt";
    cmd_steal->add_option("--victim", steal_victim, "victim checkpoint")->required();
    cmd_steal->add_option("--mode", steal_mode, "black, grey or white");
    cmd_steal->add_option("--model-out", steal_out, "substitute checkpoint output");

    // ---- prune -------------------------------------------------------------
    auto* cmd_prune = app.add_subcommand("prune", "L1 unstructured pruning at a rate");
    std::string prune_model, prune_out = "pruned.ckpt";
    float prune_rate = 0.5f;
    cmd_prune->add_option("--model", prune_model, "checkpoint to prune")->required();
    cmd_prune->add_option("--rate", prune_rate, "fraction of weights to zero, in [0,1)");
    cmd_prune->add_option("--model-out", prune_out, "output checkpoint");

    // ---- finetune ----------------------------------------------------------
    auto* cmd_ft = app.add_subcommand("finetune", "fine-tune a model on held-out data");
    CommonOpts ft_opts;
    add_common(cmd_ft, ft_opts);
    std::string ft_model, ft_out = "finetuned.ckpt";
    int ft_epochs = -1;
    float ft_lr = -1;
    cmd_ft->add_option("--model", ft_model, "checkpoint to fine-tune")->required();
    cmd_ft->add_option("--model-out", ft_out, "output checkpoint");
    cmd_ft->add_option("--ft-epochs", ft_epochs, "fine-tune epochs (default 40)");
    cmd_ft->add_option("--ft-lr", ft_lr, "fine-tune learning rate");

    // ---- verify ------------------------------------------------------------
    auto* cmd_verify = app.add_subcommand("verify", "ownership check of a model via watermarks");
    std::string verify_model, verify_wm;
    double verify_threshold = 0.5;
    cmd_verify->add_option("--model", verify_model, "suspect checkpoint")->required();
    cmd_verify->add_option("--watermarks", verify_wm, "watermark set file")->required();
    cmd_verify->add_option("--threshold", verify_threshold, "claim threshold (default 0.5)");

    // ---- pipeline ----------------------------------------------------------
    auto* cmd_pipe = app.add_subcommand("pipeline", "run the full experiment end to end");
    CommonOpts pipe_opts;
    add_common(cmd_pipe, pipe_opts);

    // ---- report ------------------------------------------------------------
    auto* cmd_report = app.add_subcommand("report", "emit tables and curves from a run directory");
    std::string report_dir;
    cmd_report->add_option("--run-dir", report_dir, "a <out>/<fingerprint> directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_synth) {
            if (synth_force) {
                for (DatasetName d : {DatasetName::MNIST, DatasetName::FMNIST})
                    std::filesystem::remove_all(std::filesystem::path(synth_root) / to_string(d));
            }
            for (DatasetName d : {DatasetName::MNIST, DatasetName::FMNIST}) {
                ensure_dataset(synth_root, d, {synth_train, synth_test, synth_seed});
                printf("%s: %s\n", to_string(d).c_str(),
                       dataset_is_synthetic(synth_root, d) ? "synthetic stand-in ready"
                                                           : "real files already present");
            }
            return 0;
        }

        if (*cmd_train) {
            ExperimentConfig cfg = make_config(train_opts);
            cfg.validate();
            DatasetSplits data = load_splits(cfg);
            TrainConfig tc = cfg.train;
            tc.seed = derive_seed(cfg.seed, "train/victim");
            ConvNet model;
            const Regime regime = cfg.regime_kind();
            auto progress = [](const EpochStats& s) {
                fprintf(stderr, "epoch %d: loss %.4f\n", s.epoch, s.mean_loss);
            };
            if (regime == Regime::Plain) {
                model = train_plain(data.train, tc, "awm-cnn-v1", progress);
            } else if (regime == Regime::AdvTr) {
                model = train_adversarial(data.train, tc, cfg.train_attack, nullptr, progress);
            } else {
                if (train_wm_file.empty())
                    throw ConfigError("regime " + cfg.regime + " needs --watermarks");
                WatermarkSet wm = load_watermarks(train_wm_file);
                const WatermarkTrainMode mode = cfg.wm_mode == "mixed"
                                                    ? WatermarkTrainMode::Mixed
                                                    : WatermarkTrainMode::EpochEnd;
                model = train_adv_watermarked(data.train, tc, cfg.train_attack, wm, mode, nullptr,
                                              progress);
            }
            save_checkpoint(model, train_out);
            printf("saved %s\n", train_out.c_str());
            print_metrics("victim", evaluate(model, data.test, cfg.eval_attack, nullptr));
            return 0;
        }

        if (*cmd_wm) {
            ExperimentConfig cfg = make_config(wm_opts);
            DatasetSplits data = load_splits(cfg);
            const int n = wm_n > 0 ? wm_n : cfg.wm_count;
            const uint64_t wseed = derive_seed(cfg.seed, "watermarks");
            WatermarkSet wm;
            if (wm_kind == "ood") {
                ImageDataset ood =
                    load_train_file(resolve_data_root(cfg), ood_counterpart(cfg.dataset_name()));
                wm = build_ood_watermarks(ood, n, wseed);
            } else if (wm_kind == "adversarial") {
                if (wm_generator.empty())
                    throw ConfigError("adversarial watermarks need --generator");
                ConvNet generator = load_checkpoint(wm_generator);
                const std::string gen_id = to_hex16(fnv1a64(serialize_checkpoint(generator)));
                wm = gen_adversarial_watermarks(generator, data.train, cfg.wm_attack, n, wseed,
                                                cfg.train_attack.epsilon, gen_id);
            } else {
                throw ConfigError("--kind must be ood or adversarial");
            }
            save_watermarks(wm, wm_out);
            printf("saved %s (%d items, kind %s)\n", wm_out.c_str(), wm.count(),
                   to_string(wm.kind).c_str());
            return 0;
        }

        if (*cmd_eval) {
            ExperimentConfig cfg = make_config(eval_opts);
            DatasetSplits data = load_splits(cfg);
            ConvNet model = load_checkpoint(eval_model);
            WatermarkSet wm;
            const bool has_wm = !eval_wm_file.empty();
            if (has_wm) wm = load_watermarks(eval_wm_file);
            print_metrics("model",
                          evaluate(model, data.test, cfg.eval_attack, has_wm ? &wm : nullptr));
            return 0;
        }

        if (*cmd_attack) {
            ExperimentConfig cfg = make_config(attack_opts);
            DatasetSplits data = load_splits(cfg);
            ConvNet model = load_checkpoint(attack_model);
            AttackConfig atk = cfg.eval_attack;
            if (attack_eps >= 0) atk.epsilon = attack_eps;
            if (attack_steps >= 0) atk.steps = attack_steps;
            if (attack_step > 0) atk.step_size = attack_step;
            printf("adversarial accuracy (eps %.3g, %d steps, step %.3g): %.2f%%\n", atk.epsilon,
                   atk.steps, atk.step_size,
                   100.0 * adversarial_accuracy(model, data.test, atk));
            return 0;
        }

        if (*cmd_steal) {
            ExperimentConfig cfg = make_config(steal_opts);
            DatasetSplits data = load_splits(cfg);
            ConvNet victim = load_checkpoint(steal_victim);
            StealConfig sc = cfg.steal;
            sc.mode = steal_mode_from_string(steal_mode);
            sc.seed = derive_seed(cfg.seed, "steal/" + to_string(sc.mode));
            StealResult r = steal(victim, data.steal_seed, sc,
                                  sc.mode == StealMode::Grey ? &cfg.train_attack : nullptr);
            save_checkpoint(r.substitute, steal_out);
            printf("saved %s (%s-box, %llu oracle queries, %d rounds)\n", steal_out.c_str(),
                   to_string(sc.mode).c_str(), static_cast<unsigned long long>(r.oracle_queries),
                   r.rounds_completed);
            print_metrics("stolen", evaluate(r.substitute, data.test, cfg.eval_attack, nullptr));
            return 0;
        }

        if (*cmd_prune) {
            ConvNet model = load_checkpoint(prune_model);
            ConvNet pruned = prune_l1(model, prune_rate);
            save_checkpoint(pruned, prune_out);
            printf("saved %s (rate %.2f)\n", prune_out.c_str(), prune_rate);
            return 0;
        }

        if (*cmd_ft) {
            ExperimentConfig cfg = make_config(ft_opts);
            DatasetSplits data = load_splits(cfg);
            ConvNet model = load_checkpoint(ft_model);
            RemovalConfig rc = cfg.removal;
            if (ft_epochs >= 0) rc.finetune_epochs = ft_epochs;
            if (ft_lr > 0) rc.finetune_lr = ft_lr;
            rc.seed = derive_seed(cfg.seed, "removal/cli");
            ConvNet tuned = finetune(model, data.finetune_add, rc);
            save_checkpoint(tuned, ft_out);
            printf("saved %s (%d epochs)\n", ft_out.c_str(), rc.finetune_epochs);
            return 0;
        }

        if (*cmd_verify) {
            ConvNet model = load_checkpoint(verify_model);
            WatermarkSet wm = load_watermarks(verify_wm);
            VerificationResult r = verify(model_oracle(model), wm, verify_threshold);
            printf("watermark accuracy: %.2f%% (threshold %.0f%%) -> ownership %s\n",
                   100.0 * r.watermark_accuracy, 100.0 * r.threshold,
                   r.claimed ? "CLAIMED" : "not claimed");
            return r.claimed ? 0 : 1;
        }

        if (*cmd_pipe) {
            ExperimentConfig cfg = make_config(pipe_opts);
            Pipeline pipeline(cfg, stderr_log());
            ExperimentReport report = pipeline.run();
            emit_tables(report, pipeline.run_dir());
            emit_curves(report, pipeline.run_dir());
            printf("%s", summary_table_text(report).c_str());
            printf("report: %s\n", pipeline.report_path().string().c_str());
            return 0;
        }

        if (*cmd_report) {
            ExperimentReport report = load_report(
                (std::filesystem::path(report_dir) / "report.json").string());
            auto tables = emit_tables(report, report_dir);
            auto curves = emit_curves(report, report_dir);
            printf("%s", summary_table_text(report).c_str());
            for (const auto& p : tables) printf("wrote %s\n", p.c_str());
            for (const auto& p : curves) printf("wrote %s\n", p.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }
    return 0;
}
