// Acceptance suite: one test per criterion, each printing a PASS/FAIL line
// with the measured values. Heavy artifacts (trained victims, stolen models,
// watermark sets, metric evaluations) are cached under the work directory,
// so a re-run picks up where a previous one stopped. Criteria run against
// the real MNIST/FMNIST files when present under AWM_DATA_ROOT; otherwise
// the synthetic stand-in datasets are generated and the provenance is
// reported.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "awm/pipeline.hpp"
#include "naive_net.hpp"

using namespace awm;
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kSeeds[3] = {42, 43, 44};

struct CriterionLog {
    std::vector<std::string> lines;
    bool all_pass = true;

    void record(const char* id, bool pass, const std::string& detail) {
        char buf[512];
        std::snprintf(buf, sizeof(buf), "[%s] %s: %s", id, pass ? "PASS" : "FAIL",
                      detail.c_str());
        lines.push_back(buf);
        printf("%s\n", buf);
        fflush(stdout);
        if (!pass) all_pass = false;
    }
};

CriterionLog& logbook() {
    static CriterionLog log;
    return log;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
    return buf;
}

// ---------------------------------------------------------------------------
// Lab: shared datasets, configs and cached artifacts.
// ---------------------------------------------------------------------------
class Lab {
public:
    static Lab& get() {
        static Lab lab;
        return lab;
    }

    fs::path work;
    std::string data_root;
    bool synthetic = false;
    ExperimentConfig mnist_cfg;   // desk defaults, seed applied per artifact
    ExperimentConfig fmnist_cfg;
    DatasetSplits mnist;
    DatasetSplits fmnist;

    // ---- cached artifact helpers -------------------------------------------

    ConvNet model(const std::string& key, double* wall_out,
                  const std::function<ConvNet()>& build) {
        const fs::path ckpt = work / "models" / (key + ".ckpt");
        const fs::path meta = work / "models" / (key + ".json");
        if (fs::exists(ckpt) && fs::exists(meta)) {
            if (wall_out)
                *wall_out = nlohmann::json::parse(detail::read_file(meta.string()))
                                .at("wall_s")
                                .get<double>();
            return load_checkpoint(ckpt.string());
        }
        printf("  [lab] building %s ...\n", key.c_str());
        fflush(stdout);
        const auto t0 = std::chrono::steady_clock::now();
        ConvNet m = build();
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        save_checkpoint(m, ckpt.string());
        detail::write_file(meta.string(), nlohmann::json{{"wall_s", wall}}.dump() + "\n");
        if (wall_out) *wall_out = wall;
        return m;
    }

    WatermarkSet watermarks(const std::string& key, const std::function<WatermarkSet()>& build) {
        const fs::path file = work / "models" / (key + ".awm");
        if (fs::exists(file)) return load_watermarks(file.string());
        WatermarkSet wm = build();
        save_watermarks(wm, file.string());
        return wm;
    }

    Metrics metrics(const std::string& key, const std::function<Metrics()>& compute) {
        const fs::path file = work / "metrics" / (key + ".json");
        if (fs::exists(file))
            return metrics_from_json(nlohmann::json::parse(detail::read_file(file.string())));
        printf("  [lab] evaluating %s ...\n", key.c_str());
        fflush(stdout);
        Metrics m = compute();
        fs::create_directories(file.parent_path());
        detail::write_file(file.string(), metrics_to_json(m).dump() + "\n");
        return m;
    }

    double value(const std::string& key, const std::function<double()>& compute) {
        const fs::path file = work / "metrics" / (key + ".value.json");
        if (fs::exists(file))
            return nlohmann::json::parse(detail::read_file(file.string())).at("v").get<double>();
        const double v = compute();
        fs::create_directories(file.parent_path());
        detail::write_file(file.string(), nlohmann::json{{"v", v}}.dump() + "\n");
        return v;
    }

    // ---- standard artifacts -------------------------------------------------

    ConvNet plain_victim(double* wall = nullptr) {
        return model("mnist-plain-s42", wall, [&] {
            TrainConfig tc = mnist_cfg.train;
            tc.seed = derive_seed(42, "train/victim");
            return train_plain(mnist.train, tc);
        });
    }

    // The adversarially trained model: criterion 2's victim and the
    // adversarial-watermark generator.
    ConvNet advtr_victim(double* wall = nullptr) {
        return model("mnist-advtr-s42", wall, [&] {
            TrainConfig tc = mnist_cfg.train;
            tc.seed = derive_seed(42, "train/victim");
            return train_adversarial(mnist.train, tc, mnist_cfg.train_attack);
        });
    }

    WatermarkSet advwm_set(uint64_t seed) {
        return watermarks("mnist-advwm-set-s" + std::to_string(seed), [&] {
            ConvNet gen = advtr_victim();
            const std::string gen_id = to_hex16(fnv1a64(serialize_checkpoint(gen)));
            return gen_adversarial_watermarks(gen, mnist.train, mnist_cfg.wm_attack,
                                              mnist_cfg.wm_count, derive_seed(seed, "watermarks"),
                                              mnist_cfg.train_attack.epsilon, gen_id);
        });
    }

    WatermarkSet ood_set(uint64_t seed) {
        return watermarks("mnist-ood-set-s" + std::to_string(seed), [&] {
            ImageDataset ood = load_train_file(data_root, DatasetName::FMNIST);
            return build_ood_watermarks(ood, mnist_cfg.wm_count, derive_seed(seed, "watermarks"));
        });
    }

    ConvNet advwm_victim(uint64_t seed, double* wall = nullptr) {
        return model("mnist-advwm-s" + std::to_string(seed), wall, [&] {
            WatermarkSet wm = advwm_set(seed);
            TrainConfig tc = mnist_cfg.train;
            tc.seed = derive_seed(seed, "train/victim");
            return train_adv_watermarked(mnist.train, tc, mnist_cfg.train_attack, wm);
        });
    }

    ConvNet ood_victim(uint64_t seed, double* wall = nullptr) {
        return model("mnist-ood-s" + std::to_string(seed), wall, [&] {
            WatermarkSet wm = ood_set(seed);
            TrainConfig tc = mnist_cfg.train;
            tc.seed = derive_seed(seed, "train/victim");
            return train_adv_watermarked(mnist.train, tc, mnist_cfg.train_attack, wm);
        });
    }

    ConvNet stolen(const std::string& victim_tag, const ConvNet& victim, StealMode mode,
                   uint64_t seed) {
        const std::string key =
            victim_tag + "-stolen-" + to_string(mode) + "-s" + std::to_string(seed);
        return model(key, nullptr, [&] {
            StealConfig sc = mnist_cfg.steal;
            sc.mode = mode;
            sc.seed = derive_seed(seed, "steal/" + to_string(mode));
            StealResult r = steal(victim, mnist.steal_seed, sc,
                                  mode == StealMode::Grey ? &mnist_cfg.train_attack : nullptr);
            return std::move(r.substitute);
        });
    }

    Metrics victim_metrics(const std::string& tag, const ConvNet& m, const WatermarkSet* wm) {
        return metrics(tag, [&] { return evaluate(m, mnist.test, mnist_cfg.eval_attack, wm); });
    }

private:
    Lab() {
        work = fs::path(std::getenv("AWM_ACCEPT_DIR") ? std::getenv("AWM_ACCEPT_DIR")
                                                      : "acceptance-work");
        fs::create_directories(work / "models");
        fs::create_directories(work / "metrics");

        data_root = std::getenv("AWM_DATA_ROOT") ? std::getenv("AWM_DATA_ROOT")
                                                 : (work / "data").string();
        SynthSpec spec;
        spec.train_count = 25000;
        spec.test_count = 5000;
        spec.seed = 1;
        ensure_dataset(data_root, DatasetName::MNIST, spec);
        ensure_dataset(data_root, DatasetName::FMNIST, spec);
        synthetic = dataset_is_synthetic(data_root, DatasetName::MNIST);

        mnist_cfg = default_config(DatasetName::MNIST, "desk");
        fmnist_cfg = default_config(DatasetName::FMNIST, "desk");
        mnist_cfg.data_root = fmnist_cfg.data_root = data_root;

        SplitPlan plan = mnist_cfg.split;
        plan.seed = derive_seed(42, "split");
        mnist = load_dataset(DatasetName::MNIST, data_root, plan);
        fmnist = load_dataset(DatasetName::FMNIST, data_root, plan);

        printf("[lab] data root: %s (%s)\n", data_root.c_str(),
               synthetic ? "synthetic stand-in" : "official files");
        printf("[lab] work dir: %s\n", work.string().c_str());
        fflush(stdout);
    }
};

}  // namespace

// --------------------------------------------------------------------------
// C1. Plain training reaches >= 97% test accuracy within 10 CPU-minutes.
// --------------------------------------------------------------------------
TEST(Acceptance, C01_PlainTraining) {
    Lab& lab = Lab::get();
    double wall = 0.0;
    ConvNet victim = lab.plain_victim(&wall);
    Metrics m = lab.victim_metrics("mnist-plain-s42", victim, nullptr);
    const bool pass = m.test_accuracy >= 0.97 && wall <= 600.0;
    logbook().record("C01", pass,
                     "plain training test_acc=" + pct(m.test_accuracy) +
                         " (need >=97.00%), wall=" + std::to_string(int(wall)) +
                         "s (budget 600s)");
    EXPECT_GE(m.test_accuracy, 0.97);
    EXPECT_LE(wall, 600.0);
}

// --------------------------------------------------------------------------
// C2. Adversarial training: test >= 96%, adversarial >= 70% at (0.25, 25),
//     within 30 CPU-minutes.
// --------------------------------------------------------------------------
TEST(Acceptance, C02_AdversarialTraining) {
    Lab& lab = Lab::get();
    double wall = 0.0;
    ConvNet victim = lab.advtr_victim(&wall);
    Metrics m = lab.victim_metrics("mnist-advtr-s42", victim, nullptr);
    const bool pass = m.test_accuracy >= 0.96 && m.adversarial_accuracy >= 0.70 && wall <= 1800.0;
    logbook().record("C02", pass,
                     "advtr test_acc=" + pct(m.test_accuracy) + " (need >=96.00%), adv_acc=" +
                         pct(m.adversarial_accuracy) + " (need >=70.00%), wall=" +
                         std::to_string(int(wall)) + "s (budget 1800s)");
    EXPECT_GE(m.test_accuracy, 0.96);
    EXPECT_GE(m.adversarial_accuracy, 0.70);
    EXPECT_LE(wall, 1800.0);
}

// --------------------------------------------------------------------------
// C3. Budget ladder on the adversarially trained model: strictly decreasing
//     adversarial accuracy, with <= 5% at (0.4, 40).
// --------------------------------------------------------------------------
TEST(Acceptance, C03_BudgetLadder) {
    Lab& lab = Lab::get();
    ConvNet victim = lab.advtr_victim();
    const struct { float eps; int steps; } rungs[4] = {
        {0.15f, 15}, {0.25f, 25}, {0.30f, 40}, {0.40f, 40}};
    double acc[4];
    for (int i = 0; i < 4; ++i) {
        AttackConfig atk{rungs[i].eps, rungs[i].steps, 0.01f, false, 0};
        char key[64];
        std::snprintf(key, sizeof(key), "mnist-advtr-s42-ladder-%.2f-%d", rungs[i].eps,
                      rungs[i].steps);
        acc[i] = lab.value(key, [&] { return adversarial_accuracy(victim, lab.mnist.test, atk); });
    }
    const bool ordered = acc[0] > acc[1] && acc[1] > acc[2] && acc[2] > acc[3];
    const bool collapsed = acc[3] <= 0.05;
    logbook().record("C03", ordered && collapsed,
                     "ladder " + pct(acc[0]) + " > " + pct(acc[1]) + " > " + pct(acc[2]) + " > " +
                         pct(acc[3]) + " (strict), last <= 5.00%");
    EXPECT_GT(acc[0], acc[1]);
    EXPECT_GT(acc[1], acc[2]);
    EXPECT_GT(acc[2], acc[3]);
    EXPECT_LE(acc[3], 0.05);
}

// --------------------------------------------------------------------------
// C4. Adversarial watermarks beat OOD watermarks on robustness by >= 1pp
//     (3-seed mean), both regimes embed >= 95%, FMNIST advwm >= 90%.
// --------------------------------------------------------------------------
TEST(Acceptance, C04_CentralClaim) {
    Lab& lab = Lab::get();
    double adv_advwm = 0, adv_ood = 0, wm_advwm = 0, wm_ood = 0;
    for (uint64_t seed : kSeeds) {
        WatermarkSet wma = lab.advwm_set(seed);
        Metrics ma = lab.victim_metrics("mnist-advwm-s" + std::to_string(seed),
                                        lab.advwm_victim(seed), &wma);
        WatermarkSet wmo = lab.ood_set(seed);
        Metrics mo = lab.victim_metrics("mnist-ood-s" + std::to_string(seed),
                                        lab.ood_victim(seed), &wmo);
        adv_advwm += ma.adversarial_accuracy / 3.0;
        adv_ood += mo.adversarial_accuracy / 3.0;
        wm_advwm += ma.watermark_accuracy.value_or(0) / 3.0;
        wm_ood += mo.watermark_accuracy.value_or(0) / 3.0;
    }

    // FMNIST: one desk advwm run, embedding tolerance >= 90%
    ConvNet fm_gen = lab.model("fmnist-advtr-s42", nullptr, [&] {
        TrainConfig tc = lab.fmnist_cfg.train;
        tc.seed = derive_seed(42, "train/victim");
        return train_adversarial(lab.fmnist.train, tc, lab.fmnist_cfg.train_attack);
    });
    WatermarkSet fm_wm = lab.watermarks("fmnist-advwm-set-s42", [&] {
        return gen_adversarial_watermarks(
            fm_gen, lab.fmnist.train, lab.fmnist_cfg.wm_attack, lab.fmnist_cfg.wm_count,
            derive_seed(42, "watermarks"), lab.fmnist_cfg.train_attack.epsilon,
            to_hex16(fnv1a64(serialize_checkpoint(fm_gen))));
    });
    ConvNet fm_victim = lab.model("fmnist-advwm-s42", nullptr, [&] {
        TrainConfig tc = lab.fmnist_cfg.train;
        tc.seed = derive_seed(42, "train/victim");
        return train_adv_watermarked(lab.fmnist.train, tc, lab.fmnist_cfg.train_attack, fm_wm);
    });
    Metrics fm_m = lab.metrics("fmnist-advwm-s42", [&] {
        return evaluate(fm_victim, lab.fmnist.test, lab.fmnist_cfg.eval_attack, &fm_wm);
    });

    const double gap = adv_advwm - adv_ood;
    const bool pass = gap >= 0.01 && wm_advwm >= 0.95 && wm_ood >= 0.95 &&
                      fm_m.watermark_accuracy.value_or(0) >= 0.90;
    logbook().record(
        "C04", pass,
        "adv_acc advwm=" + pct(adv_advwm) + " vs ood=" + pct(adv_ood) + " (gap " +
            std::to_string(100.0 * gap).substr(0, 5) + "pp, need >=1pp); embed advwm=" +
            pct(wm_advwm) + " ood=" + pct(wm_ood) + " (need >=95.00%); fmnist advwm embed=" +
            pct(fm_m.watermark_accuracy.value_or(0)) + " (need >=90.00%)");
    EXPECT_GE(gap, 0.01);
    EXPECT_GE(wm_advwm, 0.95);
    EXPECT_GE(wm_ood, 0.95);
    EXPECT_GE(fm_m.watermark_accuracy.value_or(0), 0.90);
}

// --------------------------------------------------------------------------
// C5. Watermarking costs at most 3pp of robustness vs plain ADVTR.
// --------------------------------------------------------------------------
TEST(Acceptance, C05_RobustnessCostBound) {
    Lab& lab = Lab::get();
    Metrics advtr = lab.victim_metrics("mnist-advtr-s42", lab.advtr_victim(), nullptr);
    double adv_advwm = 0;
    for (uint64_t seed : kSeeds) {
        WatermarkSet wm = lab.advwm_set(seed);
        adv_advwm += lab.victim_metrics("mnist-advwm-s" + std::to_string(seed),
                                        lab.advwm_victim(seed), &wm)
                         .adversarial_accuracy /
                     3.0;
    }
    const double drop = advtr.adversarial_accuracy - adv_advwm;
    const bool pass = adv_advwm >= advtr.adversarial_accuracy - 0.03;
    logbook().record("C05", pass,
                     "advtr adv_acc=" + pct(advtr.adversarial_accuracy) + ", advwm mean=" +
                         pct(adv_advwm) + " (drop " + std::to_string(100.0 * drop).substr(0, 5) +
                         "pp, allow <=3pp)");
    EXPECT_GE(adv_advwm, advtr.adversarial_accuracy - 0.03);
}

// --------------------------------------------------------------------------
// C6. Black-box stealing: advwm transfer claims ownership in >= 2/3 runs,
//     OOD transfer <= 20% in all runs, stolen adversarial accuracy <= 15%.
// --------------------------------------------------------------------------
TEST(Acceptance, C06_BlackBoxStealing) {
    Lab& lab = Lab::get();
    int claims = 0;
    bool ood_low = true, adv_low = true;
    std::string detail;
    for (uint64_t seed : kSeeds) {
        const std::string stag = std::to_string(seed);
        WatermarkSet wma = lab.advwm_set(seed);
        ConvNet sub_a = lab.stolen("mnist-advwm-s" + stag, lab.advwm_victim(seed),
                                   StealMode::Black, seed);
        Metrics ma = lab.metrics("mnist-advwm-s" + stag + "-stolen-black", [&] {
            return evaluate(sub_a, lab.mnist.test, lab.mnist_cfg.eval_attack, &wma);
        });
        if (ma.watermark_accuracy.value_or(0) >= 0.5) ++claims;
        if (ma.adversarial_accuracy > 0.15) adv_low = false;

        WatermarkSet wmo = lab.ood_set(seed);
        ConvNet sub_o =
            lab.stolen("mnist-ood-s" + stag, lab.ood_victim(seed), StealMode::Black, seed);
        Metrics mo = lab.metrics("mnist-ood-s" + stag + "-stolen-black", [&] {
            return evaluate(sub_o, lab.mnist.test, lab.mnist_cfg.eval_attack, &wmo);
        });
        if (mo.watermark_accuracy.value_or(1) > 0.20) ood_low = false;
        detail += " s" + stag + "[advwm_wm=" + pct(ma.watermark_accuracy.value_or(0)) +
                  ",ood_wm=" + pct(mo.watermark_accuracy.value_or(0)) +
                  ",adv=" + pct(ma.adversarial_accuracy) + "]";
    }
    const bool pass = claims >= 2 && ood_low && adv_low;
    logbook().record("C06", pass,
                     "advwm claims " + std::to_string(claims) + "/3 (need >=2);" + detail);
    EXPECT_GE(claims, 2);
    EXPECT_TRUE(ood_low) << "an OOD watermark transferred above 20%";
    EXPECT_TRUE(adv_low) << "a stolen model kept adversarial accuracy above 15%";
}

// --------------------------------------------------------------------------
// C7. Grey-box stealing: stolen adv accuracy strictly above black-box's,
//     and advwm transfer >= black-box transfer (3-seed means).
// --------------------------------------------------------------------------
TEST(Acceptance, C07_GreyBoxStealing) {
    Lab& lab = Lab::get();
    double grey_adv = 0, black_adv = 0, grey_wm = 0, black_wm = 0;
    for (uint64_t seed : kSeeds) {
        const std::string stag = std::to_string(seed);
        WatermarkSet wm = lab.advwm_set(seed);
        ConvNet victim = lab.advwm_victim(seed);

        ConvNet grey = lab.stolen("mnist-advwm-s" + stag, victim, StealMode::Grey, seed);
        Metrics mg = lab.metrics("mnist-advwm-s" + stag + "-stolen-grey", [&] {
            return evaluate(grey, lab.mnist.test, lab.mnist_cfg.eval_attack, &wm);
        });
        Metrics mb = lab.metrics("mnist-advwm-s" + stag + "-stolen-black", [&] {
            ConvNet black = lab.stolen("mnist-advwm-s" + stag, victim, StealMode::Black, seed);
            return evaluate(black, lab.mnist.test, lab.mnist_cfg.eval_attack, &wm);
        });
        grey_adv += mg.adversarial_accuracy / 3.0;
        black_adv += mb.adversarial_accuracy / 3.0;
        grey_wm += mg.watermark_accuracy.value_or(0) / 3.0;
        black_wm += mb.watermark_accuracy.value_or(0) / 3.0;
    }
    const bool pass = grey_adv > black_adv && grey_wm >= black_wm;
    logbook().record("C07", pass,
                     "stolen adv grey=" + pct(grey_adv) + " > black=" + pct(black_adv) +
                         "; wm transfer grey=" + pct(grey_wm) + " >= black=" + pct(black_wm));
    EXPECT_GT(grey_adv, black_adv);
    EXPECT_GE(grey_wm, black_wm);
}

// --------------------------------------------------------------------------
// C8. Pruning resilience on the black-box stolen advwm model: watermark
//     accuracy >= 50% at every prune rate <= 0.8.
// --------------------------------------------------------------------------
TEST(Acceptance, C08_PruningResilience) {
    Lab& lab = Lab::get();
    WatermarkSet wm = lab.advwm_set(42);
    ConvNet sub = lab.stolen("mnist-advwm-s42", lab.advwm_victim(42), StealMode::Black, 42);
    bool pass = true;
    std::string detail = "wm acc by rate:";
    for (float rate = 0.1f; rate <= 0.85f; rate += 0.1f) {
        char key[64];
        std::snprintf(key, sizeof(key), "c08-prune-%.1f", rate);
        const double acc = lab.value(key, [&] {
            ConvNet pruned = prune_l1(sub, rate);
            return verify(model_oracle(pruned), wm).watermark_accuracy;
        });
        char msg[48];
        std::snprintf(msg, sizeof(msg), " %.1f:%s", rate, pct(acc).c_str());
        detail += msg;
        if (acc < 0.5) pass = false;
        EXPECT_GE(acc, 0.5) << "prune rate " << rate;
    }
    logbook().record("C08", pass, detail + " (need >=50.00% through 0.8)");
}

// --------------------------------------------------------------------------
// C9. Fine-tuning resilience on the black-box stolen model: >= 40% watermark
//     accuracy after 40 epochs and a flat tail (last-10-epoch range <= 10pp).
// --------------------------------------------------------------------------
TEST(Acceptance, C09_FinetuningResilience) {
    Lab& lab = Lab::get();
    WatermarkSet wm = lab.advwm_set(42);
    ConvNet sub = lab.stolen("mnist-advwm-s42", lab.advwm_victim(42), StealMode::Black, 42);

    const fs::path curve_file = lab.work / "metrics" / "c09-finetune-curve.json";
    std::vector<double> curve;
    if (fs::exists(curve_file)) {
        for (const auto& v : nlohmann::json::parse(detail::read_file(curve_file.string())))
            curve.push_back(v.get<double>());
    } else {
        printf("  [lab] fine-tuning stolen model for 40 epochs ...\n");
        fflush(stdout);
        RemovalConfig rc = lab.mnist_cfg.removal;
        rc.seed = derive_seed(42, "removal/black");
        finetune(sub, lab.mnist.finetune_add, rc, [&](int, const ConvNet& m) {
            curve.push_back(verify(model_oracle(m), wm).watermark_accuracy);
        });
        detail::write_file(curve_file.string(), nlohmann::json(curve).dump() + "\n");
    }
    ASSERT_EQ(curve.size(), 40u);
    const double final_acc = curve.back();
    double tail_min = 1.0, tail_max = 0.0;
    for (size_t i = curve.size() - 10; i < curve.size(); ++i) {
        tail_min = std::min(tail_min, curve[i]);
        tail_max = std::max(tail_max, curve[i]);
    }
    const bool flat = (tail_max - tail_min) <= 0.10;
    const bool pass = final_acc >= 0.40 && flat;
    logbook().record("C09", pass,
                     "wm acc after 40 epochs=" + pct(final_acc) +
                         " (need >=40.00%), last-10 range=" +
                         std::to_string(100.0 * (tail_max - tail_min)).substr(0, 5) +
                         "pp (need <=10pp)");
    EXPECT_GE(final_acc, 0.40);
    EXPECT_LE(tail_max - tail_min, 0.10);
}

// --------------------------------------------------------------------------
// C10. White-box removal: the victim itself pruned at 0.9 keeps >= 50%
//      watermark accuracy.
// --------------------------------------------------------------------------
TEST(Acceptance, C10_WhiteBoxPruning) {
    Lab& lab = Lab::get();
    WatermarkSet wm = lab.advwm_set(42);
    ConvNet victim = lab.advwm_victim(42);  // white-box stolen model == the victim
    const double acc = lab.value("c10-white-prune-0.9", [&] {
        ConvNet pruned = prune_l1(victim, 0.9f);
        return verify(model_oracle(pruned), wm).watermark_accuracy;
    });
    const bool pass = acc >= 0.50;
    logbook().record("C10", pass,
                     "victim wm acc at prune 0.9=" + pct(acc) + " (need >=50.00%)");
    EXPECT_GE(acc, 0.50);
}

// --------------------------------------------------------------------------
// C11. Property suites (independent of learned accuracy).
// --------------------------------------------------------------------------
TEST(Acceptance, C11_PropertySuites) {
    Lab& lab = Lab::get();
    std::string detail;
    bool all = true;
    auto check = [&](const char* name, bool ok) {
        all = all && ok;
        detail += std::string(" ") + name + (ok ? ":ok" : ":FAIL");
        EXPECT_TRUE(ok) << name;
    };

    // gradient agreement with the float64 shadow graph, h = 1e-3
    {
        ConvNet net = ConvNet::make("awm-cnn-v1", 1234);
        Tensor x({2, 1, 28, 28});
        Rng rng(21);
        for (auto& v : x.data) v = rng.next_float();
        std::vector<int> y = {3, 8};
        FwdCache cache;
        Tensor dlogits, input_grad;
        cross_entropy_grad(net.forward(x, cache), y, dlogits, 0.5f);
        net.backward(cache, dlogits, true, &input_grad);
        auto params64 = naive::widen_params<double>(net);
        std::vector<double> x64(x.data.begin(), x.data.end());
        auto loss_at = [&] {
            auto acts = naive::forward_with_params<double>(net, params64, x64, 2);
            return naive::cross_entropy<double>(acts.a.back(), y);
        };
        double worst = 0.0;
        Rng pick(4242);
        for (size_t pi = 0; pi < net.params().size(); ++pi) {
            for (int t = 0; t < 16; ++t) {
                const size_t i = pick.next_below(uint32_t(net.params()[pi].size()));
                const double save = params64[pi][i];
                params64[pi][i] = save + 1e-3;
                const double lp = loss_at();
                params64[pi][i] = save - 1e-3;
                const double lm = loss_at();
                params64[pi][i] = save;
                const double fd = (lp - lm) / 2e-3;
                const double an = net.params()[pi].grad.data[i];
                worst = std::max(worst,
                                 std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-4}));
            }
        }
        check("gradcheck", worst < 1e-3);
    }

    // PGD ball/range containment on 1000 random cases
    {
        ConvNet net = ConvNet::make("awm-cnn-v1", 5);
        Rng rng(7);
        bool contained = true;
        int cases = 0;
        while (cases < 1000) {
            const int n = 50;
            AttackConfig cfg;
            cfg.epsilon = rng.uniform(0.05f, 0.5f);
            cfg.steps = 1 + int(rng.next_below(6));
            cfg.step_size = rng.uniform(0.01f, 0.15f);
            cfg.random_start = (cases / n) % 2 == 0;
            cfg.seed = rng.next_u64();
            Tensor x({n, 1, 28, 28});
            for (auto& v : x.data) v = rng.next_float();
            std::vector<int> y(n);
            for (auto& v : y) v = int(rng.next_below(10));
            Tensor adv = pgd_attack(net, x, y, cfg);
            for (size_t i = 0; i < x.size(); ++i) {
                if (std::fabs(adv.data[i] - x.data[i]) > cfg.epsilon + 1e-6f ||
                    adv.data[i] < 0.0f || adv.data[i] > 1.0f)
                    contained = false;
            }
            cases += n;
        }
        check("pgd-containment-1000", contained && cases >= 1000);
    }

    // epsilon = 0 and steps = 0 identities
    {
        ConvNet net = ConvNet::make("awm-cnn-v1", 6);
        Rng rng(8);
        Tensor x({8, 1, 28, 28});
        for (auto& v : x.data) v = rng.next_float();
        std::vector<int> y(8, 3);
        AttackConfig eps0{0.0f, 5, 0.02f, true, 1};
        AttackConfig steps0{0.3f, 0, 0.02f, false, 1};
        check("pgd-identities", pgd_attack(net, x, y, eps0).data == x.data &&
                                    pgd_attack(net, x, y, steps0).data == x.data);
    }

    // per-tensor prune counts exact for all rates
    {
        ConvNet net = ConvNet::make("awm-cnn-v1", 9);
        bool exact = true;
        for (float p = 0.1f; p < 0.95f; p += 0.1f) {
            ConvNet pruned = prune_l1(net, p);
            for (const auto& param : pruned.params()) {
                if (param.value.shape.size() < 2) continue;
                size_t zeros = 0;
                for (size_t i = 0; i < param.size(); ++i)
                    if (!param.mask[i]) ++zeros;
                if (zeros != size_t(std::floor(double(p) * param.size()))) exact = false;
            }
        }
        check("prune-counts", exact);
    }

    // augmentation doubling
    {
        ConvNet sub = ConvNet::make("awm-mlp-v1", 3);
        ConvNet victim = ConvNet::make("awm-cnn-v1", 4);
        QueryOracle oracle = label_oracle(victim);
        std::vector<int> ix;
        for (int i = 0; i < 75; ++i) ix.push_back(i);
        ImageDataset S = lab.mnist.steal_seed.subset(ix);
        ImageDataset out = jacobian_augment(S, sub, oracle.as_label_oracle(), 0.1f);
        check("augment-doubling", out.count() == 150 && oracle.queries() == 75);
    }

    // checkpoint and watermark file round trips
    {
        ConvNet net = ConvNet::make("awm-cnn-v1", 11);
        net.params()[0].mask.assign(net.params()[0].size(), 1);
        const std::string ck = serialize_checkpoint(net);
        const bool ck_rt =
            serialize_checkpoint(deserialize_checkpoint(std::vector<uint8_t>(ck.begin(), ck.end()))) ==
            ck;
        WatermarkSet wm = lab.ood_set(42);
        const std::string wb = serialize_watermarks(wm);
        const bool wm_rt =
            serialize_watermarks(deserialize_watermarks(std::vector<uint8_t>(wb.begin(), wb.end()))) ==
            wb;
        check("file-roundtrips", ck_rt && wm_rt);
    }

    // same-seed pipeline determinism (micro profile, fresh directories)
    {
        auto micro = [&](const fs::path& out) {
            ExperimentConfig cfg = default_config(DatasetName::MNIST, "desk");
            cfg.regime = "advtr+ood";
            cfg.seed = 7;
            cfg.data_root = lab.data_root;
            cfg.out_dir = out.string();
            cfg.train.epochs = 1;
            cfg.train.attack_warmup_epochs = 0;
            cfg.train_attack.steps = 2;
            cfg.train_attack.step_size = 0.125f;
            cfg.eval_attack.steps = 2;
            cfg.wm_count = 10;
            cfg.split.train_count = 256;
            cfg.split.test_count = 128;
            cfg.split.finetune_count = 128;
            cfg.split.steal_seed_count = 16;
            cfg.steal.rounds = 2;
            cfg.steal.seed_size = 8;
            cfg.steal.substitute_epochs_per_round = 1;
            cfg.steal_modes = {"black"};
            cfg.removal.prune_rates = {0.5f};
            cfg.removal.finetune_epochs = 1;
            return cfg;
        };
        const fs::path o1 = lab.work / "pipe-det-1";
        const fs::path o2 = lab.work / "pipe-det-2";
        fs::remove_all(o1);
        fs::remove_all(o2);
        nlohmann::json a = report_to_json(run_pipeline(micro(o1)));
        nlohmann::json b = report_to_json(run_pipeline(micro(o2)));
        for (auto* j : {&a, &b}) {
            for (auto& s : j->at("stages")) s["wall_s"] = 0.0;
            (*j)["config"]["out_dir"] = "";
            (*j)["fingerprint"] = "";
            for (auto& s : j->at("stages"))
                if (s.at("data").contains("fingerprint")) s["data"]["fingerprint"] = "";
        }
        check("pipeline-determinism", a.dump() == b.dump());
        fs::remove_all(o1);
        fs::remove_all(o2);
    }

    // verify threshold boundary: accuracy exactly 0.5 claims ownership
    {
        WatermarkSet wm = lab.ood_set(42);
        int at = 0;
        LabelOracle half = [&](const Tensor&) -> int {
            const int i = at++;
            return (i % 2 == 0) ? wm.labels[i] : (wm.labels[i] + 1) % 10;
        };
        VerificationResult r = verify(half, wm);
        check("verify-boundary", r.watermark_accuracy == 0.5 && r.claimed);
    }

    logbook().record("C11", all, "property suites:" + detail);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    const int rc = RUN_ALL_TESTS();
    printf("\n==== acceptance summary ====\n");
    for (const auto& line : logbook().lines) printf("%s\n", line.c_str());
    printf("============================\n");
    return rc;
}
