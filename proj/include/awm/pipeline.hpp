#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "awm/config.hpp"
#include "awm/synth.hpp"

namespace awm {

struct StageResult {
    std::string name;
    double wall_s = 0.0;
    nlohmann::json data;
};

struct ExperimentReport {
    nlohmann::json config;
    std::string fingerprint;
    uint64_t seed = 0;
    std::vector<StageResult> stages;
    bool failed = false;
    std::string failed_stage;
    std::string error;

    const StageResult* find(const std::string& name) const {
        for (const auto& s : stages)
            if (s.name == name) return &s;
        return nullptr;
    }
};

inline nlohmann::json report_to_json(const ExperimentReport& r) {
    nlohmann::json j;
    j["config"] = r.config;
    j["fingerprint"] = r.fingerprint;
    j["seed"] = r.seed;
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : r.stages)
        stages.push_back({{"name", s.name}, {"wall_s", s.wall_s}, {"data", s.data}});
    j["stages"] = stages;
    j["failed"] = r.failed;
    if (r.failed) {
        j["failed_stage"] = r.failed_stage;
        j["error"] = r.error;
    }
    return j;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
    ExperimentReport r;
    r.config = j.at("config");
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    for (const auto& s : j.at("stages"))
        r.stages.push_back(
            {s.at("name").get<std::string>(), s.at("wall_s").get<double>(), s.at("data")});
    r.failed = j.value("failed", false);
    r.failed_stage = j.value("failed_stage", std::string());
    r.error = j.value("error", std::string());
    return r;
}

inline ExperimentReport load_report(const std::string& path) {
    return report_from_json(nlohmann::json::parse(detail::read_file(path)));
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j;
    j["test_acc"] = m.test_accuracy;
    j["adv_acc"] = m.adversarial_accuracy;
    if (m.watermark_accuracy)
        j["wm_acc"] = *m.watermark_accuracy;
    else
        j["wm_acc"] = nullptr;
    j["fingerprint"] = m.config_fingerprint;
    return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
    Metrics m;
    m.test_accuracy = j.at("test_acc").get<double>();
    m.adversarial_accuracy = j.at("adv_acc").get<double>();
    if (!j.at("wm_acc").is_null()) m.watermark_accuracy = j.at("wm_acc").get<double>();
    m.config_fingerprint = j.value("fingerprint", std::string());
    return m;
}

inline nlohmann::json curve_to_json(const CurveData& c) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) {
        nlohmann::json m = metrics_to_json(p.metrics);
        m["point"] = p.point;
        pts.push_back(m);
    }
    return nlohmann::json{{"axis", c.axis}, {"points", pts}};
}

inline CurveData curve_from_json(const nlohmann::json& j) {
    CurveData c;
    c.axis = j.at("axis").get<std::string>();
    for (const auto& p : j.at("points")) {
        CurvePoint pt;
        pt.point = p.at("point").get<double>();
        pt.metrics = metrics_from_json(p);
        c.points.push_back(std::move(pt));
    }
    return c;
}

using LogFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Pipeline: load data -> (generator) -> watermarks -> victim -> evaluate ->
// steal per mode -> removal sweep per mode -> report. Every stage artifact
// lands under <out>/<fingerprint>/checkpoints and is reused on re-runs, so
// an interrupted pipeline resumes where it stopped and a completed one
// reproduces its report without recomputing anything.
// ---------------------------------------------------------------------------
class Pipeline {
public:
    explicit Pipeline(ExperimentConfig cfg, LogFn log = nullptr)
        : cfg_(std::move(cfg)), log_(std::move(log)) {
        cfg_.validate();
        fingerprint_ = config_fingerprint(cfg_);
        run_dir_ = std::filesystem::path(cfg_.out_dir) / fingerprint_;
        ckpt_dir_ = run_dir_ / "checkpoints";
    }

    const std::string& fingerprint() const { return fingerprint_; }
    std::filesystem::path run_dir() const { return run_dir_; }

    ExperimentReport run() {
        std::filesystem::create_directories(ckpt_dir_);
        report_ = ExperimentReport{};
        report_.config = config_to_json(cfg_);
        report_.fingerprint = fingerprint_;
        report_.seed = cfg_.seed;

        std::string current = "load-data";
        try {
            const Regime regime = cfg_.regime_kind();
            const DatasetName dname = cfg_.dataset_name();
            const std::string root = resolve_data_root(cfg_);

            SplitPlan plan = cfg_.split;
            plan.seed = derive_seed(cfg_.seed, "split");
            DatasetSplits data = load_dataset(dname, root, plan);
            {
                StageResult s;
                s.name = "load-data";
                s.data = {{"dataset", cfg_.dataset},
                          {"synthetic", dataset_is_synthetic(root, dname)},
                          {"train", data.train.count()},
                          {"test", data.test.count()},
                          {"finetune_add", data.finetune_add.count()},
                          {"steal_seed", data.steal_seed.count()}};
                report_.stages.push_back(std::move(s));
            }

            ConvNet generator;
            std::string generator_id;
            if (regime == Regime::AdvTrAdvWm) {
                current = "generator";
                generator = stage_model(current, [&] {
                    TrainConfig tc = cfg_.train;
                    tc.seed = derive_seed(cfg_.seed, "train/generator");
                    log("training watermark generator (adversarial)");
                    return train_adversarial(data.train, tc, cfg_.train_attack, nullptr,
                                             progress_logger(current));
                });
                generator_id = to_hex16(fnv1a64(serialize_checkpoint(generator)));
            }

            WatermarkSet wm;
            const bool has_wm = regime == Regime::AdvTrOod || regime == Regime::AdvTrAdvWm;
            if (has_wm) {
                current = "watermarks";
                wm = stage_watermarks(current, [&] {
                    const uint64_t wseed = derive_seed(cfg_.seed, "watermarks");
                    if (regime == Regime::AdvTrOod) {
                        log("building OOD watermark set");
                        ImageDataset ood = load_train_file(root, ood_counterpart(dname));
                        return build_ood_watermarks(ood, cfg_.wm_count, wseed);
                    }
                    log("generating adversarial watermark set");
                    return gen_adversarial_watermarks(generator, data.train, cfg_.wm_attack,
                                                      cfg_.wm_count, wseed,
                                                      cfg_.train_attack.epsilon, generator_id);
                });
            }

            current = "victim";
            ConvNet victim = stage_model(current, [&] {
                TrainConfig tc = cfg_.train;
                tc.seed = derive_seed(cfg_.seed, "train/victim");
                const WatermarkTrainMode mode = cfg_.wm_mode == "mixed"
                                                    ? WatermarkTrainMode::Mixed
                                                    : WatermarkTrainMode::EpochEnd;
                switch (regime) {
                    case Regime::Plain:
                        log("training victim (plain)");
                        return train_plain(data.train, tc, "awm-cnn-v1", progress_logger(current));
                    case Regime::AdvTr:
                        log("training victim (adversarial)");
                        return train_adversarial(data.train, tc, cfg_.train_attack, nullptr,
                                                 progress_logger(current));
                    default:
                        log("training victim (adversarial + watermarks)");
                        return train_adv_watermarked(data.train, tc, cfg_.train_attack, wm, mode,
                                                     nullptr, progress_logger(current));
                }
            });

            current = "eval/victim";
            stage_metrics(current, [&] {
                log("evaluating victim");
                return evaluate(victim, data.test, cfg_.eval_attack, has_wm ? &wm : nullptr);
            });

            if (has_wm) {
                for (const std::string& mode_name : cfg_.steal_modes) {
                    const StealMode mode = steal_mode_from_string(mode_name);

                    current = "steal/" + mode_name;
                    uint64_t queries = 0;
                    ConvNet substitute = stage_steal(current, mode, victim, data, &queries);

                    current = "eval/steal-" + mode_name;
                    stage_metrics(current, [&] {
                        log("evaluating stolen model (" + mode_name + ")");
                        return evaluate(substitute, data.test, cfg_.eval_attack, &wm);
                    });

                    current = "removal/" + mode_name;
                    stage_sweep(current, [&] {
                        log("removal sweep on stolen model (" + mode_name + ")");
                        RemovalConfig rc = cfg_.removal;
                        rc.seed = derive_seed(cfg_.seed, "removal/" + mode_name);
                        return removal_sweep(substitute, wm, data.test, cfg_.eval_attack,
                                             data.finetune_add, rc);
                    });
                }
            }
        } catch (const std::exception& e) {
            report_.failed = true;
            report_.failed_stage = current;
            report_.error = e.what();
            write_report();
            throw StageError(current, e.what());
        }
        write_report();
        return report_;
    }

    std::filesystem::path report_path() const { return run_dir_ / "report.json"; }

private:
    ExperimentConfig cfg_;
    LogFn log_;
    std::string fingerprint_;
    std::filesystem::path run_dir_, ckpt_dir_;
    ExperimentReport report_;

    void log(const std::string& msg) const {
        if (log_) log_("[" + fingerprint_ + "] " + msg);
    }

    ProgressFn progress_logger(const std::string& stage) const {
        if (!log_) return nullptr;
        return [this, stage](const EpochStats& s) {
            log(stage + ": epoch " + std::to_string(s.epoch) + " loss " +
                std::to_string(s.mean_loss));
        };
    }

    struct Timer {
        std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
        double elapsed() const {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };

    static nlohmann::json read_json(const std::filesystem::path& p) {
        return nlohmann::json::parse(detail::read_file(p.string()));
    }

    static void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
        detail::write_file(p.string(), j.dump(2) + "\n");
    }

    ConvNet stage_model(const std::string& name, const std::function<ConvNet()>& build) {
        const auto ckpt = ckpt_dir_ / (sanitize(name) + ".ckpt");
        const auto meta = ckpt_dir_ / (sanitize(name) + ".meta.json");
        StageResult s;
        s.name = name;
        if (std::filesystem::exists(ckpt) && std::filesystem::exists(meta)) {
            log("stage " + name + ": cached");
            s.wall_s = read_json(meta).at("wall_s").get<double>();
            s.data = read_json(meta).at("data");
            report_.stages.push_back(s);
            return load_checkpoint(ckpt.string());
        }
        Timer timer;
        ConvNet model = build();
        s.wall_s = timer.elapsed();
        s.data = {{"checkpoint", ckpt.filename().string()}, {"arch", model.arch()}};
        save_checkpoint(model, ckpt.string());
        write_json(meta, {{"wall_s", s.wall_s}, {"data", s.data}});
        report_.stages.push_back(s);
        return model;
    }

    WatermarkSet stage_watermarks(const std::string& name,
                                  const std::function<WatermarkSet()>& build) {
        const auto file = ckpt_dir_ / "watermarks.awm";
        const auto meta = ckpt_dir_ / "watermarks.meta.json";
        StageResult s;
        s.name = name;
        if (std::filesystem::exists(file) && std::filesystem::exists(meta)) {
            log("stage " + name + ": cached");
            s.wall_s = read_json(meta).at("wall_s").get<double>();
            s.data = read_json(meta).at("data");
            report_.stages.push_back(s);
            return load_watermarks(file.string());
        }
        Timer timer;
        WatermarkSet wm = build();
        s.wall_s = timer.elapsed();
        s.data = {{"file", file.filename().string()},
                  {"kind", to_string(wm.kind)},
                  {"count", wm.count()}};
        save_watermarks(wm, file.string());
        write_json(meta, {{"wall_s", s.wall_s}, {"data", s.data}});
        report_.stages.push_back(s);
        return wm;
    }

    Metrics stage_metrics(const std::string& name, const std::function<Metrics()>& compute) {
        const auto meta = ckpt_dir_ / (sanitize(name) + ".metrics.json");
        StageResult s;
        s.name = name;
        if (std::filesystem::exists(meta)) {
            log("stage " + name + ": cached");
            const nlohmann::json j = read_json(meta);
            s.wall_s = j.at("wall_s").get<double>();
            s.data = j.at("data");
            report_.stages.push_back(s);
            return metrics_from_json(s.data);
        }
        Timer timer;
        Metrics m = compute();
        m.config_fingerprint = fingerprint_;
        s.wall_s = timer.elapsed();
        s.data = metrics_to_json(m);
        write_json(meta, {{"wall_s", s.wall_s}, {"data", s.data}});
        report_.stages.push_back(s);
        return m;
    }

    ConvNet stage_steal(const std::string& name, StealMode mode, const ConvNet& victim,
                        const DatasetSplits& data, uint64_t* queries) {
        const auto ckpt = ckpt_dir_ / (sanitize(name) + ".ckpt");
        const auto meta = ckpt_dir_ / (sanitize(name) + ".meta.json");
        StageResult s;
        s.name = name;
        if (std::filesystem::exists(ckpt) && std::filesystem::exists(meta)) {
            log("stage " + name + ": cached");
            const nlohmann::json j = read_json(meta);
            s.wall_s = j.at("wall_s").get<double>();
            s.data = j.at("data");
            report_.stages.push_back(s);
            if (queries) *queries = s.data.value("oracle_queries", uint64_t{0});
            return load_checkpoint(ckpt.string());
        }
        Timer timer;
        log("stealing victim (" + to_string(mode) + "-box)");
        StealConfig sc = cfg_.steal;
        sc.mode = mode;
        sc.seed = derive_seed(cfg_.seed, "steal/" + to_string(mode));
        StealResult r = steal(victim, data.steal_seed, sc,
                              mode == StealMode::Grey ? &cfg_.train_attack : nullptr);
        s.wall_s = timer.elapsed();
        s.data = {{"checkpoint", ckpt.filename().string()},
                  {"arch", r.substitute.arch()},
                  {"oracle_queries", r.oracle_queries},
                  {"rounds", r.rounds_completed}};
        save_checkpoint(r.substitute, ckpt.string());
        write_json(meta, {{"wall_s", s.wall_s}, {"data", s.data}});
        report_.stages.push_back(s);
        if (queries) *queries = r.oracle_queries;
        return r.substitute;
    }

    void stage_sweep(const std::string& name, const std::function<RemovalSweep()>& compute) {
        const auto meta = ckpt_dir_ / (sanitize(name) + ".sweep.json");
        StageResult s;
        s.name = name;
        if (std::filesystem::exists(meta)) {
            log("stage " + name + ": cached");
            const nlohmann::json j = read_json(meta);
            s.wall_s = j.at("wall_s").get<double>();
            s.data = j.at("data");
            report_.stages.push_back(s);
            return;
        }
        Timer timer;
        RemovalSweep sweep = compute();
        for (auto& pt : sweep.prune.points) pt.metrics.config_fingerprint = fingerprint_;
        for (auto& pt : sweep.finetune.points) pt.metrics.config_fingerprint = fingerprint_;
        s.wall_s = timer.elapsed();
        s.data = {{"prune", curve_to_json(sweep.prune)},
                  {"finetune", curve_to_json(sweep.finetune)}};
        write_json(meta, {{"wall_s", s.wall_s}, {"data", s.data}});
        report_.stages.push_back(s);
    }

    void write_report() const { write_json(report_path(), report_to_json(report_)); }

    static std::string sanitize(std::string s) {
        for (char& c : s)
            if (c == '/') c = '-';
        return s;
    }
};

inline ExperimentReport run_pipeline(const ExperimentConfig& cfg, LogFn log = nullptr) {
    Pipeline p(std::move(cfg), std::move(log));
    return p.run();
}

// ---------------------------------------------------------------------------
// Report emission: a summary table (text + CSV) and per-mode removal curves.
// Fractions are rendered as percentages with two decimals.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

inline std::string pct_or(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return "-";
    return pct(j.at(key).get<double>());
}

}  // namespace detail

// Rows: victim and each stolen model; columns: Test/Adv/Water accuracy.
inline std::string summary_table_csv(const ExperimentReport& r) {
    std::string out = "model,test_acc,adv_acc,wm_acc,fingerprint\n";
    const std::vector<std::pair<std::string, std::string>> rows = {
        {"victim", "eval/victim"},
        {"stolen-black", "eval/steal-black"},
        {"stolen-grey", "eval/steal-grey"},
        {"stolen-white", "eval/steal-white"}};
    for (const auto& [label, stage] : rows) {
        const StageResult* s = r.find(stage);
        if (!s) continue;
        out += label + "," + detail::pct_or(s->data, "test_acc") + "," +
               detail::pct_or(s->data, "adv_acc") + "," + detail::pct_or(s->data, "wm_acc") + "," +
               r.fingerprint + "\n";
    }
    return out;
}

inline std::string summary_table_text(const ExperimentReport& r) {
    const std::string regime =
        r.config.is_object() ? r.config.value("regime", std::string("?")) : "?";
    const std::string dataset =
        r.config.is_object() ? r.config.value("dataset", std::string("?")) : "?";
    char head[160];
    std::snprintf(head, sizeof(head), "%-14s %10s %10s %10s   (%s, %s)\n", "model", "test%",
                  "adv%", "water%", dataset.c_str(), regime.c_str());
    std::string out = head;
    const std::vector<std::pair<std::string, std::string>> rows = {
        {"victim", "eval/victim"},
        {"stolen-black", "eval/steal-black"},
        {"stolen-grey", "eval/steal-grey"},
        {"stolen-white", "eval/steal-white"}};
    bool any = false;
    for (const auto& [label, stage] : rows) {
        const StageResult* s = r.find(stage);
        char line[160];
        if (!s) {
            const bool expected = stage == "eval/victim";
            if (expected) {
                std::snprintf(line, sizeof(line), "%-14s %10s %10s %10s   [warning: missing]\n",
                              label.c_str(), "-", "-", "-");
                out += line;
            }
            continue;
        }
        any = true;
        std::snprintf(line, sizeof(line), "%-14s %10s %10s %10s\n", label.c_str(),
                      detail::pct_or(s->data, "test_acc").c_str(),
                      detail::pct_or(s->data, "adv_acc").c_str(),
                      detail::pct_or(s->data, "wm_acc").c_str());
        out += line;
    }
    if (!any) out += "(no evaluated stages)\n";
    return out;
}

// Writes tables/ and curves/ under the run directory; returns written paths.
inline std::vector<std::string> emit_tables(const ExperimentReport& r,
                                            const std::filesystem::path& run_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir / "tables");
    std::vector<std::string> written;
    const auto csv = run_dir / "tables" / "summary.csv";
    detail::write_file(csv.string(), summary_table_csv(r));
    written.push_back(csv.string());
    const auto txt = run_dir / "tables" / "summary.txt";
    detail::write_file(txt.string(), summary_table_text(r));
    written.push_back(txt.string());
    return written;
}

inline std::vector<std::string> emit_curves(const ExperimentReport& r,
                                            const std::filesystem::path& run_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir / "curves");
    std::vector<std::string> written;
    for (const auto& s : r.stages) {
        if (s.name.rfind("removal/", 0) != 0) continue;
        const CurveData prune = curve_from_json(s.data.at("prune"));
        const CurveData ft = curve_from_json(s.data.at("finetune"));
        const std::string mode = s.name.substr(8);
        const auto path = run_dir / "curves" / ("removal-" + mode + ".csv");
        detail::write_file(path.string(), curve_csv({&prune, &ft}));
        written.push_back(path.string());
    }
    return written;
}

}  // namespace awm
