// Command-line driver: synth / train / predict / eval / check-grad.
//
// Exit codes: 0 success, 1 check failure, 2 config error, 3 I/O error,
// 4 numerical divergence, 5 model/config compatibility error.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdens/tdens.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitCompat = 5;

/// Every subcommand drops a run manifest next to its outputs: the command,
/// a hash of the effective config, and the config itself. No timestamps —
/// reruns must be byte-identical.
void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const nlohmann::json& config) {
    const nlohmann::json run = {
        {"command", command},
        {"config", config},
        {"config_hash", tdens::hash_to_hex(tdens::fnv1a64(config.dump()))},
    };
    tdens::atomic_write_file(out_dir / "run.json", run.dump(2) + "\n");
}

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    tdens::SceneConfig cfg = tdens::load_scene_config(config_path);
    if (seed) cfg.seed = *seed;
    const tdens::Scene scene = tdens::generate_scene(cfg);
    tdens::write_dataset(scene, cfg, out_dir);
    write_run_manifest(out_dir, "synth", tdens::to_json(cfg));
    std::size_t total = 0;
    for (const tdens::Annotation& a : scene.annotations) total += a.boxes.size();
    std::printf("frames=%d vehicles_total=%zu\n", cfg.n_frames, total);
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    tdens::ExperimentConfig cfg = tdens::load_experiment_config(config_path);
    if (seed) cfg.hp.seed = *seed;
    if (cfg.manifest.empty())
        throw tdens::ConfigError("train: config must name a dataset manifest");
    const tdens::LoadedDataset ds =
        tdens::load_dataset(tdens::resolve_path(config_path, cfg.manifest));
    const tdens::TrainOutcome outcome = tdens::run_training(ds, cfg);

    const fs::path out(out_dir);
    tdens::save_model(outcome.model, out / "model.tdm");
    tdens::atomic_write_file(out / "training_log.csv",
                             tdens::format_training_log(outcome.fit));
    if (outcome.used_cv)
        tdens::atomic_write_file(out / "cv_scores.csv", tdens::format_cv_table(outcome.cv));
    write_run_manifest(out, "train", tdens::to_json(cfg));
    std::printf("final_objective=%s iterations=%d restart=%d converged=%d\n",
                tdens::format_double(outcome.fit.objective_trace.back()).c_str(),
                outcome.fit.iterations, outcome.fit.restart_index,
                outcome.fit.converged ? 1 : 0);
    return kExitOk;
}

int cmd_predict(const std::string& config_path, const std::string& out_dir) {
    const tdens::ExperimentConfig cfg = tdens::load_experiment_config(config_path);
    if (cfg.manifest.empty() || cfg.model.empty())
        throw tdens::ConfigError("predict: config must name a dataset manifest and a model");
    const tdens::LoadedDataset ds =
        tdens::load_dataset(tdens::resolve_path(config_path, cfg.manifest));
    const tdens::Model model = tdens::load_model(tdens::resolve_path(config_path, cfg.model));
    const std::vector<double> est = tdens::estimate_counts(ds, model, cfg);

    const fs::path out(out_dir);
    tdens::atomic_write_file(out / "predictions.csv",
                             tdens::format_predictions_csv(ds.ids, est, ds.roi));
    write_run_manifest(out, "predict", tdens::to_json(cfg));
    std::printf("frames=%zu\n", est.size());
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& out_dir) {
    const tdens::ExperimentConfig cfg = tdens::load_experiment_config(config_path);
    if (cfg.manifest.empty() || cfg.model.empty())
        throw tdens::ConfigError("eval: config must name a dataset manifest and a model");
    const tdens::LoadedDataset ds =
        tdens::load_dataset(tdens::resolve_path(config_path, cfg.manifest));
    const tdens::Model model = tdens::load_model(tdens::resolve_path(config_path, cfg.model));
    const tdens::EvalResult res = tdens::run_eval(ds, model, cfg);

    const fs::path out(out_dir);
    tdens::atomic_write_file(out / "eval_frames.csv", tdens::format_eval_csv(res));
    tdens::atomic_write_file(out / "eval_summary.json", tdens::format_eval_summary(res));
    write_run_manifest(out, "eval", tdens::to_json(cfg));
    std::printf("mae=%s mse=%s ara=%s\n", tdens::format_double(res.mae).c_str(),
                tdens::format_double(res.mse).c_str(), tdens::format_double(res.ara).c_str());
    return kExitOk;
}

int cmd_check_grad(double tol, std::uint64_t seed, int points, bool inject_huber_sign_flip) {
    tdens::CheckOptions opt;
    opt.tol = tol;
    opt.seed = seed;
    opt.points = points;
    opt.inject_huber_sign_flip = inject_huber_sign_flip;
    const tdens::CheckResult result = tdens::run_gradient_checks(opt);
    for (const tdens::CheckEntry& e : result.entries) {
        std::printf("%-34s points=%-3d max_rel_err=%-12s %s\n", e.name.c_str(), e.points,
                    tdens::format_double(e.max_rel_err).c_str(), e.pass ? "PASS" : "FAIL");
    }
    if (!result.all_pass) {
        std::printf("worst offender: %s (max_rel_err=%s, tol=%s)\n", result.worst_name.c_str(),
                    tdens::format_double(result.worst_err).c_str(),
                    tdens::format_double(tol).c_str());
        return kExitCheckFailure;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-level traffic density estimation: synthetic scenes, "
                 "rank-constrained regression, counting metrics"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::optional<std::uint64_t> seed;
    double tol = 1e-5;
    std::uint64_t cg_seed = 12345;
    int cg_points = 50;
    bool inject = false;

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--config", config_path, "Scene config JSON")->required();
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--seed", seed, "Override the config seed");

    CLI::App* train = app.add_subcommand("train", "Fit the block regression model");
    train->add_option("--config", config_path, "Experiment config JSON")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--seed", seed, "Override the config seed");

    CLI::App* predict = app.add_subcommand("predict", "Predict per-frame counts");
    predict->add_option("--config", config_path, "Experiment config JSON")->required();
    predict->add_option("--out", out_dir, "Output directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a model against ground truth");
    eval->add_option("--config", config_path, "Experiment config JSON")->required();
    eval->add_option("--out", out_dir, "Output directory")->required();

    CLI::App* check = app.add_subcommand("check-grad", "Finite-difference gradient checks");
    check->add_option("--tol", tol, "Max allowed relative error");
    check->add_option("--seed", cg_seed, "RNG seed for the random points");
    check->add_option("--points", cg_points, "Random points per suite");
    check->add_flag("--inject-huber-sign-flip", inject,
                    "Deliberately break one gradient (harness self-test)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_dir, seed);
        if (train->parsed()) return cmd_train(config_path, out_dir, seed);
        if (predict->parsed()) return cmd_predict(config_path, out_dir);
        if (eval->parsed()) return cmd_eval(config_path, out_dir);
        if (check->parsed()) return cmd_check_grad(tol, cg_seed, cg_points, inject);
    } catch (const tdens::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const tdens::CompatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCompat;
    } catch (const tdens::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDivergence;
    } catch (const tdens::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitOk;
}
