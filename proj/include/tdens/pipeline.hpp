#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "tdens/errors.hpp"
#include "tdens/features.hpp"
#include "tdens/groundtruth.hpp"
#include "tdens/inference.hpp"
#include "tdens/io.hpp"
#include "tdens/optimizer.hpp"
#include "tdens/types.hpp"

/// Experiment plumbing: config parsing, dataset loading, the train and eval
/// drivers, and the report formatters used by the CLI.

namespace tdens {

struct ExperimentConfig {
    std::string manifest;  ///< dataset manifest path (train / eval / predict)
    std::string model;     ///< model path (eval / predict)
    int block_w = 16;
    int block_h = 16;
    int bg_threshold = 25; ///< background-differencing threshold
    FeatureConfig features;
    Hyperparams hp;
    bool cv_enabled = false;
    CvGrid cv;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const char* where) {
    if (!j.is_object())
        throw ConfigError(std::string("experiment config: ") + where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw ConfigError(std::string("experiment config: unknown key '") + key + "' in " +
                              where);
    }
}

} // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    return {
        {"bg_threshold", cfg.bg_threshold},
        {"block_h", cfg.block_h},
        {"block_w", cfg.block_w},
        {"cv",
         {{"alphas", cfg.cv.alphas},
          {"betas", cfg.cv.betas},
          {"enabled", cfg.cv_enabled},
          {"folds", cfg.cv.folds},
          {"ranks", cfg.cv.ranks}}},
        {"features",
         {{"include_bias", cfg.features.include_bias},
          {"include_fg_ratio", cfg.features.include_fg_ratio},
          {"intensity_bins", cfg.features.intensity_bins},
          {"orient_bins", cfg.features.orient_bins}}},
        {"hyperparams",
         {{"accelerated", cfg.hp.accelerated},
          {"alpha", cfg.hp.alpha},
          {"beta", cfg.hp.beta},
          {"eta", cfg.hp.eta},
          {"max_iters", cfg.hp.max_iters},
          {"rank", cfg.hp.rank},
          {"restarts", cfg.hp.restarts},
          {"seed", cfg.hp.seed},
          {"step_decay", cfg.hp.step_decay},
          {"tol", cfg.hp.tol}}},
        {"manifest", cfg.manifest},
        {"model", cfg.model},
    };
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"bg_threshold", "block_h", "block_w", "cv", "features",
                                 "hyperparams", "manifest", "model"},
                                "the top level");
    ExperimentConfig cfg;
    try {
        cfg.manifest = j.value("manifest", cfg.manifest);
        cfg.model = j.value("model", cfg.model);
        cfg.block_w = j.value("block_w", cfg.block_w);
        cfg.block_h = j.value("block_h", cfg.block_h);
        cfg.bg_threshold = j.value("bg_threshold", cfg.bg_threshold);
        if (j.contains("features")) {
            const nlohmann::json& f = j.at("features");
            detail::reject_unknown_keys(
                f, {"include_bias", "include_fg_ratio", "intensity_bins", "orient_bins"},
                "'features'");
            cfg.features.intensity_bins = f.value("intensity_bins", cfg.features.intensity_bins);
            cfg.features.orient_bins = f.value("orient_bins", cfg.features.orient_bins);
            cfg.features.include_fg_ratio =
                f.value("include_fg_ratio", cfg.features.include_fg_ratio);
            cfg.features.include_bias = f.value("include_bias", cfg.features.include_bias);
        }
        if (j.contains("hyperparams")) {
            const nlohmann::json& h = j.at("hyperparams");
            detail::reject_unknown_keys(h,
                                        {"accelerated", "alpha", "beta", "eta", "max_iters",
                                         "rank", "restarts", "seed", "step_decay", "tol"},
                                        "'hyperparams'");
            cfg.hp.alpha = h.value("alpha", cfg.hp.alpha);
            cfg.hp.beta = h.value("beta", cfg.hp.beta);
            cfg.hp.rank = h.value("rank", cfg.hp.rank);
            cfg.hp.eta = h.value("eta", cfg.hp.eta);
            cfg.hp.max_iters = h.value("max_iters", cfg.hp.max_iters);
            cfg.hp.restarts = h.value("restarts", cfg.hp.restarts);
            cfg.hp.tol = h.value("tol", cfg.hp.tol);
            cfg.hp.seed = h.value("seed", cfg.hp.seed);
            cfg.hp.accelerated = h.value("accelerated", cfg.hp.accelerated);
            cfg.hp.step_decay = h.value("step_decay", cfg.hp.step_decay);
        }
        if (j.contains("cv")) {
            const nlohmann::json& c = j.at("cv");
            detail::reject_unknown_keys(c, {"alphas", "betas", "enabled", "folds", "ranks"},
                                        "'cv'");
            cfg.cv_enabled = c.value("enabled", cfg.cv_enabled);
            cfg.cv.alphas = c.value("alphas", cfg.cv.alphas);
            cfg.cv.betas = c.value("betas", cfg.cv.betas);
            cfg.cv.ranks = c.value("ranks", cfg.cv.ranks);
            cfg.cv.folds = c.value("folds", cfg.cv.folds);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: bad value type: ") + e.what());
    }
    if (cfg.block_w < 1 || cfg.block_h < 1)
        throw ConfigError("experiment config: block size must be at least 1x1");
    if (cfg.bg_threshold <= 0 || cfg.bg_threshold >= 255)
        throw ConfigError("experiment config: bg_threshold must be in (0,255)");
    try {
        validate_feature_config(cfg.features);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    try {
        return experiment_config_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("experiment config: malformed JSON in " + path.string() + ": " +
                          e.what());
    }
}

/// Hash of the canonical config serialization; stamped into run manifests so
/// every output directory records what produced it.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return fnv1a64(to_json(cfg).dump());
}

// -------------------------------------------------------------------------
// Dataset loading
// -------------------------------------------------------------------------

struct LoadedDataset {
    DatasetManifest manifest;
    Frame background;
    std::vector<std::string> ids;         ///< manifest order
    std::vector<Frame> frames;            ///< aligned with ids
    std::vector<std::vector<BBox>> boxes; ///< aligned; empty = zero vehicles
    Roi roi;
};

inline LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
    LoadedDataset ds;
    ds.manifest = load_manifest(manifest_path);
    if (ds.manifest.frames.empty())
        throw IoError("dataset: manifest lists no frames: " + manifest_path.string());
    ds.background = load_frame(resolve_path(manifest_path, ds.manifest.background_path));
    ds.roi = Roi{ds.manifest.roi, ds.manifest.region_length};
    if (ds.roi.rect.x0 < 0 || ds.roi.rect.y0 < 0 || ds.roi.rect.x1 > ds.background.width ||
        ds.roi.rect.y1 > ds.background.height)
        throw IoError("dataset: ROI not contained in the frames: " + manifest_path.string());

    std::unordered_set<std::string> seen;
    for (const FrameEntry& entry : ds.manifest.frames) {
        if (!seen.insert(entry.id).second)
            throw IoError("dataset: duplicate frame id '" + entry.id + "'");
        Frame f = load_frame(resolve_path(manifest_path, entry.path));
        if (!f.same_size(ds.background))
            throw IoError("dataset: frame '" + entry.id + "' size differs from the background");
        ds.ids.push_back(entry.id);
        ds.frames.push_back(std::move(f));
    }

    ds.boxes.assign(ds.ids.size(), {});
    const std::vector<Annotation> anns =
        load_annotations(resolve_path(manifest_path, ds.manifest.annotations_path));
    for (const Annotation& a : anns) {
        const auto it = std::find(ds.ids.begin(), ds.ids.end(), a.frame_id);
        if (it == ds.ids.end())
            throw IoError("dataset: annotations reference unknown frame id '" + a.frame_id + "'");
        ds.boxes[static_cast<std::size_t>(it - ds.ids.begin())] = a.boxes;
    }
    return ds;
}

// -------------------------------------------------------------------------
// Feature and target computation
// -------------------------------------------------------------------------

inline BlockGrid dataset_grid(const LoadedDataset& ds, const ExperimentConfig& cfg) {
    return make_block_grid(ds.roi, cfg.block_w, cfg.block_h);
}

inline std::vector<FeatureMatrix> compute_features(const LoadedDataset& ds, const BlockGrid& grid,
                                                   const ExperimentConfig& cfg) {
    std::vector<FeatureMatrix> out;
    out.reserve(ds.frames.size());
    for (const Frame& frame : ds.frames) {
        const FgMask mask = background_subtract(frame, ds.background, cfg.bg_threshold);
        out.push_back(extract_block_features(frame, mask, grid, cfg.features));
    }
    return out;
}

/// Ground-truth block densities, one row per frame.
inline Matrix compute_block_targets(const LoadedDataset& ds, const BlockGrid& grid) {
    Matrix D(static_cast<Eigen::Index>(ds.frames.size()), grid.block_count());
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const DensityMap map =
            box_density(ds.background.width, ds.background.height, ds.boxes[i]);
        D.row(static_cast<Eigen::Index>(i)) = block_density(map, grid).transpose();
    }
    return D;
}

inline std::vector<double> true_counts(const LoadedDataset& ds) {
    std::vector<double> out;
    out.reserve(ds.boxes.size());
    for (const auto& b : ds.boxes) out.push_back(static_cast<double>(b.size()));
    return out;
}

// -------------------------------------------------------------------------
// Train / eval / predict drivers
// -------------------------------------------------------------------------

struct TrainOutcome {
    Model model;
    FitReport fit;
    CvResult cv;          ///< table empty unless cv was enabled
    bool used_cv = false;
};

inline TrainOutcome run_training(const LoadedDataset& ds, const ExperimentConfig& cfg) {
    const BlockGrid grid = dataset_grid(ds, cfg);
    TrainSet train;
    train.X = compute_features(ds, grid, cfg);
    train.D = compute_block_targets(ds, grid);

    TrainOutcome out;
    Hyperparams hp = cfg.hp;
    if (cfg.cv_enabled) {
        out.cv = cross_validate(train, hp, cfg.cv);
        hp = out.cv.best;
        out.used_cv = true;
    }
    try {
        out.fit = apsd_fit(train, hp);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    out.model.W = out.fit.W;
    out.model.rank = hp.rank;
    out.model.alpha = hp.alpha;
    out.model.beta = hp.beta;
    out.model.feature_hash =
        feature_pipeline_hash(cfg.features, cfg.bg_threshold, cfg.block_w, cfg.block_h);
    return out;
}

/// Clamped per-frame count estimates for a whole dataset.
inline std::vector<double> estimate_counts(const LoadedDataset& ds, const Model& model,
                                           const ExperimentConfig& cfg) {
    const BlockGrid grid = dataset_grid(ds, cfg);
    const std::uint64_t expect =
        feature_pipeline_hash(cfg.features, cfg.bg_threshold, cfg.block_w, cfg.block_h);
    if (model.feature_hash != expect)
        throw CompatError("model/config feature pipeline mismatch: model has " +
                          hash_to_hex(model.feature_hash) + ", config gives " +
                          hash_to_hex(expect));
    if (model.W.rows() != feature_dim(cfg.features) || model.W.cols() != grid.block_count())
        throw CompatError("model dimensions do not match the dataset grid");
    std::vector<double> est;
    est.reserve(ds.frames.size());
    for (const FeatureMatrix& X : compute_features(ds, grid, cfg)) {
        const BlockPrediction p = predict_blocks(model.W, X);
        est.push_back(count_from_blocks(p.clamped));
    }
    return est;
}

inline EvalResult run_eval(const LoadedDataset& ds, const Model& model,
                           const ExperimentConfig& cfg) {
    return evaluate(ds.ids, true_counts(ds), estimate_counts(ds, model, cfg));
}

// -------------------------------------------------------------------------
// Report formatting
// -------------------------------------------------------------------------

/// One row per iteration per restart: `iter,restart,objective`; iter 0 is
/// the objective at that restart's initialization.
inline std::string format_training_log(const FitReport& fit) {
    std::string out = "iter,restart,objective\n";
    for (std::size_t restart = 0; restart < fit.all_traces.size(); ++restart) {
        const std::vector<double>& trace = fit.all_traces[restart];
        for (std::size_t iter = 0; iter < trace.size(); ++iter) {
            out += std::to_string(iter) + ',' + std::to_string(restart) + ',' +
                   format_double(trace[iter]) + '\n';
        }
    }
    return out;
}

inline std::string format_eval_csv(const EvalResult& res) {
    std::string out = "frame_id,true_count,est_count,abs_err\n";
    for (const FrameEval& f : res.per_frame) {
        out += f.frame_id + ',' + format_double(f.true_count) + ',' +
               format_double(f.est_count) + ',' +
               format_double(std::abs(f.est_count - f.true_count)) + '\n';
    }
    return out;
}

inline std::string format_eval_summary(const EvalResult& res) {
    const nlohmann::json j = {
        {"ara", res.ara},
        {"mae", res.mae},
        {"mse", res.mse},
        {"n_frames", res.per_frame.size()},
    };
    return j.dump(2) + "\n";
}

inline std::string format_predictions_csv(const std::vector<std::string>& ids,
                                          const std::vector<double>& est, const Roi& roi) {
    std::string out = "frame_id,est_count,traffic_density\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out += ids[i] + ',' + format_double(est[i]) + ',' +
               format_double(traffic_density(est[i], roi)) + '\n';
    }
    return out;
}

/// Per-combo cross-validation scores: `alpha,beta,rank,score`.
inline std::string format_cv_table(const CvResult& cv) {
    std::string out = "alpha,beta,rank,score\n";
    for (const CvEntry& e : cv.table) {
        out += format_double(e.alpha) + ',' + format_double(e.beta) + ',' +
               std::to_string(e.rank) + ',' + format_double(e.score) + '\n';
    }
    return out;
}

} // namespace tdens
