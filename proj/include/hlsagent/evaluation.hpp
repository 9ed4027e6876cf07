#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "hlsagent/dataset.hpp"
#include "hlsagent/embedding_space.hpp"
#include "hlsagent/reasoning_engine.hpp"

namespace hlsagent {

/// sqrt(mean((pred_i - truth_i)^2)). Throws LengthMismatch, EmptyInput, and
/// InvalidTargetValue for non-finite entries.
double rmse(std::span<const double> pred, std::span<const double> truth);

enum class LatencyTransform { Identity, Log2p1 };

std::string_view to_string(LatencyTransform t);
std::optional<LatencyTransform> parse_latency_transform(std::string_view s);

/// Scored targets, in report column order.
inline constexpr std::array<std::string_view, 6> kScoreTargets = {
    "validity", "latency_cycles", "util_bram", "util_lut", "util_ff", "util_dsp"};

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;  // 0 when nothing is predicted valid
    double recall = 0.0;     // 0 when nothing is truly valid
    double f1 = 0.0;
};

struct ScoreReport {
    std::map<std::string, double> per_target_rmse;  // keyed by kScoreTargets
    double aggregate = 0.0;                         // mean of the six RMSEs
    ClassificationMetrics classification;
    std::size_t n = 0;
    LatencyTransform latency_transform = LatencyTransform::Log2p1;
};

/// Scores one prediction per truth design (validity as 0/1, latency after
/// `transform` on both sides, utilizations raw). Predictions for designs not
/// in `truth` are ignored. Throws MissingPrediction, EmptyInput.
ScoreReport score(const std::map<std::string, Prediction>& preds, const Dataset& truth,
                  LatencyTransform transform = LatencyTransform::Log2p1);

/// Inverse-distance-weighted k-nearest-neighbour regressor over the
/// embeddings of `train` (the query design itself excluded). Throws
/// EmptyTrainSet, MissingEmbedding.
Prediction nn_baseline_predict(const DesignPoint& point, const Dataset& train, const EmbeddingStore& store,
                               std::size_t k);

/// Predicts the majority validity of `train` and the mean numerics of the
/// train designs sharing that validity. Throws EmptyTrainSet.
Prediction majority_baseline_predict(const DesignPoint& point, const Dataset& train);

struct ComparisonTable {
    std::string text;  // fixed-width, best run first
    std::string csv;
};

/// Runs ranked by ascending aggregate (ties by name). Throws EmptyInput.
ComparisonTable compare_runs(const std::map<std::string, ScoreReport>& reports);

/// Human-readable report of one run.
std::string render_score_report(const ScoreReport& r, const std::string& run_name);

}  // namespace hlsagent
