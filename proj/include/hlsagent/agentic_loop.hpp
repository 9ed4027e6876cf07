#pragma once

#include <cstddef>
#include <exception>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hlsagent/dataset.hpp"
#include "hlsagent/embedding_space.hpp"
#include "hlsagent/kernel_analysis.hpp"
#include "hlsagent/llm_gateway.hpp"
#include "hlsagent/reasoning_engine.hpp"

namespace hlsagent {

enum class CriticMode { Numeric, Llm };
enum class AnalysisMode { Offline, Llm };

std::string_view to_string(CriticMode m);
std::string_view to_string(AnalysisMode m);
std::optional<CriticMode> parse_critic_mode(std::string_view s);
std::optional<AnalysisMode> parse_analysis_mode(std::string_view s);

struct LoopConfig {
    int iterations = 3;
    std::size_t exemplar_k = 8;
    double convergence_epsilon = 0.0;  // 0 disables early stopping
    CriticMode critic_mode = CriticMode::Numeric;
    AnalysisMode analysis_mode = AnalysisMode::Offline;

    /// Throws std::invalid_argument for iterations < 1, k < 1 or a negative
    /// or non-finite epsilon.
    void validate() const;
};

struct IterationRecord {
    int cycle = 0;  // 1-based
    Prediction prediction;
    Critique critique;
    std::vector<std::string> request_ids;  // transcript entries issued during this cycle
};

struct Episode {
    std::string episode_id;
    std::string design_id;
    std::vector<IterationRecord> records;
    Prediction final;
};

/// Kernel models keyed by kernel id, analysed once and shared read-only by
/// all episodes.
using KernelModels = std::map<std::string, KernelModel>;

/// Analyses every kernel source of `ds`. Throws the kernel parser's errors.
KernelModels analyze_kernels(const Dataset& ds);

struct EpisodeContext {
    const Dataset* train = nullptr;  // exemplar pool
    const EmbeddingStore* store = nullptr;
    const KernelModels* kernels = nullptr;
    LlmClient* client = nullptr;
    const PromptBuilder* prompts = nullptr;
    LoopConfig config;
};

/// Predict, critique and refine for at most config.iterations cycles.
/// Throws PredictionUnparseable when a prediction is still unusable after one
/// repair re-ask; backend errors propagate.
Episode run_episode(const DesignPoint& point, const EpisodeContext& ctx);

/// Largest relative change over the five numeric targets, with
/// |a - b| / max(|a|, |b|) per target and 0 when both are 0.
double max_relative_change(const QorVector& a, const QorVector& b);

/// Deterministic critic: flags targets where the prediction deviates from the
/// exemplar-distance-weighted mean (latency: > 50% relative; utilizations:
/// > 0.15 absolute; validity: disagrees with the weighted majority).
/// Requires non-empty exemplars (std::invalid_argument otherwise).
Critique critique_numeric(const Prediction& pred, const std::vector<Exemplar>& exemplars);

inline constexpr std::string_view kCriticFallbackNote = "critic answer unparseable; numeric critique used: ";

/// Asks the model for a verdict; falls back to critique_numeric (noted in the
/// summary) when the answer has no usable verdict object.
Critique critique_llm(const Prediction& pred, const std::vector<Exemplar>& exemplars, LlmClient& client,
                      const PromptBuilder& prompts, const CallContext& call);

struct EpisodeOutcome {
    std::string design_id;
    std::optional<Episode> episode;
    std::string error_kind;  // empty on success
    std::string error_message;
    std::exception_ptr error;
};

/// Runs one episode per point on up to `workers` threads. Results follow the
/// input order. After a backend failure other than PredictionUnparseable the
/// remaining episodes are skipped with error kind "Skipped".
std::vector<EpisodeOutcome> run_batch(const std::vector<DesignPoint>& points, const EpisodeContext& ctx,
                                      std::size_t workers);

/// One line of the episodes log.
std::string serialize_episode(const EpisodeOutcome& outcome);

}  // namespace hlsagent
