#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hlsagent/dataset.hpp"
#include "hlsagent/embedding_space.hpp"
#include "hlsagent/kernel_analysis.hpp"
#include "hlsagent/llm_gateway.hpp"

namespace hlsagent {

struct StructureAnalysis {
    std::string kernel_id;
    std::string prose;
    std::string loop_summary;
    std::size_t block_count = 0;
};

struct PragmaImpactAnalysis {
    std::string design_id;
    std::map<std::string, std::string> per_slot_notes;
    std::string prose;
};

struct Exemplar {
    LabeledDesignPoint point;
    double distance = 0.0;
};

struct Prediction {
    std::string design_id;
    QorVector qor;
    std::string rationale;
    double confidence = 0.0;
    friend bool operator==(const Prediction&, const Prediction&) = default;
};

enum class Verdict { Accept, Revise };
std::string_view to_string(Verdict v);

struct ExemplarError {
    std::string design_id;
    std::string target;
    double predicted = 0.0;
    double actual = 0.0;
    friend bool operator==(const ExemplarError&, const ExemplarError&) = default;
};

struct Critique {
    std::vector<ExemplarError> per_exemplar_errors;
    std::string summary;
    Verdict verdict = Verdict::Accept;
};

/// The k nearest labeled designs of `train` to `point`, nearest first, never
/// including `point` itself. Throws MissingEmbedding when `point` has no
/// embedding in `store`; train designs without an embedding are skipped.
std::vector<Exemplar> retrieve_exemplars(const DesignPoint& point, const Dataset& train,
                                         const EmbeddingStore& store, std::size_t k);

/// Text of a critique as threaded into the next prediction prompt.
std::string render_critique(const Critique& c);

// ---------------------------------------------------------------------------
// Templates

struct PromptTemplate {
    std::string template_id;  // e.g. "predict/v1"
    std::string system;       // may be empty (repair)
    std::string user;
};

/// Named stage templates (structure, impact, predict, critique, repair) with
/// `{{field}}` placeholders.
class TemplateSet {
public:
    /// The templates compiled into the library from templates/*.tmpl.
    static const TemplateSet& builtin();
    /// Loads `<dir>/<stage>.tmpl` for every stage; throws IoError / TemplateError.
    static TemplateSet load_dir(const std::filesystem::path& dir);
    static PromptTemplate parse(std::string_view text);

    const PromptTemplate& get(const std::string& stage) const;
    /// Comma-joined template ids, recorded in run manifests.
    std::string version() const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

/// Replaces every `{{name}}` by fields[name]; throws TemplateError for
/// placeholders without a value.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& fields);

struct PromptOptions {
    std::string model_name;
    double temperature = 0.0;
    int max_tokens = 1024;
};

/// Deterministic prompt construction: identical inputs give byte-identical
/// requests.
class PromptBuilder {
public:
    explicit PromptBuilder(const TemplateSet& templates = TemplateSet::builtin(), PromptOptions options = {});

    ChatRequest build_structure_prompt(const std::string& kernel_id, const std::string& source,
                                       const LoopTree& tree, const Cdfg& cdfg) const;

    /// Throws UnresolvedSlot when a pragma of `point` is not a slot of the kernel.
    ChatRequest build_pragma_impact_prompt(const DesignPoint& point, const StructureAnalysis& analysis,
                                           const AnnotatedDesignGraph& graph, const LoopTree& tree,
                                           const std::vector<PragmaSlot>& slots) const;

    /// `exemplars` must already be sorted by non-decreasing distance.
    ChatRequest build_prediction_prompt(const DesignPoint& point, const StructureAnalysis& structure,
                                        const PragmaImpactAnalysis& impact,
                                        const std::vector<Exemplar>& exemplars,
                                        const std::optional<std::pair<Prediction, Critique>>& prior) const;

    ChatRequest build_critique_prompt(const Prediction& pred, const std::vector<Exemplar>& exemplars) const;

    /// Original request + the unusable answer + a repair instruction.
    ChatRequest build_repair_prompt(const ChatRequest& original, const std::string& bad_answer,
                                    const std::string& error) const;

    const TemplateSet& templates() const { return *templates_; }

private:
    ChatRequest make(const std::string& stage, const std::map<std::string, std::string>& fields) const;

    const TemplateSet* templates_;
    PromptOptions options_;
};

std::string render_loop_summary(const LoopTree& tree);
std::string render_pragma_table(const DesignPoint& point, const AnnotatedDesignGraph& graph,
                                const LoopTree& tree, const std::vector<PragmaSlot>& slots);
/// One `EXEMPLAR {...}` line per exemplar, in the given order.
std::string render_exemplars(const std::vector<Exemplar>& exemplars);

/// Deterministic stand-ins for the two LLM analysis stages (offline mode).
StructureAnalysis offline_structure_analysis(const KernelModel& kernel);
PragmaImpactAnalysis offline_impact_analysis(const KernelModel& kernel, const DesignPoint& point,
                                             const AnnotatedDesignGraph& graph);

/// Prediction as a single JSON object, the format the prompts ask for.
std::string render_prediction(const Prediction& p);

/// Extracts the first JSON object in `text` and validates it. Throws
/// NoStructuredObject, MissingField, OutOfRange.
Prediction parse_prediction_response(std::string_view text, const std::string& design_id);

/// Parses an LLM critic answer; nullopt when no usable verdict object is found.
std::optional<Critique> parse_critique_response(std::string_view text);

}  // namespace hlsagent
