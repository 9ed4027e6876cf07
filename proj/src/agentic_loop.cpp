#include "hlsagent/agentic_loop.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "hlsagent/errors.hpp"
#include "json.hpp"

namespace hlsagent {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json prediction_json(const Prediction& p) {
    ordered_json j;
    j["design_id"] = p.design_id;
    j["valid"] = p.qor.valid;
    auto values = numeric_targets(p.qor);
    for (std::size_t i = 0; i < kNumericTargets; ++i) j[std::string(kNumericTargetNames[i])] = values[i];
    j["rationale"] = p.rationale;
    j["confidence"] = p.confidence;
    return j;
}

ordered_json critique_json(const Critique& c) {
    ordered_json j;
    j["verdict"] = std::string(to_string(c.verdict));
    j["summary"] = c.summary;
    ordered_json errs = ordered_json::array();
    for (const auto& e : c.per_exemplar_errors) {
        errs.push_back({{"design_id", e.design_id}, {"target", e.target}, {"predicted", e.predicted},
                        {"actual", e.actual}});
    }
    j["errors"] = std::move(errs);
    return j;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// Issues request ids `<episode>:<n>` in call order.
class RequestCounter {
public:
    explicit RequestCounter(std::string episode_id) : episode_id_(std::move(episode_id)) {}
    CallContext next() { return {episode_id_, episode_id_ + ":" + std::to_string(++n_)}; }

private:
    std::string episode_id_;
    int n_ = 0;
};

}  // namespace

std::string_view to_string(CriticMode m) { return m == CriticMode::Numeric ? "numeric" : "llm"; }
std::string_view to_string(AnalysisMode m) { return m == AnalysisMode::Offline ? "offline" : "llm"; }

std::optional<CriticMode> parse_critic_mode(std::string_view s) {
    if (s == "numeric") return CriticMode::Numeric;
    if (s == "llm") return CriticMode::Llm;
    return std::nullopt;
}

std::optional<AnalysisMode> parse_analysis_mode(std::string_view s) {
    if (s == "offline") return AnalysisMode::Offline;
    if (s == "llm") return AnalysisMode::Llm;
    return std::nullopt;
}

void LoopConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
    if (exemplar_k < 1) throw std::invalid_argument("exemplar k must be at least 1");
    if (!std::isfinite(convergence_epsilon) || convergence_epsilon < 0.0) {
        throw std::invalid_argument("convergence epsilon must be a non-negative number");
    }
}

KernelModels analyze_kernels(const Dataset& ds) {
    KernelModels out;
    for (const auto& [id, source] : ds.kernel_sources()) out.emplace(id, KernelModel::analyze(id, source));
    return out;
}

double max_relative_change(const QorVector& a, const QorVector& b) {
    const auto va = numeric_targets(a);
    const auto vb = numeric_targets(b);
    double worst = 0.0;
    for (std::size_t i = 0; i < kNumericTargets; ++i) {
        const double denom = std::max(std::abs(va[i]), std::abs(vb[i]));
        if (denom == 0.0) continue;
        worst = std::max(worst, std::abs(va[i] - vb[i]) / denom);
    }
    return worst;
}

Critique critique_numeric(const Prediction& pred, const std::vector<Exemplar>& exemplars) {
    if (exemplars.empty()) throw std::invalid_argument("numeric critique needs at least one exemplar");
    std::vector<DistanceWeighted> samples;
    samples.reserve(exemplars.size());
    for (const auto& e : exemplars) samples.push_back({e.distance, e.point.targets});
    const QorVector mean = inverse_distance_mean(samples);

    Critique c;
    std::vector<std::string> notes;
    auto list_target = [&](const std::string& target, double predicted, auto actual_of) {
        for (const auto& e : exemplars) {
            c.per_exemplar_errors.push_back({e.point.point.design_id, target, predicted, actual_of(e.point.targets)});
        }
    };

    if (pred.qor.valid != mean.valid) {
        notes.push_back(std::string("valid (predicted ") + (pred.qor.valid ? "true" : "false") +
                        ", weighted majority " + (mean.valid ? "true" : "false") + ")");
        list_target("valid", pred.qor.valid ? 1.0 : 0.0,
                    [](const QorVector& q) { return q.valid ? 1.0 : 0.0; });
    }
    const auto p = numeric_targets(pred.qor);
    const auto m = numeric_targets(mean);
    for (std::size_t i = 0; i < kNumericTargets; ++i) {
        const double dev = std::abs(p[i] - m[i]);
        const bool flagged = i == 0 ? dev > 0.5 * std::abs(m[i]) : dev > 0.15;
        if (!flagged) continue;
        const std::string name(kNumericTargetNames[i]);
        notes.push_back(name + " (predicted " + fmt(p[i]) + ", weighted mean " + fmt(m[i]) + ")");
        list_target(name, p[i], [i](const QorVector& q) { return numeric_targets(q)[i]; });
    }

    if (notes.empty()) {
        c.verdict = Verdict::Accept;
        c.summary = "prediction agrees with the exemplar-weighted mean on every target";
    } else {
        c.verdict = Verdict::Revise;
        c.summary = "prediction deviates from the exemplar-weighted mean on ";
        for (std::size_t i = 0; i < notes.size(); ++i) c.summary += (i ? "; " : "") + notes[i];
    }
    return c;
}

Critique critique_llm(const Prediction& pred, const std::vector<Exemplar>& exemplars, LlmClient& client,
                      const PromptBuilder& prompts, const CallContext& call) {
    const ChatResponse resp = client.complete(prompts.build_critique_prompt(pred, exemplars), call);
    if (auto parsed = parse_critique_response(resp.content)) return *parsed;
    Critique c = critique_numeric(pred, exemplars);
    c.summary = std::string(kCriticFallbackNote) + c.summary;
    return c;
}

Episode run_episode(const DesignPoint& point, const EpisodeContext& ctx) {
    ctx.config.validate();
    auto kit = ctx.kernels->find(point.kernel_id);
    if (kit == ctx.kernels->end()) {
        throw DataError("MissingKernelSource", "no source for kernel \"" + point.kernel_id + "\" of design \"" +
                                                   point.design_id + "\"");
    }
    const KernelModel& kernel = kit->second;
    const AnnotatedDesignGraph graph = apply_pragmas(kernel.cdfg, kernel.tree, kernel.slots, point);

    Episode ep;
    ep.episode_id = point.design_id;
    ep.design_id = point.design_id;
    RequestCounter ids(ep.episode_id);
    LlmClient& client = *ctx.client;
    const PromptBuilder& prompts = *ctx.prompts;

    std::vector<std::string> setup_ids;
    StructureAnalysis structure = offline_structure_analysis(kernel);
    PragmaImpactAnalysis impact = offline_impact_analysis(kernel, point, graph);
    if (ctx.config.analysis_mode == AnalysisMode::Llm) {
        auto call = ids.next();
        setup_ids.push_back(call.request_id);
        structure.prose =
            client.complete(prompts.build_structure_prompt(kernel.kernel_id, kernel.source, kernel.tree, kernel.cdfg),
                            call)
                .content;
        call = ids.next();
        setup_ids.push_back(call.request_id);
        impact.prose =
            client.complete(prompts.build_pragma_impact_prompt(point, structure, graph, kernel.tree, kernel.slots), call)
                .content;
    }

    const auto exemplars = retrieve_exemplars(point, *ctx.train, *ctx.store, ctx.config.exemplar_k);
    if (exemplars.empty()) throw EmptyTrainSet();

    std::optional<std::pair<Prediction, Critique>> prior;
    for (int cycle = 1; cycle <= ctx.config.iterations; ++cycle) {
        IterationRecord rec;
        rec.cycle = cycle;
        if (cycle == 1) rec.request_ids = setup_ids;

        const ChatRequest req = prompts.build_prediction_prompt(point, structure, impact, exemplars, prior);
        auto call = ids.next();
        rec.request_ids.push_back(call.request_id);
        const ChatResponse resp = client.complete(req, call);
        try {
            rec.prediction = parse_prediction_response(resp.content, point.design_id);
        } catch (const DataError& first) {
            call = ids.next();
            rec.request_ids.push_back(call.request_id);
            const ChatResponse fixed = client.complete(prompts.build_repair_prompt(req, resp.content, first.what()), call);
            try {
                rec.prediction = parse_prediction_response(fixed.content, point.design_id);
            } catch (const DataError& second) {
                throw PredictionUnparseable(cycle, second.what());
            }
        }

        if (ctx.config.critic_mode == CriticMode::Llm) {
            call = ids.next();
            rec.request_ids.push_back(call.request_id);
            rec.critique = critique_llm(rec.prediction, exemplars, client, prompts, call);
        } else {
            rec.critique = critique_numeric(rec.prediction, exemplars);
        }

        const bool converged = ctx.config.convergence_epsilon > 0.0 && !ep.records.empty() &&
                               max_relative_change(ep.records.back().prediction.qor, rec.prediction.qor) <=
                                   ctx.config.convergence_epsilon;
        prior = std::make_pair(rec.prediction, rec.critique);
        ep.records.push_back(std::move(rec));
        if (converged) break;
    }
    ep.final = ep.records.back().prediction;
    return ep;
}

std::vector<EpisodeOutcome> run_batch(const std::vector<DesignPoint>& points, const EpisodeContext& ctx,
                                      std::size_t workers) {
    std::vector<EpisodeOutcome> out(points.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};

    auto work = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            EpisodeOutcome& o = out[i];
            o.design_id = points[i].design_id;
            if (abort) {
                o.error_kind = "Skipped";
                o.error_message = "skipped after an earlier backend failure";
                continue;
            }
            try {
                o.episode = run_episode(points[i], ctx);
            } catch (const PredictionUnparseable& e) {
                o.error_kind = e.kind();
                o.error_message = e.what();
                o.error = std::current_exception();
            } catch (const Error& e) {
                o.error_kind = e.kind();
                o.error_message = e.what();
                o.error = std::current_exception();
                if (dynamic_cast<const BackendError*>(&e)) abort = true;
            } catch (const std::exception& e) {
                o.error_kind = "Error";
                o.error_message = e.what();
                o.error = std::current_exception();
            }
        }
    };

    workers = std::max<std::size_t>(1, std::min(workers, points.size()));
    if (workers == 1) {
        work();
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    return out;
}

std::string serialize_episode(const EpisodeOutcome& o) {
    ordered_json j;
    j["episode_id"] = o.episode ? o.episode->episode_id : o.design_id;
    j["design_id"] = o.design_id;
    if (!o.episode) {
        j["error"] = {{"kind", o.error_kind}, {"message", o.error_message}};
        return j.dump();
    }
    ordered_json records = ordered_json::array();
    for (const auto& r : o.episode->records) {
        ordered_json rj;
        rj["cycle"] = r.cycle;
        rj["prediction"] = prediction_json(r.prediction);
        rj["critique"] = critique_json(r.critique);
        rj["request_ids"] = r.request_ids;
        records.push_back(std::move(rj));
    }
    j["records"] = std::move(records);
    j["final"] = prediction_json(o.episode->final);
    return j.dump();
}

}  // namespace hlsagent
