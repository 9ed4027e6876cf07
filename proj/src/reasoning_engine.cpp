#include "hlsagent/reasoning_engine.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hlsagent/errors.hpp"
#include "json.hpp"

namespace hlsagent {

namespace detail {
const std::map<std::string, std::string>& builtin_template_sources();
}

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string> kStages = {"structure", "impact", "predict", "critique", "repair"};

std::string num(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

std::string trip_text(const std::optional<std::int64_t>& t) {
    return t ? std::to_string(*t) : std::string("unknown");
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

ordered_json pragmas_json(const DesignPoint& p) {
    ordered_json j = ordered_json::object();
    for (const auto& [slot, a] : p.pragmas) {
        if (a.category == PragmaCategory::Pipe) {
            j[slot] = std::string(to_string(a.mode()));
        } else {
            j[slot] = a.factor();
        }
    }
    return j;
}

ordered_json qor_json(const QorVector& q) {
    ordered_json j;
    j["valid"] = q.valid;
    auto values = numeric_targets(q);
    for (std::size_t i = 0; i < kNumericTargets; ++i) j[std::string(kNumericTargetNames[i])] = values[i];
    return j;
}

// Calls `accept` on each balanced `{...}` substring that parses as a JSON
// object, in order of appearance, until it returns true.
template <typename F>
bool scan_json_objects(std::string_view text, F&& accept) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        std::size_t end = std::string_view::npos;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                end = i;
                break;
            }
        }
        if (end == std::string_view::npos) continue;
        json j = json::parse(text.substr(start, end - start + 1), nullptr, /*allow_exceptions=*/false);
        if (j.is_object() && accept(j)) return true;
    }
    return false;
}

}  // namespace

std::vector<Exemplar> retrieve_exemplars(const DesignPoint& point, const Dataset& train,
                                         const EmbeddingStore& store, std::size_t k) {
    const std::vector<double>* query = store.find(point.design_id);
    if (!query) throw MissingEmbedding(point.design_id);
    auto neighbors = knn(store, *query, k, [&](const std::string& id) {
        return id == point.design_id || train.find(id) == nullptr;
    });
    std::vector<Exemplar> out;
    out.reserve(neighbors.size());
    for (const auto& n : neighbors) out.push_back({*train.find(n.design_id), n.distance});
    return out;
}

std::string_view to_string(Verdict v) { return v == Verdict::Accept ? "accept" : "revise"; }

std::string render_critique(const Critique& c) {
    std::string out = "verdict: " + std::string(to_string(c.verdict)) + "\n";
    out += "summary: " + c.summary + "\n";
    if (c.per_exemplar_errors.empty()) {
        out += "errors: none";
        return out;
    }
    out += "errors:";
    for (const auto& e : c.per_exemplar_errors) {
        out += "\n- " + e.design_id + " " + e.target + ": predicted " + num(e.predicted) + ", actual " +
               num(e.actual);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Templates

PromptTemplate TemplateSet::parse(std::string_view text) {
    PromptTemplate t;
    std::istringstream in{std::string(text)};
    std::string line;
    std::string* section = nullptr;
    std::string system, user;
    bool seen_section = false;
    while (std::getline(in, line)) {
        if (!seen_section && line.starts_with("#")) {
            constexpr std::string_view kKey = "# template:";
            if (line.starts_with(kKey)) {
                auto id = line.substr(kKey.size());
                id.erase(0, id.find_first_not_of(' '));
                t.template_id = id;
            }
            continue;
        }
        if (line == "[system]") {
            section = &system;
            seen_section = true;
            continue;
        }
        if (line == "[user]") {
            section = &user;
            seen_section = true;
            continue;
        }
        if (!section) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            throw TemplateError("template text outside a [system] or [user] section");
        }
        *section += line;
        *section += '\n';
    }
    auto strip = [](std::string s) {
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        return s;
    };
    t.system = strip(system);
    t.user = strip(user);
    if (t.template_id.empty()) throw TemplateError("template has no '# template: <id>' header");
    if (t.user.empty()) throw TemplateError("template " + t.template_id + " has no [user] section");
    return t;
}

const TemplateSet& TemplateSet::builtin() {
    static const TemplateSet set = [] {
        TemplateSet s;
        for (const auto& [name, text] : detail::builtin_template_sources()) {
            s.templates_[name] = parse(text);
        }
        return s;
    }();
    return set;
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
    TemplateSet s;
    for (const auto& stage : kStages) {
        auto path = dir / (stage + ".tmpl");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open template " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        s.templates_[stage] = parse(buf.str());
    }
    return s;
}

const PromptTemplate& TemplateSet::get(const std::string& stage) const {
    auto it = templates_.find(stage);
    if (it == templates_.end()) throw TemplateError("no template for stage \"" + stage + "\"");
    return it->second;
}

std::string TemplateSet::version() const {
    std::vector<std::string> ids;
    for (const auto& stage : kStages) {
        auto it = templates_.find(stage);
        if (it != templates_.end()) ids.push_back(it->second.template_id);
    }
    return join(ids, ",");
}

std::string render_template(std::string_view text, const std::map<std::string, std::string>& fields) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("unterminated placeholder");
        out.append(text.substr(pos, open - pos));
        const std::string name(text.substr(open + 2, close - open - 2));
        auto it = fields.find(name);
        if (it == fields.end()) throw TemplateError("no value for placeholder {{" + name + "}}");
        out += it->second;
        pos = close + 2;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Renderers

std::string render_loop_summary(const LoopTree& tree) {
    if (tree.nodes.empty()) return "no loops detected";
    std::vector<std::string> lines;
    for (const auto& n : tree.nodes) {
        std::string line(2 * tree.depth(n.loop_id), ' ');
        line += n.loop_id + " (line " + std::to_string(n.header_line) + "): " + n.header +
                "  trip count " + trip_text(n.static_trip_count);
        if (!n.children.empty()) line += "; contains " + join(n.children, ", ");
        lines.push_back(std::move(line));
    }
    return join(lines, "\n");
}

std::string render_pragma_table(const DesignPoint& point, const AnnotatedDesignGraph& graph,
                                const LoopTree& tree, const std::vector<PragmaSlot>& slots) {
    if (point.pragmas.empty()) {
        return "All pragmas at defaults: no unrolling (PARALLEL factor 1), pipelining off, no tiling "
               "(TILE factor 1).";
    }
    std::vector<std::string> lines;
    for (const auto& [slot_id, a] : point.pragmas) {
        auto it = std::find_if(slots.begin(), slots.end(),
                               [&](const PragmaSlot& s) { return s.slot_id == slot_id; });
        if (it == slots.end()) throw UnresolvedSlot(slot_id);
        const LoopNode* loop = tree.find(it->attached_loop);
        const auto ann = graph.annotations.find(it->attached_loop);
        if (!loop || ann == graph.annotations.end()) throw UnresolvedSlot(slot_id);
        std::string setting = a.category == PragmaCategory::Pipe
                                  ? "mode " + std::string(to_string(a.mode()))
                                  : "factor " + std::to_string(a.factor());
        lines.push_back("- " + slot_id + " (" + std::string(to_string(a.category)) + ") on " +
                        it->attached_loop + ": " + setting + "; static trip count " +
                        trip_text(loop->static_trip_count) + "; derived trip count " +
                        trip_text(ann->second.derived_trip_count));
    }
    return join(lines, "\n");
}

std::string render_exemplars(const std::vector<Exemplar>& exemplars) {
    if (exemplars.empty()) return "(no training designs available)";
    std::vector<std::string> lines;
    for (const auto& e : exemplars) {
        ordered_json j;
        j["design_id"] = e.point.point.design_id;
        j["kernel"] = e.point.point.kernel_id;
        j["distance"] = e.distance;
        j["pragmas"] = pragmas_json(e.point.point);
        j["targets"] = qor_json(e.point.targets);
        lines.push_back("EXEMPLAR " + j.dump());
    }
    return join(lines, "\n");
}

std::string render_prediction(const Prediction& p) {
    ordered_json j = qor_json(p.qor);
    j["rationale"] = p.rationale;
    j["confidence"] = p.confidence;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Offline analyses

StructureAnalysis offline_structure_analysis(const KernelModel& k) {
    StructureAnalysis a;
    a.kernel_id = k.kernel_id;
    a.loop_summary = render_loop_summary(k.tree);
    a.block_count = k.cdfg.count(CdfgNodeKind::Block) - 1;  // minus the synthetic entry

    std::ostringstream os;
    const auto& loops = k.tree.nodes;
    std::size_t max_depth = 0;
    for (const auto& n : loops) max_depth = std::max(max_depth, k.tree.depth(n.loop_id) + 1);
    os << "Kernel " << k.kernel_id << " has " << loops.size() << " loop(s) in " << k.tree.roots.size()
       << " top-level nest(s), maximum nesting depth " << max_depth << ". ";
    os << "Straight-line code forms " << a.block_count << " block(s) with "
       << k.cdfg.count(CdfgNodeKind::Statement) << " statement(s), linked by "
       << k.cdfg.count(CdfgEdgeKind::Data) << " name-level data dependence(s).";

    // Heaviest nest by product of known trip counts along a root-to-leaf path.
    std::string heaviest;
    double heaviest_iters = -1.0;
    std::function<void(const LoopNode&, double, std::string)> walk = [&](const LoopNode& n, double iters,
                                                                         std::string path) {
        iters *= static_cast<double>(n.static_trip_count.value_or(1));
        path += path.empty() ? n.loop_id : " > " + n.loop_id;
        if (n.children.empty()) {
            if (iters > heaviest_iters) {
                heaviest_iters = iters;
                heaviest = path;
            }
            return;
        }
        for (const auto& c : n.children) walk(*k.tree.find(c), iters, path);
    };
    for (const auto& r : k.tree.roots) walk(*k.tree.find(r), 1.0, "");

    for (const auto& n : loops) {
        os << "\n" << n.loop_id << " iterates " << trip_text(n.static_trip_count) << " time(s)";
        if (!n.parent.empty()) os << " inside " << n.parent;
        os << ".";
    }
    if (!heaviest.empty()) {
        os << "\nThe nest " << heaviest << " executes about " << num(heaviest_iters)
           << " innermost iterations and dominates the critical path.";
    }
    a.prose = os.str();
    return a;
}

PragmaImpactAnalysis offline_impact_analysis(const KernelModel& k, const DesignPoint& point,
                                             const AnnotatedDesignGraph& graph) {
    PragmaImpactAnalysis out;
    out.design_id = point.design_id;
    std::vector<std::string> lines;
    for (const auto& [slot_id, a] : point.pragmas) {
        const PragmaSlot* slot = k.slot(slot_id);
        if (!slot) throw UnresolvedSlot(slot_id);
        const LoopNode* loop = k.tree.find(slot->attached_loop);
        const LoopAnnotation& ann = graph.annotations.at(slot->attached_loop);
        const std::string& lid = slot->attached_loop;
        const std::string inner = loop->children.empty() ? "" : join(loop->children, ", ");
        std::ostringstream note;
        switch (a.category) {
            case PragmaCategory::Parallel:
                if (a.factor() == 1) {
                    note << "PARALLEL factor 1 leaves " << lid << " rolled.";
                    break;
                }
                note << "PARALLEL factor " << a.factor() << " replicates the body of " << lid << " "
                     << a.factor() << " times (trip count " << trip_text(loop->static_trip_count)
                     << " -> " << trip_text(ann.derived_trip_count)
                     << " sequential iterations), shortening its share of the critical path while "
                        "multiplying LUT/FF/DSP use and concurrent memory accesses.";
                if (loop->static_trip_count && a.factor() >= *loop->static_trip_count) {
                    note << " The factor covers the whole trip count, so " << lid << " is fully unrolled.";
                }
                if (!inner.empty()) note << " Nested loops " << inner << " are replicated with it.";
                break;
            case PragmaCategory::Pipe:
                switch (a.mode()) {
                    case PipelineMode::Off:
                        note << "PIPE off: iterations of " << lid << " run back to back without overlap.";
                        break;
                    case PipelineMode::Pipeline:
                        note << "PIPE pipeline: iterations of " << lid
                             << " overlap, so its latency approaches trip count times the initiation "
                                "interval.";
                        if (!inner.empty()) {
                            note << " Inner loops " << inner
                                 << " must be fully unrolled to build the pipeline, which sharply raises "
                                    "resource use and can make the design invalid.";
                        }
                        break;
                    case PipelineMode::Flatten:
                        note << "PIPE flatten: the nest under " << lid
                             << " is flattened into a single pipelined loop, removing loop-entry overhead "
                                "between nest levels.";
                        break;
                }
                break;
            case PragmaCategory::Tile:
                if (a.factor() == 1) {
                    note << "TILE factor 1 leaves " << lid << " untiled.";
                    break;
                }
                note << "TILE factor " << a.factor() << " strip-mines " << lid << " into tiles of "
                     << a.factor() << " iterations (" << trip_text(ann.derived_trip_count)
                     << " tile iterations remain), trading BRAM buffers for data reuse.";
                break;
        }
        out.per_slot_notes[slot_id] = note.str();
        lines.push_back(slot_id + ": " + note.str());
    }
    if (lines.empty()) {
        out.prose = "All pragmas at defaults: every loop stays rolled, unpipelined and untiled.";
    } else {
        out.prose = "Design " + point.design_id + " assigns " + std::to_string(point.pragmas.size()) + " of " +
                    std::to_string(k.slots.size()) + " pragma slot(s); the rest stay at defaults.\n" +
                    join(lines, "\n");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prompt builder

PromptBuilder::PromptBuilder(const TemplateSet& templates, PromptOptions options)
    : templates_(&templates), options_(std::move(options)) {}

ChatRequest PromptBuilder::make(const std::string& stage, const std::map<std::string, std::string>& fields) const {
    const PromptTemplate& t = templates_->get(stage);
    ChatRequest req;
    if (!t.system.empty()) req.messages.push_back({Role::System, render_template(t.system, fields)});
    req.messages.push_back({Role::User, render_template(t.user, fields)});
    req.template_id = t.template_id;
    req.model_name = options_.model_name;
    req.temperature = options_.temperature;
    req.max_tokens = options_.max_tokens;
    return req;
}

ChatRequest PromptBuilder::build_structure_prompt(const std::string& kernel_id, const std::string& source,
                                                  const LoopTree& tree, const Cdfg& cdfg) const {
    return make("structure", {{"kernel_id", kernel_id},
                              {"source", source},
                              {"loop_summary", render_loop_summary(tree)},
                              {"block_count", std::to_string(cdfg.count(CdfgNodeKind::Block) - 1)},
                              {"loop_count", std::to_string(cdfg.count(CdfgNodeKind::Loop))},
                              {"statement_count", std::to_string(cdfg.count(CdfgNodeKind::Statement))},
                              {"data_edge_count", std::to_string(cdfg.count(CdfgEdgeKind::Data))}});
}

ChatRequest PromptBuilder::build_pragma_impact_prompt(const DesignPoint& point, const StructureAnalysis& analysis,
                                                      const AnnotatedDesignGraph& graph, const LoopTree& tree,
                                                      const std::vector<PragmaSlot>& slots) const {
    if (analysis.kernel_id != point.kernel_id) {
        throw std::invalid_argument("structure analysis is for kernel " + analysis.kernel_id);
    }
    return make("impact", {{"kernel_id", point.kernel_id},
                           {"design_id", point.design_id},
                           {"structure", analysis.prose},
                           {"pragma_table", render_pragma_table(point, graph, tree, slots)}});
}

ChatRequest PromptBuilder::build_prediction_prompt(
    const DesignPoint& point, const StructureAnalysis& structure, const PragmaImpactAnalysis& impact,
    const std::vector<Exemplar>& exemplars, const std::optional<std::pair<Prediction, Critique>>& prior) const {
    for (std::size_t i = 1; i < exemplars.size(); ++i) {
        if (exemplars[i].distance < exemplars[i - 1].distance) {
            throw std::invalid_argument("exemplars must be sorted by distance");
        }
    }
    std::string prior_text;
    if (prior) {
        prior_text = "\nYour previous prediction:\n" + render_prediction(prior->first) +
                     "\n\nFeedback from the criticiser:\n" + render_critique(prior->second) +
                     "\n\nRevise the prediction where the feedback is justified and keep it where it is not.\n";
    }
    return make("predict", {{"design_id", point.design_id},
                            {"kernel_id", point.kernel_id},
                            {"structure", structure.prose},
                            {"impact", impact.prose},
                            {"exemplars", render_exemplars(exemplars)},
                            {"prior", prior_text}});
}

ChatRequest PromptBuilder::build_critique_prompt(const Prediction& pred, const std::vector<Exemplar>& exemplars) const {
    return make("critique", {{"design_id", pred.design_id},
                             {"prediction", render_prediction(pred)},
                             {"exemplars", render_exemplars(exemplars)}});
}

ChatRequest PromptBuilder::build_repair_prompt(const ChatRequest& original, const std::string& bad_answer,
                                               const std::string& error) const {
    const PromptTemplate& t = templates_->get("repair");
    ChatRequest req = original;
    req.messages.push_back({Role::Assistant, bad_answer});
    req.messages.push_back({Role::User, render_template(t.user, {{"error", error}})});
    req.template_id = original.template_id + "+" + t.template_id;
    return req;
}

// ---------------------------------------------------------------------------
// Parsing

Prediction parse_prediction_response(std::string_view text, const std::string& design_id) {
    json obj;
    if (!scan_json_objects(text, [&](const json& j) {
            obj = j;
            return true;
        })) {
        throw NoStructuredObject();
    }

    Prediction p;
    p.design_id = design_id;
    auto field = [&](const char* name) -> const json& {
        auto it = obj.find(name);
        if (it == obj.end() || it->is_null()) throw MissingField(name);
        return *it;
    };

    const json& valid = field("valid");
    if (valid.is_boolean()) {
        p.qor.valid = valid.get<bool>();
    } else if (valid.is_number_integer() && (valid.get<int>() == 0 || valid.get<int>() == 1)) {
        p.qor.valid = valid.get<int>() == 1;
    } else {
        throw OutOfRange("valid", valid.dump());
    }
    for (std::size_t i = 0; i < kNumericTargets; ++i) {
        const std::string name(kNumericTargetNames[i]);
        const json& v = field(name.c_str());
        if (!v.is_number()) throw OutOfRange(name, v.dump());
        const double x = v.get<double>();
        if (!std::isfinite(x) || x < 0.0) throw OutOfRange(name, v.dump());
        set_numeric_target(p.qor, i, x);
    }
    const json& rationale = field("rationale");
    if (!rationale.is_string() || rationale.get<std::string>().empty()) throw MissingField("rationale");
    p.rationale = rationale.get<std::string>();
    const json& conf = field("confidence");
    if (!conf.is_number()) throw OutOfRange("confidence", conf.dump());
    p.confidence = conf.get<double>();
    if (!std::isfinite(p.confidence) || p.confidence < 0.0 || p.confidence > 1.0) {
        throw OutOfRange("confidence", conf.dump());
    }
    return p;
}

std::optional<Critique> parse_critique_response(std::string_view text) {
    std::optional<Critique> out;
    scan_json_objects(text, [&](const json& j) {
        auto v = j.find("verdict");
        if (v == j.end() || !v->is_string()) return false;
        Critique c;
        if (*v == "accept") c.verdict = Verdict::Accept;
        else if (*v == "revise") c.verdict = Verdict::Revise;
        else return false;
        if (auto s = j.find("summary"); s != j.end() && s->is_string()) c.summary = s->get<std::string>();
        if (auto errs = j.find("errors"); errs != j.end()) {
            if (!errs->is_array()) return false;
            for (const auto& e : *errs) {
                if (!e.is_object()) return false;
                ExemplarError ee;
                ee.design_id = e.value("design_id", std::string());
                ee.target = e.value("target", std::string());
                auto pr = e.find("predicted");
                auto ac = e.find("actual");
                if (pr != e.end() && pr->is_number()) ee.predicted = pr->get<double>();
                if (ac != e.end() && ac->is_number()) ee.actual = ac->get<double>();
                if (ee.target.empty()) return false;
                c.per_exemplar_errors.push_back(std::move(ee));
            }
        }
        out = std::move(c);
        return true;
    });
    return out;
}

}  // namespace hlsagent
