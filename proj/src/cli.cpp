#include "hlsagent/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "hlsagent/agentic_loop.hpp"
#include "hlsagent/dataset.hpp"
#include "hlsagent/embedding_space.hpp"
#include "hlsagent/errors.hpp"
#include "hlsagent/evaluation.hpp"
#include "hlsagent/kernel_analysis.hpp"
#include "hlsagent/llm_gateway.hpp"
#include "hlsagent/reasoning_engine.hpp"
#include "hlsagent/run_io.hpp"
#include "json.hpp"

namespace hlsagent {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

/// Invalid option combinations detected after parsing; exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string kernel_model_json(const KernelModel& k) {
    ordered_json j;
    j["kernel_id"] = k.kernel_id;
    ordered_json loops = ordered_json::array();
    for (const auto& n : k.tree.nodes) {
        ordered_json l;
        l["loop_id"] = n.loop_id;
        l["header_line"] = n.header_line;
        l["header"] = n.header;
        l["trip_count"] = n.static_trip_count ? ordered_json(*n.static_trip_count) : ordered_json(nullptr);
        l["parent"] = n.parent.empty() ? ordered_json(nullptr) : ordered_json(n.parent);
        l["children"] = n.children;
        loops.push_back(std::move(l));
    }
    j["loops"] = std::move(loops);
    ordered_json slots = ordered_json::array();
    for (const auto& s : k.slots) {
        slots.push_back({{"slot_id", s.slot_id},
                         {"category", std::string(to_string(s.category))},
                         {"loop", s.attached_loop},
                         {"line", s.source_line}});
    }
    j["slots"] = std::move(slots);
    ordered_json nodes = ordered_json::array();
    for (const auto& n : k.cdfg.nodes) {
        nodes.push_back({{"id", n.node_id}, {"kind", std::string(to_string(n.kind))}, {"label", n.label}});
    }
    j["nodes"] = std::move(nodes);
    ordered_json edges = ordered_json::array();
    for (const auto& e : k.cdfg.edges) {
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"kind", std::string(to_string(e.kind))}});
    }
    j["edges"] = std::move(edges);
    return j.dump(2) + "\n";
}

std::string pragma_label(const DesignPoint& p, PragmaCategory category) {
    std::string label;
    for (const auto& [slot, a] : p.pragmas) {
        if (a.category != category) continue;
        if (!label.empty()) label += "/";
        label += category == PragmaCategory::Pipe ? std::string(to_string(a.mode())) : std::to_string(a.factor());
    }
    return label.empty() ? "default" : label;
}

struct Inputs {
    Dataset all;
    Dataset pool;  // exemplar / training pool
    std::vector<DesignPoint> targets;
    EmbeddingStore store;
};

// Loads the dataset and embeddings and picks the designs to predict: every
// design (leave-one-out) or, with a test fraction, the test side of a seeded
// split with the train side as pool.
Inputs load_inputs(const std::string& dataset_path, const std::string& embeddings_path, double test_fraction,
                   std::uint64_t seed) {
    Inputs in;
    in.all = load_dataset(dataset_path);
    in.store = embeddings_path.empty() ? synthesize_embeddings(in.all) : load_embeddings(embeddings_path);
    if (test_fraction > 0.0) {
        Split s = split_dataset(in.all, test_fraction, seed + kSplitSeedOffset);
        in.pool = std::move(s.train);
        for (const auto& lp : s.test.points()) in.targets.push_back(lp.point);
    } else {
        in.pool = in.all;
        for (const auto& lp : in.all.points()) in.targets.push_back(lp.point);
    }
    return in;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_text_file(path, text);
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestArgs {
    std::string dataset;
    bool validate = false;
    std::string out;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
    Dataset ds = load_dataset(a.dataset);
    std::set<std::string> kernels;
    for (const auto& p : ds.points()) kernels.insert(p.point.kernel_id);
    out << "loaded " << ds.size() << " designs over " << kernels.size() << " kernels from " << a.dataset << " ("
        << ds.kernel_sources().size() << " kernel sources)\n";
    if (!a.out.empty()) {
        save_dataset(ds, a.out);
        out << "wrote " << a.out << "\n";
    }
    if (!a.validate) return kExitOk;
    const ValidationReport r = validate_dataset(ds);
    out << render_validation_report(r);
    if (!r.unresolved_slots.empty() || !r.kernel_parse_errors.empty()) {
        throw DataError("ValidationFailed", "dataset has unresolved pragma slots or unparseable kernels");
    }
    return kExitOk;
}

struct AnalyzeArgs {
    std::string kernel;
    std::string kernel_id;
    std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    const std::string id = a.kernel_id.empty() ? fs::path(a.kernel).stem().string() : a.kernel_id;
    const KernelModel k = KernelModel::analyze(id, read_text_file(a.kernel));
    out << "kernel " << id << ": " << k.tree.nodes.size() << " loops, " << k.slots.size() << " pragma slots, "
        << k.cdfg.nodes.size() << " CDFG nodes, " << k.cdfg.edges.size() << " edges\n";
    out << render_loop_summary(k.tree) << "\n";
    for (const auto& s : k.slots) {
        out << "slot " << s.slot_id << " (" << to_string(s.category) << ") on " << s.attached_loop << ", line "
            << s.source_line << "\n";
    }
    if (!a.out.empty()) {
        write_text_file(a.out, kernel_model_json(k));
        out << "wrote " << a.out << "\n";
    }
    return kExitOk;
}

struct ProjectArgs {
    std::string embeddings;
    std::string dataset;
    std::string kernel;
    double perplexity = 30.0;
    std::uint64_t seed = 0;
    int iterations = 1000;
    std::string out_csv = "projection.csv";
    std::string out_svg = "projection.svg";
    std::string labels_by;
    std::string category = "PARALLEL";
    double outliers_z = 0.0;
};

int cmd_project(const ProjectArgs& a, std::ostream& out) {
    if (a.embeddings.empty() && a.dataset.empty()) throw UsageError("project needs an embeddings file or --dataset");
    if (!a.labels_by.empty() && a.dataset.empty()) throw UsageError("--labels-by needs --dataset");
    if (!a.kernel.empty() && a.dataset.empty()) throw UsageError("--kernel needs --dataset");

    Dataset ds;
    if (!a.dataset.empty()) ds = load_dataset(a.dataset);
    EmbeddingStore store = a.embeddings.empty() ? synthesize_embeddings(ds) : load_embeddings(a.embeddings);
    if (!a.kernel.empty()) {
        std::vector<std::string> ids;
        for (const auto& lp : ds.points()) {
            if (lp.point.kernel_id == a.kernel) ids.push_back(lp.point.design_id);
        }
        store = store.subset(ids);
    }

    TsneOptions opt;
    opt.perplexity = a.perplexity;
    opt.iterations = a.iterations;
    opt.seed = a.seed + kTsneSeedOffset;
    const Projection2D proj = tsne_project(store, opt);

    std::map<std::string, std::string> labels;
    if (!a.labels_by.empty()) {
        std::optional<PragmaCategory> category;
        if (a.labels_by == "pragma-category") {
            if (a.category == "PARALLEL") category = PragmaCategory::Parallel;
            else if (a.category == "PIPE") category = PragmaCategory::Pipe;
            else if (a.category == "TILE") category = PragmaCategory::Tile;
            else throw UsageError("--category must be PARALLEL, PIPE or TILE");
        } else if (a.labels_by != "validity") {
            throw UsageError("--labels-by must be pragma-category or validity");
        }
        for (const auto& lp : ds.points()) {
            if (!proj.coords.count(lp.point.design_id)) continue;
            labels[lp.point.design_id] =
                category ? pragma_label(lp.point, *category) : (lp.targets.valid ? "valid" : "invalid");
        }
    }
    emit_projection(proj, labels, a.out_csv, a.out_svg);
    out << "projected " << proj.coords.size() << " designs (perplexity " << a.perplexity << ", seed " << opt.seed
        << "); KL " << proj.initial_kl << " -> " << proj.final_kl << "\n";
    out << "wrote " << a.out_csv << " and " << a.out_svg << "\n";

    if (a.outliers_z > 0.0) {
        const auto flagged = flag_outliers(proj, a.outliers_z);
        std::size_t invalid = 0;
        for (const auto& id : flagged) {
            const auto* lp = ds.find(id);
            if (lp && !lp->targets.valid) ++invalid;
        }
        out << "outliers at z=" << a.outliers_z << ": " << flagged.size();
        if (!ds.empty()) out << " (" << invalid << " invalid)";
        out << "\n";
        for (const auto& id : flagged) out << "  " << id << "\n";
    }
    return kExitOk;
}

struct PredictArgs {
    std::string dataset;
    std::string backend = "mock";
    std::string mock_script;
    std::string embeddings;
    std::string templates;
    std::string out;
    std::string run_name;
    int iterations = 3;
    std::size_t k = 8;
    std::string critic = "numeric";
    std::string analysis = "offline";
    double epsilon = 0.0;
    std::size_t workers = 1;
    double test_fraction = 0.0;
    std::uint64_t seed = 0;
    double rate = 1.0;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
    LoopConfig config;
    config.iterations = a.iterations;
    config.exemplar_k = a.k;
    config.convergence_epsilon = a.epsilon;
    config.critic_mode = *parse_critic_mode(a.critic);
    config.analysis_mode = *parse_analysis_mode(a.analysis);
    try {
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (a.backend == "http" && !a.mock_script.empty()) throw UsageError("--mock-script applies to --backend mock");

    Inputs in = load_inputs(a.dataset, a.embeddings, a.test_fraction, a.seed);
    const KernelModels kernels = analyze_kernels(in.all);
    const TemplateSet templates = a.templates.empty() ? TemplateSet::builtin() : TemplateSet::load_dir(a.templates);

    std::shared_ptr<Backend> backend;
    std::shared_ptr<RateLimiter> limiter;
    if (a.backend == "mock") {
        backend = std::make_shared<MockBackend>(a.mock_script.empty() ? MockScript::echo_default()
                                                                      : MockScript::load(a.mock_script));
        limiter = std::make_shared<RateLimiter>(0.0);
    } else {
        backend = std::make_shared<HttpBackend>(HttpBackendConfig::from_env());
        limiter = std::make_shared<RateLimiter>(a.rate, 5.0);
    }

    const fs::path rundir = a.out;
    RunManifest m;
    m.run_name = a.run_name.empty() ? rundir.filename().string() : a.run_name;
    m.command = "predict";
    m.method = "agentic";
    m.backend_id = backend->id();
    m.template_version = templates.version();
    m.seed = a.seed;
    m.config = config;
    m.test_fraction = a.test_fraction;
    m.workers = a.workers;
    m.inputs = {{"dataset", a.dataset}};
    if (!a.embeddings.empty()) m.inputs["embeddings"] = a.embeddings;
    if (!a.mock_script.empty()) m.inputs["mock_script"] = a.mock_script;
    if (!a.templates.empty()) m.inputs["templates"] = a.templates;
    m.output_dir = rundir.string();
    write_manifest(rundir, m);

    auto transcript = std::make_shared<TranscriptLog>(rundir / kTranscriptsFile);
    RetryPolicy retry;
    retry.jitter_seed = a.seed + kJitterSeedOffset;
    LlmClient client(backend, retry, limiter, transcript);
    const PromptBuilder prompts(templates, PromptOptions{HttpBackendConfig::from_env().model});

    EpisodeContext ctx;
    ctx.train = &in.pool;
    ctx.store = &in.store;
    ctx.kernels = &kernels;
    ctx.client = &client;
    ctx.prompts = &prompts;
    ctx.config = config;
    const auto outcomes = run_batch(in.targets, ctx, a.workers);

    std::vector<std::string> episode_lines;
    std::vector<Prediction> preds;
    std::size_t failed = 0;
    bool backend_failure = false;
    for (const auto& o : outcomes) {
        episode_lines.push_back(serialize_episode(o));
        if (o.episode) {
            preds.push_back(o.episode->final);
            continue;
        }
        ++failed;
        if (o.error_kind == "Skipped") continue;
        err << "hlsagent: episode " << o.design_id << " failed [" << o.error_kind << "]: " << o.error_message << "\n";
        try {
            if (o.error) std::rethrow_exception(o.error);
        } catch (const BackendError&) {
            backend_failure = true;
        } catch (...) {
        }
    }
    write_lines(rundir / kEpisodesFile, episode_lines);
    write_predictions(rundir / kPredictionsFile, preds);
    out << "wrote " << outcomes.size() << " episodes (" << failed << " failed) to " << rundir.string() << "\n";
    if (failed == 0) return kExitOk;
    return backend_failure ? kExitBackend : kExitData;
}

struct BaselineArgs {
    std::string dataset;
    std::string embeddings;
    std::string out;
    std::string run_name;
    std::string method = "nn";
    std::size_t k = 5;
    double test_fraction = 0.0;
    std::uint64_t seed = 0;
};

int cmd_baseline(const BaselineArgs& a, std::ostream& out) {
    if (a.k < 1) throw UsageError("--k must be at least 1");
    Inputs in = load_inputs(a.dataset, a.embeddings, a.test_fraction, a.seed);
    const fs::path rundir = a.out;
    RunManifest m;
    m.run_name = a.run_name.empty() ? rundir.filename().string() : a.run_name;
    m.command = "baseline";
    m.method = a.method;
    m.backend_id = "none";
    m.seed = a.seed;
    m.config.exemplar_k = a.k;
    m.test_fraction = a.test_fraction;
    m.inputs = {{"dataset", a.dataset}};
    if (!a.embeddings.empty()) m.inputs["embeddings"] = a.embeddings;
    m.output_dir = rundir.string();
    write_manifest(rundir, m);

    std::vector<Prediction> preds;
    for (const auto& p : in.targets) {
        if (a.method == "nn") {
            preds.push_back(nn_baseline_predict(p, in.pool, in.store, a.k));
        } else {
            // Leave-one-out for the majority baseline too.
            Dataset pool;
            for (const auto& lp : in.pool.points()) {
                if (lp.point.design_id != p.design_id) pool.add(lp);
            }
            preds.push_back(majority_baseline_predict(p, pool));
        }
    }
    write_predictions(rundir / kPredictionsFile, preds);
    write_text_file(rundir / kEpisodesFile, "");
    write_text_file(rundir / kTranscriptsFile, "");
    out << "wrote " << preds.size() << " " << a.method << "-baseline predictions to " << rundir.string() << "\n";
    return kExitOk;
}

struct ScoreArgs {
    std::string rundir;
    std::string truth;
    std::string transform = "log2p1";
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
    const fs::path rundir = a.rundir;
    std::string run_name = rundir.filename().string();
    Dataset truth = load_dataset(a.truth);
    if (fs::exists(rundir / kManifestFile)) {
        const RunManifest m = read_manifest(rundir);
        run_name = m.run_name;
        if (m.test_fraction > 0.0) truth = split_dataset(truth, m.test_fraction, m.seed + kSplitSeedOffset).test;
    }
    const auto preds = read_predictions(rundir / kPredictionsFile);
    const ScoreReport r = score(preds, truth, *parse_latency_transform(a.transform));
    write_report(rundir, r, run_name);
    out << render_score_report(r, run_name);
    return kExitOk;
}

struct CompareArgs {
    std::vector<std::string> rundirs;
    std::string out_csv;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
    std::map<std::string, ScoreReport> reports;
    for (const auto& dir : a.rundirs) {
        std::string name = fs::path(dir).filename().string();
        if (fs::exists(fs::path(dir) / kManifestFile)) name = read_manifest(dir).run_name;
        if (reports.count(name)) name = dir;
        reports[name] = read_report(dir);
    }
    const ComparisonTable t = compare_runs(reports);
    out << t.text;
    if (!a.out_csv.empty()) write_text_file(a.out_csv, t.csv);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Predict HLS design quality of result with an LLM predictor/criticiser loop", "hlsagent"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Load and check a dataset file");
    c_ingest->add_option("dataset", ingest.dataset, "Line-delimited dataset file")->required();
    c_ingest->add_flag("--validate", ingest.validate, "Print a validation report");
    c_ingest->add_option("--out", ingest.out, "Write the canonical serialization here");

    AnalyzeArgs analyze;
    auto* c_analyze = app.add_subcommand("analyze", "Extract loops, pragma slots and the CDFG of a kernel");
    c_analyze->add_option("kernel", analyze.kernel, "Kernel C source")->required();
    c_analyze->add_option("--kernel-id", analyze.kernel_id, "Kernel id (default: file stem)");
    c_analyze->add_option("--out", analyze.out, "Write the analysis as JSON");

    ProjectArgs project;
    auto* c_project = app.add_subcommand("project", "t-SNE projection of design embeddings");
    c_project->add_option("embeddings", project.embeddings, "Embedding file (id,c1,c2,...)");
    c_project->add_option("--dataset", project.dataset, "Dataset for labels, or for synthesized embeddings");
    c_project->add_option("--kernel", project.kernel, "Only project designs of this kernel");
    c_project->add_option("--perplexity", project.perplexity, "t-SNE perplexity")->capture_default_str();
    c_project->add_option("--seed", project.seed, "Top-level seed")->capture_default_str();
    c_project->add_option("--iterations", project.iterations, "Gradient steps")->capture_default_str()
        ->check(CLI::PositiveNumber);
    c_project->add_option("--out-csv", project.out_csv, "CSV output")->capture_default_str();
    c_project->add_option("--out-svg", project.out_svg, "SVG output")->capture_default_str();
    c_project->add_option("--labels-by", project.labels_by, "pragma-category or validity");
    c_project->add_option("--category", project.category, "PARALLEL, PIPE or TILE for pragma-category labels")
        ->capture_default_str();
    c_project->add_option("--outliers-z", project.outliers_z, "Report outliers at this z threshold");

    PredictArgs predict;
    auto* c_predict = app.add_subcommand("predict", "Run the predictor/criticiser loop over a dataset");
    c_predict->add_option("dataset", predict.dataset, "Labeled dataset (exemplar pool and targets)")->required();
    c_predict->add_option("--backend", predict.backend, "mock or http")
        ->check(CLI::IsMember({"mock", "http"}))->capture_default_str();
    c_predict->add_option("--mock-script", predict.mock_script, "Mock rules (default: echo the exemplar mean)");
    c_predict->add_option("--embeddings", predict.embeddings, "Embedding file (default: synthesized)");
    c_predict->add_option("--templates", predict.templates, "Directory of prompt templates (default: built in)");
    c_predict->add_option("--out", predict.out, "Run directory")->required();
    c_predict->add_option("--run-name", predict.run_name, "Run name (default: run directory name)");
    c_predict->add_option("--iterations", predict.iterations, "Predictor/criticiser cycles")->capture_default_str();
    c_predict->add_option("--k", predict.k, "Exemplars per prompt")->capture_default_str();
    c_predict->add_option("--critic", predict.critic, "numeric or llm")
        ->check(CLI::IsMember({"numeric", "llm"}))->capture_default_str();
    c_predict->add_option("--analysis", predict.analysis, "offline or llm structure/impact analysis")
        ->check(CLI::IsMember({"offline", "llm"}))->capture_default_str();
    c_predict->add_option("--epsilon", predict.epsilon, "Early-stop threshold on relative change (0 = off)")
        ->capture_default_str();
    c_predict->add_option("--workers", predict.workers, "Concurrent episodes")->capture_default_str()
        ->check(CLI::PositiveNumber);
    c_predict->add_option("--test-fraction", predict.test_fraction, "Predict only a seeded test split")
        ->check(CLI::Range(0.0, 1.0));
    c_predict->add_option("--seed", predict.seed, "Top-level seed")->capture_default_str();
    c_predict->add_option("--rate", predict.rate, "HTTP requests per second")->capture_default_str();

    BaselineArgs baseline;
    auto* c_baseline = app.add_subcommand("baseline", "Offline baseline predictions");
    c_baseline->add_option("dataset", baseline.dataset, "Labeled dataset")->required();
    c_baseline->add_option("--embeddings", baseline.embeddings, "Embedding file (default: synthesized)");
    c_baseline->add_option("--out", baseline.out, "Run directory")->required();
    c_baseline->add_option("--run-name", baseline.run_name, "Run name (default: run directory name)");
    c_baseline->add_option("--method", baseline.method, "nn or majority")
        ->check(CLI::IsMember({"nn", "majority"}))->capture_default_str();
    c_baseline->add_option("--k", baseline.k, "Neighbours")->capture_default_str();
    c_baseline->add_option("--test-fraction", baseline.test_fraction, "Predict only a seeded test split")
        ->check(CLI::Range(0.0, 1.0));
    c_baseline->add_option("--seed", baseline.seed, "Top-level seed")->capture_default_str();

    ScoreArgs score_args;
    auto* c_score = app.add_subcommand("score", "Score a run directory against ground truth");
    c_score->add_option("rundir", score_args.rundir, "Run directory")->required();
    c_score->add_option("truth", score_args.truth, "Labeled dataset")->required();
    c_score->add_option("--latency-transform", score_args.transform, "log2p1 or identity")
        ->check(CLI::IsMember({"log2p1", "identity"}))->capture_default_str();

    CompareArgs compare;
    auto* c_compare = app.add_subcommand("compare", "Rank scored runs by aggregate RMSE");
    c_compare->add_option("rundirs", compare.rundirs, "Scored run directories")->required();
    c_compare->add_option("--out-csv", compare.out_csv, "Also write the table as CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::ParseError& e) {
        err << "hlsagent: usage: " << e.what() << " (run with --help for more information)\n";
        return kExitUsage;
    }

    try {
        if (c_ingest->parsed()) return cmd_ingest(ingest, out);
        if (c_analyze->parsed()) return cmd_analyze(analyze, out);
        if (c_project->parsed()) return cmd_project(project, out);
        if (c_predict->parsed()) return cmd_predict(predict, out, err);
        if (c_baseline->parsed()) return cmd_baseline(baseline, out);
        if (c_score->parsed()) return cmd_score(score_args, out);
        if (c_compare->parsed()) return cmd_compare(compare, out);
    } catch (const UsageError& e) {
        err << "hlsagent: usage: " << e.what() << "\n";
        return kExitUsage;
    } catch (const BackendError& e) {
        err << "hlsagent: error [" << e.kind() << "]: " << e.what() << "\n";
        return kExitBackend;
    } catch (const Error& e) {
        err << "hlsagent: error [" << e.kind() << "]: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "hlsagent: error [IoError]: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "hlsagent: error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace hlsagent
