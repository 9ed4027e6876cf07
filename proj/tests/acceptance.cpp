// Acceptance checks: one PASS/FAIL line per criterion, with its runtime
// against the allowed budget. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "corpus_check.hpp"
#include "hlsagent/agentic_loop.hpp"
#include "hlsagent/cli.hpp"
#include "hlsagent/embedding_space.hpp"
#include "hlsagent/errors.hpp"
#include "hlsagent/evaluation.hpp"
#include "hlsagent/run_io.hpp"
#include "test_support.hpp"

using namespace hlsagent;
using nlohmann::json;
using testsupport::fixture;
using testsupport::slurp;

namespace {

/// Outcome of one criterion: `ok` plus a short detail line.
struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

std::string fmt(double v, const char* f = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. RMSE exactness

Outcome rmse_exactness() {
    Outcome o;
    o.require(std::abs(rmse(std::vector<double>{1, 2}, std::vector<double>{3, 2}) - std::sqrt(2.0)) <= 1e-9,
              "rmse([1,2],[3,2]) != sqrt(2)");
    o.require(std::abs(rmse(std::vector<double>{0}, std::vector<double>{5}) - 5.0) <= 1e-9, "rmse([0],[5]) != 5");
    o.require(rmse(std::vector<double>{4, 4}, std::vector<double>{4, 4}) == 0.0, "rmse(x,x) != 0");

    Dataset truth = load_dataset(fixture("scoring/three_truth.jsonl"));
    auto preds = read_predictions(fixture("scoring/three_predictions.jsonl"));
    const json want = json::parse(slurp(fixture("scoring/three_expected.json")));
    for (const char* mode : {"log2p1", "identity"}) {
        ScoreReport r = score(preds, truth, *parse_latency_transform(mode));
        double mean = 0.0;
        for (auto t : kScoreTargets) {
            const double got = r.per_target_rmse.at(std::string(t));
            mean += got;
            o.require(std::abs(got - want[mode]["per_target_rmse"][std::string(t)].get<double>()) <= 1e-9,
                      std::string(mode) + " " + std::string(t) + " = " + fmt(got, "%.17g"));
        }
        mean /= 6.0;
        o.require(std::abs(r.aggregate - want[mode]["aggregate"].get<double>()) <= 1e-9,
                  std::string(mode) + " aggregate off");
        o.require(std::abs(r.aggregate - mean) <= 1e-12, std::string(mode) + " aggregate is not the mean");
    }

    Dataset one = load_dataset(fixture("dataset/single.jsonl"));
    std::map<std::string, Prediction> wrong;
    Prediction p;
    p.design_id = one.points()[0].point.design_id;
    p.qor = one.points()[0].targets;
    p.qor.valid = !p.qor.valid;
    p.rationale = "flip";
    wrong[p.design_id] = p;
    o.require(std::abs(score(wrong, one).aggregate - 1.0 / 6.0) <= 1e-12, "validity-only error is not 1/6");
    if (o.ok) o.detail = "sqrt(2), single-element, 1/6 and 3-design fixtures exact";
    return o;
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence

Outcome oracle_equivalence() {
    Outcome o;
    std::mt19937_64 rng(20240601);
    std::size_t knn_checks = 0, baseline_checks = 0;
    for (int instance = 0; instance < 200 && o.ok; ++instance) {
        const std::size_t n = 2 + rng() % 499;  // 2..500
        const std::size_t dim = 4 + rng() % 61;  // 4..64
        const bool grid = instance % 3 == 0;    // integer grid: many exact ties
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_int_distribution<int> cell(-1, 1);
        std::uniform_real_distribution<double> u(0.0, 1.0);

        EmbeddingStore store;
        Dataset train;
        std::map<std::string, std::vector<double>> pts;
        std::map<std::string, testsupport::OracleTargets> labels;
        for (std::size_t i = 0; i < n; ++i) {
            const std::string id = "i" + std::to_string(instance) + "-" + std::to_string(rng() % 1000000);
            if (pts.count(id)) continue;
            std::vector<double> v(dim);
            for (auto& x : v) x = grid ? cell(rng) : gauss(rng);
            if (grid) {
                for (std::size_t j = 3; j < dim; ++j) v[j] = 0.0;  // keep duplicates and ties likely
            }
            store.insert(id, v);
            pts[id] = v;
            LabeledDesignPoint lp;
            lp.point.design_id = id;
            lp.targets = {u(rng) < 0.8, u(rng) * 1e6, u(rng), u(rng) * 2, u(rng), u(rng)};
            train.add(lp);
            testsupport::OracleTargets t;
            t.valid = lp.targets.valid;
            const auto nums = numeric_targets(lp.targets);
            for (int j = 0; j < 5; ++j) t.numeric[j] = nums[static_cast<std::size_t>(j)];
            labels[id] = t;
        }

        for (int q = 0; q < 3 && o.ok; ++q) {
            std::vector<double> query(dim);
            for (auto& x : query) x = grid ? cell(rng) : gauss(rng);
            if (grid) {
                for (std::size_t j = 3; j < dim; ++j) query[j] = 0.0;
            }
            const std::size_t k = 1 + rng() % 16;
            auto got = knn(store, query, k);
            auto want = testsupport::oracle_knn(pts, query, k);
            o.require(got.size() == want.size(), "knn size differs in instance " + std::to_string(instance));
            for (std::size_t i = 0; i < got.size() && i < want.size(); ++i) {
                o.require(got[i].design_id == want[i].id && got[i].distance == want[i].distance,
                          "knn differs at rank " + std::to_string(i) + " in instance " + std::to_string(instance));
            }
            ++knn_checks;

            const auto& member = train.points()[rng() % train.size()].point;
            if (train.size() < 2) continue;
            Prediction p = nn_baseline_predict(member, train, store, k);
            auto ob = testsupport::oracle_baseline(pts, labels, member.design_id, k);
            const auto nums = numeric_targets(p.qor);
            bool same = p.qor.valid == ob.targets.valid && std::abs(p.confidence - ob.confidence) <= 1e-12;
            for (int j = 0; j < 5; ++j) same = same && nums[static_cast<std::size_t>(j)] == ob.targets.numeric[j];
            o.require(same, "nn_baseline differs for " + member.design_id);
            ++baseline_checks;
        }
    }
    if (o.ok) {
        o.detail = "200 instances, " + std::to_string(knn_checks) + " knn and " + std::to_string(baseline_checks) +
                   " baseline queries identical";
    }
    return o;
}

// ---------------------------------------------------------------------------
// 3. Parser ground truth

Outcome parser_ground_truth() {
    Outcome o;
    for (const auto& name : testsupport::corpus_kernels()) {
        const auto diffs = testsupport::corpus_mismatches(name);
        o.require(diffs.empty(), diffs.empty() ? "" : diffs.front());
    }
    if (o.ok) o.detail = std::to_string(testsupport::corpus_kernels().size()) + " kernels match their annotations";
    return o;
}

// ---------------------------------------------------------------------------
// 4. Three-cycle loop

std::string prompt_of(const TranscriptLog& log, const std::string& request_id) {
    for (const auto& line : log.lines()) {
        json j = json::parse(line);
        if (j["payload"]["request_id"] != request_id) continue;
        std::string s;
        for (const auto& m : j["payload"]["request"]["messages"]) s += m["content"].get<std::string>() + "\n";
        return s;
    }
    return {};
}

Outcome three_cycle_loop() {
    Outcome o;
    Dataset ds = load_dataset(fixture("mini/mini.jsonl"));
    EmbeddingStore store = load_embeddings(fixture("mini/mini.emb"));
    KernelModels kernels = analyze_kernels(ds);
    PromptBuilder prompts;
    std::vector<DesignPoint> points;
    for (const auto& lp : ds.points()) points.push_back(lp.point);

    auto run_all = [&](MockScript script, std::shared_ptr<TranscriptLog> log) {
        LlmClient client(std::make_shared<MockBackend>(std::move(script)), RetryPolicy{}, nullptr, log);
        LoopConfig cfg;
        cfg.iterations = 3;
        cfg.convergence_epsilon = 0.0;
        EpisodeContext ctx{&ds, &store, &kernels, &client, &prompts, cfg};
        return run_batch(points, ctx, 4);
    };

    // Echo mock: every episode runs the full three cycles.
    auto echo_log = std::make_shared<TranscriptLog>();
    auto outcomes = run_all(MockScript::echo_default(), echo_log);
    for (const auto& out : outcomes) {
        o.require(out.episode.has_value(), out.design_id + " failed: " + out.error_message);
        if (!out.episode) continue;
        const auto& recs = out.episode->records;
        o.require(recs.size() == 3, out.design_id + " has " + std::to_string(recs.size()) + " records");
        for (std::size_t n = 1; n < recs.size(); ++n) {
            const std::string prompt = prompt_of(*echo_log, recs[n].request_ids.front());
            o.require(prompt.find(render_critique(recs[n - 1].critique)) != std::string::npos,
                      out.design_id + " cycle " + std::to_string(n + 1) + " prompt lacks the previous critique");
        }
    }

    // Scripted mock: the cycle-2 answer changes only when the prompt carries
    // the critique of the overshooting cycle-1 latency.
    const std::string overshoot =
        R"({"valid": true, "latency_cycles": 99999999, "util_bram": 0.1, "util_lut": 0.1, "util_ff": 0.1, "util_dsp": 0.1, "rationale": "first guess", "confidence": 0.3})";
    const std::string revised =
        R"({"valid": true, "latency_cycles": 2500, "util_bram": 0.1, "util_lut": 0.1, "util_ff": 0.1, "util_dsp": 0.1, "rationale": "revised after feedback", "confidence": 0.6})";
    auto scripted_log = std::make_shared<TranscriptLog>();
    auto scripted = run_all(MockScript{{{"latency_cycles: predicted 99999999", revised}}, overshoot}, scripted_log);
    std::size_t changed = 0;
    for (const auto& out : scripted) {
        o.require(out.episode.has_value(), out.design_id + " failed: " + out.error_message);
        if (!out.episode) continue;
        const auto& recs = out.episode->records;
        o.require(recs.size() == 3, out.design_id + " scripted run has " + std::to_string(recs.size()) + " records");
        if (recs.size() < 2) continue;
        o.require(recs[0].critique.verdict == Verdict::Revise, out.design_id + " cycle-1 critique did not ask to revise");
        if (!(recs[1].prediction == recs[0].prediction) && recs[1].prediction.qor.latency_cycles == 2500.0) ++changed;
    }
    o.require(changed == scripted.size(), "cycle-2 answer changed in only " + std::to_string(changed) + " episodes");
    if (o.ok) {
        o.detail = std::to_string(outcomes.size()) + " episodes x 3 records; critiques threaded; scripted cycle-2 change in " +
                   std::to_string(changed) + "/" + std::to_string(scripted.size());
    }
    return o;
}

// ---------------------------------------------------------------------------
// 5. t-SNE quality and determinism

Outcome tsne_quality() {
    Outcome o;
    auto clusters = testsupport::gaussian_clusters(3, 30, 16, 8.0, 17);
    EmbeddingStore store;
    std::map<std::string, int> labels;
    for (const auto& [id, lv] : clusters) {
        store.insert(id, lv.second);
        labels[id] = lv.first;
    }
    Projection2D a = tsne_project(store, 20.0, 1000, 123);
    Projection2D b = tsne_project(store, 20.0, 1000, 123);
    std::map<std::string, std::pair<double, double>> xy;
    for (const auto& [id, c] : a.coords) xy[id] = {c.x, c.y};
    const double purity = testsupport::knn_purity(xy, labels, 10);
    o.require(purity >= 0.90, "10-NN purity " + fmt(purity));
    o.require(a.final_kl <= a.initial_kl, "final KL " + fmt(a.final_kl) + " > initial " + fmt(a.initial_kl));
    bool identical = a.coords.size() == b.coords.size() && a.final_kl == b.final_kl;
    for (const auto& [id, c] : a.coords) {
        auto it = b.coords.find(id);
        identical = identical && it != b.coords.end() &&
                    std::memcmp(&it->second.x, &c.x, sizeof(double)) == 0 &&
                    std::memcmp(&it->second.y, &c.y, sizeof(double)) == 0;
    }
    o.require(identical, "two runs with the same seed differ");
    if (o.ok) {
        o.detail = "purity " + fmt(purity, "%.3f") + ", KL " + fmt(a.initial_kl, "%.3f") + " -> " +
                   fmt(a.final_kl, "%.3f") + ", bitwise identical";
    }
    return o;
}

// ---------------------------------------------------------------------------
// 6. Outlier-validity heuristic

Outcome outlier_validity() {
    Outcome o;
    // Synthetic mini-dataset: random pragma assignments over the two mini
    // kernels, about 5% labelled invalid.
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::string> kernel_ids = {"spmv_ellpack", "stencil2d"};
    std::map<std::string, KernelModel> kernels;
    for (const auto& k : kernel_ids) kernels.emplace(k, KernelModel::analyze(k, slurp(fixture("mini/kernels/" + k + ".c"))));

    const std::vector<std::int64_t> factors = {1, 2, 4, 8};
    const std::vector<PipelineMode> modes = {PipelineMode::Off, PipelineMode::Pipeline, PipelineMode::Flatten};
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    std::set<std::string> invalid;
    const int n = 80;
    for (int i = 0; i < n; ++i) {
        const std::string& kid = kernel_ids[static_cast<std::size_t>(i % 2)];
        const KernelModel& k = kernels.at(kid);
        DesignPoint p;
        p.design_id = kid + "-s" + std::to_string(i);
        p.kernel_id = kid;
        for (const auto& s : k.slots) {
            PragmaValue v = s.category == PragmaCategory::Pipe ? PragmaValue{modes[rng() % modes.size()]}
                                                               : PragmaValue{UnrollFactor{factors[rng() % factors.size()]}};
            p.pragmas[s.slot_id] = make_assignment(s.slot_id, s.category, v);
        }
        rows.emplace_back(p.design_id, synthesize_embedding(k, p));
        if (i % 20 == 7) invalid.insert(p.design_id);  // 4 of 80 = 5%
    }

    // Per-dimension spread of the valid designs, then displace every invalid
    // design by 5 sigma along each dimension with a random sign.
    const std::size_t dim = rows.front().second.size();
    std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
    std::size_t nv = 0;
    for (const auto& [id, v] : rows) {
        if (invalid.count(id)) continue;
        ++nv;
        for (std::size_t j = 0; j < dim; ++j) mean[j] += v[j];
    }
    for (auto& m : mean) m /= static_cast<double>(nv);
    for (const auto& [id, v] : rows) {
        if (invalid.count(id)) continue;
        for (std::size_t j = 0; j < dim; ++j) sd[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
    }
    for (auto& s : sd) s = std::sqrt(s / static_cast<double>(nv));
    EmbeddingStore store;
    for (auto& [id, v] : rows) {
        if (invalid.count(id)) {
            for (std::size_t j = 0; j < dim; ++j) v[j] += (rng() % 2 ? 5.0 : -5.0) * sd[j];
        }
        store.insert(id, v);
    }

    Projection2D proj = tsne_project(store, 15.0, 1000, 606 + kTsneSeedOffset);
    const auto flagged = flag_outliers(proj, 3.0);
    std::size_t hits = 0;
    for (const auto& id : flagged) hits += invalid.count(id);
    const double recall = static_cast<double>(hits) / static_cast<double>(invalid.size());
    o.require(recall >= 0.8, "recall " + fmt(recall, "%.2f") + " (" + std::to_string(hits) + "/" +
                                 std::to_string(invalid.size()) + " invalid flagged, " +
                                 std::to_string(flagged.size()) + " flagged in total)");
    if (o.ok) {
        o.detail = "recall " + fmt(recall, "%.2f") + " (" + std::to_string(hits) + "/" + std::to_string(invalid.size()) +
                   "), " + std::to_string(flagged.size()) + " flagged of " + std::to_string(n);
    }
    return o;
}

// ---------------------------------------------------------------------------
// 7. End-to-end offline pipeline

int cli(std::vector<std::string> args, std::string* err = nullptr) {
    std::ostringstream out, e;
    const int code = run_cli(args, out, e);
    if (err) *err = e.str();
    return code;
}

Outcome end_to_end() {
    Outcome o;
    testsupport::TempDir tmp("acceptance");
    const std::string data = fixture("mini/mini.jsonl").string();
    const std::string emb = fixture("mini/mini.emb").string();
    const auto agent = tmp / "agentic";
    const auto base = tmp / "baseline";
    std::string err;

    o.require(cli({"predict", data, "--backend", "mock", "--critic", "numeric", "--iterations", "3", "--k", "8",
                   "--embeddings", emb, "--out", agent.string()},
                  &err) == kExitOk,
              "predict failed: " + err);
    o.require(cli({"score", agent.string(), data}, &err) == kExitOk, "score (agentic) failed: " + err);
    o.require(cli({"baseline", data, "--k", "8", "--embeddings", emb, "--out", base.string()}, &err) == kExitOk,
              "baseline failed: " + err);
    o.require(cli({"score", base.string(), data}, &err) == kExitOk, "score (baseline) failed: " + err);
    if (!o.ok) return o;

    ScoreReport ra = read_report(agent);
    ScoreReport rb = read_report(base);
    double mean = 0.0;
    bool finite = true;
    for (auto t : kScoreTargets) {
        auto it = ra.per_target_rmse.find(std::string(t));
        o.require(it != ra.per_target_rmse.end(), "report lacks " + std::string(t));
        if (it == ra.per_target_rmse.end()) return o;
        finite = finite && std::isfinite(it->second) && it->second >= 0.0;
        mean += it->second;
    }
    o.require(finite, "report has a negative or non-finite RMSE");
    o.require(std::abs(mean / 6.0 - ra.aggregate) <= 1e-12, "aggregate is not the mean of the six RMSEs");
    o.require(ra.n == 24, "report covers " + std::to_string(ra.n) + " designs");
    const double rel = std::abs(ra.aggregate - rb.aggregate) / rb.aggregate;
    o.require(rel <= 0.10, "agentic " + fmt(ra.aggregate) + " vs baseline " + fmt(rb.aggregate));
    if (o.ok) {
        o.detail = "agentic " + fmt(ra.aggregate, "%.6f") + " vs nn-baseline " + fmt(rb.aggregate, "%.6f") +
                   " (relative difference " + fmt(rel, "%.2e") + ")";
    }
    return o;
}

// ---------------------------------------------------------------------------
// 8. Dataset round trip

Outcome dataset_round_trip() {
    Outcome o;
    std::size_t files = 0, records = 0;
    for (const char* rel : {"dataset/single.jsonl", "dataset/empty.jsonl", "dataset/mixed.jsonl", "mini/mini.jsonl",
                            "scoring/three_truth.jsonl"}) {
        Dataset a = load_dataset(fixture(rel));
        Dataset b = parse_dataset(serialize_dataset(a));
        o.require(a.points() == b.points(), std::string(rel) + " does not round-trip");
        ++files;
        records += a.size();
    }
    if (o.ok) o.detail = std::to_string(files) + " fixture files, " + std::to_string(records) + " records field-equal";
    return o;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    // With a criterion number as the only argument, run just that criterion.
    const int only = argc > 1 ? std::atoi(argv[1]) : 0;
    const std::vector<Criterion> criteria = {
        {1, "RMSE exactness", 1.0, rmse_exactness},
        {2, "oracle equivalence (knn, nn baseline)", 30.0, oracle_equivalence},
        {3, "parser ground truth", 1.0, parser_ground_truth},
        {4, "three-cycle loop", 5.0, three_cycle_loop},
        {5, "t-SNE quality and determinism", 10.0, tsne_quality},
        {6, "outlier-validity heuristic", 5.0, outlier_validity},
        {7, "end-to-end offline pipeline", 60.0, end_to_end},
        {8, "dataset round trip", 1.0, dataset_round_trip},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.ok && in_time;
        if (!pass) ++failures;
        std::printf("criterion %d: %s  %s  [%.3f s, limit %.0f s]  %s%s\n", c.id, pass ? "PASS" : "FAIL", c.name, secs,
                    c.budget_s, o.detail.c_str(), in_time ? "" : "  (over time budget)");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
