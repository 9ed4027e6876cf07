#include "hlsagent/run_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hlsagent/errors.hpp"
#include "json.hpp"

namespace hlsagent {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

template <typename J>
const J& require(const J& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw DataError("MalformedRecord", where + ": missing \"" + key + "\"");
    return *it;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

std::string serialize_manifest(const RunManifest& m) {
    ordered_json j;
    j["run_name"] = m.run_name;
    j["command"] = m.command;
    j["method"] = m.method;
    j["backend_id"] = m.backend_id;
    j["template_version"] = m.template_version;
    j["seed"] = m.seed;
    j["config"] = {{"iterations", m.config.iterations},
                   {"exemplar_k", m.config.exemplar_k},
                   {"convergence_epsilon", m.config.convergence_epsilon},
                   {"critic_mode", std::string(to_string(m.config.critic_mode))},
                   {"analysis_mode", std::string(to_string(m.config.analysis_mode))}};
    j["test_fraction"] = m.test_fraction;
    j["workers"] = m.workers;
    j["inputs"] = m.inputs;
    j["output_dir"] = m.output_dir;
    return j.dump(2) + "\n";
}

RunManifest parse_manifest(std::string_view text) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (!j.is_object()) throw DataError("MalformedRecord", "manifest is not a JSON object");
    try {
        RunManifest m;
        m.run_name = require(j, "run_name", "manifest").get<std::string>();
        m.command = require(j, "command", "manifest").get<std::string>();
        m.method = j.value("method", std::string());
        m.backend_id = j.value("backend_id", std::string());
        m.template_version = j.value("template_version", std::string());
        m.seed = j.value("seed", std::uint64_t{0});
        if (auto c = j.find("config"); c != j.end() && c->is_object()) {
            m.config.iterations = c->value("iterations", 3);
            m.config.exemplar_k = c->value("exemplar_k", std::size_t{8});
            m.config.convergence_epsilon = c->value("convergence_epsilon", 0.0);
            m.config.critic_mode = parse_critic_mode(c->value("critic_mode", std::string("numeric")))
                                       .value_or(CriticMode::Numeric);
            m.config.analysis_mode = parse_analysis_mode(c->value("analysis_mode", std::string("offline")))
                                         .value_or(AnalysisMode::Offline);
        }
        m.test_fraction = j.value("test_fraction", 0.0);
        m.workers = j.value("workers", std::size_t{1});
        if (auto in = j.find("inputs"); in != j.end()) m.inputs = in->get<std::map<std::string, std::string>>();
        m.output_dir = j.value("output_dir", std::string());
        return m;
    } catch (const json::exception& e) {
        throw DataError("MalformedRecord", std::string("manifest: ") + e.what());
    }
}

void write_manifest(const std::filesystem::path& rundir, const RunManifest& m) {
    const auto path = rundir / kManifestFile;
    if (std::filesystem::exists(path)) throw IoError(path.string() + " already exists; use a fresh run directory");
    write_text_file(path, serialize_manifest(m));
}

RunManifest read_manifest(const std::filesystem::path& rundir) {
    return parse_manifest(read_text_file(rundir / kManifestFile));
}

// ---------------------------------------------------------------------------
// Predictions

std::string serialize_prediction(const Prediction& p) {
    ordered_json j;
    j["design_id"] = p.design_id;
    j["valid"] = p.qor.valid;
    const auto v = numeric_targets(p.qor);
    for (std::size_t i = 0; i < kNumericTargets; ++i) j[std::string(kNumericTargetNames[i])] = v[i];
    j["rationale"] = p.rationale;
    j["confidence"] = p.confidence;
    return j.dump();
}

Prediction parse_prediction_record(std::string_view line, std::size_t line_no) {
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!j.is_object()) throw MalformedRecord(line_no, "not a JSON object");
    auto id = j.find("design_id");
    if (id == j.end() || !id->is_string()) throw MalformedRecord(line_no, "missing design_id");
    try {
        return parse_prediction_response(line, id->get<std::string>());
    } catch (const DataError& e) {
        throw MalformedRecord(line_no, e.what());
    }
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
    std::string text;
    for (const auto& p : preds) text += serialize_prediction(p) + "\n";
    write_text_file(path, text);
}

std::map<std::string, Prediction> read_predictions(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::map<std::string, Prediction> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Prediction p = parse_prediction_record(line, line_no);
        const std::string id = p.design_id;
        if (!out.emplace(id, std::move(p)).second) throw DuplicateDesignId(id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string serialize_report(const ScoreReport& r, const std::string& run_name) {
    ordered_json j;
    j["run_name"] = run_name;
    j["n"] = r.n;
    j["latency_transform"] = std::string(to_string(r.latency_transform));
    ordered_json per = ordered_json::object();
    for (auto t : kScoreTargets) per[std::string(t)] = r.per_target_rmse.at(std::string(t));
    j["per_target_rmse"] = std::move(per);
    j["aggregate"] = r.aggregate;
    j["aggregate_definition"] = "arithmetic mean of the six per-target RMSE values";
    j["classification"] = {{"accuracy", r.classification.accuracy},
                           {"precision", r.classification.precision},
                           {"recall", r.classification.recall},
                           {"f1", r.classification.f1}};
    return j.dump(2) + "\n";
}

ScoreReport parse_report(std::string_view text) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (!j.is_object()) throw DataError("MalformedRecord", "report is not a JSON object");
    try {
        ScoreReport r;
        r.n = require(j, "n", "report").get<std::size_t>();
        r.latency_transform = parse_latency_transform(j.value("latency_transform", std::string("log2p1")))
                                  .value_or(LatencyTransform::Log2p1);
        const json& per = require(j, "per_target_rmse", "report");
        for (auto t : kScoreTargets) r.per_target_rmse[std::string(t)] = require(per, std::string(t).c_str(), "report").get<double>();
        r.aggregate = require(j, "aggregate", "report").get<double>();
        const json& c = require(j, "classification", "report");
        r.classification.accuracy = c.value("accuracy", 0.0);
        r.classification.precision = c.value("precision", 0.0);
        r.classification.recall = c.value("recall", 0.0);
        r.classification.f1 = c.value("f1", 0.0);
        return r;
    } catch (const json::exception& e) {
        throw DataError("MalformedRecord", std::string("report: ") + e.what());
    }
}

void write_report(const std::filesystem::path& rundir, const ScoreReport& r, const std::string& run_name) {
    write_text_file(rundir / kReportJsonFile, serialize_report(r, run_name));
    write_text_file(rundir / kReportTextFile, render_score_report(r, run_name));
    write_text_file(rundir / kReportCsvFile, compare_runs({{run_name, r}}).csv);
}

ScoreReport read_report(const std::filesystem::path& rundir) {
    return parse_report(read_text_file(rundir / kReportJsonFile));
}

}  // namespace hlsagent
