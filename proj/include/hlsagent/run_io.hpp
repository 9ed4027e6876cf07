#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hlsagent/agentic_loop.hpp"
#include "hlsagent/evaluation.hpp"
#include "hlsagent/reasoning_engine.hpp"

namespace hlsagent {

// Run directory layout.
inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kEpisodesFile = "episodes.jsonl";
inline constexpr std::string_view kTranscriptsFile = "transcripts.jsonl";
inline constexpr std::string_view kPredictionsFile = "predictions.jsonl";
inline constexpr std::string_view kReportJsonFile = "report.json";
inline constexpr std::string_view kReportTextFile = "report.txt";
inline constexpr std::string_view kReportCsvFile = "report.csv";

/// Per-component seeds derive from the top-level seed by fixed offsets.
inline constexpr std::uint64_t kSplitSeedOffset = 1;
inline constexpr std::uint64_t kTsneSeedOffset = 2;
inline constexpr std::uint64_t kJitterSeedOffset = 3;
inline constexpr std::uint64_t kSynthSeedOffset = 4;

struct RunManifest {
    std::string run_name;
    std::string command;  // predict | baseline
    std::string backend_id;
    std::string template_version;
    std::uint64_t seed = 0;
    LoopConfig config;
    std::string method;  // baseline method, or "agentic"
    double test_fraction = 0.0;
    std::size_t workers = 1;
    std::map<std::string, std::string> inputs;  // role -> path
    std::string output_dir;
};

std::string serialize_manifest(const RunManifest& m);
RunManifest parse_manifest(std::string_view text);
/// Throws IoError if the manifest already exists.
void write_manifest(const std::filesystem::path& rundir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& rundir);

std::string serialize_prediction(const Prediction& p);
Prediction parse_prediction_record(std::string_view line, std::size_t line_no);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);
/// Throws MalformedRecord, DuplicateDesignId, IoError.
std::map<std::string, Prediction> read_predictions(const std::filesystem::path& path);

std::string serialize_report(const ScoreReport& r, const std::string& run_name);
ScoreReport parse_report(std::string_view text);
/// Writes report.json, report.txt and report.csv into `rundir`.
void write_report(const std::filesystem::path& rundir, const ScoreReport& r, const std::string& run_name);
ScoreReport read_report(const std::filesystem::path& rundir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace hlsagent
