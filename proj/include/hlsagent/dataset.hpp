#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace hlsagent {

enum class PragmaCategory { Parallel, Pipe, Tile };

enum class PipelineMode { Off, Pipeline, Flatten };

std::string_view to_string(PragmaCategory c);
std::string_view to_string(PipelineMode m);
std::optional<PipelineMode> parse_pipeline_mode(std::string_view s);

/// Category implied by a placeholder name: `__PARA__*`, `__PIPE__*`, `__TILE__*`.
std::optional<PragmaCategory> category_from_slot_id(std::string_view slot_id);

struct UnrollFactor {
    std::int64_t value = 1;
    friend bool operator==(const UnrollFactor&, const UnrollFactor&) = default;
};

using PragmaValue = std::variant<UnrollFactor, PipelineMode>;

/// One placeholder assignment. Factor values apply to PARALLEL and TILE,
/// pipeline modes to PIPE.
struct PragmaAssignment {
    std::string slot_id;
    PragmaCategory category = PragmaCategory::Parallel;
    PragmaValue value = UnrollFactor{};

    std::int64_t factor() const;  // 1 for PIPE
    PipelineMode mode() const;    // Off for PARALLEL/TILE
    friend bool operator==(const PragmaAssignment&, const PragmaAssignment&) = default;
};

/// Validates the invariants (non-empty id, category/value agreement,
/// factor >= 1) and throws InvalidTargetValue naming the slot otherwise.
PragmaAssignment make_assignment(std::string slot_id, PragmaCategory category, PragmaValue value);

struct DesignPoint {
    std::string design_id;
    std::string kernel_id;
    std::map<std::string, PragmaAssignment> pragmas;
    friend bool operator==(const DesignPoint&, const DesignPoint&) = default;
};

struct QorVector {
    bool valid = false;
    double latency_cycles = 0.0;
    double util_bram = 0.0;
    double util_lut = 0.0;
    double util_ff = 0.0;
    double util_dsp = 0.0;

    friend bool operator==(const QorVector&, const QorVector&) = default;
};

inline constexpr std::size_t kNumericTargets = 5;
inline constexpr std::array<std::string_view, kNumericTargets> kNumericTargetNames = {
    "latency_cycles", "util_bram", "util_lut", "util_ff", "util_dsp"};

/// Numeric targets in kNumericTargetNames order.
std::array<double, kNumericTargets> numeric_targets(const QorVector& q);
void set_numeric_target(QorVector& q, std::size_t index, double value);

/// Throws InvalidTargetValue if any numeric field is negative or non-finite.
void check_qor(const QorVector& q);

/// Inverse-distance weighting shared by the baseline, the numeric critic and
/// the echo mock: weight 1 / (d + 1e-9); numeric targets are weighted means,
/// validity is the weighted majority (ties count as valid).
inline constexpr double kDistanceRegularizer = 1e-9;

struct DistanceWeighted {
    double distance = 0.0;
    QorVector qor;
};

QorVector inverse_distance_mean(const std::vector<DistanceWeighted>& samples);

struct LabeledDesignPoint {
    DesignPoint point;
    QorVector targets;
    friend bool operator==(const LabeledDesignPoint&, const LabeledDesignPoint&) = default;
};

/// Ordered, duplicate-free collection of labeled design points plus optional
/// kernel sources. Iteration follows insertion order.
class Dataset {
public:
    Dataset() = default;

    /// Throws DuplicateDesignId.
    void add(LabeledDesignPoint p);
    void set_kernel_source(const std::string& kernel_id, std::string source);

    const std::vector<LabeledDesignPoint>& points() const { return points_; }
    const std::map<std::string, std::string>& kernel_sources() const { return kernel_sources_; }
    const std::string* kernel_source(const std::string& kernel_id) const;
    const LabeledDesignPoint* find(const std::string& design_id) const;

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.points_ == b.points_ && a.kernel_sources_ == b.kernel_sources_;
    }

private:
    std::vector<LabeledDesignPoint> points_;
    std::unordered_map<std::string, std::size_t> index_;
    std::map<std::string, std::string> kernel_sources_;
};

/// Parses one canonical record. `line_no` only feeds error messages.
LabeledDesignPoint parse_record(std::string_view line, std::size_t line_no);
std::string serialize_record(const LabeledDesignPoint& p);

/// Loads a line-delimited dataset file. Kernel sources are read from
/// `<dir of path>/kernels/<kernel_id>.c` when present.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view text);
std::string serialize_dataset(const Dataset& ds);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

struct Split {
    Dataset train;
    Dataset test;
};

/// Seeded shuffle partition; |test| = round(test_fraction * |ds|). Both sides
/// keep the original relative order.
Split split_dataset(const Dataset& ds, double test_fraction, std::uint64_t seed);

struct TargetRange {
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

struct UnresolvedSlotRef {
    std::string design_id;
    std::string slot_id;
};

struct ValidationReport {
    std::size_t total = 0;
    std::size_t invalid_count = 0;
    std::map<std::string, std::size_t> per_kernel;
    std::map<std::string, TargetRange> ranges;  // keyed by numeric target name
    std::vector<UnresolvedSlotRef> unresolved_slots;
    std::vector<std::string> kernels_without_source;
    std::map<std::string, std::string> kernel_parse_errors;
};

ValidationReport validate_dataset(const Dataset& ds);
std::string render_validation_report(const ValidationReport& r);

}  // namespace hlsagent
