#include "hlsagent/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "hlsagent/errors.hpp"
#include "hlsagent/kernel_analysis.hpp"
#include "json.hpp"

namespace hlsagent {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Shortest text that reads back to the same double.
std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

PragmaAssignment parse_pragma(const std::string& slot_id, const json& v, std::size_t line_no) {
    auto category = category_from_slot_id(slot_id);
    if (!category) {
        throw MalformedRecord(line_no, "pragma slot \"" + slot_id + "\" has no known category prefix");
    }
    if (*category == PragmaCategory::Pipe) {
        if (!v.is_string()) {
            throw MalformedRecord(line_no, "PIPE slot \"" + slot_id + "\" needs a string value");
        }
        auto mode = parse_pipeline_mode(v.get<std::string>());
        if (!mode) {
            throw MalformedRecord(line_no, "PIPE slot \"" + slot_id + "\" has unknown mode \"" +
                                               v.get<std::string>() + "\"");
        }
        return make_assignment(slot_id, *category, *mode);
    }
    if (!v.is_number_integer()) {
        throw MalformedRecord(line_no, "slot \"" + slot_id + "\" needs an integer factor");
    }
    auto factor = v.get<std::int64_t>();
    if (factor < 1) {
        throw MalformedRecord(line_no, "slot \"" + slot_id + "\" has factor < 1");
    }
    return make_assignment(slot_id, *category, UnrollFactor{factor});
}

double read_target(const json& targets, std::string_view name, bool required, std::size_t line_no) {
    auto it = targets.find(std::string(name));
    if (it == targets.end() || it->is_null()) {
        if (required) throw MalformedRecord(line_no, "missing target \"" + std::string(name) + "\"");
        return 0.0;
    }
    if (!it->is_number()) throw InvalidTargetValue(std::string(name), it->dump());
    double v = it->get<double>();
    if (!std::isfinite(v) || v < 0.0) throw InvalidTargetValue(std::string(name), format_double(v));
    return v;
}

}  // namespace

std::string_view to_string(PragmaCategory c) {
    switch (c) {
        case PragmaCategory::Parallel: return "PARALLEL";
        case PragmaCategory::Pipe: return "PIPE";
        case PragmaCategory::Tile: return "TILE";
    }
    return "?";
}

std::string_view to_string(PipelineMode m) {
    switch (m) {
        case PipelineMode::Off: return "off";
        case PipelineMode::Pipeline: return "pipeline";
        case PipelineMode::Flatten: return "flatten";
    }
    return "?";
}

std::optional<PipelineMode> parse_pipeline_mode(std::string_view s) {
    if (s == "off") return PipelineMode::Off;
    if (s == "pipeline") return PipelineMode::Pipeline;
    if (s == "flatten") return PipelineMode::Flatten;
    return std::nullopt;
}

std::optional<PragmaCategory> category_from_slot_id(std::string_view slot_id) {
    if (slot_id.starts_with("__PARA__")) return PragmaCategory::Parallel;
    if (slot_id.starts_with("__PIPE__")) return PragmaCategory::Pipe;
    if (slot_id.starts_with("__TILE__")) return PragmaCategory::Tile;
    return std::nullopt;
}

std::int64_t PragmaAssignment::factor() const {
    if (auto* f = std::get_if<UnrollFactor>(&value)) return f->value;
    return 1;
}

PipelineMode PragmaAssignment::mode() const {
    if (auto* m = std::get_if<PipelineMode>(&value)) return *m;
    return PipelineMode::Off;
}

PragmaAssignment make_assignment(std::string slot_id, PragmaCategory category, PragmaValue value) {
    if (slot_id.empty()) throw InvalidTargetValue("slot_id", "\"\"");
    bool is_mode = std::holds_alternative<PipelineMode>(value);
    if (is_mode != (category == PragmaCategory::Pipe)) {
        throw InvalidTargetValue(slot_id, "value kind does not match category " +
                                              std::string(to_string(category)));
    }
    if (!is_mode && std::get<UnrollFactor>(value).value < 1) {
        throw InvalidTargetValue(slot_id, std::to_string(std::get<UnrollFactor>(value).value));
    }
    return PragmaAssignment{std::move(slot_id), category, value};
}

std::array<double, kNumericTargets> numeric_targets(const QorVector& q) {
    return {q.latency_cycles, q.util_bram, q.util_lut, q.util_ff, q.util_dsp};
}

void set_numeric_target(QorVector& q, std::size_t index, double value) {
    switch (index) {
        case 0: q.latency_cycles = value; break;
        case 1: q.util_bram = value; break;
        case 2: q.util_lut = value; break;
        case 3: q.util_ff = value; break;
        case 4: q.util_dsp = value; break;
        default: throw std::out_of_range("numeric target index");
    }
}

void check_qor(const QorVector& q) {
    auto values = numeric_targets(q);
    for (std::size_t i = 0; i < kNumericTargets; ++i) {
        if (!std::isfinite(values[i]) || values[i] < 0.0) {
            throw InvalidTargetValue(std::string(kNumericTargetNames[i]), format_double(values[i]));
        }
    }
}

QorVector inverse_distance_mean(const std::vector<DistanceWeighted>& samples) {
    if (samples.empty()) throw std::invalid_argument("inverse_distance_mean of no samples");
    std::array<double, kNumericTargets> acc{};
    double total = 0.0, valid_w = 0.0, invalid_w = 0.0;
    for (const auto& s : samples) {
        const double w = 1.0 / (s.distance + kDistanceRegularizer);
        auto values = numeric_targets(s.qor);
        for (std::size_t i = 0; i < kNumericTargets; ++i) acc[i] += w * values[i];
        total += w;
        (s.qor.valid ? valid_w : invalid_w) += w;
    }
    QorVector out;
    for (std::size_t i = 0; i < kNumericTargets; ++i) set_numeric_target(out, i, acc[i] / total);
    out.valid = valid_w >= invalid_w;
    return out;
}

void Dataset::add(LabeledDesignPoint p) {
    auto [it, inserted] = index_.try_emplace(p.point.design_id, points_.size());
    if (!inserted) throw DuplicateDesignId(p.point.design_id);
    points_.push_back(std::move(p));
}

void Dataset::set_kernel_source(const std::string& kernel_id, std::string source) {
    kernel_sources_[kernel_id] = std::move(source);
}

const std::string* Dataset::kernel_source(const std::string& kernel_id) const {
    auto it = kernel_sources_.find(kernel_id);
    return it == kernel_sources_.end() ? nullptr : &it->second;
}

const LabeledDesignPoint* Dataset::find(const std::string& design_id) const {
    auto it = index_.find(design_id);
    return it == index_.end() ? nullptr : &points_[it->second];
}

LabeledDesignPoint parse_record(std::string_view line, std::size_t line_no) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::parse_error& e) {
        throw MalformedRecord(line_no, std::string("not a JSON object: ") + e.what());
    } catch (const json::out_of_range& e) {
        throw MalformedRecord(line_no, std::string("number out of range: ") + e.what());
    }
    if (!rec.is_object()) throw MalformedRecord(line_no, "record is not an object");

    auto require_string = [&](const char* key) {
        auto it = rec.find(key);
        if (it == rec.end() || !it->is_string() || it->get<std::string>().empty()) {
            throw MalformedRecord(line_no, std::string("missing or empty \"") + key + "\"");
        }
        return it->get<std::string>();
    };

    LabeledDesignPoint out;
    out.point.design_id = require_string("design_id");
    out.point.kernel_id = require_string("kernel");

    if (auto it = rec.find("pragmas"); it != rec.end() && !it->is_null()) {
        if (!it->is_object()) throw MalformedRecord(line_no, "\"pragmas\" must be an object");
        for (const auto& [slot, value] : it->items()) {
            out.point.pragmas.emplace(slot, parse_pragma(slot, value, line_no));
        }
    }

    auto targets = rec.find("targets");
    if (targets == rec.end() || !targets->is_object()) {
        throw MalformedRecord(line_no, "missing \"targets\" object");
    }
    auto valid = targets->find("valid");
    if (valid == targets->end() || !valid->is_boolean()) {
        throw MalformedRecord(line_no, "\"targets.valid\" must be a boolean");
    }
    out.targets.valid = valid->get<bool>();
    // Invalid designs may omit numerics; they default to 0.
    const bool required = out.targets.valid;
    for (std::size_t i = 0; i < kNumericTargets; ++i) {
        set_numeric_target(out.targets, i,
                           read_target(*targets, kNumericTargetNames[i], required, line_no));
    }
    return out;
}

std::string serialize_record(const LabeledDesignPoint& p) {
    ordered_json rec;
    rec["design_id"] = p.point.design_id;
    rec["kernel"] = p.point.kernel_id;
    ordered_json pragmas = ordered_json::object();
    for (const auto& [slot, a] : p.point.pragmas) {
        if (a.category == PragmaCategory::Pipe) {
            pragmas[slot] = std::string(to_string(a.mode()));
        } else {
            pragmas[slot] = a.factor();
        }
    }
    rec["pragmas"] = std::move(pragmas);
    ordered_json targets;
    targets["valid"] = p.targets.valid;
    auto values = numeric_targets(p.targets);
    for (std::size_t i = 0; i < kNumericTargets; ++i) {
        targets[std::string(kNumericTargetNames[i])] = values[i];
    }
    rec["targets"] = std::move(targets);
    return rec.dump();
}

Dataset parse_dataset(std::string_view text) {
    Dataset ds;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        if (!is_blank(line)) ds.add(parse_record(line, line_no));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    Dataset ds = parse_dataset(buf.str());

    auto kernel_dir = path.parent_path() / "kernels";
    std::set<std::string> kernels;
    for (const auto& p : ds.points()) kernels.insert(p.point.kernel_id);
    for (const auto& k : kernels) {
        auto file = kernel_dir / (k + ".c");
        std::ifstream ks(file, std::ios::binary);
        if (!ks) continue;
        std::stringstream src;
        src << ks.rdbuf();
        ds.set_kernel_source(k, src.str());
    }
    return ds;
}

std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    for (const auto& p : ds.points()) {
        out += serialize_record(p);
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write dataset file " + path.string());
    out << serialize_dataset(ds);
    if (!out) throw IoError("write failed for " + path.string());
}

Split split_dataset(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
        throw std::invalid_argument("test_fraction must lie in [0, 1]");
    }
    const std::size_t n = ds.size();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    // Fisher-Yates with a fixed engine so partitions do not depend on the
    // standard library's distribution implementation.
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<bool> in_test(n, false);
    for (std::size_t i = 0; i < n_test; ++i) in_test[order[i]] = true;

    Split s;
    for (std::size_t i = 0; i < n; ++i) {
        (in_test[i] ? s.test : s.train).add(ds.points()[i]);
    }
    for (const auto& [k, src] : ds.kernel_sources()) {
        s.train.set_kernel_source(k, src);
        s.test.set_kernel_source(k, src);
    }
    return s;
}

ValidationReport validate_dataset(const Dataset& ds) {
    ValidationReport r;
    r.total = ds.size();
    std::map<std::string, std::vector<PragmaSlot>> slots_by_kernel;
    std::set<std::string> missing_sources;

    for (const auto& p : ds.points()) {
        const auto& kid = p.point.kernel_id;
        ++r.per_kernel[kid];
        if (!p.targets.valid) ++r.invalid_count;

        auto values = numeric_targets(p.targets);
        for (std::size_t i = 0; i < kNumericTargets; ++i) {
            if (!std::isfinite(values[i])) continue;
            auto& range = r.ranges[std::string(kNumericTargetNames[i])];
            if (range.count == 0) {
                range.min = range.max = values[i];
            } else {
                range.min = std::min(range.min, values[i]);
                range.max = std::max(range.max, values[i]);
            }
            ++range.count;
        }

        const std::string* src = ds.kernel_source(kid);
        if (!src) {
            missing_sources.insert(kid);
            continue;
        }
        if (r.kernel_parse_errors.count(kid)) continue;
        auto cached = slots_by_kernel.find(kid);
        if (cached == slots_by_kernel.end()) {
            try {
                cached = slots_by_kernel.emplace(kid, extract_pragma_slots(*src)).first;
            } catch (const Error& e) {
                r.kernel_parse_errors[kid] = e.what();
                continue;
            }
        }
        for (const auto& [slot_id, a] : p.point.pragmas) {
            bool found = std::any_of(cached->second.begin(), cached->second.end(),
                                     [&](const PragmaSlot& s) { return s.slot_id == slot_id; });
            if (!found) r.unresolved_slots.push_back({p.point.design_id, slot_id});
        }
    }
    r.kernels_without_source.assign(missing_sources.begin(), missing_sources.end());
    return r;
}

std::string render_validation_report(const ValidationReport& r) {
    std::ostringstream os;
    os << "designs: " << r.total << "\n";
    os << "invalid-labeled: " << r.invalid_count << "\n";
    os << "per kernel:\n";
    for (const auto& [k, n] : r.per_kernel) os << "  " << k << ": " << n << "\n";
    os << "target ranges:\n";
    for (auto name : kNumericTargetNames) {
        auto it = r.ranges.find(std::string(name));
        if (it == r.ranges.end()) {
            os << "  " << name << ": (empty)\n";
        } else {
            os << "  " << name << ": [" << format_double(it->second.min) << ", "
               << format_double(it->second.max) << "]\n";
        }
    }
    os << "unresolved slots: " << r.unresolved_slots.size() << "\n";
    for (const auto& u : r.unresolved_slots) os << "  " << u.design_id << ": " << u.slot_id << "\n";
    for (const auto& k : r.kernels_without_source) os << "no source for kernel: " << k << "\n";
    for (const auto& [k, e] : r.kernel_parse_errors) os << "kernel " << k << " failed to parse: " << e << "\n";
    return os.str();
}

}  // namespace hlsagent
