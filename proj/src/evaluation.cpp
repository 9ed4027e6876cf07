#include "hlsagent/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <vector>

#include "hlsagent/errors.hpp"

namespace hlsagent {

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string pad_left(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

double latency_value(double x, LatencyTransform t) {
    return t == LatencyTransform::Log2p1 ? std::log2(1.0 + x) : x;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw LengthMismatch(pred.size(), truth.size());
    if (pred.empty()) throw EmptyInput();
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!std::isfinite(pred[i])) throw InvalidTargetValue("prediction[" + std::to_string(i) + "]", shortest(pred[i]));
        if (!std::isfinite(truth[i])) throw InvalidTargetValue("truth[" + std::to_string(i) + "]", shortest(truth[i]));
        const double d = pred[i] - truth[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

std::string_view to_string(LatencyTransform t) {
    return t == LatencyTransform::Identity ? "identity" : "log2p1";
}

std::optional<LatencyTransform> parse_latency_transform(std::string_view s) {
    if (s == "identity") return LatencyTransform::Identity;
    if (s == "log2p1") return LatencyTransform::Log2p1;
    return std::nullopt;
}

ScoreReport score(const std::map<std::string, Prediction>& preds, const Dataset& truth, LatencyTransform transform) {
    if (truth.empty()) throw EmptyInput();
    std::array<std::vector<double>, kScoreTargets.size()> p, t;
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (const auto& lp : truth.points()) {
        auto it = preds.find(lp.point.design_id);
        if (it == preds.end()) throw MissingPrediction(lp.point.design_id);
        const QorVector& pq = it->second.qor;
        const QorVector& tq = lp.targets;
        p[0].push_back(pq.valid ? 1.0 : 0.0);
        t[0].push_back(tq.valid ? 1.0 : 0.0);
        const auto pn = numeric_targets(pq);
        const auto tn = numeric_targets(tq);
        for (std::size_t i = 0; i < kNumericTargets; ++i) {
            p[i + 1].push_back(i == 0 ? latency_value(pn[i], transform) : pn[i]);
            t[i + 1].push_back(i == 0 ? latency_value(tn[i], transform) : tn[i]);
        }
        if (pq.valid == tq.valid) ++correct;
        if (pq.valid && tq.valid) ++tp;
        if (pq.valid && !tq.valid) ++fp;
        if (!pq.valid && tq.valid) ++fn;
    }

    ScoreReport r;
    r.n = truth.size();
    r.latency_transform = transform;
    double sum = 0.0;
    for (std::size_t i = 0; i < kScoreTargets.size(); ++i) {
        const double v = rmse(p[i], t[i]);
        r.per_target_rmse[std::string(kScoreTargets[i])] = v;
        sum += v;
    }
    r.aggregate = sum / static_cast<double>(kScoreTargets.size());
    auto& c = r.classification;
    c.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
    c.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
    c.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
    c.f1 = ratio(2.0 * c.precision * c.recall, c.precision + c.recall);
    return r;
}

Prediction nn_baseline_predict(const DesignPoint& point, const Dataset& train, const EmbeddingStore& store,
                               std::size_t k) {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    const auto exemplars = retrieve_exemplars(point, train, store, k);
    if (exemplars.empty()) throw EmptyTrainSet();
    std::vector<DistanceWeighted> samples;
    double distance_sum = 0.0;
    for (const auto& e : exemplars) {
        samples.push_back({e.distance, e.point.targets});
        distance_sum += e.distance;
    }
    const double mean_distance = distance_sum / static_cast<double>(samples.size());
    Prediction p;
    p.design_id = point.design_id;
    p.qor = inverse_distance_mean(samples);
    p.rationale = "nn-baseline";
    p.confidence = 1.0 / (1.0 + mean_distance);
    return p;
}

Prediction majority_baseline_predict(const DesignPoint& point, const Dataset& train) {
    std::size_t valid = 0;
    for (const auto& lp : train.points()) valid += lp.targets.valid ? 1 : 0;
    if (train.empty()) throw EmptyTrainSet();
    const bool majority = 2 * valid >= train.size();
    Prediction p;
    p.design_id = point.design_id;
    p.qor.valid = majority;
    std::array<double, kNumericTargets> sums{};
    std::size_t n = 0;
    for (const auto& lp : train.points()) {
        if (lp.targets.valid != majority) continue;
        const auto v = numeric_targets(lp.targets);
        for (std::size_t i = 0; i < kNumericTargets; ++i) sums[i] += v[i];
        ++n;
    }
    for (std::size_t i = 0; i < kNumericTargets; ++i) set_numeric_target(p.qor, i, sums[i] / static_cast<double>(n));
    p.rationale = "majority-baseline";
    p.confidence = static_cast<double>(n) / static_cast<double>(train.size());
    return p;
}

ComparisonTable compare_runs(const std::map<std::string, ScoreReport>& reports) {
    if (reports.empty()) throw EmptyInput();
    std::vector<std::pair<std::string, const ScoreReport*>> rows;
    for (const auto& [name, r] : reports) rows.emplace_back(name, &r);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.second->aggregate < b.second->aggregate; });

    std::size_t name_w = 3;
    for (const auto& row : rows) name_w = std::max(name_w, row.first.size());
    const std::size_t col_w = 16;

    ComparisonTable out;
    std::string header = pad_left("rank", 4) + "  " + pad_right("run", name_w) + pad_left("aggregate", col_w);
    for (auto t : kScoreTargets) header += pad_left(std::string(t), col_w);
    header += pad_left("accuracy", col_w) + pad_left("f1", col_w);
    out.text = header + "\n";

    out.csv = "run_name";
    for (auto t : kScoreTargets) out.csv += "," + std::string(t);
    out.csv += ",aggregate,accuracy,precision,recall,f1\n";

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& [name, r] = rows[i];
        std::string line = pad_left(std::to_string(i + 1), 4) + "  " + pad_right(name, name_w) +
                           pad_left(fixed6(r->aggregate), col_w);
        std::string csv = name;
        for (auto t : kScoreTargets) {
            const double v = r->per_target_rmse.at(std::string(t));
            line += pad_left(fixed6(v), col_w);
            csv += "," + shortest(v);
        }
        line += pad_left(fixed6(r->classification.accuracy), col_w) + pad_left(fixed6(r->classification.f1), col_w);
        csv += "," + shortest(r->aggregate) + "," + shortest(r->classification.accuracy) + "," +
               shortest(r->classification.precision) + "," + shortest(r->classification.recall) + "," +
               shortest(r->classification.f1);
        out.text += line + "\n";
        out.csv += csv + "\n";
    }
    return out;
}

std::string render_score_report(const ScoreReport& r, const std::string& run_name) {
    std::string s = "run: " + run_name + "\n";
    s += "designs: " + std::to_string(r.n) + "\n";
    s += "latency transform: " + std::string(to_string(r.latency_transform)) + "\n";
    s += "per-target RMSE:\n";
    for (auto t : kScoreTargets) {
        s += "  " + pad_right(std::string(t), 16) + fixed6(r.per_target_rmse.at(std::string(t))) + "\n";
    }
    s += "aggregate (mean of the six RMSEs): " + fixed6(r.aggregate) + "\n";
    s += "validity classification (valid = positive):\n";
    s += "  accuracy  " + fixed6(r.classification.accuracy) + "\n";
    s += "  precision " + fixed6(r.classification.precision) + "\n";
    s += "  recall    " + fixed6(r.classification.recall) + "\n";
    s += "  f1        " + fixed6(r.classification.f1) + "\n";
    return s;
}

}  // namespace hlsagent
