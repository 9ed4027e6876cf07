#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "hlsagent/cli.hpp"
#include "hlsagent/dataset.hpp"
#include "hlsagent/embedding_space.hpp"
#include "hlsagent/errors.hpp"
#include "hlsagent/evaluation.hpp"
#include "hlsagent/kernel_analysis.hpp"
#include "hlsagent/reasoning_engine.hpp"

namespace py = pybind11;
using namespace hlsagent;

namespace {

py::dict qor_dict(const QorVector& q) {
    py::dict d;
    d["valid"] = q.valid;
    const auto v = numeric_targets(q);
    for (std::size_t i = 0; i < kNumericTargets; ++i) d[py::str(std::string(kNumericTargetNames[i]))] = v[i];
    return d;
}

py::dict prediction_dict(const Prediction& p) {
    py::dict d = qor_dict(p.qor);
    d["design_id"] = p.design_id;
    d["rationale"] = p.rationale;
    d["confidence"] = p.confidence;
    return d;
}

EmbeddingStore make_store(const std::map<std::string, std::vector<double>>& entries) {
    EmbeddingStore s;
    for (const auto& [id, v] : entries) s.insert(id, v);
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "HLS quality-of-result prediction: kernel analysis, embeddings, scoring and the agent CLI";

    // Translators run most-recently-registered first, so subclasses go last.
    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<DataError>(m, "DataError", error.ptr());
    py::register_exception<BackendError>(m, "BackendError", error.ptr());

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the hlsagent command; returns (exit_code, stdout, stderr).");

    m.def(
        "load_dataset",
        [](const std::filesystem::path& path) {
            const Dataset ds = load_dataset(path);
            py::list out;
            for (const auto& lp : ds.points()) {
                py::dict d;
                d["design_id"] = lp.point.design_id;
                d["kernel"] = lp.point.kernel_id;
                py::dict pragmas;
                for (const auto& [slot, a] : lp.point.pragmas) {
                    if (a.category == PragmaCategory::Pipe) pragmas[py::str(slot)] = std::string(to_string(a.mode()));
                    else pragmas[py::str(slot)] = a.factor();
                }
                d["pragmas"] = pragmas;
                d["targets"] = qor_dict(lp.targets);
                out.append(d);
            }
            return out;
        },
        py::arg("path"), "Loads a dataset file as a list of design records.");

    m.def(
        "analyze_kernel",
        [](const std::string& source, const std::string& kernel_id) {
            const KernelModel k = KernelModel::analyze(kernel_id, source);
            py::list loops;
            for (const auto& n : k.tree.nodes) {
                py::dict d;
                d["loop_id"] = n.loop_id;
                d["header_line"] = n.header_line;
                d["trip_count"] = n.static_trip_count ? py::object(py::int_(*n.static_trip_count)) : py::none();
                d["parent"] = n.parent.empty() ? py::object(py::none()) : py::object(py::str(n.parent));
                d["children"] = n.children;
                loops.append(d);
            }
            py::list slots;
            for (const auto& s : k.slots) {
                py::dict d;
                d["slot_id"] = s.slot_id;
                d["category"] = std::string(to_string(s.category));
                d["loop"] = s.attached_loop;
                d["line"] = s.source_line;
                slots.append(d);
            }
            py::dict out;
            out["loops"] = loops;
            out["slots"] = slots;
            out["cdfg_nodes"] = k.cdfg.nodes.size();
            out["cdfg_edges"] = k.cdfg.edges.size();
            return out;
        },
        py::arg("source"), py::arg("kernel_id") = "kernel", "Loop tree, pragma slots and CDFG size of a kernel.");

    m.def(
        "rmse", [](const std::vector<double>& pred, const std::vector<double>& truth) { return rmse(pred, truth); },
        py::arg("pred"), py::arg("truth"));

    m.def(
        "knn",
        [](const std::map<std::string, std::vector<double>>& entries, const std::vector<double>& query, std::size_t k) {
            const EmbeddingStore store = make_store(entries);
            std::vector<std::pair<std::string, double>> out;
            for (const auto& n : knn(store, query, k)) out.emplace_back(n.design_id, n.distance);
            return out;
        },
        py::arg("entries"), py::arg("query"), py::arg("k"), "k nearest ids by Euclidean distance, ties by id.");

    m.def(
        "tsne",
        [](const std::map<std::string, std::vector<double>>& entries, double perplexity, int iterations,
           std::uint64_t seed) {
            const EmbeddingStore store = make_store(entries);
            Projection2D p;
            {
                py::gil_scoped_release release;
                p = tsne_project(store, perplexity, iterations, seed);
            }
            std::map<std::string, std::pair<double, double>> coords;
            for (const auto& [id, c] : p.coords) coords[id] = {c.x, c.y};
            py::dict out;
            out["coords"] = coords;
            out["initial_kl"] = p.initial_kl;
            out["final_kl"] = p.final_kl;
            return out;
        },
        py::arg("entries"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000, py::arg("seed") = 0);

    m.def(
        "parse_prediction",
        [](const std::string& text, const std::string& design_id) {
            return prediction_dict(parse_prediction_response(text, design_id));
        },
        py::arg("text"), py::arg("design_id"), "Parses a model answer into a prediction record.");
}
