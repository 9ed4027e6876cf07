#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hlsagent/dataset.hpp"

namespace hlsagent {

/// A pragma placeholder found in kernel source, e.g.
/// `#pragma ACCEL PARALLEL FACTOR=auto{__PARA__L1}`.
struct PragmaSlot {
    std::string slot_id;
    PragmaCategory category = PragmaCategory::Parallel;
    std::string attached_loop;
    int source_line = 0;
    friend bool operator==(const PragmaSlot&, const PragmaSlot&) = default;
};

/// Loops are numbered `L1`, `L2`, ... in source (pre-order) order.
struct LoopNode {
    std::string loop_id;
    int header_line = 0;
    std::optional<std::int64_t> static_trip_count;  // nullopt when bounds are not literal
    std::string header;                             // normalized header text
    std::string parent;                             // empty for roots
    std::vector<std::string> children;
    friend bool operator==(const LoopNode&, const LoopNode&) = default;
};

struct LoopTree {
    std::vector<LoopNode> nodes;  // pre-order
    std::vector<std::string> roots;

    const LoopNode* find(std::string_view loop_id) const;
    std::size_t depth(std::string_view loop_id) const;
};

enum class CdfgNodeKind { Block, Loop, Statement };
enum class CdfgEdgeKind { Control, Data };

std::string_view to_string(CdfgNodeKind k);
std::string_view to_string(CdfgEdgeKind k);

struct CdfgNode {
    std::string node_id;
    CdfgNodeKind kind = CdfgNodeKind::Statement;
    std::string label;
    friend bool operator==(const CdfgNode&, const CdfgNode&) = default;
};

struct CdfgEdge {
    std::string src;
    std::string dst;
    CdfgEdgeKind kind = CdfgEdgeKind::Control;
    friend bool operator==(const CdfgEdge&, const CdfgEdge&) = default;
    friend auto operator<=>(const CdfgEdge&, const CdfgEdge&) = default;
};

/// Control/data-flow graph. Node `entry` is the unique entry block; each
/// function body hangs off it. Block ids are `B<n>`, statement ids `S<n>`,
/// loop nodes reuse their loop id.
struct Cdfg {
    std::vector<CdfgNode> nodes;
    std::vector<CdfgEdge> edges;

    static constexpr std::string_view kEntry = "entry";

    const CdfgNode* find(std::string_view node_id) const;
    std::size_t count(CdfgNodeKind k) const;
    std::size_t count(CdfgEdgeKind k) const;
};

struct LoopAnnotation {
    std::int64_t unroll_factor = 1;
    PipelineMode pipeline_mode = PipelineMode::Off;
    std::int64_t tile_factor = 1;
    std::optional<std::int64_t> derived_trip_count;
    friend bool operator==(const LoopAnnotation&, const LoopAnnotation&) = default;
};

struct AnnotatedDesignGraph {
    Cdfg base;
    std::map<std::string, LoopAnnotation> annotations;  // keyed by loop id
};

std::vector<PragmaSlot> extract_pragma_slots(std::string_view source);
LoopTree build_loop_tree(std::string_view source);
Cdfg build_cdfg(const LoopTree& tree, std::string_view source);

/// Annotates every loop with the pragma values assigned by `point`; loops
/// without an assignment keep the defaults. Throws UnresolvedSlot.
AnnotatedDesignGraph apply_pragmas(const Cdfg& cdfg, const LoopTree& tree,
                                   const std::vector<PragmaSlot>& slots, const DesignPoint& point);

/// ceil(trip / (unroll * tile)); nullopt when the trip count is unknown.
std::optional<std::int64_t> derived_trip_count(std::optional<std::int64_t> trip,
                                               std::int64_t unroll, std::int64_t tile);

/// Everything the pipeline needs to know about one kernel, computed once.
struct KernelModel {
    std::string kernel_id;
    std::string source;
    std::vector<PragmaSlot> slots;
    LoopTree tree;
    Cdfg cdfg;

    static KernelModel analyze(std::string kernel_id, std::string source);
    const PragmaSlot* slot(std::string_view slot_id) const;
};

}  // namespace hlsagent
