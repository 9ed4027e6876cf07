#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hlsagent/dataset.hpp"
#include "hlsagent/kernel_analysis.hpp"

namespace hlsagent {

/// Fixed-dimension embedding per design id. Iteration is in lexicographic id
/// order, which is also the kNN tie-break order.
class EmbeddingStore {
public:
    EmbeddingStore() = default;

    /// Throws DimensionMismatch / NonFiniteComponent. The first insert fixes dim.
    void insert(const std::string& design_id, std::vector<double> v);

    std::optional<std::size_t> dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    bool contains(const std::string& id) const { return entries_.count(id) > 0; }
    const std::vector<double>* find(const std::string& id) const;
    const std::map<std::string, std::vector<double>>& entries() const { return entries_; }

    /// Store restricted to the given ids (ids missing from the store are skipped).
    EmbeddingStore subset(const std::vector<std::string>& ids) const;

private:
    std::optional<std::size_t> dim_;
    std::map<std::string, std::vector<double>> entries_;
};

EmbeddingStore load_embeddings(const std::filesystem::path& path);
EmbeddingStore parse_embeddings(std::string_view text);
std::string serialize_embeddings(const EmbeddingStore& store);
void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);

struct Neighbor {
    std::string design_id;
    double distance = 0.0;
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// min(k, |store|) nearest entries by Euclidean distance, ties broken by id.
/// `exclude` drops candidates (e.g. the query design itself).
std::vector<Neighbor> knn(const EmbeddingStore& store, std::span<const double> query, std::size_t k,
                          const std::function<bool(const std::string&)>& exclude = {});

struct Point2D {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2D&, const Point2D&) = default;
};

struct Projection2D {
    std::map<std::string, Point2D> coords;
    double initial_kl = 0.0;  // KL(P||Q) right after initialization
    double final_kl = 0.0;
    std::uint64_t seed = 0;
    double perplexity = 0.0;
    int iterations = 0;
};

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
    double learning_rate = 200.0;
    double early_exaggeration = 4.0;
    int exaggeration_iterations = 100;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iteration = 250;
    double init_stddev = 1e-4;
};

/// Exact O(N^2) t-SNE to two dimensions. Deterministic for a fixed seed.
/// Throws TooFewPoints (< 4) and PerplexityOutOfRange (outside [1, (N-1)/3]).
Projection2D tsne_project(const EmbeddingStore& store, const TsneOptions& options);
Projection2D tsne_project(const EmbeddingStore& store, double perplexity, int iterations,
                          std::uint64_t seed);

/// Ids whose distance to the 2D centroid exceeds mean + z * stddev.
std::vector<std::string> flag_outliers(const Projection2D& proj, double z_threshold);

/// CSV (design_id,x,y,label) and an SVG scatter coloured by label.
void emit_projection(const Projection2D& proj, const std::map<std::string, std::string>& labels,
                     const std::filesystem::path& out_csv, const std::filesystem::path& out_svg);
std::string projection_csv(const Projection2D& proj, const std::map<std::string, std::string>& labels);
std::string projection_svg(const Projection2D& proj, const std::map<std::string, std::string>& labels);

/// Reads back the coordinates of a projection CSV.
std::map<std::string, Point2D> read_projection_csv(const std::filesystem::path& path);

// Placeholder embeddings built from kernel structure and pragma values, for
// running the pipeline without an upstream graph encoder.

inline constexpr std::size_t kSynthLoopSlots = 5;
inline constexpr std::size_t kSynthFeaturesPerLoop = 6;
inline constexpr std::size_t kSynthKernelFeatures = 2;
inline constexpr std::size_t kSynthDim = kSynthKernelFeatures + kSynthLoopSlots * kSynthFeaturesPerLoop;

std::vector<double> synthesize_embedding(const KernelModel& kernel, const DesignPoint& point);

/// One embedding per design whose kernel source is available. Designs whose
/// kernel has no source are skipped.
EmbeddingStore synthesize_embeddings(const Dataset& ds);

}  // namespace hlsagent
