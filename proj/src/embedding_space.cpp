#include "hlsagent/embedding_space.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "hlsagent/errors.hpp"

namespace hlsagent {

namespace {

// Shortest text that reads back to the same double.
std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

std::string read_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open ") + what + " " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

void EmbeddingStore::insert(const std::string& design_id, std::vector<double> v) {
    if (dim_ && v.size() != *dim_) throw DimensionMismatch(design_id);
    if (v.empty()) throw DimensionMismatch(design_id);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw NonFiniteComponent(design_id, i);
    }
    if (!dim_) dim_ = v.size();
    entries_[design_id] = std::move(v);
}

const std::vector<double>* EmbeddingStore::find(const std::string& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

EmbeddingStore EmbeddingStore::subset(const std::vector<std::string>& ids) const {
    EmbeddingStore out;
    for (const auto& id : ids) {
        if (auto* v = find(id)) out.insert(id, *v);
    }
    if (!out.dim_) out.dim_ = dim_;
    return out;
}

EmbeddingStore parse_embeddings(std::string_view text) {
    EmbeddingStore store;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(trim(f));
        if (fields.size() < 2 || fields[0].empty()) {
            throw MalformedRecord(line_no, "expected design_id followed by components");
        }
        std::vector<double> v;
        v.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const std::string& s = fields[i];
            std::size_t used = 0;
            double x = 0.0;
            try {
                x = std::stod(s, &used);
            } catch (const std::out_of_range&) {
                throw NonFiniteComponent(fields[0], i - 1);
            } catch (const std::invalid_argument&) {
                throw MalformedRecord(line_no, "component " + std::to_string(i - 1) + " is not a number");
            }
            if (used != s.size()) {
                throw MalformedRecord(line_no, "component " + std::to_string(i - 1) + " is not a number");
            }
            v.push_back(x);
        }
        store.insert(fields[0], std::move(v));
    }
    return store;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
    return parse_embeddings(read_file(path, "embedding file"));
}

std::string serialize_embeddings(const EmbeddingStore& store) {
    std::string out;
    for (const auto& [id, v] : store.entries()) {
        out += id;
        for (double x : v) {
            out += ',';
            out += shortest(x);
        }
        out += '\n';
    }
    return out;
}

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
    write_file(path, serialize_embeddings(store));
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<Neighbor> knn(const EmbeddingStore& store, std::span<const double> query, std::size_t k,
                          const std::function<bool(const std::string&)>& exclude) {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    if (store.dim() && query.size() != *store.dim()) throw DimensionMismatch("<query>");
    std::vector<Neighbor> all;
    all.reserve(store.size());
    for (const auto& [id, v] : store.entries()) {
        if (exclude && exclude(id)) continue;
        all.push_back({id, euclidean_distance(query, v)});
    }
    auto by_distance = [](const Neighbor& a, const Neighbor& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.design_id < b.design_id;
    };
    const std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), by_distance);
    all.resize(take);
    return all;
}

std::vector<std::string> flag_outliers(const Projection2D& proj, double z_threshold) {
    std::vector<std::string> out;
    const std::size_t n = proj.coords.size();
    if (n < 2) return out;
    double cx = 0.0, cy = 0.0;
    for (const auto& [id, p] : proj.coords) {
        cx += p.x;
        cy += p.y;
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);

    std::vector<double> dist;
    dist.reserve(n);
    double mean = 0.0;
    for (const auto& [id, p] : proj.coords) {
        dist.push_back(std::hypot(p.x - cx, p.y - cy));
        mean += dist.back();
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double d : dist) var += (d - mean) * (d - mean);
    const double stddev = std::sqrt(var / static_cast<double>(n));

    // Rounding noise in the centroid must not turn coincident points into outliers.
    double scale = 0.0;
    for (double d : dist) scale = std::max(scale, d);
    if (stddev <= 1e-12 * std::max(1.0, scale)) return out;

    const double threshold = mean + z_threshold * stddev;
    std::size_t i = 0;
    for (const auto& [id, p] : proj.coords) {
        if (dist[i++] > threshold) out.push_back(id);
    }
    return out;
}

std::string projection_csv(const Projection2D& proj, const std::map<std::string, std::string>& labels) {
    std::string out = "design_id,x,y,label\n";
    for (const auto& [id, p] : proj.coords) {
        auto it = labels.find(id);
        out += csv_field(id) + "," + shortest(p.x) + "," + shortest(p.y) + "," +
               (it == labels.end() ? std::string() : csv_field(it->second)) + "\n";
    }
    return out;
}

std::string projection_svg(const Projection2D& proj, const std::map<std::string, std::string>& labels) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#393b79"};
    constexpr const char* kNeutral = "#9e9e9e";
    constexpr double kWidth = 640, kHeight = 480, kMargin = 40, kLegendWidth = 160;

    std::set<std::string> distinct;
    for (const auto& [id, label] : labels) {
        if (proj.coords.count(id)) distinct.insert(label);
    }
    std::map<std::string, std::string> color;
    std::size_t c = 0;
    for (const auto& l : distinct) color[l] = palette[c++ % std::size(palette)];

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& [id, p] : proj.coords) {
        if (first) {
            xmin = xmax = p.x;
            ymin = ymax = p.y;
            first = false;
        }
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const double xs = xmax > xmin ? xmax - xmin : 1.0;
    const double ys = ymax > ymin ? ymax - ymin : 1.0;
    const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin;

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth + kLegendWidth << "\" height=\""
       << kHeight << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth + kLegendWidth << "\" height=\"" << kHeight
       << "\" fill=\"white\"/>\n";
    os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << plot_w << "\" height=\""
       << plot_h << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
    for (const auto& [id, p] : proj.coords) {
        const double px = kMargin + (p.x - xmin) / xs * plot_w;
        const double py = kHeight - kMargin - (p.y - ymin) / ys * plot_h;
        auto it = labels.find(id);
        const std::string fill = it == labels.end() ? kNeutral : color[it->second];
        os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"4\" fill=\"" << fill
           << "\"><title>" << xml_escape(id) << "</title></circle>\n";
    }
    double ly = kMargin;
    os << "<text x=\"" << kWidth << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"12\">legend</text>\n";
    for (const auto& [label, col] : color) {
        ly += 18;
        os << "<circle cx=\"" << kWidth + 6 << "\" cy=\"" << ly - 4 << "\" r=\"5\" fill=\"" << col << "\"/>\n";
        os << "<text x=\"" << kWidth + 16 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"12\">"
           << xml_escape(label) << "</text>\n";
    }
    if (labels.size() < proj.coords.size()) {
        ly += 18;
        os << "<circle cx=\"" << kWidth + 6 << "\" cy=\"" << ly - 4 << "\" r=\"5\" fill=\"" << kNeutral << "\"/>\n";
        os << "<text x=\"" << kWidth + 16 << "\" y=\"" << ly
           << "\" font-family=\"sans-serif\" font-size=\"12\">(unlabeled)</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void emit_projection(const Projection2D& proj, const std::map<std::string, std::string>& labels,
                     const std::filesystem::path& out_csv, const std::filesystem::path& out_svg) {
    for (const auto& [id, label] : labels) {
        if (!proj.coords.count(id)) {
            throw std::invalid_argument("label for unknown design \"" + id + "\"");
        }
    }
    write_file(out_csv, projection_csv(proj, labels));
    write_file(out_svg, projection_svg(proj, labels));
}

std::map<std::string, Point2D> read_projection_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path, "projection csv"));
    std::string line;
    std::map<std::string, Point2D> out;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        if (++line_no == 1 || trim(line).empty()) continue;
        std::stringstream ls(line);
        std::string id, x, y;
        if (!std::getline(ls, id, ',') || !std::getline(ls, x, ',') || !std::getline(ls, y, ',')) {
            throw MalformedRecord(line_no, "expected design_id,x,y,label");
        }
        out[id] = {std::stod(x), std::stod(y)};
    }
    return out;
}

std::vector<double> synthesize_embedding(const KernelModel& kernel, const DesignPoint& point) {
    std::vector<double> v(kSynthDim, 0.0);
    // Kernel identity: two stable pseudo-random coordinates from the id.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : kernel.kernel_id) {
        h ^= c;
        h *= 1099511628211ull;
    }
    v[0] = static_cast<double>(h & 0xffff) / 65535.0 * 4.0;
    v[1] = static_cast<double>((h >> 16) & 0xffff) / 65535.0 * 4.0;

    AnnotatedDesignGraph g = apply_pragmas(kernel.cdfg, kernel.tree, kernel.slots, point);
    for (std::size_t i = 0; i < kernel.tree.nodes.size(); ++i) {
        const LoopNode& loop = kernel.tree.nodes[i];
        const LoopAnnotation& a = g.annotations.at(loop.loop_id);
        const std::size_t base = kSynthKernelFeatures + (i % kSynthLoopSlots) * kSynthFeaturesPerLoop;
        const double trip = static_cast<double>(loop.static_trip_count.value_or(0));
        const double derived = static_cast<double>(a.derived_trip_count.value_or(0));
        v[base + 0] += std::log2(1.0 + trip);
        v[base + 1] += std::log2(1.0 + derived);
        v[base + 2] += std::log2(static_cast<double>(a.unroll_factor));
        v[base + 3] += std::log2(static_cast<double>(a.tile_factor));
        v[base + 4] += a.pipeline_mode == PipelineMode::Pipeline ? 1.0 : 0.0;
        v[base + 5] += a.pipeline_mode == PipelineMode::Flatten ? 1.0 : 0.0;
    }
    return v;
}

EmbeddingStore synthesize_embeddings(const Dataset& ds) {
    EmbeddingStore store;
    std::map<std::string, KernelModel> kernels;
    for (const auto& p : ds.points()) {
        const std::string* src = ds.kernel_source(p.point.kernel_id);
        if (!src) continue;
        auto it = kernels.find(p.point.kernel_id);
        if (it == kernels.end()) {
            it = kernels.emplace(p.point.kernel_id, KernelModel::analyze(p.point.kernel_id, *src)).first;
        }
        store.insert(p.point.design_id, synthesize_embedding(it->second, p.point));
    }
    return store;
}

}  // namespace hlsagent
