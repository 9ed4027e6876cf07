#include <doctest.h>

#include <cmath>
#include <random>

#include "hlsagent/dataset.hpp"
#include "hlsagent/embedding_space.hpp"
#include "hlsagent/errors.hpp"
#include "test_support.hpp"

using namespace hlsagent;
using testsupport::TempDir;

namespace {

EmbeddingStore store_of(const std::map<std::string, std::vector<double>>& m) {
    EmbeddingStore s;
    for (const auto& [id, v] : m) s.insert(id, v);
    return s;
}

Projection2D projection_of(const std::map<std::string, Point2D>& coords) {
    Projection2D p;
    p.coords = coords;
    return p;
}

}  // namespace

TEST_CASE("parse_embeddings: structure and errors") {
    EmbeddingStore s = parse_embeddings("a,1,2,3,4\nb,0,0,0,0\nc,-1.5,2e-3,0,7\n");
    CHECK(s.dim() == 4);
    CHECK(s.size() == 3);
    CHECK(*s.find("c") == std::vector<double>{-1.5, 0.002, 0.0, 7.0});

    try {
        parse_embeddings("a,1,2,3,4\nb,1,2,3\n");
        FAIL("expected DimensionMismatch");
    } catch (const DimensionMismatch& e) {
        CHECK(e.design_id == "b");
    }
    try {
        parse_embeddings("a,1,2\nb,1,inf\n");
        FAIL("expected NonFiniteComponent");
    } catch (const NonFiniteComponent& e) {
        CHECK(e.design_id == "b");
        CHECK(e.index == 1);
    }
    EmbeddingStore empty = parse_embeddings("");
    CHECK(empty.empty());
    CHECK_FALSE(empty.dim().has_value());
}

TEST_CASE("embeddings round trip within 1e-9") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 100.0);
    EmbeddingStore s;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> v(7);
        for (auto& x : v) x = n(rng);
        s.insert("id" + std::to_string(i), v);
    }
    TempDir tmp("emb");
    save_embeddings(s, tmp / "e.emb");
    EmbeddingStore back = load_embeddings(tmp / "e.emb");
    REQUIRE(back.size() == s.size());
    for (const auto& [id, v] : s.entries()) {
        const auto* w = back.find(id);
        REQUIRE(w != nullptr);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs((*w)[i] - v[i]) <= 1e-9);
    }
}

TEST_CASE("knn: hand-computed example with a tie") {
    EmbeddingStore s = store_of({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {3, 4}}});
    auto r = knn(s, std::vector<double>{0, 0}, 3);
    REQUIRE(r.size() == 3);
    CHECK(r[0] == Neighbor{"a", 1.0});
    CHECK(r[1] == Neighbor{"b", 1.0});
    CHECK(r[2] == Neighbor{"c", 5.0});
}

TEST_CASE("knn: self distance, oversized k, exclusion and errors") {
    EmbeddingStore s = store_of({{"a", {1, 2}}, {"b", {5, 5}}});
    auto self = knn(s, std::vector<double>{1, 2}, 1);
    CHECK(self[0] == Neighbor{"a", 0.0});
    CHECK(knn(s, std::vector<double>{0, 0}, 10).size() == 2);
    auto ex = knn(s, std::vector<double>{1, 2}, 2, [](const std::string& id) { return id == "a"; });
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].design_id == "b");
    CHECK_THROWS_AS(knn(s, std::vector<double>{1, 2, 3}, 1), DimensionMismatch);
    CHECK_THROWS(knn(s, std::vector<double>{1, 2}, 0));
}

TEST_CASE("knn equals a brute-force scan on randomized instances") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 120);
        const int dim = 2 + static_cast<int>(rng() % 6);
        // A coarse integer grid makes exact distance ties common.
        std::uniform_int_distribution<int> coord(-3, 3);
        std::map<std::string, std::vector<double>> pts;
        for (int i = 0; i < n; ++i) {
            std::vector<double> v(static_cast<std::size_t>(dim));
            for (auto& x : v) x = coord(rng);
            pts["p" + std::to_string(rng() % 100000)] = v;
        }
        std::vector<double> q(static_cast<std::size_t>(dim));
        for (auto& x : q) x = coord(rng);
        const std::size_t k = 1 + rng() % 12;
        auto got = knn(store_of(pts), q, k);
        auto want = testsupport::oracle_knn(pts, q, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].design_id == want[i].id);
            CHECK(got[i].distance == want[i].distance);
        }
    }
}

TEST_CASE("tsne_project: preconditions") {
    EmbeddingStore three = store_of({{"a", {0}}, {"b", {1}}, {"c", {2}}});
    CHECK_THROWS_AS(tsne_project(three, 1.0, 10, 0), TooFewPoints);
    EmbeddingStore ten;
    for (int i = 0; i < 10; ++i) ten.insert("p" + std::to_string(i), {static_cast<double>(i)});
    CHECK_THROWS_AS(tsne_project(ten, 3.5, 10, 0), PerplexityOutOfRange);
    CHECK_THROWS_AS(tsne_project(ten, 0.5, 10, 0), PerplexityOutOfRange);
    CHECK_NOTHROW(tsne_project(ten, 3.0, 10, 0));
}

TEST_CASE("tsne_project: identical vectors collapse") {
    EmbeddingStore s = store_of({{"a", {1, 1}}, {"b", {1, 1}}, {"c", {1, 1}}, {"d", {1, 1}}});
    Projection2D p = tsne_project(s, 1.0, 300, 5);
    CHECK(p.final_kl <= 1e-6);
    for (const auto& [id, c] : p.coords) {
        CHECK(std::isfinite(c.x));
        CHECK(std::abs(c.x - p.coords.at("a").x) < 1e-3);
        CHECK(std::abs(c.y - p.coords.at("a").y) < 1e-3);
    }
}

TEST_CASE("tsne_project: two clusters separate, deterministically") {
    auto clusters = testsupport::gaussian_clusters(2, 30, 16, 10.0, 3);
    EmbeddingStore s;
    std::map<std::string, int> labels;
    for (const auto& [id, lv] : clusters) {
        s.insert(id, lv.second);
        labels[id] = lv.first;
    }
    Projection2D a = tsne_project(s, 10.0, 500, 42);
    Projection2D b = tsne_project(s, 10.0, 500, 42);
    CHECK(a.coords == b.coords);
    CHECK(a.final_kl == b.final_kl);
    CHECK(a.final_kl <= a.initial_kl);
    std::map<std::string, std::pair<double, double>> xy;
    for (const auto& [id, c] : a.coords) xy[id] = {c.x, c.y};
    CHECK(testsupport::knn_purity(xy, labels, 10) >= 0.9);
}

TEST_CASE("flag_outliers: examples") {
    std::map<std::string, Point2D> same;
    for (int i = 0; i < 5; ++i) same["p" + std::to_string(i)] = {2.0, 3.0};
    CHECK(flag_outliers(projection_of(same), 3.0).empty());

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::map<std::string, Point2D> pts;
    for (int i = 0; i < 20; ++i) pts["p" + std::to_string(i)] = {u(rng), u(rng)};
    pts["far"] = {100.0, 100.0};
    auto flagged = flag_outliers(projection_of(pts), 3.0);
    CHECK(flagged == std::vector<std::string>{"far"});
    CHECK(flag_outliers(projection_of(pts), 1e9).empty());

    // Direct distance computation agrees: only `far` exceeds mean + 3 sd.
    double cx = 0, cy = 0;
    for (const auto& [id, c] : pts) cx += c.x, cy += c.y;
    cx /= static_cast<double>(pts.size());
    cy /= static_cast<double>(pts.size());
    std::vector<double> d;
    for (const auto& [id, c] : pts) d.push_back(std::hypot(c.x - cx, c.y - cy));
    double mean = 0, var = 0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    for (double x : d) var += (x - mean) * (x - mean);
    const double cut = mean + 3.0 * std::sqrt(var / static_cast<double>(d.size()));
    std::size_t over = 0;
    for (double x : d) over += x > cut ? 1 : 0;
    CHECK(over == 1);

    std::map<std::string, Point2D> shifted;
    for (const auto& [id, c] : pts) shifted[id] = {c.x + 1234.5, c.y - 77.25};
    CHECK(flag_outliers(projection_of(shifted), 3.0) == flagged);
    CHECK(flag_outliers(projection_of(shifted), 1.0) == flag_outliers(projection_of(pts), 1.0));
}

TEST_CASE("emit_projection: CSV shape, neutral labels and round trip") {
    Projection2D p = projection_of({{"a", {0.125, -3.0}}, {"b", {1.0 / 3.0, 2.0}}, {"c", {1e-12, 7.5}}});
    const std::string csv = projection_csv(p, {{"a", "x"}, {"b", "y"}});
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(csv.rfind("design_id,x,y,label\n", 0) == 0);

    const std::string svg = projection_svg(p, {});
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);

    TempDir tmp("proj");
    emit_projection(p, {{"a", "PARALLEL"}}, tmp / "p.csv", tmp / "p.svg");
    auto back = read_projection_csv(tmp / "p.csv");
    REQUIRE(back.size() == 3);
    for (const auto& [id, c] : p.coords) {
        CHECK(std::abs(back.at(id).x - c.x) <= 1e-9);
        CHECK(std::abs(back.at(id).y - c.y) <= 1e-9);
    }
    CHECK(std::filesystem::exists(tmp / "p.svg"));
}

TEST_CASE("synthesize_embeddings: one vector per design with a kernel source") {
    Dataset ds = load_dataset(testsupport::fixture("mini/mini.jsonl"));
    EmbeddingStore s = synthesize_embeddings(ds);
    CHECK(s.size() == ds.size());
    CHECK(s.dim() == kSynthDim);
    // Different pragma assignments on the same kernel give different vectors.
    CHECK(*s.find("spmv_ellpack-01") != *s.find("spmv_ellpack-02"));
}
