// Exact t-SNE (Gaussian input affinities calibrated to a perplexity target,
// Student-t output affinities, momentum gradient descent with gains).

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "hlsagent/embedding_space.hpp"
#include "hlsagent/errors.hpp"

namespace hlsagent {

namespace {

constexpr double kEntropyTolerance = 1e-5;
constexpr int kMaxBisectionSteps = 50;
constexpr double kMinProbability = 1e-12;

// Row-wise conditional affinities p_{j|i}, each row summing to one.
std::vector<double> conditional_affinities(const std::vector<double>& sq_dist, std::size_t n,
                                           double perplexity) {
    std::vector<double> p(n * n, 0.0);
    const double target = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        const double* d = &sq_dist[i * n];
        double* row = &p[i * n];
        // Shifting by the row minimum leaves the normalized row unchanged and
        // keeps exp() away from underflow for far-apart inputs.
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) dmin = std::min(dmin, d[j]);
        }

        double beta = 1.0;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (int step = 0; step < kMaxBisectionSteps; ++step) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-beta * (d[j] - dmin));
                sum += row[j];
            }
            double weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) weighted += (d[j] - dmin) * row[j];
            const double entropy = std::log(sum) + beta * weighted / sum;
            const double diff = entropy - target;
            if (std::abs(diff) < kEntropyTolerance) break;
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = std::isinf(lo) ? beta / 2.0 : (beta + lo) / 2.0;
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = j == i ? 0.0 : std::exp(-beta * (d[j] - dmin));
            sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
    return p;
}

double gaussian(std::mt19937_64& rng) {
    // Box-Muller on the raw engine, so the sequence is identical across
    // standard library implementations.
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    auto uniform = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0); };
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// Student-t kernel values and their off-diagonal sum.
double student_t(const std::vector<double>& y, std::size_t n, std::vector<double>& num) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num[i * n + i] = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y[2 * i] - y[2 * j];
            const double dy = y[2 * i + 1] - y[2 * j + 1];
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = q;
            num[j * n + i] = q;
            sum += 2.0 * q;
        }
    }
    return sum;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& y, std::size_t n) {
    std::vector<double> num(n * n);
    const double sum_q = student_t(y, n, num);
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = p[i * n + j];
            const double qij = std::max(num[i * n + j] / sum_q, kMinProbability);
            kl += pij * std::log(pij / qij);
        }
    }
    return kl;
}

}  // namespace

Projection2D tsne_project(const EmbeddingStore& store, const TsneOptions& opt) {
    const std::size_t n = store.size();
    if (n < 4) throw TooFewPoints(n);
    const double max_perplexity = static_cast<double>(n - 1) / 3.0;
    if (!(opt.perplexity >= 1.0 && opt.perplexity <= max_perplexity)) {
        throw PerplexityOutOfRange(opt.perplexity, max_perplexity);
    }
    if (opt.iterations < 1) throw std::invalid_argument("iterations must be positive");

    std::vector<const std::vector<double>*> x;
    x.reserve(n);
    for (const auto& [id, v] : store.entries()) x.push_back(&v);

    std::vector<double> sq_dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < x[i]->size(); ++k) {
                const double d = (*x[i])[k] - (*x[j])[k];
                s += d * d;
            }
            sq_dist[i * n + j] = s;
            sq_dist[j * n + i] = s;
        }
    }

    std::vector<double> cond = conditional_affinities(sq_dist, n, opt.perplexity);
    std::vector<double> p(n * n, 0.0);
    const double norm = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / norm, kMinProbability);
        }
    }

    std::mt19937_64 rng(opt.seed);
    std::vector<double> y(2 * n);
    for (double& v : y) v = opt.init_stddev * gaussian(rng);

    Projection2D out;
    out.seed = opt.seed;
    out.perplexity = opt.perplexity;
    out.iterations = opt.iterations;
    out.initial_kl = kl_divergence(p, y, n);

    // All inputs coincide: P is uniform, which is exactly the Q of a fully
    // collapsed layout, so the optimum is known and descent would only drift.
    if (std::all_of(sq_dist.begin(), sq_dist.end(), [](double d) { return d == 0.0; })) {
        std::fill(y.begin(), y.end(), 0.0);
        out.final_kl = kl_divergence(p, y, n);
        for (const auto& [id, v] : store.entries()) out.coords[id] = {0.0, 0.0};
        return out;
    }

    std::vector<double> update(2 * n, 0.0);
    std::vector<double> gains(2 * n, 1.0);
    std::vector<double> grad(2 * n, 0.0);
    std::vector<double> num(n * n, 0.0);

    for (int iter = 0; iter < opt.iterations; ++iter) {
        const double exaggeration = iter < opt.exaggeration_iterations ? opt.early_exaggeration : 1.0;
        const double momentum =
            iter < opt.momentum_switch_iteration ? opt.initial_momentum : opt.final_momentum;

        const double sum_q = student_t(y, n, num);
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = num[i * n + j];
                const double mult = (exaggeration * p[i * n + j] - q / sum_q) * q;
                grad[2 * i] += 4.0 * mult * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += 4.0 * mult * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }

        for (std::size_t k = 0; k < 2 * n; ++k) {
            const bool same_sign = (grad[k] > 0) == (update[k] > 0);
            gains[k] = same_sign ? gains[k] * 0.8 : gains[k] + 0.2;
            if (gains[k] < 0.01) gains[k] = 0.01;
            update[k] = momentum * update[k] - opt.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }

        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y[2 * i];
            my += y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
        }
    }

    out.final_kl = kl_divergence(p, y, n);
    std::size_t i = 0;
    for (const auto& [id, v] : store.entries()) {
        out.coords[id] = {y[2 * i], y[2 * i + 1]};
        ++i;
    }
    return out;
}

Projection2D tsne_project(const EmbeddingStore& store, double perplexity, int iterations,
                          std::uint64_t seed) {
    TsneOptions opt;
    opt.perplexity = perplexity;
    opt.iterations = iterations;
    opt.seed = seed;
    return tsne_project(store, opt);
}

}  // namespace hlsagent
