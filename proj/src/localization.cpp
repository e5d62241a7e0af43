#include "billiard/localization.hpp"

#include <cmath>
#include <string>

#include "billiard/errors.hpp"

namespace billiard {

namespace {

void check_congruent(const HusimiGrid& h, const ChaosGrid& grid) {
    if (h.h.size() != grid.visited.size() || HusimiGrid::kN != ChaosGrid::kCells) {
        throw ConfigError("localization: Husimi and chaos grids are not congruent");
    }
}

}  // namespace

StateClassification overlap_index(const HusimiGrid& h, const ChaosGrid& grid, double threshold) {
    check_congruent(h, grid);
    double m = 0.0;
    for (size_t c = 0; c < h.h.size(); ++c) {
        m += grid.visited[c] ? h.h[c] : -h.h[c];
    }
    StateClassification out;
    out.overlap_index = m;
    out.threshold = threshold;
    out.chaotic = m > threshold;
    return out;
}

double husimi_entropy(const HusimiGrid& h) {
    double entropy = 0.0;
    for (double v : h.h) {
        if (v > 0.0) entropy -= v * std::log(v);
    }
    return entropy;
}

EntropyMeasure entropy_measure(std::span<const HusimiGrid> set, const ChaosGrid& grid) {
    if (set.empty()) {
        throw ConfigError("entropy_measure: empty state set");
    }
    if (grid.n_chaotic <= 0) {
        throw ConfigError("entropy_measure: chaos grid has no chaotic cells");
    }
    double mean = 0.0;
    for (const auto& h : set) mean += husimi_entropy(h);
    mean /= static_cast<double>(set.size());
    return {mean, std::exp(mean) / static_cast<double>(grid.n_chaotic)};
}

double correlation_pair(const HusimiGrid& a, const HusimiGrid& b) {
    if (a.h.size() != b.h.size()) {
        throw ConfigError("correlation_pair: grid shape mismatch");
    }
    double dot = 0.0, qa = 0.0, qb = 0.0;
    for (size_t c = 0; c < a.h.size(); ++c) {
        dot += a.h[c] * b.h[c];
        qa += a.h[c] * a.h[c];
        qb += b.h[c] * b.h[c];
    }
    if (qa <= 0.0 || qb <= 0.0) {
        throw NumericalError("correlation_pair: null normalization factor Q_n");
    }
    return dot / (std::sqrt(qa) * std::sqrt(qb));
}

double correlation_measure(std::span<const HusimiGrid> set, int window) {
    if (set.size() < 2) {
        throw ConfigError("correlation_measure: need at least two states");
    }
    const auto n = static_cast<long>(set.size());
    const long w = std::min<long>(std::max(window, 2), n);
    // unordered pairs within each sliding window of w consecutive states;
    // every window mean carries equal weight
    double acc = 0.0;
    long n_windows = 0;
    for (long start = 0; start + w <= n; start += 1) {
        double win_acc = 0.0;
        long win_pairs = 0;
        for (long i = start; i < start + w; ++i) {
            for (long j = i + 1; j < start + w; ++j) {
                win_acc += correlation_pair(set[i], set[j]);
                ++win_pairs;
            }
        }
        acc += win_acc / static_cast<double>(win_pairs);
        ++n_windows;
    }
    return acc / static_cast<double>(n_windows);
}

AMaxResult a_max_calibration(std::span<const HusimiGrid> reference, const ChaosGrid& grid) {
    if (reference.empty()) {
        throw ConfigError("a_max_calibration: empty reference set");
    }
    if (grid.n_chaotic <= 0) {
        throw ConfigError("a_max_calibration: chaos grid has no chaotic cells");
    }
    AMaxResult out;
    out.low_confidence = reference.size() < 100;
    double max_entropy = -1.0;
    for (const auto& h : reference) max_entropy = std::max(max_entropy, husimi_entropy(h));
    out.max_entropy = max_entropy;
    out.a_max = std::exp(max_entropy) / static_cast<double>(grid.n_chaotic);
    return out;
}

Separation separate_states(std::span<const HusimiGrid> set, const ChaosGrid& grid,
                           double threshold) {
    Separation sep;
    sep.labels.reserve(set.size());
    for (size_t i = 0; i < set.size(); ++i) {
        sep.labels.push_back(overlap_index(set[i], grid, threshold));
        if (sep.labels.back().chaotic) {
            sep.chaotic_indices.push_back(static_cast<int>(i));
        } else {
            sep.regular_indices.push_back(static_cast<int>(i));
        }
    }
    sep.chaotic_fraction =
        set.empty() ? 0.0
                    : static_cast<double>(sep.chaotic_indices.size()) /
                          static_cast<double>(set.size());
    return sep;
}

}  // namespace billiard
