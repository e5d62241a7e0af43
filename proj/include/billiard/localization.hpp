#pragma once

#include <span>
#include <vector>

#include "billiard/classical.hpp"
#include "billiard/husimi.hpp"

namespace billiard {

struct StateClassification {
    double overlap_index = 0.0;  // M = sum H_ij gamma_ij in [-1, 1]
    bool chaotic = false;        // M > threshold
    double threshold = 0.0;
};

/// Overlap of a normalized Husimi grid with the chaotic-cell indicator.
StateClassification overlap_index(const HusimiGrid& h, const ChaosGrid& grid,
                                  double threshold = 0.0);

/// Information entropy I = -sum H_ij log H_ij (natural log, 0 log 0 = 0).
double husimi_entropy(const HusimiGrid& h);

struct EntropyMeasure {
    double mean_entropy = 0.0;  // <I>
    double a = 0.0;             // A = e^{<I>} / N_c
};

/// Entropy localization measure over a set of consecutive chaotic states.
EntropyMeasure entropy_measure(std::span<const HusimiGrid> set, const ChaosGrid& grid);

/// Normalized overlap C_nm of two Husimi grids (Cauchy-Schwarz bound 1,
/// C_nn = 1 exactly).
double correlation_pair(const HusimiGrid& a, const HusimiGrid& b);

/// Correlation localization measure: mean C_nm over unordered pairs within
/// a sliding window of consecutive states, averaged over windows.
double correlation_measure(std::span<const HusimiGrid> set, int window = 20);

struct AMaxResult {
    double a_max = 0.0;
    double max_entropy = 0.0;
    bool low_confidence = false;  // reference set smaller than 100 states
};

/// Renormalization constant from a reference set of the nearly fully
/// chaotic billiard: A_max = e^{max I} / N_c.
AMaxResult a_max_calibration(std::span<const HusimiGrid> reference, const ChaosGrid& grid);

struct Separation {
    std::vector<StateClassification> labels;  // one per input state
    std::vector<int> chaotic_indices;         // order-preserving
    std::vector<int> regular_indices;
    double chaotic_fraction = 0.0;
};

/// Order-preserving partition by the overlap index.
Separation separate_states(std::span<const HusimiGrid> set, const ChaosGrid& grid,
                           double threshold = 0.0);

}  // namespace billiard
