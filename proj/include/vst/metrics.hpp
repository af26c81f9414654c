#pragma once

#include <string>
#include <vector>

#include "vst/tensor.hpp"

namespace vst {

// Prediction in [0,1] against a binary ground-truth map.
struct EvalPair {
    Tensor<double> pred;
    Tensor<double> gt;

    void check() const;
};

// Pixel-wise mean absolute error.
double mae(const EvalPair& pair);

// Maximum F-measure (β² = 0.3) over 256 evenly spaced thresholds
// t ∈ {0,...,255}/255 of dataset-mean precision and recall. A threshold
// with no positive predictions contributes precision 0 (hence F = 0).
double max_f(const std::vector<EvalPair>& pairs);

// Structure measure: α-weighted object- and region-aware similarity.
// Degenerate conventions: all-zero GT scores 1 - mean(pred), all-one GT
// scores mean(pred).
double s_measure(const EvalPair& pair, double alpha = 0.5);

// Maximum enhanced-alignment measure over 256 thresholds. The pointwise
// alignment 2ab/(a²+b²) of the mean-subtracted maps replaces 0/0 by 1
// where both centered values vanish.
double e_measure_max(const EvalPair& pair);

struct PerImageScores {
    std::string name;
    double s = 0, max_f = 0, e_max = 0, mae = 0;
};

// Per-image scores plus dataset aggregates. The dataset maxF pools
// precision/recall across images before maximizing over thresholds;
// the other aggregates are arithmetic means.
struct EvalReport {
    std::vector<PerImageScores> per_image;
    double mean_s = 0;
    double dataset_max_f = 0;
    double mean_e = 0;
    double mean_mae = 0;
    int thresholds = 256;
};

EvalReport evaluate_dataset(const std::vector<std::string>& names,
                            const std::vector<EvalPair>& pairs);

}  // namespace vst
