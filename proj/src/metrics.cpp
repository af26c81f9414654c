#include "vst/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vst {

namespace {

constexpr double kEps = 2.2204e-16;
constexpr int kThresholds = 256;
constexpr double kBetaSq = 0.3;

// Suffix-summed histogram of floor(255·pred): positives(t) for integer
// thresholds t is the count of pixels with 255·pred >= t.
struct ThresholdCounts {
    std::array<double, kThresholds> predicted{};
    std::array<double, kThresholds> true_positive{};
    double gt_positive = 0;
};

ThresholdCounts threshold_counts(const EvalPair& pair) {
    std::array<double, kThresholds> hist_all{}, hist_fg{};
    ThresholdCounts c;
    for (std::int64_t i = 0; i < pair.pred.numel(); ++i) {
        const int bucket =
            std::clamp(static_cast<int>(std::floor(pair.pred.at(i) * 255.0)), 0, 255);
        hist_all[static_cast<size_t>(bucket)] += 1;
        if (pair.gt.at(i) > 0.5) {
            hist_fg[static_cast<size_t>(bucket)] += 1;
            c.gt_positive += 1;
        }
    }
    double acc_all = 0, acc_fg = 0;
    for (int t = kThresholds - 1; t >= 0; --t) {
        acc_all += hist_all[static_cast<size_t>(t)];
        acc_fg += hist_fg[static_cast<size_t>(t)];
        c.predicted[static_cast<size_t>(t)] = acc_all;
        c.true_positive[static_cast<size_t>(t)] = acc_fg;
    }
    return c;
}

double mean_of(const Tensor<double>& t) {
    double acc = 0;
    for (std::int64_t i = 0; i < t.numel(); ++i) acc += t.at(i);
    return acc / static_cast<double>(t.numel());
}

// Object-level similarity of the (masked) map: 2x̄ / (x̄² + 1 + σ),
// with the unbiased standard deviation.
double object_score(const Tensor<double>& map, const Tensor<double>& mask, bool invert) {
    double sum = 0, count = 0;
    for (std::int64_t i = 0; i < map.numel(); ++i) {
        if (mask.at(i) > 0.5) {
            sum += invert ? 1.0 - map.at(i) : map.at(i);
            count += 1;
        }
    }
    if (count == 0) return 0;
    const double mean = sum / count;
    double ss = 0;
    for (std::int64_t i = 0; i < map.numel(); ++i) {
        if (mask.at(i) > 0.5) {
            const double v = (invert ? 1.0 - map.at(i) : map.at(i)) - mean;
            ss += v * v;
        }
    }
    const double sd = count > 1 ? std::sqrt(ss / (count - 1)) : 0.0;
    return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

double s_object(const EvalPair& pair) {
    const double mu = mean_of(pair.gt);
    Tensor<double> bg(pair.gt.shape());
    for (std::int64_t i = 0; i < pair.gt.numel(); ++i) bg.at(i) = 1.0 - pair.gt.at(i);
    const double fg_score = object_score(pair.pred, pair.gt, false);
    const double bg_score = object_score(pair.pred, bg, true);
    return mu * fg_score + (1.0 - mu) * bg_score;
}

// The region term's per-quadrant similarity (a mean/variance form of
// SSIM with N-1 normalization).
double region_ssim(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    if (n == 0) return 0;
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cxy = 0;
    for (size_t i = 0; i < n; ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cxy += (x[i] - mx) * (y[i] - my);
    }
    const double denom_n = static_cast<double>(n) - 1.0 + kEps;
    vx /= denom_n;
    vy /= denom_n;
    cxy /= denom_n;
    const double alpha = 4.0 * mx * my * cxy;
    const double beta = (mx * mx + my * my) * (vx + vy);
    if (alpha != 0) return alpha / (beta + kEps);
    return beta == 0 ? 1.0 : 0.0;
}

double s_region(const EvalPair& pair) {
    const int h = pair.gt.dim(0), w = pair.gt.dim(1);
    double total = 0, sum_x = 0, sum_y = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = pair.gt.at(y, x);
            total += v;
            sum_x += v * (x + 1);
            sum_y += v * (y + 1);
        }
    // 1-based rounded centroid, as in the reference formulation.
    int cx = total > 0 ? static_cast<int>(std::round(sum_x / total)) : (w + 1) / 2;
    int cy = total > 0 ? static_cast<int>(std::round(sum_y / total)) : (h + 1) / 2;
    cx = std::clamp(cx, 1, w);
    cy = std::clamp(cy, 1, h);

    const double area = static_cast<double>(h) * w;
    double score = 0;
    for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
            const int y0 = qy == 0 ? 0 : cy, y1 = qy == 0 ? cy : h;
            const int x0 = qx == 0 ? 0 : cx, x1 = qx == 0 ? cx : w;
            std::vector<double> pv, gv;
            pv.reserve(static_cast<size_t>((y1 - y0) * (x1 - x0)));
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    pv.push_back(pair.pred.at(y, x));
                    gv.push_back(pair.gt.at(y, x));
                }
            const double weight = static_cast<double>((y1 - y0) * (x1 - x0)) / area;
            score += weight * region_ssim(pv, gv);
        }
    }
    return score;
}

}  // namespace

void EvalPair::check() const {
    if (pred.ndim() != 2 || pred.shape() != gt.shape())
        throw ShapeError("evaluation pair: pred " + shape_str(pred.shape()) +
                         " vs gt " + shape_str(gt.shape()));
    for (std::int64_t i = 0; i < gt.numel(); ++i)
        if (gt.at(i) != 0.0 && gt.at(i) != 1.0)
            throw ContractError("evaluation pair: ground truth is not binary");
}

double mae(const EvalPair& pair) {
    pair.check();
    double acc = 0;
    for (std::int64_t i = 0; i < pair.pred.numel(); ++i)
        acc += std::abs(pair.pred.at(i) - pair.gt.at(i));
    return acc / static_cast<double>(pair.pred.numel());
}

double max_f(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw ContractError("max_f: empty dataset");
    std::array<double, kThresholds> precision{}, recall{};
    for (const EvalPair& pair : pairs) {
        pair.check();
        const ThresholdCounts c = threshold_counts(pair);
        for (int t = 0; t < kThresholds; ++t) {
            const double pred_pos = c.predicted[static_cast<size_t>(t)];
            const double tp = c.true_positive[static_cast<size_t>(t)];
            precision[static_cast<size_t>(t)] += pred_pos > 0 ? tp / pred_pos : 0.0;
            recall[static_cast<size_t>(t)] += c.gt_positive > 0 ? tp / c.gt_positive : 0.0;
        }
    }
    const double n = static_cast<double>(pairs.size());
    double best = 0;
    for (int t = 0; t < kThresholds; ++t) {
        const double p = precision[static_cast<size_t>(t)] / n;
        const double r = recall[static_cast<size_t>(t)] / n;
        const double denom = kBetaSq * p + r;
        const double f = denom > 0 ? (1.0 + kBetaSq) * p * r / denom : 0.0;
        best = std::max(best, f);
    }
    return best;
}

double s_measure(const EvalPair& pair, double alpha) {
    pair.check();
    const double mu = mean_of(pair.gt);
    if (mu == 0.0) return 1.0 - mean_of(pair.pred);
    if (mu == 1.0) return mean_of(pair.pred);
    const double s = alpha * s_object(pair) + (1.0 - alpha) * s_region(pair);
    return std::clamp(s, 0.0, 1.0);
}

double e_measure_max(const EvalPair& pair) {
    pair.check();
    const std::int64_t n = pair.pred.numel();
    const double gt_mean = mean_of(pair.gt);
    double best = 0;
    for (int t = 0; t < kThresholds; ++t) {
        const double thr = static_cast<double>(t) / 255.0;
        double bin_sum = 0;
        for (std::int64_t i = 0; i < n; ++i) bin_sum += pair.pred.at(i) >= thr ? 1.0 : 0.0;
        const double bin_mean = bin_sum / static_cast<double>(n);
        double acc = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double a = (pair.pred.at(i) >= thr ? 1.0 : 0.0) - bin_mean;
            const double b = pair.gt.at(i) - gt_mean;
            const double phi = (a == 0.0 && b == 0.0) ? 1.0 : 2.0 * a * b / (a * a + b * b);
            acc += (1.0 + phi) * (1.0 + phi) / 4.0;
        }
        best = std::max(best, acc / static_cast<double>(n));
    }
    return best;
}

EvalReport evaluate_dataset(const std::vector<std::string>& names,
                            const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw ContractError("evaluate: empty dataset");
    EvalReport report;
    for (size_t i = 0; i < pairs.size(); ++i) {
        PerImageScores row;
        row.name = i < names.size() ? names[i] : "image" + std::to_string(i);
        row.s = s_measure(pairs[i]);
        row.max_f = max_f({pairs[i]});
        row.e_max = e_measure_max(pairs[i]);
        row.mae = mae(pairs[i]);
        report.mean_s += row.s;
        report.mean_e += row.e_max;
        report.mean_mae += row.mae;
        report.per_image.push_back(std::move(row));
    }
    const double n = static_cast<double>(pairs.size());
    report.mean_s /= n;
    report.mean_e /= n;
    report.mean_mae /= n;
    report.dataset_max_f = max_f(pairs);
    return report;
}

}  // namespace vst
