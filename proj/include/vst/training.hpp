#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vst/checkpoint.hpp"
#include "vst/config_file.hpp"
#include "vst/data.hpp"
#include "vst/model.hpp"
#include "vst/tape.hpp"

namespace vst {

// Raised when optimization must stop (non-finite loss or gradients).
struct TrainAbort : std::runtime_error {
    explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

// Piecewise-constant schedule: base learning rate, divided by 10 at
// each milestone fraction of the total step count.
inline double lr_schedule(int step, int total, double base,
                          const std::vector<double>& milestones = {0.5, 0.75}) {
    if (step < 0 || step >= total)
        throw ContractError("lr_schedule: step " + std::to_string(step) + " outside [0," +
                            std::to_string(total) + ")");
    double lr = base;
    for (double m : milestones)
        if (static_cast<double>(step) >= m * static_cast<double>(total)) lr /= 10.0;
    return lr;
}

// Average-pool a full-resolution binary map onto a coarser grid and
// re-binarize at 0.5.
template <typename T>
Tensor<T> pool_binarize(const Tensor<T>& gt, int gh, int gw) {
    if (gt.ndim() != 2 || gt.dim(0) % gh != 0 || gt.dim(1) % gw != 0)
        throw ShapeError("pool_binarize: " + shape_str(gt.shape()) + " does not tile " +
                         std::to_string(gh) + "x" + std::to_string(gw));
    const int by = gt.dim(0) / gh, bx = gt.dim(1) / gw;
    Tensor<T> out({gh, gw});
    for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j) {
            T acc = T(0);
            for (int y = 0; y < by; ++y)
                for (int x = 0; x < bx; ++x) acc += gt.at(i * by + y, j * bx + x);
            out.at(i, j) = acc / T(by * bx) >= T(0.5) ? T(1) : T(0);
        }
    return out;
}

// Probability-space mean BCE; see Tape::bce_prob for the clamp.
template <typename T>
Tensor<T> bce_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& gt) {
    return tape.bce_prob(pred, gt);
}

template <typename T>
struct TotalLoss {
    Tensor<T> loss;  // scalar node on the tape
    double total = 0;
    double saliency = 0;
    double boundary = 0;
};

// Deep-supervised training loss: BCE at the final resolution plus BCE
// at every decoder level against pooled-and-rebinarized GT (boundary GT
// recomputed by Sobel at each level), all terms equally weighted. The
// terms are computed from the logit maps for stability.
template <typename T>
TotalLoss<T> total_loss(Tape<T>& tape, const SaliencyOutput<T>& out, const Tensor<T>& gt_sal,
                        const Tensor<T>& gt_bnd) {
    if (gt_sal.shape() != out.saliency.shape() || gt_bnd.shape() != out.boundary.shape())
        throw ShapeError("total_loss: ground truth must be at the full output resolution");
    TotalLoss<T> result;
    std::vector<Tensor<T>> terms;
    const auto push = [&](const Tensor<T>& logits, const Tensor<T>& gt, bool is_saliency) {
        Tensor<T> term = tape.bce_logits(logits, gt);
        (is_saliency ? result.saliency : result.boundary) += static_cast<double>(term.at(0));
        terms.push_back(term);
    };
    push(out.saliency_logits, gt_sal, true);
    push(out.boundary_logits, gt_bnd, false);
    for (const auto& aux : out.aux) {
        Tensor<T> sal_gt = pool_binarize(gt_sal, aux.grid_h, aux.grid_w);
        Tensor<T> bnd_gt = sobel_binary(sal_gt);
        push(aux.saliency_logits, sal_gt, true);
        push(aux.boundary_logits, bnd_gt, false);
    }
    Tensor<T> acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    result.loss = acc;
    result.total = result.saliency + result.boundary;
    return result;
}

// Standard Adam with bias correction. Moments are keyed by parameter
// identity and updated in place between forward passes.
template <typename T>
class Adam {
  public:
    Adam(double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {}

    std::int64_t step_count() const { return t_; }

    void step(std::vector<std::pair<std::string, Tensor<T>>>& params, const GradMap<T>& grads,
              double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (auto& [name, p] : params) {
            const Tensor<T> g = grads.get_or_zero(p);
            if (g.has_non_finite())
                throw TrainAbort("non-finite gradient for parameter " + name);
            auto it = state_.find(p.id());
            if (it == state_.end())
                it = state_.emplace(p.id(), Moments{Tensor<T>::zeros(p.shape()),
                                                    Tensor<T>::zeros(p.shape())}).first;
            Tensor<T>& m = it->second.m;
            Tensor<T>& v = it->second.v;
            for (std::int64_t i = 0; i < p.numel(); ++i) {
                const T gi = g.at(i);
                m.at(i) = T(b1_) * m.at(i) + T(1.0 - b1_) * gi;
                v.at(i) = T(b2_) * v.at(i) + T(1.0 - b2_) * gi * gi;
                const T mhat = m.at(i) / T(bc1);
                const T vhat = v.at(i) / T(bc2);
                p.at(i) -= T(lr) * mhat / (std::sqrt(vhat) + T(eps_));
            }
        }
    }

  private:
    struct Moments {
        Tensor<T> m, v;
    };
    double b1_, b2_, eps_;
    std::int64_t t_ = 0;
    std::unordered_map<std::uint64_t, Moments> state_;
};

struct TrainLogRow {
    int step = 0;
    double lr = 0, loss_total = 0, loss_sal = 0, loss_bnd = 0;
};

struct TrainResult {
    std::string final_checkpoint;
    std::vector<TrainLogRow> log;
};

inline void write_metrics_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open metrics log for writing: " + path);
    out << "step,lr,loss_total,loss_sal,loss_bnd\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
        out << r.step << "," << r.lr << "," << r.loss_total << "," << r.loss_sal << ","
            << r.loss_bnd << "\n";
}

// Seeded deterministic training loop. The training RNG stream is
// consumed in a fixed order each step: for every batch slot, one record
// index draw followed by that sample's preprocessing draws. Decoded
// samples are cached in memory (desk-scale datasets).
template <typename T>
TrainResult train_loop(const AppConfig& cfg, const Manifest& manifest, const std::string& out_dir,
                       std::ostream* progress = nullptr) {
    cfg.model.validate();
    cfg.training.validate();
    cfg.data.validate();
    if (cfg.data.crop != cfg.model.input_h || cfg.data.crop != cfg.model.input_w)
        throw ConfigError("data.crop must equal the model input size");
    if (cfg.training.total_steps > 0 && manifest.records.empty())
        throw ConfigError("training manifest has no records");

    VstModel<T> model(cfg.model);
    Adam<T> optimizer(cfg.training.beta1, cfg.training.beta2, cfg.training.adam_eps);
    Rng rng(cfg.training.seed);
    const std::string config_json = app_config_to_json(cfg).dump();
    std::unordered_map<size_t, DatasetSample> cache;
    const auto sample_at = [&](size_t idx) -> const DatasetSample& {
        auto it = cache.find(idx);
        if (it == cache.end()) it = cache.emplace(idx, load_sample(manifest.records[idx])).first;
        return it->second;
    };

    TrainResult result;
    const int total = cfg.training.total_steps;
    for (int step = 0; step < total; ++step) {
        const double lr = lr_schedule(step, total, cfg.training.base_lr,
                                      cfg.training.milestones);
        Tape<T> tape(true);
        Tensor<T> batch_loss;
        double sal_acc = 0, bnd_acc = 0;
        for (int b = 0; b < cfg.training.batch_size; ++b) {
            const size_t idx = static_cast<size_t>(
                rng.next_int(static_cast<int>(manifest.records.size())));
            const DatasetSample& sample = sample_at(idx);
            if (cfg.model.modality == Modality::kRgbd && !sample.has_depth())
                throw ConfigError("rgbd training requires depth for " +
                                  manifest.records[idx].image_path);
            ModelInput input = preprocess(sample, cfg.data.resize, cfg.data.crop, true,
                                          cfg.data.flip, rng);
            Tensor<T> image = input.image.template cast<T>();
            Tensor<T> depth;
            if (cfg.model.modality == Modality::kRgbd) depth = input.depth.template cast<T>();
            SaliencyOutput<T> out = model.forward(
                tape, image, cfg.model.modality == Modality::kRgbd ? &depth : nullptr);
            TotalLoss<T> loss = total_loss(tape, out, input.gt_mask.template cast<T>(),
                                           input.gt_boundary.template cast<T>());
            sal_acc += loss.saliency;
            bnd_acc += loss.boundary;
            batch_loss = b == 0 ? loss.loss : tape.add(batch_loss, loss.loss);
        }
        batch_loss = tape.scale(batch_loss, T(1) / T(cfg.training.batch_size));
        const double loss_value = static_cast<double>(batch_loss.at(0));
        if (!std::isfinite(loss_value))
            throw TrainAbort("non-finite loss at step " + std::to_string(step));
        GradMap<T> grads = tape.backward(batch_loss);
        try {
            optimizer.step(model.named_params(), grads, lr);
        } catch (const TrainAbort& e) {
            throw TrainAbort(std::string(e.what()) + " at step " + std::to_string(step));
        }

        if (step % cfg.training.log_every == 0 || step + 1 == total) {
            TrainLogRow row{step, lr, loss_value,
                            sal_acc / cfg.training.batch_size,
                            bnd_acc / cfg.training.batch_size};
            result.log.push_back(row);
            if (progress)
                (*progress) << "step " << row.step << " lr " << row.lr << " loss "
                            << row.loss_total << "\n";
        }
        if ((step + 1) % cfg.training.checkpoint_every == 0 && step + 1 != total) {
            save_checkpoint(model.named_params(), config_json,
                            out_dir + "/ckpt_step" + std::to_string(step + 1) + ".vst");
        }
    }

    result.final_checkpoint = out_dir + "/final.vst";
    save_checkpoint(model.named_params(), config_json, result.final_checkpoint);
    write_metrics_csv(out_dir + "/metrics.csv", result.log);
    return result;
}

}  // namespace vst
