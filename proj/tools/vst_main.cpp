#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "vst/checkpoint.hpp"
#include "vst/config_file.hpp"
#include "vst/data.hpp"
#include "vst/gradcheck_suite.hpp"
#include "vst/image_io.hpp"
#include "vst/metrics.hpp"
#include "vst/model.hpp"
#include "vst/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGradcheckFail = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitNanAbort = 3;

vst::AppConfig app_config_from_checkpoint_json(const std::string& json_str) {
    const nlohmann::json j = nlohmann::json::parse(json_str);
    if (j.contains("model")) return vst::app_config_from_json(j);
    vst::AppConfig cfg;
    cfg.model = vst::model_config_from_json(j);
    return cfg;
}

vst::AppConfig load_effective_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
    nlohmann::json j = vst::read_json_file(path);
    for (const std::string& kv : overrides) vst::apply_override(j, kv);
    vst::AppConfig cfg = vst::app_config_from_json(j);
    // Complete echo: re-feeding this line as a config file reproduces the run.
    std::cerr << "effective-config: " << vst::app_config_to_json(cfg).dump() << "\n";
    return cfg;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir) {
    const vst::AppConfig cfg = load_effective_config(config_path, overrides);
    cfg.model.validate();
    cfg.training.validate();
    cfg.data.validate();
    if (cfg.data.train_manifest.empty())
        throw vst::ConfigError("data.train_manifest is not set");
    const vst::Manifest manifest = vst::load_manifest(cfg.data.train_manifest, "train");
    fs::create_directories(out_dir);
    vst::TrainResult result;
    if (cfg.training.precision == 64)
        result = vst::train_loop<double>(cfg, manifest, out_dir, &std::cerr);
    else
        result = vst::train_loop<float>(cfg, manifest, out_dir, &std::cerr);
    std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
    return kExitOk;
}

vst::Tensor<float> gray_tensor_from_image(const vst::Image& img) {
    vst::Tensor<float> t({img.h, img.w});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            float acc = 0;
            for (int ch = 0; ch < img.channels; ++ch) acc += img.at(y, x, ch);
            t.at(y, x) = acc / (255.0f * img.channels);
        }
    return t;
}

void write_prob_map_png(const std::string& path, const vst::Tensor<float>& map) {
    const int h = map.dim(0), w = map.dim(1);
    std::vector<std::uint8_t> bytes(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            bytes[static_cast<size_t>(y) * w + x] =
                static_cast<std::uint8_t>(std::lround(255.0f * map.at(y, x)));
    vst::write_png_gray(path, bytes.data(), h, w);
}

int cmd_infer(const std::string& checkpoint, const std::string& input,
              const std::string& depth_path, const std::string& out_dir) {
    const vst::CheckpointData ckpt = vst::load_checkpoint(checkpoint);
    const vst::AppConfig cfg = app_config_from_checkpoint_json(ckpt.config_json);
    vst::VstModel<float> model(cfg.model);
    vst::load_into_model(model, ckpt);

    const bool rgbd = cfg.model.modality == vst::Modality::kRgbd;
    if (rgbd && depth_path.empty()) {
        std::cerr << "error: rgbd checkpoint requires --depth\n";
        return kExitBadConfig;
    }
    if (!rgbd && !depth_path.empty())
        std::cerr << "warning: rgb checkpoint, --depth ignored\n";

    vst::DatasetSample sample;
    const vst::Image img = vst::read_image(input);
    sample.image = vst::Tensor<float>({img.h, img.w, 3});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                sample.image.at(y, x, ch) = img.at(y, x, img.channels == 1 ? 0 : ch) / 255.0f;
    sample.gt_mask = vst::Tensor<float>({img.h, img.w});  // placeholder for joint preprocessing
    sample.gt_boundary = vst::Tensor<float>({img.h, img.w});
    if (rgbd) {
        const vst::Image dimg = vst::read_image(depth_path);
        if (dimg.h != img.h || dimg.w != img.w)
            throw vst::IoError("depth size does not match image for " + depth_path);
        vst::Tensor<float> d = gray_tensor_from_image(dimg);
        float lo = d.at(0), hi = d.at(0);
        for (std::int64_t i = 0; i < d.numel(); ++i) {
            lo = std::min(lo, d.at(i));
            hi = std::max(hi, d.at(i));
        }
        sample.depth = vst::Tensor<float>({img.h, img.w, 3});
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    sample.depth.at(y, x, ch) = hi > lo ? (d.at(y, x) - lo) / (hi - lo) : 0.0f;
    }

    vst::Rng rng(0);  // eval preprocessing draws nothing
    vst::ModelInput in = vst::preprocess(sample, cfg.data.resize, cfg.data.crop, false, false,
                                         rng);
    vst::Tape<float> tape(false);
    vst::SaliencyOutput<float> out =
        model.forward(tape, in.image, rgbd ? &in.depth : nullptr);

    fs::create_directories(out_dir);
    const std::string stem = fs::path(input).stem().string();
    write_prob_map_png(out_dir + "/" + stem + "_sal.png", out.saliency);
    write_prob_map_png(out_dir + "/" + stem + "_bnd.png", out.boundary);
    std::cout << out_dir + "/" + stem + "_sal.png" << "\n";
    std::cout << out_dir + "/" + stem + "_bnd.png" << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& csv) {
    std::map<std::string, fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(gt_dir))
        if (entry.is_regular_file()) gt_files[entry.path().stem().string()] = entry.path();

    std::vector<std::string> names;
    std::vector<vst::EvalPair> pairs;
    int skipped = 0;
    std::vector<fs::path> pred_files;
    for (const auto& entry : fs::directory_iterator(pred_dir))
        if (entry.is_regular_file()) pred_files.push_back(entry.path());
    std::sort(pred_files.begin(), pred_files.end());
    for (const auto& pred_path : pred_files) {
        const std::string stem = pred_path.stem().string();
        auto it = gt_files.find(stem);
        if (it == gt_files.end()) {
            std::cerr << "warning: no ground truth for " << pred_path.string() << ", skipped\n";
            ++skipped;
            continue;
        }
        const vst::Image pimg = vst::read_image(pred_path.string());
        const vst::Image gimg = vst::read_image(it->second.string());
        if (pimg.h != gimg.h || pimg.w != gimg.w) {
            std::cerr << "warning: size mismatch for " << stem << ", skipped\n";
            ++skipped;
            continue;
        }
        vst::EvalPair pair;
        pair.pred = vst::Tensor<double>({pimg.h, pimg.w});
        pair.gt = vst::Tensor<double>({gimg.h, gimg.w});
        const vst::Tensor<float> pg = gray_tensor_from_image(pimg);
        const vst::Tensor<float> gg = gray_tensor_from_image(gimg);
        for (std::int64_t i = 0; i < pg.numel(); ++i) {
            pair.pred.at(i) = pg.at(i);
            pair.gt.at(i) = gg.at(i) >= 0.5f ? 1.0 : 0.0;
        }
        names.push_back(stem);
        pairs.push_back(std::move(pair));
    }
    if (pairs.empty()) {
        std::cerr << "error: no matched prediction/ground-truth pairs\n";
        return kExitBadConfig;
    }

    const vst::EvalReport report = vst::evaluate_dataset(names, pairs);
    std::cout << std::fixed << std::setprecision(6);
    std::cout << "image S maxF Emax MAE\n";
    for (const auto& row : report.per_image)
        std::cout << row.name << " " << row.s << " " << row.max_f << " " << row.e_max << " "
                  << row.mae << "\n";
    std::cout << "mean " << report.mean_s << " " << report.dataset_max_f << " " << report.mean_e
              << " " << report.mean_mae << "\n";
    if (skipped > 0) std::cout << "skipped " << skipped << "\n";

    if (!csv.empty()) {
        std::ofstream out(csv);
        if (!out) throw vst::IoError("cannot open CSV for writing: " + csv);
        out << std::fixed << std::setprecision(9);
        out << "image,S,maxF,Emax,MAE\n";
        for (const auto& row : report.per_image)
            out << row.name << "," << row.s << "," << row.max_f << "," << row.e_max << ","
                << row.mae << "\n";
        out << "mean," << report.mean_s << "," << report.dataset_max_f << "," << report.mean_e
            << "," << report.mean_mae << "\n";
    }
    return kExitOk;
}

int cmd_inspect(const std::string& config_path, const std::vector<std::string>& overrides) {
    const vst::AppConfig cfg = load_effective_config(config_path, overrides);
    cfg.model.validate();
    const vst::GridPlan g = vst::grid_plan(cfg.model);
    const int h = cfg.model.input_h, w = cfg.model.input_w;
    std::cout << "input " << h << "x" << w << " modality " << vst::modality_str(cfg.model.modality)
              << "\n";
    std::cout << "encoder grids: " << g.h4 << "x" << g.w4 << " (l=" << g.h4 * g.w4 << ", dim "
              << cfg.model.c << ") -> " << g.h8 << "x" << g.w8 << " (l=" << g.h8 * g.w8
              << ", dim " << cfg.model.c << ") -> " << g.h16 << "x" << g.w16
              << " (l=" << g.h16 * g.w16 << ", dim " << cfg.model.d << ")\n";
    std::cout << "decoder grids: " << g.h16 << "x" << g.w16 << " -> " << g.h8 << "x" << g.w8
              << " -> " << g.h4 << "x" << g.w4 << " -> " << h << "x" << w << "\n";
    std::cout << "parameter ledger:\n";
    for (const auto& [group, count] : vst::param_ledger(cfg.model))
        std::cout << "  " << group << " " << count << "\n";
    const std::int64_t total = vst::count_params(cfg.model);
    std::cout << "total parameters: " << total << " (" << std::fixed << std::setprecision(2)
              << static_cast<double>(total) / 1e6 << "M)\n";
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int precision, const std::string& corrupt, int e2e_coords) {
    if (precision != 64) {
        std::cerr << "error: the gradient check suite runs at 64-bit precision\n";
        return kExitBadConfig;
    }
    const std::vector<vst::GradCheckCase> cases = vst::run_gradcheck_suite(seed, corrupt,
                                                                           e2e_coords);
    bool all_pass = true;
    std::cout << std::scientific << std::setprecision(3);
    for (const auto& c : cases) {
        std::cout << c.name << " max_rel_err " << c.max_rel_err << " tol " << c.tolerance << " "
                  << (c.pass() ? "ok" : "FAIL") << "\n";
        all_pass = all_pass && c.pass();
    }
    if (!all_pass) {
        for (const auto& c : cases)
            if (!c.pass()) std::cerr << "gradient check failed for " << c.name << "\n";
        return kExitGradcheckFail;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"saliency transformer: training, inference, and evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "train_out";
    std::vector<std::string> overrides;
    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "config file (json)")->required();
    train->add_option("--override", overrides, "section.key=value overrides");
    train->add_option("--out-dir", out_dir, "output directory for checkpoints and logs");

    std::string checkpoint, input, depth, infer_out = "infer_out";
    auto* infer = app.add_subcommand("infer", "run a checkpoint on one image");
    infer->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    infer->add_option("--input", input, "input image (png/pnm)")->required();
    infer->add_option("--depth", depth, "depth map for rgbd checkpoints");
    infer->add_option("--out-dir", infer_out, "output directory for maps");

    std::string pred_dir, gt_dir, csv_path;
    auto* eval = app.add_subcommand("eval", "evaluate saliency maps against ground truth");
    eval->add_option("--pred-dir", pred_dir, "directory of predicted maps")->required();
    eval->add_option("--gt-dir", gt_dir, "directory of ground-truth masks")->required();
    eval->add_option("--csv", csv_path, "write per-image scores to this CSV");

    std::string inspect_config;
    std::vector<std::string> inspect_overrides;
    auto* inspect = app.add_subcommand("inspect", "print token grids and parameter counts");
    inspect->add_option("--config", inspect_config, "config file (json)")->required();
    inspect->add_option("--override", inspect_overrides, "section.key=value overrides");

    std::uint64_t gc_seed = 0;
    int gc_precision = 64;
    std::string gc_corrupt;
    int gc_e2e_coords = 2;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seed", gc_seed, "rng seed");
    gradcheck->add_option("--precision", gc_precision, "floating point width (64)");
    gradcheck->add_option("--corrupt", gc_corrupt, "test hook: corrupt this component's gradient")
        ->group("");
    gradcheck->add_option("--e2e-coords", gc_e2e_coords, "coordinates per tensor for the e2e case")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitBadConfig;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, out_dir);
        if (infer->parsed()) return cmd_infer(checkpoint, input, depth, infer_out);
        if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, csv_path);
        if (inspect->parsed()) return cmd_inspect(inspect_config, inspect_overrides);
        if (gradcheck->parsed())
            return cmd_gradcheck(gc_seed, gc_precision, gc_corrupt, gc_e2e_coords);
    } catch (const vst::TrainAbort& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return kExitNanAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadConfig;
    }
    return kExitBadConfig;
}
