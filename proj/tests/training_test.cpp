#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "vst/checkpoint.hpp"
#include "vst/training.hpp"

using vst::Tape;
using vst::Tensor;

namespace {

vst::AppConfig micro_train_config(const std::string& manifest_path) {
    vst::AppConfig cfg;
    cfg.model.input_h = cfg.model.input_w = 16;
    cfg.model.c = 4;
    cfg.model.d = 8;
    cfg.model.layers_encoder = 1;
    cfg.model.layers_convertor = 1;
    cfg.model.layers_decoder3 = 1;
    cfg.model.layers_decoder2 = 1;
    cfg.model.layers_decoder1 = 1;
    cfg.model.seed = 1;
    cfg.training.total_steps = 5;
    cfg.training.batch_size = 2;
    cfg.training.base_lr = 1e-3;
    cfg.training.log_every = 1;
    cfg.training.checkpoint_every = 1000;
    cfg.training.seed = 2;
    cfg.data.train_manifest = manifest_path;
    cfg.data.resize = 20;
    cfg.data.crop = 16;
    return cfg;
}

}  // namespace

TEST_CASE("lr schedule hits the documented plateaus") {
    CHECK(vst::lr_schedule(0, 40000, 1e-4) == doctest::Approx(1e-4));
    CHECK(vst::lr_schedule(19999, 40000, 1e-4) == doctest::Approx(1e-4));
    CHECK(vst::lr_schedule(20000, 40000, 1e-4) == doctest::Approx(1e-5));
    CHECK(vst::lr_schedule(29999, 40000, 1e-4) == doctest::Approx(1e-5));
    CHECK(vst::lr_schedule(30000, 40000, 1e-4) == doctest::Approx(1e-6));
    CHECK(vst::lr_schedule(39999, 40000, 1e-4) == doctest::Approx(1e-6));
    CHECK_THROWS_AS(vst::lr_schedule(-1, 40000, 1e-4), vst::ContractError);
    CHECK_THROWS_AS(vst::lr_schedule(40000, 40000, 1e-4), vst::ContractError);

    // piecewise constant and non-increasing
    double prev = 1e-4;
    for (int step = 0; step < 40000; step += 97) {
        const double lr = vst::lr_schedule(step, 40000, 1e-4);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("pool_binarize averages blocks then thresholds") {
    Tensor<double> gt({4, 4});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) gt.at(y, x) = 1.0;
    gt.at(0, 2) = 1.0;  // one extra pixel: top-right block at 1/4 < 0.5
    Tensor<double> pooled = vst::pool_binarize(gt, 2, 2);
    CHECK(pooled.at(0, 0) == 1.0);
    CHECK(pooled.at(1, 0) == 1.0);
    CHECK(pooled.at(0, 1) == 0.0);
    CHECK(pooled.at(1, 1) == 0.0);
    CHECK_THROWS_AS(vst::pool_binarize(gt, 3, 2), vst::ShapeError);
}

TEST_CASE("total_loss is the sum of eight bce terms") {
    vst::Rng rng(1);
    Tape<double> tape;
    const int hw = 16;
    vst::SaliencyOutput<double> out;
    const auto mk_level = [&](int level, int g) {
        typename vst::SaliencyOutput<double>::Aux aux;
        aux.level = level;
        aux.grid_h = aux.grid_w = g;
        aux.saliency_logits = testutil::random_tensor<double>({g, g}, rng, -3.0, 3.0);
        aux.boundary_logits = testutil::random_tensor<double>({g, g}, rng, -3.0, 3.0);
        aux.saliency = tape.sigmoid(aux.saliency_logits);
        aux.boundary = tape.sigmoid(aux.boundary_logits);
        return aux;
    };
    out.saliency_logits = testutil::random_tensor<double>({hw, hw}, rng, -3.0, 3.0);
    out.boundary_logits = testutil::random_tensor<double>({hw, hw}, rng, -3.0, 3.0);
    out.saliency = tape.sigmoid(out.saliency_logits);
    out.boundary = tape.sigmoid(out.boundary_logits);
    out.aux = {mk_level(3, 1), mk_level(2, 2), mk_level(1, 4)};

    Tensor<double> gt_sal({hw, hw});
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 10; ++x) gt_sal.at(y, x) = 1.0;
    Tensor<double> gt_bnd = vst::sobel_binary(gt_sal);

    vst::TotalLoss<double> loss = vst::total_loss(tape, out, gt_sal, gt_bnd);

    // oracle: eight independent probability-space bce terms
    const auto bce_oracle = [](const Tensor<double>& logits, const Tensor<double>& gt) {
        double acc = 0;
        for (std::int64_t i = 0; i < logits.numel(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-logits.at(i)));
            acc += -(gt.at(i) * std::log(p) + (1 - gt.at(i)) * std::log(1 - p));
        }
        return acc / static_cast<double>(logits.numel());
    };
    double expected = bce_oracle(out.saliency_logits, gt_sal);
    expected += bce_oracle(out.boundary_logits, gt_bnd);
    double expected_sal = bce_oracle(out.saliency_logits, gt_sal);
    double expected_bnd = bce_oracle(out.boundary_logits, gt_bnd);
    for (const auto& aux : out.aux) {
        Tensor<double> pooled = vst::pool_binarize(gt_sal, aux.grid_h, aux.grid_w);
        Tensor<double> bnd = vst::sobel_binary(pooled);
        expected += bce_oracle(aux.saliency_logits, pooled) + bce_oracle(aux.boundary_logits, bnd);
        expected_sal += bce_oracle(aux.saliency_logits, pooled);
        expected_bnd += bce_oracle(aux.boundary_logits, bnd);
    }
    CHECK(loss.loss.at(0) == doctest::Approx(expected).epsilon(1e-10));
    CHECK(loss.saliency == doctest::Approx(expected_sal).epsilon(1e-10));
    CHECK(loss.boundary == doctest::Approx(expected_bnd).epsilon(1e-10));
    CHECK(loss.total == doctest::Approx(loss.saliency + loss.boundary).epsilon(1e-12));
}

TEST_CASE("total_loss vanishes for perfect predictions") {
    Tape<double> tape;
    const int hw = 16;
    Tensor<double> gt_sal({hw, hw});
    for (int y = 2; y < 14; ++y)
        for (int x = 2; x < 9; ++x) gt_sal.at(y, x) = 1.0;
    Tensor<double> gt_bnd = vst::sobel_binary(gt_sal);

    const auto to_logits = [](const Tensor<double>& gt) {
        Tensor<double> z(gt.shape());
        for (std::int64_t i = 0; i < gt.numel(); ++i) z.at(i) = gt.at(i) > 0.5 ? 40.0 : -40.0;
        return z;
    };
    vst::SaliencyOutput<double> out;
    out.saliency_logits = to_logits(gt_sal);
    out.boundary_logits = to_logits(gt_bnd);
    out.saliency = tape.sigmoid(out.saliency_logits);
    out.boundary = tape.sigmoid(out.boundary_logits);
    for (int level : {3, 2, 1}) {
        typename vst::SaliencyOutput<double>::Aux aux;
        aux.level = level;
        const int g = level == 3 ? 1 : level == 2 ? 2 : 4;
        aux.grid_h = aux.grid_w = g;
        Tensor<double> pooled = vst::pool_binarize(gt_sal, g, g);
        aux.saliency_logits = to_logits(pooled);
        aux.boundary_logits = to_logits(vst::sobel_binary(pooled));
        aux.saliency = tape.sigmoid(aux.saliency_logits);
        aux.boundary = tape.sigmoid(aux.boundary_logits);
        out.aux.push_back(aux);
    }
    CHECK(vst::total_loss(tape, out, gt_sal, gt_bnd).loss.at(0) < 1e-5);
}

TEST_CASE("adam first steps and zero-gradient behavior") {
    using Params = std::vector<std::pair<std::string, Tensor<double>>>;
    {
        // zero gradients from a fresh state leave parameters unchanged
        Params params = {{"p", Tensor<double>::full({3}, 1.5)}};
        vst::Adam<double> opt(0.9, 0.999, 1e-8);
        vst::GradMap<double> grads;  // empty: treated as zero
        opt.step(params, grads, 1e-2);
        CHECK(opt.step_count() == 1);
        for (int i = 0; i < 3; ++i) CHECK(params[0].second.at(i) == 1.5);
    }
    {
        // bias-corrected first step with g=1 moves by about -lr
        Params params = {{"p", Tensor<double>::zeros({1})}};
        vst::Adam<double> opt(0.9, 0.999, 1e-8);
        vst::GradMap<double> grads;
        grads.insert(params[0].second.id(), Tensor<double>::ones({1}));
        opt.step(params, grads, 1e-3);
        CHECK(params[0].second.at(0) == doctest::Approx(-1e-3).epsilon(1e-6));
    }
    {
        // lr 0 is the identity even with history
        Params params = {{"p", Tensor<double>::full({2}, 0.7)}};
        vst::Adam<double> opt(0.9, 0.999, 1e-8);
        for (int s = 0; s < 3; ++s) {
            vst::GradMap<double> grads;
            grads.insert(params[0].second.id(), Tensor<double>::full({2}, 0.3));
            opt.step(params, grads, 0.0);
        }
        CHECK(params[0].second.at(0) == 0.7);
    }
    {
        // NaN gradient aborts naming the parameter
        Params params = {{"layer.weight", Tensor<double>::zeros({2})}};
        vst::Adam<double> opt(0.9, 0.999, 1e-8);
        vst::GradMap<double> grads;
        Tensor<double> bad({2});
        bad.at(0) = std::nan("");
        grads.insert(params[0].second.id(), bad);
        CHECK_THROWS_WITH_AS(opt.step(params, grads, 1e-3), doctest::Contains("layer.weight"),
                             vst::TrainAbort);
    }
}

TEST_CASE("adam trajectory matches an independent recurrence on a quadratic") {
    // minimize f(x) = x^2/2, gradient x, from x0 = 1
    using Params = std::vector<std::pair<std::string, Tensor<double>>>;
    Params params = {{"x", Tensor<double>::ones({1})}};
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05;
    vst::Adam<double> opt(b1, b2, eps);

    double x_ref = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
        const double g = x_ref;
        {
            vst::GradMap<double> grads;
            grads.insert(params[0].second.id(), Tensor<double>::full({1}, params[0].second.at(0)));
            opt.step(params, grads, lr);
        }
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        x_ref -= lr * mhat / (std::sqrt(vhat) + eps);
        CHECK(params[0].second.at(0) == doctest::Approx(x_ref).epsilon(1e-12));
    }
}

TEST_CASE("train_loop determinism, zero-step checkpoint, csv log") {
    const std::string data_dir = testutil::temp_dir("vst_train_data");
    const std::string manifest_path = testutil::write_synthetic_dataset(data_dir, 3, 24, 21);
    vst::Manifest manifest = vst::load_manifest(manifest_path);

    {  // zero-step run writes the initialization checkpoint
        vst::AppConfig cfg = micro_train_config(manifest_path);
        cfg.training.total_steps = 0;
        const std::string out_dir = testutil::temp_dir("vst_train_zero");
        vst::TrainResult r = vst::train_loop<float>(cfg, manifest, out_dir);
        vst::CheckpointData ckpt = vst::load_checkpoint(r.final_checkpoint);
        vst::VstModel<float> fresh(cfg.model);
        for (const auto& [name, t] : ckpt.tensors) {
            vst::Tensor<float>* p = fresh.find_param(name);
            REQUIRE(p != nullptr);
            CHECK(testutil::max_abs_diff(*p, t) == 0.0f);
        }
    }
    {  // identical seeds give bit-identical traces; logs land in the csv
        vst::AppConfig cfg = micro_train_config(manifest_path);
        const std::string out1 = testutil::temp_dir("vst_train_a");
        const std::string out2 = testutil::temp_dir("vst_train_b");
        vst::TrainResult r1 = vst::train_loop<float>(cfg, manifest, out1);
        vst::TrainResult r2 = vst::train_loop<float>(cfg, manifest, out2);
        REQUIRE(r1.log.size() == r2.log.size());
        for (size_t i = 0; i < r1.log.size(); ++i) {
            CHECK(r1.log[i].loss_total == r2.log[i].loss_total);
            CHECK(r1.log[i].lr == r2.log[i].lr);
        }
        std::ifstream csv(out1 + "/metrics.csv");
        std::string header;
        std::getline(csv, header);
        CHECK(header == "step,lr,loss_total,loss_sal,loss_bnd");
        int rows = 0;
        std::string line;
        while (std::getline(csv, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 5);

        // a different training seed changes the trace
        vst::AppConfig cfg2 = micro_train_config(manifest_path);
        cfg2.training.seed = 77;
        const std::string out3 = testutil::temp_dir("vst_train_c");
        vst::TrainResult r3 = vst::train_loop<float>(cfg2, manifest, out3);
        CHECK(r3.log[4].loss_total != r1.log[4].loss_total);
    }
    {  // checkpoint reload reproduces forward outputs after training
        vst::AppConfig cfg = micro_train_config(manifest_path);
        const std::string out_dir = testutil::temp_dir("vst_train_d");
        vst::TrainResult r = vst::train_loop<float>(cfg, manifest, out_dir);
        vst::CheckpointData ckpt = vst::load_checkpoint(r.final_checkpoint);
        const nlohmann::json j = nlohmann::json::parse(ckpt.config_json);
        vst::AppConfig loaded = vst::app_config_from_json(j);
        vst::VstModel<float> model(loaded.model);
        vst::load_into_model(model, ckpt);

        vst::DatasetSample s = vst::load_sample(manifest.records[0]);
        vst::Rng rng(0);
        vst::ModelInput in = vst::preprocess(s, cfg.data.resize, cfg.data.crop, false, false, rng);
        Tape<float> t1(false), t2(false);
        vst::SaliencyOutput<float> a = model.forward(t1, in.image);
        vst::SaliencyOutput<float> b = model.forward(t2, in.image);
        CHECK(testutil::max_abs_diff(a.saliency, b.saliency) == 0.0f);
        CHECK(!a.saliency.has_non_finite());
    }
}
