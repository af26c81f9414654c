#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vst/model.hpp"

namespace vst {

// Optimization recipe. Defaults follow the full-size RGB schedule;
// toy runs override through the config file or --override flags.
struct TrainConfig {
    int total_steps = 40000;
    int batch_size = 11;
    double base_lr = 1e-4;
    std::vector<double> milestones = {0.5, 0.75};  // fractions of total, each drops lr 10x
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int checkpoint_every = 10000;
    int log_every = 50;
    int precision = 32;  // training element width; correctness suites always run at 64

    void validate() const {
        if (total_steps < 0) throw ConfigError("training.total_steps must be >= 0");
        if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
        if (base_lr <= 0) throw ConfigError("training.base_lr must be positive");
        double prev = 0;
        for (double m : milestones) {
            if (m <= prev || m >= 1.0)
                throw ConfigError("training.milestones must be strictly increasing within (0,1)");
            prev = m;
        }
        if (precision != 32 && precision != 64)
            throw ConfigError("training.precision must be 32 or 64");
        if (checkpoint_every < 1 || log_every < 1)
            throw ConfigError("training cadences must be >= 1");
    }
};

struct DataConfig {
    std::string train_manifest;
    int resize = 256;
    int crop = 224;
    bool flip = true;

    void validate() const {
        if (resize < 1 || crop < 1 || crop > resize)
            throw ConfigError("data: need 1 <= crop <= resize");
    }
};

struct AppConfig {
    VstConfig model;
    TrainConfig training;
    DataConfig data;
};

nlohmann::json model_config_to_json(const VstConfig& cfg);
VstConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json app_config_to_json(const AppConfig& cfg);
AppConfig app_config_from_json(const nlohmann::json& j);

// File defaults are the full-size recipe; every field may be omitted.
AppConfig load_app_config(const std::string& path);

// Applies one `dotted.key=value` override; values parse as JSON when
// possible and fall back to strings.
void apply_override(nlohmann::json& j, const std::string& key_value);

nlohmann::json read_json_file(const std::string& path);

}  // namespace vst
