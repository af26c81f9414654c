#include "vst/config_file.hpp"

#include <fstream>

namespace vst {

using nlohmann::json;

namespace {

json spec_to_json(const SplitSpec& s) { return json::array({s.k, s.s, s.p}); }

SplitSpec spec_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError("split spec must be a [k,s,p] array, got " + j.dump());
    return SplitSpec{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json model_config_to_json(const VstConfig& cfg) {
    json j;
    j["input_h"] = cfg.input_h;
    j["input_w"] = cfg.input_w;
    j["modality"] = modality_str(cfg.modality);
    j["c"] = cfg.c;
    j["d"] = cfg.d;
    j["encoder_specs"] = json::array({spec_to_json(cfg.encoder_specs[0]),
                                      spec_to_json(cfg.encoder_specs[1]),
                                      spec_to_json(cfg.encoder_specs[2])});
    j["decoder_specs"] = json::array({spec_to_json(cfg.decoder_specs[0]),
                                      spec_to_json(cfg.decoder_specs[1]),
                                      spec_to_json(cfg.decoder_specs[2])});
    j["layers_encoder"] = cfg.layers_encoder;
    j["layers_convertor"] = cfg.layers_convertor;
    j["layers_decoder3"] = cfg.layers_decoder3;
    j["layers_decoder2"] = cfg.layers_decoder2;
    j["layers_decoder1"] = cfg.layers_decoder1;
    j["n_heads"] = cfg.n_heads;
    j["mlp_ratio_backbone"] = cfg.mlp_ratio_backbone;
    j["mlp_ratio_head"] = cfg.mlp_ratio_head;
    j["seed"] = cfg.seed;
    return j;
}

VstConfig model_config_from_json(const json& j) {
    VstConfig cfg;
    read_field(j, "input_h", cfg.input_h);
    read_field(j, "input_w", cfg.input_w);
    if (j.contains("input")) {  // square shorthand
        cfg.input_h = j.at("input").get<int>();
        cfg.input_w = cfg.input_h;
    }
    if (j.contains("modality")) {
        const std::string m = j.at("modality").get<std::string>();
        if (m == "rgb")
            cfg.modality = Modality::kRgb;
        else if (m == "rgbd")
            cfg.modality = Modality::kRgbd;
        else
            throw ConfigError("modality must be 'rgb' or 'rgbd', got '" + m + "'");
    }
    read_field(j, "c", cfg.c);
    read_field(j, "d", cfg.d);
    if (j.contains("encoder_specs")) {
        const json& arr = j.at("encoder_specs");
        if (!arr.is_array() || arr.size() != 3)
            throw ConfigError("encoder_specs must list three [k,s,p] entries");
        for (int i = 0; i < 3; ++i) cfg.encoder_specs[i] = spec_from_json(arr[static_cast<size_t>(i)]);
    }
    if (j.contains("decoder_specs")) {
        const json& arr = j.at("decoder_specs");
        if (!arr.is_array() || arr.size() != 3)
            throw ConfigError("decoder_specs must list three [k,s,p] entries");
        for (int i = 0; i < 3; ++i) cfg.decoder_specs[i] = spec_from_json(arr[static_cast<size_t>(i)]);
    }
    read_field(j, "layers_encoder", cfg.layers_encoder);
    read_field(j, "layers_convertor", cfg.layers_convertor);
    read_field(j, "layers_decoder3", cfg.layers_decoder3);
    read_field(j, "layers_decoder2", cfg.layers_decoder2);
    read_field(j, "layers_decoder1", cfg.layers_decoder1);
    read_field(j, "n_heads", cfg.n_heads);
    read_field(j, "mlp_ratio_backbone", cfg.mlp_ratio_backbone);
    read_field(j, "mlp_ratio_head", cfg.mlp_ratio_head);
    read_field(j, "seed", cfg.seed);
    return cfg;
}

json app_config_to_json(const AppConfig& cfg) {
    json j;
    j["model"] = model_config_to_json(cfg.model);
    json t;
    t["total_steps"] = cfg.training.total_steps;
    t["batch_size"] = cfg.training.batch_size;
    t["base_lr"] = cfg.training.base_lr;
    t["milestones"] = cfg.training.milestones;
    t["beta1"] = cfg.training.beta1;
    t["beta2"] = cfg.training.beta2;
    t["adam_eps"] = cfg.training.adam_eps;
    t["seed"] = cfg.training.seed;
    t["checkpoint_every"] = cfg.training.checkpoint_every;
    t["log_every"] = cfg.training.log_every;
    t["precision"] = cfg.training.precision;
    j["training"] = t;
    json d;
    d["train_manifest"] = cfg.data.train_manifest;
    d["resize"] = cfg.data.resize;
    d["crop"] = cfg.data.crop;
    d["flip"] = cfg.data.flip;
    j["data"] = d;
    return j;
}

AppConfig app_config_from_json(const json& j) {
    AppConfig cfg;
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
    if (j.contains("training")) {
        const json& t = j.at("training");
        read_field(t, "total_steps", cfg.training.total_steps);
        read_field(t, "batch_size", cfg.training.batch_size);
        read_field(t, "base_lr", cfg.training.base_lr);
        read_field(t, "milestones", cfg.training.milestones);
        read_field(t, "beta1", cfg.training.beta1);
        read_field(t, "beta2", cfg.training.beta2);
        read_field(t, "adam_eps", cfg.training.adam_eps);
        read_field(t, "seed", cfg.training.seed);
        read_field(t, "checkpoint_every", cfg.training.checkpoint_every);
        read_field(t, "log_every", cfg.training.log_every);
        read_field(t, "precision", cfg.training.precision);
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        read_field(d, "train_manifest", cfg.data.train_manifest);
        read_field(d, "resize", cfg.data.resize);
        read_field(d, "crop", cfg.data.crop);
        read_field(d, "flip", cfg.data.flip);
    }
    return cfg;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return j;
}

AppConfig load_app_config(const std::string& path) {
    return app_config_from_json(read_json_file(path));
}

void apply_override(json& j, const std::string& key_value) {
    const size_t eq = key_value.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + key_value + "' must look like section.key=value");
    const std::string key = key_value.substr(0, eq);
    const std::string value = key_value.substr(eq + 1);
    json* node = &j;
    size_t start = 0;
    while (true) {
        const size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
            (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

}  // namespace vst
