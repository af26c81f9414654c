#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vst/model.hpp"
#include "vst/tensor.hpp"

namespace vst {

// Checkpoint file layout, all in one file:
//
//   vst-checkpoint v1
//   config <single-line json>
//   tensors <N>
//   <name> <ndim> <d0> <d1> ... <byte offset into blob>
//   ...
//   blob <total bytes>
//   <raw little-endian 32-bit float data>
//
// The blob is always 32-bit float regardless of the compute precision;
// saving from a 32-bit model round-trips bit-exactly.

template <typename T>
void save_checkpoint(const std::vector<std::pair<std::string, Tensor<T>>>& params,
                     const std::string& config_json, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << "vst-checkpoint v1\n";
    out << "config " << config_json << "\n";
    out << "tensors " << params.size() << "\n";
    std::uint64_t offset = 0;
    for (const auto& [name, t] : params) {
        out << name << " " << t.ndim();
        for (int i = 0; i < t.ndim(); ++i) out << " " << t.dim(i);
        out << " " << offset << "\n";
        offset += static_cast<std::uint64_t>(t.numel()) * sizeof(float);
    }
    out << "blob " << offset << "\n";
    for (const auto& [name, t] : params) {
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            const float v = static_cast<float>(t.at(i));
            out.write(reinterpret_cast<const char*>(&v), sizeof(float));
        }
    }
    if (!out) throw IoError("short write while saving checkpoint: " + path);
}

struct CheckpointData {
    std::string config_json;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "vst-checkpoint v1")
        throw IoError("corrupt checkpoint manifest (bad magic) in " + path);
    if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
        throw IoError("corrupt checkpoint manifest (missing config) in " + path);
    CheckpointData ckpt;
    ckpt.config_json = line.substr(7);
    if (!std::getline(in, line) || line.rfind("tensors ", 0) != 0)
        throw IoError("corrupt checkpoint manifest (missing tensor table) in " + path);
    const std::size_t n = std::stoul(line.substr(8));
    struct Entry {
        std::string name;
        Shape shape;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw IoError("corrupt checkpoint manifest (truncated tensor table) in " + path);
        std::istringstream row(line);
        Entry e;
        int ndim = 0;
        if (!(row >> e.name >> ndim) || ndim < 1)
            throw IoError("corrupt checkpoint manifest (bad tensor row '" + line + "')");
        e.shape.resize(static_cast<size_t>(ndim));
        for (int k = 0; k < ndim; ++k)
            if (!(row >> e.shape[static_cast<size_t>(k)]))
                throw IoError("corrupt checkpoint manifest (bad dims for " + e.name + ")");
        if (!(row >> e.offset))
            throw IoError("corrupt checkpoint manifest (missing offset for " + e.name + ")");
        entries.push_back(std::move(e));
    }
    if (!std::getline(in, line) || line.rfind("blob ", 0) != 0)
        throw IoError("corrupt checkpoint manifest (missing blob header) in " + path);
    const std::uint64_t blob_bytes = std::stoull(line.substr(5));
    std::vector<float> blob(blob_bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_bytes));
    if (static_cast<std::uint64_t>(in.gcount()) != blob_bytes)
        throw IoError("truncated checkpoint blob in " + path + ": expected " +
                      std::to_string(blob_bytes) + " bytes, got " + std::to_string(in.gcount()));
    for (const auto& e : entries) {
        const std::int64_t count = shape_numel(e.shape);
        if (e.offset % sizeof(float) != 0 ||
            e.offset / sizeof(float) + static_cast<std::uint64_t>(count) > blob.size())
            throw IoError("tensor " + e.name + " extends past checkpoint blob");
        const float* src = blob.data() + e.offset / sizeof(float);
        ckpt.tensors.emplace_back(e.name,
                                  Tensor<float>(e.shape, std::vector<float>(src, src + count)));
    }
    return ckpt;
}

// Copies checkpoint values into an already constructed model, in place
// so optimizer state and parameter identity stay valid.
template <typename T>
void load_into_model(VstModel<T>& model, const CheckpointData& ckpt) {
    std::size_t loaded = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        Tensor<T>* param = model.find_param(name);
        if (!param) throw IoError("checkpoint tensor " + name + " not present in model");
        if (param->shape() != t.shape())
            throw ShapeError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) +
                             ", model expects " + shape_str(param->shape()));
        for (std::int64_t i = 0; i < t.numel(); ++i) param->at(i) = static_cast<T>(t.at(i));
        ++loaded;
    }
    if (loaded != model.named_params().size())
        throw IoError("checkpoint covers " + std::to_string(loaded) + " of " +
                      std::to_string(model.named_params().size()) + " model tensors");
}

}  // namespace vst
