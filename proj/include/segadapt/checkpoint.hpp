#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "segadapt/encoder.hpp"

namespace segadapt {

// Single-file tensor container: an 8-byte little-endian manifest length, a
// JSON manifest (format tag, encoder geometry, tensor name -> shape/offset
// index, free-form string metadata), then the raw float32 payloads back to
// back in manifest order.

struct LoadReport {
    std::vector<std::string> loaded;
    std::vector<std::string> missing;     // wanted by the model, absent from the file
    std::vector<std::string> unexpected;  // present in the file, unused by the model
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                     const EncoderConfig& geometry,
                     const std::map<std::string, std::string>& meta = {});

// Copies matching payloads into the target tensors in place. Throws
// GeometryMismatch on a stored-geometry or per-tensor shape conflict,
// naming the first offending tensor.
LoadReport load_checkpoint(const std::string& path,
                           const std::vector<std::pair<std::string, torch::Tensor>>& targets,
                           const EncoderConfig* expect_geometry = nullptr);

// Metadata of an existing checkpoint without touching any payload.
std::map<std::string, std::string> checkpoint_meta(const std::string& path);
EncoderConfig checkpoint_geometry(const std::string& path);

}  // namespace segadapt
