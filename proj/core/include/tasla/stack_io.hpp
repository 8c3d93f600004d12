#pragma once

#include <string>
#include <vector>

#include "tasla/mat.hpp"
#include "tasla/mlda.hpp"

namespace tasla::io {

// Binary layer-stack container: magic "TSLK", version, layer count, layer
// ids, frame count, width, then row-major float32 values per layer. The
// companion *.json sidecar mirrors the same content for debugging.
void write_layer_stack(const std::string& path, const mlda::LayerStack& stack,
                       bool json_sidecar = true);
mlda::LayerStack read_layer_stack(const std::string& path);

std::string layer_stack_sidecar_path(const std::string& path);

// Checkpoints reuse the same container, one single-layer blob per tensor,
// concatenated; the manifest maps names to shapes in file order.
struct NamedTensor {
    std::string name;
    Mat value;
};

void write_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                      const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& bin_path,
                                         const std::string& manifest_path);

}  // namespace tasla::io
