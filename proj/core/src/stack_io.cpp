#include "tasla/stack_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tasla::io {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'L', 'K'};
constexpr std::uint32_t kVersion = 1;

void wr_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void wr_i32(std::ostream& os, std::int32_t v) { wr_u32(os, static_cast<std::uint32_t>(v)); }

std::uint32_t rd_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("layer stack: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::int32_t rd_i32(std::istream& is) { return static_cast<std::int32_t>(rd_u32(is)); }

void write_stack_stream(std::ostream& os, const mlda::LayerStack& stack) {
    os.write(kMagic, 4);
    wr_u32(os, kVersion);
    wr_u32(os, static_cast<std::uint32_t>(stack.layers.size()));
    for (int id : stack.layer_ids) wr_i32(os, id);
    wr_u32(os, static_cast<std::uint32_t>(stack.frames()));
    wr_u32(os, static_cast<std::uint32_t>(stack.width()));
    for (const Mat& layer : stack.layers)
        for (double x : layer.v)
            wr_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
}

mlda::LayerStack read_stack_stream(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("layer stack: bad magic");
    const std::uint32_t version = rd_u32(is);
    if (version != kVersion)
        throw std::runtime_error("layer stack: unsupported version " + std::to_string(version));
    const std::uint32_t n_layers = rd_u32(is);
    if (n_layers == 0 || n_layers > 1u << 16)
        throw std::runtime_error("layer stack: implausible layer count");
    mlda::LayerStack stack;
    stack.layer_ids.resize(n_layers);
    for (auto& id : stack.layer_ids) id = rd_i32(is);
    const std::uint32_t frames = rd_u32(is);
    const std::uint32_t width = rd_u32(is);
    stack.layers.reserve(n_layers);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        Mat layer(static_cast<int>(frames), static_cast<int>(width));
        for (double& x : layer.v)
            x = static_cast<double>(std::bit_cast<float>(rd_u32(is)));
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

}  // namespace

std::string layer_stack_sidecar_path(const std::string& path) { return path + ".json"; }

void write_layer_stack(const std::string& path, const mlda::LayerStack& stack,
                       bool json_sidecar) {
    stack.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("layer stack: cannot write '" + path + "'");
    write_stack_stream(os, stack);
    if (!json_sidecar) return;

    nlohmann::json j;
    j["magic"] = "TSLK";
    j["version"] = kVersion;
    j["layer_ids"] = stack.layer_ids;
    j["frames"] = stack.frames();
    j["width"] = stack.width();
    nlohmann::json layers = nlohmann::json::array();
    for (const Mat& layer : stack.layers) {
        // Mirror the float32 on-disk values, not the in-memory doubles.
        std::vector<float> vals(layer.v.begin(), layer.v.end());
        layers.push_back(vals);
    }
    j["layers"] = std::move(layers);
    std::ofstream js(layer_stack_sidecar_path(path));
    if (!js) throw std::runtime_error("layer stack: cannot write JSON sidecar");
    js << j.dump(2) << '\n';
}

mlda::LayerStack read_layer_stack(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("layer stack: cannot open '" + path + "'");
    mlda::LayerStack stack = read_stack_stream(is);
    stack.validate();
    return stack;
}

void write_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                      const std::vector<NamedTensor>& tensors) {
    std::ofstream os(bin_path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write '" + bin_path + "'");
    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        mlda::LayerStack one;
        one.layer_ids = {static_cast<int>(i)};
        one.layers = {tensors[i].value};
        write_stack_stream(os, one);
        manifest.push_back({{"name", tensors[i].name},
                            {"rows", tensors[i].value.rows},
                            {"cols", tensors[i].value.cols}});
    }
    std::ofstream ms(manifest_path);
    if (!ms) throw std::runtime_error("checkpoint: cannot write manifest");
    ms << manifest.dump(2) << '\n';
}

std::vector<NamedTensor> read_checkpoint(const std::string& bin_path,
                                         const std::string& manifest_path) {
    std::ifstream ms(manifest_path);
    if (!ms) throw std::runtime_error("checkpoint: cannot open manifest");
    nlohmann::json manifest = nlohmann::json::parse(ms);
    std::ifstream is(bin_path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + bin_path + "'");
    std::vector<NamedTensor> tensors;
    for (const auto& entry : manifest) {
        mlda::LayerStack one = read_stack_stream(is);
        NamedTensor t;
        t.name = entry.at("name").get<std::string>();
        t.value = std::move(one.layers.front());
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        if (t.value.rows != rows || t.value.cols != cols)
            throw std::runtime_error("checkpoint: tensor '" + t.name + "' is " +
                                     t.value.shape_str() + ", manifest says " +
                                     std::to_string(rows) + "x" + std::to_string(cols));
        tensors.push_back(std::move(t));
    }
    return tensors;
}

}  // namespace tasla::io
