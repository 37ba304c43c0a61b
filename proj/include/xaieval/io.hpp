#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "xaieval/core.hpp"

namespace xai::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Raw float32 grids: `<stem>.f32` holds little-endian row-major samples and
// `<stem>.json` the sidecar {"width","height","dtype":"f32le","normalized"}.
void write_f32(const fs::path& payload, int width, int height, std::span<const float> values,
               bool normalized);
void write_image(const fs::path& payload, const Image& img);
void write_heatmap(const fs::path& payload, const Heatmap& h);

/// Reads `.f32` (with sidecar) or 16-bit binary PGM (`.pgm`, samples scaled to [0,1]).
Image read_image(const fs::path& path);
Heatmap read_heatmap(const fs::path& payload);

/// 16-bit P5 PGM, big-endian samples; intensities are clipped to [0,1] and scaled by 65535.
void write_pgm16(const fs::path& path, const Image& img);

/// Ground-truth JSON: {"center":[r,c],"radius":n,"box":[r0,c0,r1,c1],"mask":"file","context":"file"}.
/// Mask payloads are written next to the JSON and referenced by file name.
void write_truth(const fs::path& json_path, const GroundTruth& truth, int width, int height);
GroundTruth read_truth(const fs::path& json_path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view text);
json read_json(const fs::path& path);

}  // namespace xai::io
