#include "xaieval/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xaieval/errors.hpp"

namespace xai::io {

namespace {

fs::path sidecar_of(const fs::path& payload) {
  fs::path p = payload;
  p.replace_extension(".json");
  return p;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::vector<float> read_f32_payload(const fs::path& payload, std::size_t count) {
  std::ifstream in(payload, std::ios::binary);
  if (!in) throw IoError("cannot open " + payload.string());
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t raw = 0;
    if (!in.read(reinterpret_cast<char*>(&raw), 4)) {
      throw IoError(payload.string() + " is shorter than its sidecar geometry");
    }
    raw = to_le(raw);
    std::memcpy(&out[i], &raw, 4);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(payload.string() + " is longer than its sidecar geometry");
  }
  return out;
}

json read_sidecar(const fs::path& payload) {
  const json side = read_json(sidecar_of(payload));
  if (!side.contains("width") || !side.contains("height")) {
    throw SchemaError(sidecar_of(payload).string() + " lacks width/height");
  }
  if (side.value("dtype", std::string("f32le")) != "f32le") {
    throw SchemaError(sidecar_of(payload).string() + ": unsupported dtype");
  }
  return side;
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch = 0;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        t.push_back(ch);
        break;
      }
    }
    while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) t.push_back(ch);
    return t;
  };
  if (token() != "P5") throw SchemaError(path.string() + " is not a binary PGM");
  const int width = std::stoi(token());
  const int height = std::stoi(token());
  const int maxval = std::stoi(token());
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw SchemaError(path.string() + ": bad PGM header");
  }
  Image img(width, height);
  const bool wide = maxval > 255;
  for (auto& px : img.pixels) {
    unsigned char b[2] = {0, 0};
    if (!in.read(reinterpret_cast<char*>(b), wide ? 2 : 1)) throw IoError(path.string() + ": truncated PGM");
    const int sample = wide ? (b[0] << 8) | b[1] : b[0];
    px = static_cast<float>(static_cast<double>(sample) / maxval);
  }
  return img;
}

}  // namespace

void write_f32(const fs::path& payload, int width, int height, std::span<const float> values,
               bool normalized) {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("payload size does not match geometry");
  }
  {
    std::ofstream out(payload, std::ios::binary);
    if (!out) throw IoError("cannot write " + payload.string());
    for (float v : values) {
      std::uint32_t raw = 0;
      std::memcpy(&raw, &v, 4);
      raw = to_le(raw);
      out.write(reinterpret_cast<const char*>(&raw), 4);
    }
  }
  json side = {{"width", width}, {"height", height}, {"dtype", "f32le"}, {"normalized", normalized}};
  write_text(sidecar_of(payload), side.dump(2) + "\n");
}

void write_image(const fs::path& payload, const Image& img) {
  write_f32(payload, img.width, img.height, img.pixels, false);
}

void write_heatmap(const fs::path& payload, const Heatmap& h) {
  write_f32(payload, h.width, h.height, h.values, h.normalized);
}

Image read_image(const fs::path& path) {
  if (path.extension() == ".pgm") return read_pgm(path);
  const json side = read_sidecar(path);
  const int w = side.at("width").get<int>();
  const int h = side.at("height").get<int>();
  return Image(w, h, read_f32_payload(path, static_cast<std::size_t>(w) * h));
}

Heatmap read_heatmap(const fs::path& payload) {
  const json side = read_sidecar(payload);
  const int w = side.at("width").get<int>();
  const int h = side.at("height").get<int>();
  return Heatmap(w, h, read_f32_payload(payload, static_cast<std::size_t>(w) * h),
                 side.value("normalized", false));
}

void write_pgm16(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n65535\n";
  for (float v : img.pixels) {
    const double clipped = std::clamp(static_cast<double>(v), 0.0, 1.0);
    const auto sample = static_cast<unsigned>(std::lround(clipped * 65535.0));
    const char b[2] = {static_cast<char>(sample >> 8), static_cast<char>(sample & 0xff)};
    out.write(b, 2);
  }
}

void write_truth(const fs::path& json_path, const GroundTruth& truth, int width, int height) {
  fs::path stem = json_path;
  stem.replace_extension();
  const fs::path mask_path = fs::path(stem.string() + ".mask.f32");
  json j = {{"center", {truth.center_row, truth.center_col}},
            {"radius", truth.radius},
            {"box", {truth.box.row0, truth.box.col0, truth.box.row1, truth.box.col1}},
            {"mask", mask_path.filename().string()}};
  write_f32(mask_path, width, height, truth.mask, false);
  if (truth.context) {
    const fs::path ctx_path = fs::path(stem.string() + ".context.f32");
    write_f32(ctx_path, width, height, *truth.context, false);
    j["context"] = ctx_path.filename().string();
  }
  write_text(json_path, j.dump(2) + "\n");
}

GroundTruth read_truth(const fs::path& json_path) {
  const json j = read_json(json_path);
  GroundTruth t;
  try {
    t.center_row = j.at("center").at(0).get<int>();
    t.center_col = j.at("center").at(1).get<int>();
    t.radius = j.at("radius").get<int>();
    const auto& b = j.at("box");
    t.box = Roi{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
  } catch (const json::exception& e) {
    throw SchemaError(json_path.string() + ": " + e.what());
  }
  const fs::path dir = json_path.parent_path();
  if (j.contains("mask")) t.mask = read_heatmap(dir / j["mask"].get<std::string>()).values;
  if (j.contains("context")) t.context = read_heatmap(dir / j["context"].get<std::string>()).values;
  return t;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace xai::io
