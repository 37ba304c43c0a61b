#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "xaieval/core.hpp"
#include "xaieval/phantom.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("xaieval-" + tag + "-" + std::to_string(rd()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Phantom case whose observation is replaced by its noiseless composite.
inline xai::Case clean_case(const xai::PhantomConfig& cfg, bool with_lesion, int index) {
  xai::Case c = xai::generate_case(cfg, with_lesion, index);
  c.image = c.clean;
  return c;
}

inline xai::Heatmap make_heatmap(int w, int h, std::vector<float> v) {
  return xai::Heatmap(w, h, std::move(v), true);
}

}  // namespace testutil
