#include "xaieval/adapter.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>

#include "xaieval/errors.hpp"

extern char** environ;

namespace xai {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (v[k] = decode_char(c)) < 0) throw ProtocolError("invalid base64 payload");
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

json encode_array(int width, int height, int channels, std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  return json{{"width", width},
              {"height", height},
              {"channels", channels},
              {"dtype", "f32le"},
              {"data", base64_encode(bytes)}};
}

DecodedArray decode_array(const json& j) {
  DecodedArray a;
  try {
    a.width = j.at("width").get<int>();
    a.height = j.at("height").get<int>();
    a.channels = j.value("channels", 1);
    if (j.value("dtype", std::string("f32le")) != "f32le") throw ProtocolError("unsupported payload dtype");
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    const std::size_t count = static_cast<std::size_t>(a.width) * a.height * a.channels;
    if (a.width <= 0 || a.height <= 0 || a.channels <= 0 || bytes.size() != count * 4) {
      throw ProtocolError("payload size does not match its geometry");
    }
    a.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
      a.values[i] = std::bit_cast<float>(u);
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed array payload: ") + e.what());
  }
  return a;
}

json encode_image(const Image& img) { return encode_array(img.width, img.height, 1, img.pixels); }

Image decode_image(const json& j) {
  DecodedArray a = decode_array(j);
  if (a.channels != 1) throw ProtocolError("image payload must have one channel");
  return Image(a.width, a.height, std::move(a.values));
}

void ProviderSpec::validate() const {
  if (kind == Kind::External && command.empty()) throw ConfigError("external provider needs a command");
  if (protocol < 1) throw ConfigError("protocol version must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("adapter timeout must be positive");
}

void to_json(json& j, const ProviderSpec& s) {
  if (s.kind == ProviderSpec::Kind::BuiltinRefmodel) {
    j = json{{"kind", "builtin-refmodel"}};
    if (s.head) j["head"] = *s.head;
  } else {
    j = json{{"kind", "external"}, {"command", s.command}, {"protocol", s.protocol}, {"timeout", s.timeout_seconds}};
  }
}

void from_json(const json& j, ProviderSpec& s) {
  s = ProviderSpec{};
  if (j.is_string()) {
    // Shorthand: "builtin-refmodel" or an adapter command line.
    const auto text = j.get<std::string>();
    if (text != "builtin-refmodel") {
      s.kind = ProviderSpec::Kind::External;
      s.command = text;
    }
    s.validate();
    return;
  }
  try {
    const std::string kind = j.value("kind", std::string("builtin-refmodel"));
    if (kind == "builtin-refmodel") {
      s.kind = ProviderSpec::Kind::BuiltinRefmodel;
      if (j.contains("head") && !j["head"].is_null()) s.head = j["head"].get<HeadWeights>();
    } else if (kind == "external") {
      s.kind = ProviderSpec::Kind::External;
      s.command = j.at("command").get<std::string>();
      s.protocol = j.value("protocol", kProtocolVersion);
      s.timeout_seconds = j.value("timeout", 10.0);
    } else {
      throw ConfigError("unknown provider kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider spec: ") + e.what());
  }
  s.validate();
}

AdapterConnection::AdapterConnection(const std::string& command, double timeout_seconds)
    : timeout_(timeout_seconds) {
  // A dying adapter must surface as an error, not kill the host with SIGPIPE.
  static std::once_flag sigpipe_once;
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw AdapterFault(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw AdapterFault(std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  const char* argv[] = {"sh", "-c", command.c_str(), nullptr};
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw AdapterFault("cannot spawn adapter '" + command + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

AdapterConnection::~AdapterConnection() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ <= 0) return;
  // End-of-input asks the adapter to exit; give it a moment, then insist.
  for (int i = 0; i < 100; ++i) {
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_ || (r < 0 && errno != EINTR)) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(pid_, SIGKILL);
  int status = 0;
  while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
  }
}

void AdapterConnection::write_line(const std::string& line) {
  if (recording_) transcript_.push_back("> " + line);
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw AdapterFault(std::string("adapter input closed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string AdapterConnection::read_line() {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration<double>(timeout_);
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (recording_) transcript_.push_back("< " + line);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    if (left <= 0) {
      broken_ = true;
      throw AdapterTimeout("no reply from adapter within " + std::to_string(timeout_) + " s");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(left));
    if (r < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw AdapterFault(std::string("poll: ") + std::strerror(errno));
    }
    if (r == 0) continue;
    char chunk[65536];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw AdapterFault(std::string("read: ") + std::strerror(errno));
    }
    if (n == 0) {
      broken_ = true;
      throw AdapterFault("adapter exited before replying");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

json AdapterConnection::exchange(std::int64_t id, const std::string& method, json params) {
  if (broken_) throw AdapterFault("adapter connection is no longer usable");
  const json req = {{"id", id}, {"method", method}, {"params", std::move(params)}};
  write_line(req.dump());
  const std::string line = read_line();
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::parse_error&) {
    broken_ = true;
    throw ProtocolError("adapter sent a non-JSON line: " + line);
  }
  if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_integer() ||
      reply["id"].get<std::int64_t>() != id) {
    broken_ = true;
    throw ProtocolError("reply id does not match request id " + std::to_string(id) + ": " + line);
  }
  if (reply.contains("error") && !reply["error"].is_null()) {
    const json& err = reply["error"];
    const int code = err.value("code", wire_error::kInternal);
    const std::string msg = err.value("message", std::string("unspecified adapter error"));
    if (code == wire_error::kMethodNotFound) throw CapabilityError(method + ": " + msg);
    if (code == wire_error::kInvalidParams) throw InvalidParams(method + ": " + msg);
    throw AdapterFault(method + " (code " + std::to_string(code) + "): " + msg);
  }
  if (!reply.contains("result")) {
    broken_ = true;
    throw ProtocolError("reply carries neither result nor error: " + line);
  }
  return reply["result"];
}

Capabilities AdapterConnection::handshake(int protocol) {
  const json result = exchange(0, "handshake", json{{"protocol", protocol}});
  Capabilities caps;
  try {
    caps.protocol = result.at("protocol").get<int>();
    for (const auto& c : result.value("capabilities", json::array())) caps.supports.insert(c.get<std::string>());
    model_id_ = result.value("model_id", std::string("external"));
  } catch (const json::exception& e) {
    broken_ = true;
    throw ProtocolError(std::string("malformed handshake reply: ") + e.what());
  }
  if (caps.protocol < 1 || caps.protocol > protocol) {
    broken_ = true;
    throw ProtocolError("adapter speaks protocol " + std::to_string(caps.protocol) + ", host supports " +
                        std::to_string(protocol));
  }
  return caps;
}

json AdapterConnection::request(const std::string& method, json params) {
  return exchange(next_id_++, method, std::move(params));
}

ExternalProvider::ExternalProvider(ProviderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  conn_ = std::make_unique<AdapterConnection>(spec_.command, spec_.timeout_seconds);
  caps_ = conn_->handshake(spec_.protocol);
  model_id_ = conn_->model_id();
}

void ExternalProvider::require(const char* capability) {
  if (!caps_.has(capability)) {
    throw CapabilityError("adapter '" + model_id_ + "' does not support '" + capability + "'");
  }
}

Prediction ExternalProvider::predict(const Image& img) {
  require("predict");
  const json r = conn_->request("predict", json{{"image", encode_image(img)}});
  Prediction p;
  try {
    p.score = r.at("score").get<double>();
    p.present = r.at("present").get<bool>();
    if (r.contains("box") && !r["box"].is_null()) {
      const auto& b = r["box"];
      p.box = Roi{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    }
    if (r.contains("peak") && !r["peak"].is_null()) {
      p.peak_row = r["peak"].at(0).get<int>();
      p.peak_col = r["peak"].at(1).get<int>();
    } else if (p.box) {
      p.peak_row = (p.box->row0 + p.box->row1 - 1) / 2;
      p.peak_col = (p.box->col0 + p.box->col1 - 1) / 2;
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed predict reply: ") + e.what());
  }
  return p;
}

FeatureStack ExternalProvider::features(const Image& img) {
  require("features");
  const json r = conn_->request("features", json{{"image", encode_image(img)}});
  if (!r.contains("features")) throw ProtocolError("features reply lacks 'features'");
  DecodedArray a = decode_array(r["features"]);
  if (a.width != img.width || a.height != img.height) {
    throw ProtocolError("feature geometry " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                        " does not match the image");
  }
  return FeatureStack{a.width, a.height, a.channels, std::move(a.values)};
}

double ExternalProvider::ablated_score(const Image& img, const FeatureStack& stack, int channel) {
  require("ablate");
  if (channel < 0 || channel >= stack.channels) throw BadChannel("channel " + std::to_string(channel));
  const json r = conn_->request("ablate", json{{"image", encode_image(img)}, {"channel", channel}});
  try {
    return r.at("score").get<double>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed ablate reply: ") + e.what());
  }
}

std::unique_ptr<Provider> ExternalProvider::randomized(RandomizationMode mode, double sigma, std::uint64_t seed) {
  require("randomize");
  auto fresh = std::make_unique<ExternalProvider>(spec_);
  const json r = fresh->conn_->request("randomize",
                                       json{{"mode", to_string(mode)}, {"sigma", sigma}, {"seed", seed}});
  if (r.is_object() && r.contains("model_id")) fresh->model_id_ = r["model_id"].get<std::string>();
  return fresh;
}

Heatmap ExternalProvider::attribution(const Image& img) {
  require("attribution");
  const json r = conn_->request("attribution", json{{"image", encode_image(img)}});
  if (!r.contains("heatmap")) throw ProtocolError("attribution reply lacks 'heatmap'");
  DecodedArray a = decode_array(r["heatmap"]);
  return Heatmap(a.width, a.height, std::move(a.values), true);
}

ProviderFactory make_provider_factory(const ProviderSpec& spec, const std::optional<HeadWeights>& fallback_head,
                                      int lesion_radius) {
  spec.validate();
  if (spec.kind == ProviderSpec::Kind::External) {
    return [spec]() -> std::unique_ptr<Provider> { return std::make_unique<ExternalProvider>(spec); };
  }
  HeadWeights head = spec.head ? *spec.head : fallback_head ? *fallback_head : default_head();
  return refmodel_factory(RefModel(default_filter_bank(), std::move(head), lesion_radius));
}

}  // namespace xai
