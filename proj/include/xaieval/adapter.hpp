#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "xaieval/core.hpp"
#include "xaieval/provider.hpp"
#include "xaieval/refmodel.hpp"

namespace xai {

inline constexpr int kProtocolVersion = 1;

/// JSON-RPC style error codes used on the wire.
namespace wire_error {
inline constexpr int kParseError = -32700;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kInternal = -32603;
}  // namespace wire_error

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// {"width","height","channels","dtype":"f32le","data":<base64>} for a
/// channel-major float32 array.
nlohmann::json encode_array(int width, int height, int channels, std::span<const float> values);
struct DecodedArray {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> values;
};
/// ProtocolError on malformed payloads.
DecodedArray decode_array(const nlohmann::json& j);

nlohmann::json encode_image(const Image& img);
Image decode_image(const nlohmann::json& j);

/// Which model the evaluation talks to.
struct ProviderSpec {
  enum class Kind { BuiltinRefmodel, External };
  Kind kind = Kind::BuiltinRefmodel;
  std::string command;  // external: shell command line spawning the adapter
  int protocol = kProtocolVersion;
  double timeout_seconds = 10.0;
  std::optional<HeadWeights> head;  // builtin: overrides the default / dataset head

  void validate() const;
};

void to_json(nlohmann::json& j, const ProviderSpec& s);
void from_json(const nlohmann::json& j, ProviderSpec& s);

/// One adapter subprocess speaking newline-delimited JSON on its standard
/// streams. Requests are strictly sequential; not thread-safe.
class AdapterConnection {
 public:
  explicit AdapterConnection(const std::string& command, double timeout_seconds = 10.0);
  ~AdapterConnection();
  AdapterConnection(const AdapterConnection&) = delete;
  AdapterConnection& operator=(const AdapterConnection&) = delete;

  /// Sends the id-0 handshake. ProtocolError when the reply has another id or
  /// announces a protocol newer than `protocol`.
  Capabilities handshake(int protocol = kProtocolVersion);
  const std::string& model_id() const { return model_id_; }

  /// Sends one request and blocks for its reply. Adapter error objects map to
  /// CapabilityError (-32601), InvalidParams (-32602) or AdapterFault.
  nlohmann::json request(const std::string& method, nlohmann::json params);

  /// Every line sent (prefixed "> ") and received (prefixed "< "), when enabled.
  void record(bool on) { recording_ = on; }
  const std::vector<std::string>& transcript() const { return transcript_; }

 private:
  nlohmann::json exchange(std::int64_t id, const std::string& method, nlohmann::json params);
  void write_line(const std::string& line);
  std::string read_line();

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  double timeout_ = 10.0;
  std::int64_t next_id_ = 1;
  bool broken_ = false;
  std::string buffer_;
  std::string model_id_;
  bool recording_ = false;
  std::vector<std::string> transcript_;
};

class ExternalProvider final : public Provider {
 public:
  /// Spawns the adapter and performs the handshake.
  explicit ExternalProvider(ProviderSpec spec);

  Capabilities capabilities() override { return caps_; }
  std::string model_id() override { return model_id_; }
  Prediction predict(const Image& img) override;
  FeatureStack features(const Image& img) override;
  double ablated_score(const Image& img, const FeatureStack& stack, int channel) override;
  /// Spawns a fresh adapter process and randomizes the model inside it.
  std::unique_ptr<Provider> randomized(RandomizationMode mode, double sigma, std::uint64_t seed) override;
  Heatmap attribution(const Image& img) override;

  AdapterConnection& connection() { return *conn_; }

 private:
  void require(const char* capability);

  ProviderSpec spec_;
  std::unique_ptr<AdapterConnection> conn_;
  Capabilities caps_;
  std::string model_id_;
};

/// Builtin specs produce RefModelProviders (with `fallback_head` unless the
/// spec carries its own head); external specs spawn one adapter per call.
ProviderFactory make_provider_factory(const ProviderSpec& spec, const std::optional<HeadWeights>& fallback_head = {},
                                      int lesion_radius = 5);

}  // namespace xai
