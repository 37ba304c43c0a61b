#pragma once

#include <stdexcept>
#include <string>

namespace xai {

// Base of every error the library raises. `kind()` is the stable short name
// used in diagnostics and in the CLI exit-code mapping.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define XAI_DEFINE_ERROR(Name)                                             \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(#Name, what) {}         \
  };

// Input / configuration problems (CLI exit code 2).
XAI_DEFINE_ERROR(ConfigError)
XAI_DEFINE_ERROR(SchemaError)
XAI_DEFINE_ERROR(ShapeError)
XAI_DEFINE_ERROR(InvalidHeatmap)
XAI_DEFINE_ERROR(InvalidRoiSize)
XAI_DEFINE_ERROR(InvalidQuantile)
XAI_DEFINE_ERROR(InputTooSmall)
XAI_DEFINE_ERROR(BadChannel)
XAI_DEFINE_ERROR(EmptyEvaluation)
XAI_DEFINE_ERROR(MixedRunsError)
XAI_DEFINE_ERROR(IoError)

// Model-side failures (CLI exit code 3).
XAI_DEFINE_ERROR(CapabilityError)
XAI_DEFINE_ERROR(InvalidParams)
XAI_DEFINE_ERROR(AdapterFault)
XAI_DEFINE_ERROR(AdapterTimeout)
XAI_DEFINE_ERROR(ProtocolError)

#undef XAI_DEFINE_ERROR

// Wraps a failure raised while rescoring one ablated channel.
class ProviderError : public Error {
 public:
  ProviderError(int channel, const std::string& what)
      : Error("ProviderError", "channel " + std::to_string(channel) + ": " + what),
        channel_(channel) {}
  int channel() const noexcept { return channel_; }

 private:
  int channel_;
};

/// Failures of the model process itself rather than of the request.
inline bool is_provider_fault(const Error& e) {
  const std::string& k = e.kind();
  return k == "ProviderError" || k == "InvalidParams" || k == "AdapterFault" || k == "AdapterTimeout" ||
         k == "ProtocolError";
}

}  // namespace xai
