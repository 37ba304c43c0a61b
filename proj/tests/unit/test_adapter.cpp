#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "xaieval/adapter.hpp"
#include "xaieval/errors.hpp"
#include "xaieval/evalsuite.hpp"

using namespace xai;

namespace {

std::string fixture(const std::string& args = "") {
  std::string cmd = XAIEVAL_FIXTURE_ADAPTER;
  if (!args.empty()) cmd += " " + args;
  return cmd;
}

ProviderSpec external(const std::string& args = "", double timeout = 10.0) {
  ProviderSpec s;
  s.kind = ProviderSpec::Kind::External;
  s.command = fixture(args);
  s.timeout_seconds = timeout;
  return s;
}

std::vector<Case> cases(int n, int size = 64) {
  PhantomConfig cfg;
  cfg.width = cfg.height = size;
  cfg.seed = 17;
  return generate_dataset(cfg, n, 0.5);
}

}  // namespace

TEST_SUITE("adapter") {
  TEST_CASE("base64 known vectors and round trip") {
    const std::string text = "foobar";
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    CHECK(base64_encode(std::span(bytes).first(0)).empty());
    CHECK(base64_encode(std::span(bytes).first(1)) == "Zg==");
    CHECK(base64_encode(std::span(bytes).first(2)) == "Zm8=");
    CHECK(base64_encode(bytes) == "Zm9vYmFy");
    CHECK(base64_decode("Zm9vYg==") == std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 4));
    std::vector<std::uint8_t> all(256);
    for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
    CHECK(base64_decode(base64_encode(all)) == all);
  }

  TEST_CASE("arrays encode as little-endian float32") {
    const std::vector<float> v{1.0f, -2.5f, 0.125f, 3e-8f, 7.0f, 0.0f};
    const auto j = encode_array(3, 1, 2, v);
    CHECK(j.at("dtype") == "f32le");
    const DecodedArray a = decode_array(j);
    CHECK(a.width == 3);
    CHECK(a.channels == 2);
    CHECK(a.values == v);
    auto bad = j;
    bad["width"] = 4;
    CHECK_THROWS_AS(decode_array(bad), ProtocolError);
    bad = j;
    bad["dtype"] = "f64";
    CHECK_THROWS_AS(decode_array(bad), ProtocolError);

    Image img(5, 3);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<float>(i) * 0.01f;
    CHECK(decode_image(encode_image(img)) == img);
  }

  TEST_CASE("handshake reports capabilities and model id") {
    AdapterConnection conn(fixture());
    const Capabilities caps = conn.handshake();
    CHECK(caps.protocol == kProtocolVersion);
    CHECK(caps.has("predict"));
    CHECK(caps.has("randomize"));
    CHECK(conn.model_id() == RefModel().model_id());
  }

  TEST_CASE("external provider agrees with the builtin model") {
    ExternalProvider ext(external());
    RefModelProvider builtin;
    for (const Case& c : cases(4)) {
      const Prediction a = ext.predict(c.image);
      const Prediction b = builtin.predict(c.image);
      CHECK(a.score == doctest::Approx(b.score).epsilon(1e-12));
      CHECK(a.present == b.present);
      CHECK(a.box == b.box);
      const FeatureStack fa = ext.features(c.image);
      const FeatureStack fb = builtin.features(c.image);
      CHECK(fa.channels == kChannels);
      CHECK(fa.width == c.image.width);
      CHECK(fa.data == fb.data);
      CHECK(ext.ablated_score(c.image, fa, 3) == doctest::Approx(builtin.ablated_score(c.image, fb, 3)));
    }
    const Image blank(32, 32, 0.5f);
    const Prediction p = ext.predict(blank);
    CHECK_FALSE(p.present);
    CHECK(p.score == doctest::Approx(default_head().bias));
  }

  TEST_CASE("unknown methods map to CapabilityError") {
    AdapterConnection conn(fixture());
    conn.handshake();
    CHECK_THROWS_AS(conn.request("explode", nlohmann::json::object()), CapabilityError);
    // The connection survives a method-level error.
    CHECK_NOTHROW(conn.request("predict", {{"image", encode_image(Image(32, 32, 0.5f))}}));
  }

  TEST_CASE("adapter error codes") {
    ExternalProvider ip(external("--mode invalid-params"));
    CHECK_THROWS_AS(ip.predict(Image(32, 32, 0.5f)), InvalidParams);
    ExternalProvider fault(external("--mode fault"));
    const FeatureStack f = fault.features(Image(32, 32, 0.5f));
    CHECK_THROWS_AS(fault.ablated_score(Image(32, 32, 0.5f), f, 0), AdapterFault);
    CHECK_THROWS_AS(fault.ablated_score(Image(32, 32, 0.5f), f, 99), BadChannel);
  }

  TEST_CASE("protocol violations") {
    {
      AdapterConnection conn(fixture("--mode wrong-id"));
      conn.handshake();
      CHECK_THROWS_AS(conn.request("predict", {{"image", encode_image(Image(32, 32, 0.5f))}}), ProtocolError);
    }
    {
      AdapterConnection conn(fixture("--mode non-json"));
      conn.handshake();
      try {
        conn.request("predict", {{"image", encode_image(Image(32, 32, 0.5f))}});
        FAIL("expected ProtocolError");
      } catch (const ProtocolError& e) {
        CHECK(std::strstr(e.what(), "this is not json") != nullptr);
      }
    }
    {
      AdapterConnection conn(fixture("--mode bad-protocol"));
      CHECK_THROWS_AS(conn.handshake(), ProtocolError);
    }
  }

  TEST_CASE("slow adapters time out") {
    AdapterConnection conn(fixture("--mode slow"), 0.3);
    conn.handshake();
    CHECK_THROWS_AS(conn.request("predict", {{"image", encode_image(Image(32, 32, 0.5f))}}), AdapterTimeout);
  }

  TEST_CASE("a crashing adapter is a fault") {
    AdapterConnection conn(fixture("--mode crash"));
    conn.handshake();
    CHECK_THROWS_AS(conn.request("predict", {{"image", encode_image(Image(32, 32, 0.5f))}}), AdapterFault);
    CHECK_THROWS_AS(AdapterConnection("/nonexistent/adapter-binary").handshake(), AdapterFault);
  }

  TEST_CASE("transcript recording") {
    AdapterConnection conn(fixture());
    conn.record(true);
    conn.handshake();
    conn.request("predict", {{"image", encode_image(Image(16, 16, 0.5f))}});
    const auto& t = conn.transcript();
    REQUIRE(t.size() == 4);
    CHECK(t[0].rfind("> ", 0) == 0);
    CHECK(t[0].find("\"handshake\"") != std::string::npos);
    CHECK(t[1].rfind("< ", 0) == 0);
    CHECK(t[2].find("\"id\":1") != std::string::npos);
  }

  TEST_CASE("missing capability marks the randomization run unsupported") {
    const auto cs = cases(4);
    ProviderPool pool(make_provider_factory(external("--mode no-randomize")), 1);
    PipelineConfig cfg;
    cfg.methods = {CamMethod::Eigen};
    cfg.consistency = false;
    cfg.plausibility = false;
    cfg.fidelity.single_deletion = false;
    cfg.fidelity.incremental_deletion = false;
    const PipelineResult out = run_pipeline(cs, pool, cfg);
    REQUIRE(out.runs.size() == 2);
    CHECK(out.runs[0].check == "randomization");
    CHECK(out.runs[0].status == run_status::kNotSupported);
    CHECK(out.runs[1].check == "whitebox");
    CHECK(out.runs[1].status == run_status::kNotSupported);
    CHECK_FALSE(out.provider_failed);
  }

  TEST_CASE("a mid-run crash leaves a partial invalid run") {
    const auto cs = cases(6);
    ProviderPool pool(make_provider_factory(external("--crash-after 9")), 1);
    const PerturbationSpec spec{PerturbKind::Rotation, {{0, 0, 0}}, 0};
    const RunResult r = run_consistency(cs, CamMethod::Eigen, pool, spec, {});
    CHECK(r.status == run_status::kInvalid);
    CHECK_FALSE(r.error.empty());
    CHECK(r.records.size() < 6 * 4);
  }

  TEST_CASE("an external run reproduces the builtin run") {
    const auto cs = cases(4);
    ProviderPool ext(make_provider_factory(external()), 2);
    ProviderPool builtin(refmodel_factory(RefModel()), 2);
    const PerturbationSpec spec{PerturbKind::Shift, {{0, 0, 0}, {0, 2, -2}}, 0};
    for (CamMethod m : {CamMethod::Eigen, CamMethod::Ablation}) {
      const RunResult a = run_consistency(cs, m, ext, spec, {});
      const RunResult b = run_consistency(cs, m, builtin, spec, {});
      REQUIRE(a.records.size() == b.records.size());
      for (std::size_t i = 0; i < a.records.size(); ++i) {
        REQUIRE(a.records[i].value.has_value() == b.records[i].value.has_value());
        if (a.records[i].value) CHECK(std::abs(*a.records[i].value - *b.records[i].value) < 1e-6);
      }
    }
  }

  TEST_CASE("provider spec json") {
    const ProviderSpec s = external("--mode ok", 2.5);
    const ProviderSpec back = nlohmann::json(s).get<ProviderSpec>();
    CHECK(back.kind == ProviderSpec::Kind::External);
    CHECK(back.command == s.command);
    CHECK(back.timeout_seconds == 2.5);
    CHECK(nlohmann::json::parse(R"({"kind":"builtin-refmodel"})").get<ProviderSpec>().kind ==
          ProviderSpec::Kind::BuiltinRefmodel);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"kind":"remote"})").get<ProviderSpec>(), ConfigError);
    ProviderSpec empty;
    empty.kind = ProviderSpec::Kind::External;
    CHECK_THROWS_AS(empty.validate(), ConfigError);
  }
}
