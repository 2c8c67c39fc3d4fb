#include <gtest/gtest.h>

#include <latch>

#include "service_fixture.hpp"
#include "support.hpp"

using namespace sketchlab;
using sketchlab::testing::scratch_dir;
using sketchlab::testing::sketch_b64;
using sketchlab::testing::write_test_registry;
using json = nlohmann::json;

namespace {

constexpr int kSize = 128;

StudioService& shared_service() {
  static auto dir = scratch_dir("service_shared");
  static StudioService svc(load_registry(write_test_registry(dir, kSize, 4)));
  return svc;
}

SketchRaster face(int size = kSize) { return render_contour(face_template(FaceShape{}, size), size); }

std::string body(const json& j) { return j.dump(); }

}  // namespace

TEST(Base64, RoundTripsAndRejectsGarbage) {
  ASSERT_GE(sodium_init(), 0);
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 255u}) {
    ByteBuffer b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i * 37 + 1);
    EXPECT_EQ(base64_decode(base64_encode(b)), b);
  }
  EXPECT_EQ(base64_encode(ByteBuffer{'M', 'a', 'n'}), "TWFu");
  EXPECT_EQ(base64_encode(ByteBuffer{'M'}), "TQ==");
  EXPECT_THROW(base64_decode("TW=u"), ValidationError);
  EXPECT_THROW(base64_decode("not base64!"), ValidationError);
}

TEST(Registry, ParsesAndRejectsBadFiles) {
  const json ok = {{"models", {{{"model_id", "a"}, {"checkpoint", "a.sklb"}}}}};
  const auto cfg = registry_from_json(ok, "/base");
  ASSERT_EQ(cfg.entries.size(), 1u);
  EXPECT_EQ(cfg.entries[0].checkpoint, std::filesystem::path("/base/a.sklb"));
  EXPECT_EQ(cfg.entries[0].display_name, "a");
  EXPECT_EQ(cfg.queue_depth, kDefaultQueueDepth);

  const json dup = {{"models",
                     {{{"model_id", "a"}, {"checkpoint", "x"}}, {{"model_id", "a"}, {"checkpoint", "y"}}}}};
  EXPECT_THROW(registry_from_json(dup, "."), ConfigError);
  EXPECT_THROW(registry_from_json(json{{"models", json::array()}}, "."), ConfigError);
  EXPECT_THROW(registry_from_json(json{{"queue_depth", 0}, {"models", ok["models"]}}, "."),
               ConfigError);
  EXPECT_THROW(load_registry("/nonexistent/registry.json"), IoError);
}

TEST(Registry, RefusesToStartOnUnloadableCheckpoint) {
  const auto dir = scratch_dir("service_bad");
  const auto path = write_test_registry(dir, kSize, 4);
  std::filesystem::remove(dir / "ours.sklb");
  EXPECT_ANY_THROW(StudioService(load_registry(path)));
}

TEST(Registry, PortResolution) {
  EXPECT_EQ(resolve_port(8700, nullptr), 8700);
  EXPECT_EQ(resolve_port(8700, ""), 8700);
  EXPECT_EQ(resolve_port(8700, "9001"), 9001);
  EXPECT_THROW(resolve_port(8700, "90x"), ConfigError);
  EXPECT_THROW(resolve_port(8700, "70000"), ConfigError);
}

TEST(ModelWorkerQueue, RefusesBeyondDepth) {
  ModelWorker w(2);
  std::latch gate(1);
  std::latch started(1);
  auto running = w.submit([&] {
    started.count_down();
    gate.wait();
    return 1;
  });
  ASSERT_TRUE(running);
  started.wait();
  auto a = w.submit([] { return 2; });
  auto b = w.submit([] { return 3; });
  auto c = w.submit([] { return 4; });
  EXPECT_TRUE(a && b);
  EXPECT_FALSE(c);
  gate.count_down();
  EXPECT_EQ(running->get() + a->get() + b->get(), 6);
}

TEST(FitToCanvas, CentersWithWhitePaddingAndCrops) {
  Tensor<float> small(1, 2, 4, 0.0f);
  const SketchRaster padded = fit_to_canvas(small, 6);
  EXPECT_EQ(padded.stroke_count(), 8u);
  EXPECT_TRUE(padded.is_stroke(1, 2) && padded.is_stroke(4, 3));
  EXPECT_FALSE(padded.is_stroke(0, 2) || padded.is_stroke(1, 1));

  Tensor<float> big(1, 10, 10, 1.0f);
  big(0, 3, 3) = 0.0f;  // survives the 2-pixel crop on each side
  big(0, 0, 0) = 0.0f;  // cropped away
  const SketchRaster cropped = fit_to_canvas(big, 6);
  EXPECT_EQ(cropped.stroke_count(), 1u);
  EXPECT_TRUE(cropped.is_stroke(1, 1));
}

TEST(Service, HealthAndTemplates) {
  auto& svc = shared_service();
  const auto h = svc.health();
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body["status"], "ok");
  ASSERT_EQ(h.body["models"].size(), 2u);
  EXPECT_EQ(h.body["models"][0]["model_id"], "baseline");
  EXPECT_EQ(h.body["models"][1]["model_id"], "ours");

  const auto t = svc.templates();
  ASSERT_FALSE(t.body.empty());
  const auto png = base64_decode(t.body[0]["sketch"].get<std::string>());
  const auto img = detail::decode_png(png.data(), png.size(), 1);
  EXPECT_EQ(img.width, kSize);
  EXPECT_EQ(img.height, kSize);
  for (auto v : img.pixels) EXPECT_TRUE(v == 0 || v == 255);
  // A recognisable contour: comparable ink to a single rendered face.
  const auto ink = SketchRaster(gray_from_png(png)).stroke_count();
  const auto ref = face().stroke_count();
  EXPECT_GT(ink, ref / 2);
  EXPECT_LT(ink, ref * 3);
}

TEST(Service, GenerateIsDeterministicAndSized) {
  auto& svc = shared_service();
  const std::string req = body({{"model_id", "ours"}, {"sketch", sketch_b64(face())}});
  const auto a = svc.generate(req);
  const auto b = svc.generate(req);
  ASSERT_EQ(a.status, 200) << a.body.dump();
  EXPECT_EQ(a.body["image"], b.body["image"]);
  EXPECT_GE(a.body["latency_ms"].get<double>(), 0.0);
  const auto png = base64_decode(a.body["image"].get<std::string>());
  const auto img = detail::decode_png(png.data(), png.size(), 3);
  EXPECT_EQ(img.width, kSize);
  EXPECT_EQ(img.height, kSize);

  // A smaller sketch is padded to the model resolution.
  const auto c = svc.generate(body({{"model_id", "ours"}, {"sketch", sketch_b64(face(64))}}));
  EXPECT_EQ(c.status, 200);
}

TEST(Service, GenerateErrors) {
  auto& svc = shared_service();
  const auto s = sketch_b64(face());
  EXPECT_EQ(svc.generate(body({{"model_id", "nope"}, {"sketch", s}})).status, 404);
  EXPECT_TRUE(svc.generate(body({{"model_id", "nope"}, {"sketch", s}})).body.contains("error"));
  EXPECT_EQ(svc.generate(body({{"model_id", "ours"}, {"sketch", "@@@"}})).status, 400);
  EXPECT_EQ(svc.generate(body({{"model_id", "ours"}, {"sketch", base64_encode({1, 2, 3, 4})}})).status,
            400);
  EXPECT_EQ(svc.generate(body({{"model_id", "ours"}})).status, 400);
  EXPECT_EQ(svc.generate("{not json").status, 400);
  EXPECT_EQ(svc.generate(std::string(kMaxPayloadBytes + 1, ' ')).status, 413);
}

TEST(Service, ProbeMatchesProbeLab) {
  auto& svc = shared_service();
  const auto r = svc.probe(body({{"model_id", "ours"}, {"sketch", sketch_b64(face())}, {"point", "auto"}}));
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const PixelPoint p = template_probe_point(kSize);
  EXPECT_EQ(r.body["point"], json({p.x, p.y}));
  ASSERT_EQ(r.body["layers"].size(), 5u);
  GeneratorSpec spec;
  spec.base_channels = 4;
  for (int l = 0; l < 5; ++l) {
    const auto& e = r.body["layers"][l];
    EXPECT_EQ(e["rf_size"], receptive_field(l).size);
    EXPECT_EQ(e["rf_stride"], receptive_field(l).stride);
    EXPECT_EQ(e["vector_dim"], spec.layer_channels(l));
  }

  // Norm equals the probe-lab vector for the same sketch and point.
  const LoadedGenerator g = load_generator(svc.config().entries[1].checkpoint);
  const auto v = probe_vector(extract_features(g.generator, face(), 2), p);
  double sq = 0;
  for (float x : v) sq += static_cast<double>(x) * x;
  EXPECT_NEAR(r.body["layers"][2]["vector_norm"].get<double>(), std::sqrt(sq), 1e-9);
}

TEST(Service, ProbeErrors) {
  auto& svc = shared_service();
  const auto s = sketch_b64(face());
  const auto border = svc.probe(body({{"model_id", "ours"}, {"sketch", s}, {"point", {3, 60}}}));
  EXPECT_EQ(border.status, 422);
  EXPECT_NE(border.body["error"].get<std::string>().find("border"), std::string::npos);
  EXPECT_EQ(svc.probe(body({{"model_id", "x"}, {"sketch", s}})).status, 404);
  EXPECT_EQ(svc.probe(body({{"model_id", "ours"}, {"sketch", s}, {"layers", {7}}})).status, 400);
  EXPECT_EQ(svc.probe(body({{"model_id", "ours"}, {"sketch", s}, {"point", "middle"}})).status, 400);
}

TEST(Service, ProbeLocalityOverTheApi) {
  auto& svc = shared_service();
  const PixelPoint p = template_probe_point(kSize);
  SketchRaster edited = face();
  for (int x = 90; x < 110; ++x) edited.set(x, 100, 0.0f);  // far outside the L1 window
  auto norms = [&](const std::string& model, const SketchRaster& s) {
    const auto r = svc.probe(body({{"model_id", model}, {"sketch", sketch_b64(s)}, {"layers", {0, 1}}}));
    return std::pair{r.body["layers"][0]["vector_norm"].get<double>(),
                     r.body["layers"][1]["vector_norm"].get<double>()};
  };
  ASSERT_TRUE(is_interior(p, kSize));
  EXPECT_EQ(norms("ours", face()), norms("ours", edited));
  EXPECT_NE(norms("baseline", face()), norms("baseline", edited));
}

TEST(Service, OverflowIsServiceUnavailable) {
  const auto dir = scratch_dir("service_overflow");
  StudioService svc(load_registry(write_test_registry(dir, kSize, 4, 1, 1)));
  std::latch gate(1), started(1);
  auto blocker = svc.worker("ours").submit([&] {
    started.count_down();
    gate.wait();
    return 0;
  });
  started.wait();
  auto filler = svc.worker("ours").submit([] { return 0; });
  ASSERT_TRUE(blocker && filler);
  const auto r = svc.generate(body({{"model_id", "ours"}, {"sketch", sketch_b64(face())}}));
  EXPECT_EQ(r.status, 503);
  // Other models keep their own queue.
  EXPECT_EQ(svc.generate(body({{"model_id", "baseline"}, {"sketch", sketch_b64(face())}})).status, 200);
  gate.count_down();
}

TEST(Service, HttpWireContract) {
  auto& svc = shared_service();
  httplib::Server srv;
  svc.mount(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  const std::string req = body({{"model_id", "ours"}, {"sketch", sketch_b64(face())}});
  auto a = cli.Post("/api/generate", req, "application/json");
  auto b = cli.Post("/api/generate", req, "application/json");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->status, 200);
  EXPECT_EQ(json::parse(a->body)["image"], json::parse(b->body)["image"]);
  EXPECT_EQ(a->get_header_value("Access-Control-Allow-Origin"), "*");

  auto nf = cli.Post("/api/generate", body({{"model_id", "nope"}, {"sketch", "x"}}), "application/json");
  ASSERT_TRUE(nf);
  EXPECT_EQ(nf->status, 404);
  EXPECT_TRUE(json::parse(nf->body).contains("error"));

  auto big = cli.Post("/api/generate", std::string(kMaxPayloadBytes + 16, 'a'), "application/json");
  ASSERT_TRUE(big);
  EXPECT_EQ(big->status, 413);

  auto pre = cli.Options("/api/generate");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);

  auto health = cli.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(json::parse(health->body)["models"].size(), 2u);
  auto border = cli.Post("/api/probe", body({{"model_id", "ours"}, {"sketch", sketch_b64(face())}, {"point", {0, 0}}}),
                         "application/json");
  ASSERT_TRUE(border);
  EXPECT_EQ(border->status, 422);

  srv.stop();
  th.join();
}
