#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <future>
#include <random>

#include "layoutvlm.hpp"
#include "stub_vlm.hpp"

using namespace layoutvlm;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("layoutvlm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ChatRequest sample_request(const std::string& text = "hello") {
  ChatRequest r{"test-model", {}, 0.0};
  r.messages.push_back({"system", {ContentPart::make_text("be brief")}});
  r.messages.push_back({"user", {ContentPart::make_text(text), ContentPart::make_image("\x89PNGdata", "image/png")}});
  return r;
}

ClientOptions fast_retries() {
  ClientOptions o;
  o.backoff_base = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

Inventory bedroom_inventory() {
  return {AssetSpec{"bed_0", "double bed", {2.0, 1.6, 0.5}, {}},
          AssetSpec{"nightstand_0", "small nightstand", {0.4, 0.45, 0.55}, {}},
          AssetSpec{"desk_0", "writing desk", {0.6, 1.2, 0.75}, {}}};
}

}  // namespace

TEST(Digest, Sha256AndBase64KnownValues) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

TEST(Digest, StableAndSensitive) {
  const std::string d = request_digest(sample_request());
  EXPECT_EQ(d.size(), 64u);
  EXPECT_EQ(d, request_digest(sample_request()));
  EXPECT_NE(d, request_digest(sample_request("hello!")));
  ChatRequest warmer = sample_request();
  warmer.temperature = 0.5;
  EXPECT_NE(d, request_digest(warmer));
  ChatRequest other_image = sample_request();
  other_image.messages[1].parts[1].bytes += "x";
  EXPECT_NE(d, request_digest(other_image));
  ChatRequest other_model = sample_request();
  other_model.model = "m2";
  EXPECT_NE(d, request_digest(other_model));
}

TEST(Request, Validation) {
  EXPECT_THROW(ChatRequest{}.validate(), Error);
  ChatRequest r = sample_request();
  r.messages[1].parts[1].bytes.clear();
  EXPECT_THROW(r.validate(), Error);
}

TEST(Request, WireFormatUsesDataUrls) {
  const auto j = wire_request(sample_request());
  EXPECT_EQ(j["model"], "test-model");
  const auto& image = j["messages"][1]["content"][1];
  EXPECT_EQ(image["type"], "image_url");
  EXPECT_EQ(image["image_url"]["url"], "data:image/png;base64," + base64_encode("\x89PNGdata"));
}

TEST(Mode, Parse) {
  EXPECT_EQ(parse_mode("live"), Mode::kLive);
  EXPECT_EQ(parse_mode("record"), Mode::kRecord);
  EXPECT_EQ(parse_mode("replay"), Mode::kReplay);
  EXPECT_FALSE(parse_mode("offline").has_value());
}

TEST(Cache, ReplayRequiresDirectory) {
  EXPECT_THROW(VlmClient({}, {Mode::kReplay, "/nonexistent/layoutvlm/cache"}), Error);
}

TEST(Cache, MissNamesDigest) {
  TempDir dir;
  VlmClient client({}, {Mode::kReplay, dir.path()});
  try {
    client.complete(sample_request());
    FAIL();
  } catch (const CacheMiss& e) {
    EXPECT_EQ(e.digest(), request_digest(sample_request()));
    EXPECT_NE(std::string(e.what()).find(e.digest()), std::string::npos);
  }
  EXPECT_EQ(client.network_attempts(), 0u);
}

TEST(Cache, RecordThenReplay) {
  TempDir dir;
  stub::StubVlm server([](const nlohmann::json& req) {
    return stub::Reply{200, "echo: " + stub::message_text(req, "user")};
  });
  EndpointConfig endpoint{server.base_url(), "secret", "test-model"};
  VlmClient recorder(endpoint, {Mode::kRecord, dir.path()}, fast_retries());
  const std::string recorded = recorder.complete(sample_request());
  EXPECT_EQ(recorded, "echo: hello");
  EXPECT_EQ(recorder.network_attempts(), 1u);
  EXPECT_EQ(server.authorization().at(0), "Bearer secret");

  VlmClient replayer({}, {Mode::kReplay, dir.path()});
  EXPECT_EQ(replayer.complete(sample_request()), recorded);
  EXPECT_EQ(replayer.network_attempts(), 0u);
  EXPECT_EQ(server.request_count(), 1u);

  const auto entries = ReplayCache(dir.path()).list();
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].digest, request_digest(sample_request()));
  EXPECT_EQ(entries[0].model, "test-model");
  EXPECT_EQ(entries[0].response_bytes, recorded.size());
  const auto entry = nlohmann::json::parse(read_text_file(ReplayCache(dir.path()).path_for(entries[0].digest).string()));
  EXPECT_TRUE(entry.contains("request"));
  EXPECT_TRUE(entry.contains("timestamp"));
}

TEST(Cache, ConcurrentRecordersLeaveCompleteEntries) {
  TempDir dir;
  stub::StubVlm server([](const nlohmann::json& req) { return stub::Reply{200, stub::message_text(req, "user")}; });
  EndpointConfig endpoint{server.base_url(), "", "test-model"};
  VlmClient client(endpoint, {Mode::kRecord, dir.path()}, fast_retries());
  std::vector<std::future<std::string>> jobs;
  for (int i = 0; i < 16; ++i) {
    jobs.push_back(std::async(std::launch::async, [&client, i] { return client.complete(sample_request("q" + std::to_string(i % 4))); }));
  }
  for (auto& j : jobs) j.get();
  EXPECT_EQ(client.network_attempts(), 16u);
  EXPECT_EQ(ReplayCache(dir.path()).list().size(), 4u);
  for (const auto& f : fs::directory_iterator(dir.path())) EXPECT_EQ(f.path().extension(), ".json");
  VlmClient replay({}, {Mode::kReplay, dir.path()});
  EXPECT_EQ(replay.complete(sample_request("q3")), "q3");
}

TEST(Live, RetriesTransientFailures) {
  std::atomic<int> calls{0};
  stub::StubVlm server([&](const nlohmann::json&) {
    return ++calls <= 2 ? stub::Reply{503, "busy"} : stub::Reply{200, "ok"};
  });
  VlmClient client({server.base_url(), "", "m"}, {Mode::kLive, {}}, fast_retries());
  EXPECT_EQ(client.complete(sample_request()), "ok");
  EXPECT_EQ(client.network_attempts(), 3u);
}

TEST(Live, GivesUpAfterThreeRetries) {
  stub::StubVlm server([](const nlohmann::json&) { return stub::Reply{429, "slow down"}; });
  VlmClient client({server.base_url(), "", "m"}, {Mode::kLive, {}}, fast_retries());
  try {
    client.complete(sample_request());
    FAIL();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.status(), 429);
    EXPECT_TRUE(e.retryable());
  }
  EXPECT_EQ(client.network_attempts(), 4u);
}

TEST(Live, ClientErrorsAreNotRetried) {
  stub::StubVlm server([](const nlohmann::json&) { return stub::Reply{401, "bad key"}; });
  VlmClient client({server.base_url(), "", "m"}, {Mode::kLive, {}}, fast_retries());
  try {
    client.complete(sample_request());
    FAIL();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.status(), 401);
    EXPECT_FALSE(e.retryable());
  }
  EXPECT_EQ(client.network_attempts(), 1u);
}

TEST(Live, BackoffDoubles) {
  stub::StubVlm server([](const nlohmann::json&) { return stub::Reply{500, "oops"}; });
  ClientOptions o = fast_retries();
  o.backoff_base = std::chrono::milliseconds(40);
  VlmClient client({server.base_url(), "", "m"}, {Mode::kLive, {}}, o);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(client.complete(sample_request()), HttpError);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_GE(elapsed, std::chrono::milliseconds(40 + 80 + 160));
}

TEST(Live, MissingEndpointAndUnreachableServer) {
  VlmClient unconfigured({}, {Mode::kLive, {}}, fast_retries());
  EXPECT_THROW(unconfigured.complete(sample_request()), Error);
  EXPECT_EQ(unconfigured.network_attempts(), 0u);

  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  ClientOptions quick = fast_retries();
  quick.timeout = std::chrono::seconds(1);
  VlmClient dead({"http://127.0.0.1:" + std::to_string(port), "", "m"}, {Mode::kLive, {}}, quick);
  EXPECT_THROW(dead.complete(sample_request()), HttpError);
  EXPECT_EQ(dead.network_attempts(), 4u);
}

TEST(Grouping, DirectParse) {
  const auto g = parse_grouping(R"([["bed_0","nightstand_0"],["desk_0"]])", bedroom_inventory());
  EXPECT_EQ(g.groups, (std::vector<std::vector<std::string>>{{"bed_0", "nightstand_0"}, {"desk_0"}}));
  EXPECT_TRUE(g.warnings.empty());
}

TEST(Grouping, MissingIdAppended) {
  const auto g = parse_grouping("Sure!\n```json\n[[\"bed_0\", \"nightstand_0\"]]\n```", bedroom_inventory());
  EXPECT_EQ(g.groups, (std::vector<std::vector<std::string>>{{"bed_0", "nightstand_0"}, {"desk_0"}}));
  EXPECT_EQ(g.warnings.size(), 1u);
}

TEST(Grouping, GarbageFallsBackToOneGroup) {
  const auto g = parse_grouping("I cannot help with that.", bedroom_inventory());
  EXPECT_EQ(g.groups, (std::vector<std::vector<std::string>>{{"bed_0", "nightstand_0", "desk_0"}}));
  EXPECT_EQ(g.warnings.size(), 1u);
}

TEST(Grouping, AlwaysAPartition) {
  std::mt19937_64 rng(9);
  const Inventory inv = bedroom_inventory();
  const std::vector<std::string> pool = {"bed_0", "nightstand_0", "desk_0", "ghost_0", "bed_0"};
  for (int trial = 0; trial < 200; ++trial) {
    nlohmann::json groups = nlohmann::json::array();
    const int n = static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
      nlohmann::json g = nlohmann::json::array();
      const int m = static_cast<int>(rng() % 4);
      for (int k = 0; k < m; ++k) g.push_back(pool[rng() % pool.size()]);
      if (rng() % 7 == 0) g.push_back(3);
      groups.push_back(g);
    }
    const auto out = parse_grouping(groups.dump(), inv);
    std::multiset<std::string> seen;
    for (const auto& g : out.groups) {
      EXPECT_FALSE(g.empty());
      seen.insert(g.begin(), g.end());
    }
    EXPECT_EQ(seen, (std::multiset<std::string>{"bed_0", "desk_0", "nightstand_0"})) << groups.dump();
  }
}

TEST(Grouping, PromptCarriesInstructionAndAssets) {
  TempDir dir;
  stub::StubVlm server([](const nlohmann::json&) { return stub::Reply{200, R"([["desk_0"],["bed_0","nightstand_0"]])"}; });
  VlmClient client({server.base_url(), "", "m"}, {Mode::kRecord, dir.path()}, fast_retries());
  const auto prompts = PromptLibrary::load();
  const auto g = group_assets(bedroom_inventory(), "a cozy bedroom", client, prompts);
  EXPECT_EQ(g.groups.size(), 2u);
  const std::string text = stub::message_text(server.requests().at(0), "user");
  EXPECT_NE(text.find("a cozy bedroom"), std::string::npos);
  EXPECT_NE(text.find("nightstand_0: small nightstand (0.40 x 0.45 x 0.55 m)"), std::string::npos);
  EXPECT_EQ(text.find("{{"), std::string::npos);
  EXPECT_THROW(group_assets({}, "x", client, prompts), Error);
}

TEST(Layout, RequestStructure) {
  const auto prompts = PromptLibrary::load();
  TempDir dir;
  VlmClient client({}, {Mode::kReplay, dir.path()});
  SceneState state{{4, 3.5, 2.8}, {}};
  state.assets.push_back({bedroom_inventory()[0], {2, 0.8, 0.25, kPi / 2}, true, {}});
  const std::vector<AssetSpec> group = {bedroom_inventory()[1]};
  const ChatRequest req = layout_request(state, group, "a cozy bedroom", client, prompts);
  ASSERT_EQ(req.messages.size(), 2u);
  EXPECT_EQ(req.messages[0].role, "system");
  ASSERT_EQ(req.messages[0].parts.size(), 1u);
  const std::string& system = req.messages[0].parts[0].text;
  EXPECT_NE(system.find("4.00 m (x) by 3.50 m (y)"), std::string::npos);
  EXPECT_NE(system.find("nightstand_0"), std::string::npos);
  EXPECT_NE(system.find("bed_0 at x=2.00"), std::string::npos);
  EXPECT_EQ(system.find("{{"), std::string::npos);
  ASSERT_EQ(req.messages[1].parts.size(), 3u);
  EXPECT_EQ(req.messages[1].parts[0].text, "a cozy bedroom");
  RenderOptions png;
  png.format = ImageFormat::kPng;
  EXPECT_EQ(req.messages[1].parts[1].bytes, render_topdown(state, png));
  EXPECT_EQ(req.messages[1].parts[2].bytes, render_asset_panel(group, png));
  EXPECT_EQ(req.messages[1].parts[1].media_type, "image/png");
  EXPECT_EQ(request_digest(req), request_digest(layout_request(state, group, "a cozy bedroom", client, prompts)));

  EXPECT_THROW(layout_request(state, {}, "x", client, prompts), Error);
  EXPECT_THROW(layout_request(state, {bedroom_inventory()[0]}, "x", client, prompts), Error);
}

TEST(Layout, ProposeExtractsCodeBlock) {
  TempDir dir;
  stub::StubVlm server([](const nlohmann::json&) {
    return stub::Reply{200, "Here you go:\n```python\nbed_0.set_pose(x=2, y=1, z=0.25, rotation=90)\n```\nDone."};
  });
  VlmClient client({server.base_url(), "", "m"}, {Mode::kRecord, dir.path()}, fast_retries());
  const auto prompts = PromptLibrary::load();
  const SceneState empty{{4, 3.5, 2.8}, {}};
  const auto text = propose_layout(empty, {bedroom_inventory()[0]}, "bedroom", client, prompts);
  EXPECT_EQ(text.source, "bed_0.set_pose(x=2, y=1, z=0.25, rotation=90)");

  VlmClient replay({"", "", "m"}, {Mode::kReplay, dir.path()});
  EXPECT_EQ(propose_layout(empty, {bedroom_inventory()[0]}, "bedroom", replay, prompts).source, text.source);
  EXPECT_EQ(replay.network_attempts(), 0u);
}

TEST(Prompts, FillTemplate) {
  EXPECT_EQ(fill_template("{{a}} and {{a}} then {{b}}", {{"a", "x{{a}}"}, {"b", "y"}}), "x{{a}} and x{{a}} then y");
  const auto p = PromptLibrary::load();
  for (const std::string* t : {&p.grouping, &p.layout, &p.judge_position, &p.judge_rotation, &p.judge_psa}) {
    EXPECT_FALSE(t->empty());
  }
}

TEST(Endpoint, FromEnvironment) {
  ::setenv("LAYOUTVLM_API_BASE", "http://example.invalid/v1", 1);
  ::setenv("LAYOUTVLM_API_KEY", "k", 1);
  ::unsetenv("LAYOUTVLM_MODEL");
  const auto cfg = EndpointConfig::from_env();
  EXPECT_EQ(cfg.api_base, "http://example.invalid/v1");
  EXPECT_EQ(cfg.api_key, "k");
  EXPECT_EQ(cfg.model, "gpt-4o");
  ::unsetenv("LAYOUTVLM_API_BASE");
  ::unsetenv("LAYOUTVLM_API_KEY");
  EXPECT_EQ(detail::split_url("https://h:8080/v1/").origin, "https://h:8080");
  EXPECT_EQ(detail::split_url("https://h:8080/v1/").path, "/v1");
  EXPECT_THROW(detail::split_url("localhost"), Error);
}
