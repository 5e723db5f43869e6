#include <gtest/gtest.h>

#include <filesystem>

#include "canned_vlm.hpp"
#include "layoutvlm.hpp"

using namespace layoutvlm;
namespace fs = std::filesystem;

namespace {

const fs::path kData = LAYOUTVLM_DATA_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("layoutvlm_pipeline_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Fixture {
  Room room;
  Inventory inventory;
  std::string instruction;
};

Fixture bedroom() {
  const fs::path dir = kData / "fixtures" / "bedroom";
  return {load_room((dir / "room.json").string()), load_inventory((dir / "inventory.json").string()),
          read_text_file((dir / "instruction.txt").string())};
}

double center_distance(const PlacedAsset& a, const PlacedAsset& b) {
  return std::hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y);
}

}  // namespace

TEST(LayoutJson, RoundTrip) {
  const Inventory inv = {{"table_0", "", {1, 1, 0.75}, {}}, {"cup_0", "", {0.1, 0.1, 0.1}, {}}};
  SceneState s{{4, 4, 3}, {}};
  s.assets.push_back({inv[0], {1.5, 2.25, 0.375, -kPi}, false, std::nullopt});
  s.assets.push_back({inv[1], {1.5, 2.25, 0.8, 0.25}, false, std::string("table_0")});
  const SceneState back = layout_from_json(nlohmann::json::parse(serialize_layout(s)), s.room, inv);
  ASSERT_EQ(back.assets.size(), 2u);
  EXPECT_EQ(back.assets[1].support, std::optional<std::string>("table_0"));
  EXPECT_NEAR(back.assets[0].pose.theta, -kPi, 1e-12);
  EXPECT_NEAR(back.assets[1].pose.theta, 0.25, 1e-12);
  EXPECT_EQ(serialize_layout(back), serialize_layout(s));
}

TEST(LayoutJson, DefaultsAndErrors) {
  const Inventory inv = {{"box_0", "", {1, 1, 0.6}, {}}};
  const Room room{4, 4, 3};
  const auto s = layout_from_json(nlohmann::json::parse(R"({"assets":[{"id":"box_0","pose":{"x":1,"y":2}}]})"), room, inv);
  EXPECT_EQ(s.assets[0].pose.z, 0.3);
  EXPECT_EQ(s.assets[0].pose.theta, 0.0);
  for (const char* bad : {R"([])", R"({"assets":[{"pose":{"x":1,"y":2}}]})",
                          R"({"assets":[{"id":"ghost","pose":{"x":1,"y":2}}]})",
                          R"({"assets":[{"id":"box_0","pose":{"x":1,"y":2}},{"id":"box_0","pose":{"x":1,"y":2}}]})",
                          R"({"assets":[{"id":"box_0","pose":{"x":"1","y":2}}]})",
                          R"({"assets":[{"id":"box_0","pose":{"x":1,"y":2},"on_top_of":"shelf_0"}]})"}) {
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(bad), room, inv), Error) << bad;
  }
}

TEST(Config, OverridesAndRejectsUnknownKeys) {
  const auto cfg = config_from_json(nlohmann::json::parse(
      R"({"objective": {"physics_weight": 2.5, "collision_gate": false},
          "optimizer": {"iterations": 50},
          "decoder": {"epsilon": {"distance": 0.2}}})"));
  EXPECT_EQ(cfg.objective.physics_weight, 2.5);
  EXPECT_FALSE(cfg.objective.collision_gate);
  EXPECT_EQ(cfg.optimizer.iterations, 50);
  EXPECT_EQ(cfg.decoder.epsilon.at(RelationKind::kDistance), 0.2);
  EXPECT_EQ(cfg.optimizer.step_size_xy, PlacementConfig{}.optimizer.step_size_xy);
  for (const char* bad : {R"({"optimiser": {}})", R"({"optimizer": {"iters": 3}})",
                          R"({"optimizer": {"iterations": 2.5}})", R"({"decoder": {"epsilon": {"near": 1}}})",
                          R"({"objective": {"collision_gate": 1}})", R"({"optimizer": {"iterations": -1}})"}) {
    EXPECT_THROW(config_from_json(nlohmann::json::parse(bad)), Error) << bad;
  }
}

TEST(OptimizeProgram, DiningChairsReachTheirRanges) {
  const fs::path dir = kData / "fixtures" / "dining";
  const Room room = load_room((dir / "room.json").string());
  const Inventory inv = load_inventory((dir / "inventory.json").string());
  const auto r =
      optimize_program({read_text_file((dir / "dining.scene").string()), ProgramOrigin::kFile}, room, inv);
  EXPECT_EQ(r.outcome.status, "placed");
  EXPECT_EQ(r.state.assets.size(), 5u);
  const PlacedAsset* table = r.state.find("dining_table");
  ASSERT_NE(table, nullptr);
  for (const char* id : {"chair_0", "chair_1", "chair_2", "chair_3"}) {
    const PlacedAsset* chair = r.state.find(id);
    ASSERT_NE(chair, nullptr);
    const double d = center_distance(*chair, *table);
    EXPECT_GE(d, 0.38) << id;
    EXPECT_LE(d, 0.82) << id;
    const double facing = std::cos(chair->pose.theta) * (table->pose.x - chair->pose.x) +
                          std::sin(chair->pose.theta) * (table->pose.y - chair->pose.y);
    EXPECT_GT(facing, 0.0) << id;
  }
  const auto score = score_scene(r.state);
  EXPECT_TRUE(score.collision_free);
  EXPECT_TRUE(score.in_boundary);
}

TEST(OptimizeProgram, PosesOnlyCleansUpOverlap) {
  const Inventory inv = {{"a_0", "", {1, 1, 1}, {}}, {"b_0", "", {1, 1, 1}, {}}};
  const auto r = optimize_program(
      {"a_0.set_pose(x=2, y=2, z=0.5, rotation=0)\nb_0.set_pose(x=2.3, y=2, z=0.5, rotation=0)\n",
       ProgramOrigin::kInline},
      {4, 4, 3}, inv);
  EXPECT_TRUE(r.outcome.program.relations.empty());
  EXPECT_TRUE(score_scene(r.state).collision_free);
  EXPECT_TRUE(score_scene(r.state).in_boundary);
}

TEST(OptimizeProgram, EmptyAndInvalidPrograms) {
  const Inventory inv = {{"a_0", "", {1, 1, 1}, {}}};
  const auto empty = optimize_program({"# nothing yet\n", ProgramOrigin::kInline}, {4, 4, 3}, inv);
  EXPECT_TRUE(empty.state.assets.empty());
  EXPECT_EQ(serialize_layout(empty.state), "{\n  \"assets\": []\n}\n");
  try {
    optimize_program({"a_0.set_pose(x=1, y=\n", ProgramOrigin::kInline}, {4, 4, 3}, inv);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1);
  }
}

TEST(Generate, RecordThenReplay) {
  const Fixture f = bedroom();
  const stub::Transcript transcript = stub::load_transcript(kData / "fixtures" / "bedroom");
  const fs::path cache = scratch("record");
  const auto prompts = PromptLibrary::load();
  std::string recorded;
  {
    stub::StubVlm server([&](const nlohmann::json& req) { return stub::answer(transcript, req); });
    VlmClient client({server.base_url(), "", "test-model"}, {Mode::kRecord, cache});
    const auto r = generate(f.room, f.inventory, f.instruction, client, prompts);
    EXPECT_EQ(server.request_count(), 4u);
    EXPECT_FALSE(r.partial());
    ASSERT_EQ(r.groups.size(), 3u);
    EXPECT_EQ(r.groups[0].decode.dropped.size(), 1u);  // lamp points at an unplaced wardrobe
    EXPECT_EQ(r.groups[2].deduped.size(), 1u);          // chair keeps one orientational relation
    EXPECT_EQ(r.state.assets.size(), f.inventory.size());
    EXPECT_EQ(r.state.find("lamp_0")->support, std::optional<std::string>("nightstand_0"));
    recorded = serialize_layout(r.state);
  }
  VlmClient replay({"", "", "test-model"}, {Mode::kReplay, cache});
  const auto again = generate(f.room, f.inventory, f.instruction, replay, prompts);
  EXPECT_EQ(replay.network_attempts(), 0u);
  EXPECT_EQ(serialize_layout(again.state), recorded);
  const auto score = score_scene(again.state);
  EXPECT_TRUE(score.collision_free);
  EXPECT_TRUE(score.in_boundary);
  const nlohmann::json report = to_json(again.groups[2]);
  EXPECT_EQ(report["status"], "placed");
  EXPECT_EQ(report["deduplicated"].size(), 1u);
  fs::remove_all(cache);
}

TEST(Generate, MissingGroupLeavesEarlierGroupsPlaced) {
  const Fixture f = bedroom();
  stub::Transcript transcript = stub::load_transcript(kData / "fixtures" / "bedroom");
  transcript.programs.pop_back();  // no response for the desk group
  transcript.groups.pop_back();
  const fs::path cache = scratch("partial");
  const auto prompts = PromptLibrary::load();
  {
    stub::StubVlm server([&](const nlohmann::json& req) { return stub::answer(transcript, req); });
    ClientOptions fast;
    fast.backoff_base = std::chrono::milliseconds(1);
    VlmClient client({server.base_url(), "", "test-model"}, {Mode::kRecord, cache}, fast);
    const auto r = generate(f.room, f.inventory, f.instruction, client, prompts);
    EXPECT_TRUE(r.partial());
  }
  VlmClient replay({"", "", "test-model"}, {Mode::kReplay, cache});
  const auto r = generate(f.room, f.inventory, f.instruction, replay, prompts);
  ASSERT_EQ(r.groups.size(), 3u);
  EXPECT_EQ(r.groups[0].status, "placed");
  EXPECT_EQ(r.groups[1].status, "placed");
  EXPECT_EQ(r.groups[2].status, "failed");
  EXPECT_NE(r.groups[2].error.find("replay cache"), std::string::npos);
  EXPECT_EQ(r.failed_assets, (std::vector<std::string>{"desk_0", "chair_0"}));
  EXPECT_EQ(r.state.assets.size(), 5u);
  EXPECT_EQ(r.state.find("desk_0"), nullptr);
  fs::remove_all(cache);
}

TEST(Generate, ProgramWithoutPosesFailsTheGroup) {
  const Inventory inv = {{"a_0", "", {1, 1, 1}, {}}, {"b_0", "", {1, 1, 1}, {}}};
  const fs::path cache = scratch("noposes");
  stub::StubVlm server([](const nlohmann::json& req) {
    if (stub::message_text(req, "system").empty()) return stub::Reply{200, R"([["a_0"], ["b_0"]])"};
    if (stub::message_text(req, "system").find("- a_0: ") != std::string::npos) {
      return stub::Reply{200, "```\na_0.set_pose(x=1, y=1, z=0.5, rotation=0)\n```"};
    }
    return stub::Reply{200, "I would put it somewhere nice."};
  });
  VlmClient client({server.base_url(), "", "m"}, {Mode::kRecord, cache});
  const auto r = generate({4, 4, 3}, inv, "two boxes", client, PromptLibrary::load());
  EXPECT_EQ(r.groups[0].status, "placed");
  EXPECT_EQ(r.groups[1].status, "failed");
  EXPECT_FALSE(r.groups[1].diagnostics.empty());
  EXPECT_EQ(r.failed_assets, std::vector<std::string>{"b_0"});
  EXPECT_EQ(r.program.poses.size(), 1u);
  fs::remove_all(cache);
}
