#include <gtest/gtest.h>

#include <random>

#include "layoutvlm.hpp"

using namespace layoutvlm;

namespace {

const std::set<std::string> kAssets = {"bed_0", "nightstand_0", "a_0", "b_0", "lamp_0"};

ParseResult parse(const std::string& text) { return parse_program({text, ProgramOrigin::kInline}, kAssets); }

std::size_t errors(const ParseResult& r) { return r.error_count(); }

}  // namespace

TEST(Parse, SetPose) {
  const auto r = parse("bed_0.set_pose(x=2.0, y=1.2, z=0.25, rotation=180)");
  EXPECT_TRUE(r.diagnostics.empty());
  ASSERT_EQ(r.program.poses.count("bed_0"), 1u);
  const Pose& p = r.program.poses.at("bed_0");
  EXPECT_EQ(p.x, 2.0);
  EXPECT_EQ(p.y, 1.2);
  EXPECT_EQ(p.z, 0.25);
  EXPECT_NEAR(std::abs(p.theta), kPi, 1e-12);
}

TEST(Parse, Distance) {
  const auto r = parse("constraints.distance(bed_0, nightstand_0, min=0.1, max=0.5)");
  EXPECT_TRUE(r.diagnostics.empty());
  ASSERT_EQ(r.program.relations.size(), 1u);
  const Relation& rel = r.program.relations[0];
  EXPECT_EQ(rel.kind, RelationKind::kDistance);
  EXPECT_EQ(rel.subject, "bed_0");
  EXPECT_EQ(rel.target, "nightstand_0");
  EXPECT_EQ(rel.d_min, 0.1);
  EXPECT_EQ(rel.d_max, 0.5);
}

TEST(Parse, UnknownWallIsOneError) {
  const auto r = parse("constraints.against_wall(bed_0, wall_funny)");
  EXPECT_TRUE(r.program.relations.empty());
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].severity, Severity::kError);
  EXPECT_NE(r.diagnostics[0].message.find("wall_funny"), std::string::npos);
}

TEST(Parse, InvertedRangeIsSkipped) {
  const auto r = parse("constraints.distance(a_0, b_0, min=2, max=1)");
  EXPECT_TRUE(r.program.relations.empty());
  EXPECT_EQ(errors(r), 1u);
}

TEST(Parse, AllKinds) {
  const auto r = parse(
      "# comment\n"
      "\n"
      "constraints.on_top_of(lamp_0, nightstand_0)\n"
      "constraints.align_with(a_0, b_0, angle=90)\n"
      "constraints.point_towards(a_0, bed_0)\n"
      "constraints.against_wall(bed_0, wall_north)   # trailing comment\n");
  EXPECT_TRUE(r.diagnostics.empty()) << format_diagnostic(r.diagnostics[0]);
  ASSERT_EQ(r.program.relations.size(), 4u);
  EXPECT_EQ(r.program.relations[0].kind, RelationKind::kOnTopOf);
  EXPECT_NEAR(r.program.relations[1].angle, kPi / 2, 1e-12);
  EXPECT_EQ(r.program.relations[2].angle, 0.0);
  EXPECT_EQ(r.program.relations[3].target, "wall_north");
}

TEST(Parse, DiagnosticsCarryPositions) {
  const auto r = parse("bed_0.set_pose(x=1, y=1, z=0.25, rotation=0)\n  ghost_0.set_pose(x=1, y=2, z=0)\n");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].line, 2);
  EXPECT_EQ(r.diagnostics[0].column, 3);
  EXPECT_EQ(format_diagnostic(r.diagnostics[0]).rfind("2:3: error: ", 0), 0u);
  EXPECT_EQ(r.program.poses.size(), 1u);
}

TEST(Parse, MalformedStatements) {
  for (const char* bad : {"bed_0.set_pose(x=1, y=", "bed_0.set_pose(x=1, y=2, q=3)", "constraints.hover(a_0, b_0)",
                          "constraints.distance(a_0, b_0)", "constraints.distance(a_0, a_0, min=0, max=1)",
                          "bed_0.explode()", "import os", "bed_0.set_pose(x=1+2, y=2)", "x = 3",
                          "constraints.align_with(a_0, b_0, angle=\"x\")", "bed_0.set_pose(x=1, x=2, y=1)"}) {
    const auto r = parse(bad);
    EXPECT_TRUE(r.program.poses.empty()) << bad;
    EXPECT_TRUE(r.program.relations.empty()) << bad;
    EXPECT_EQ(errors(r), 1u) << bad;
  }
}

TEST(Parse, MissingZWarns) {
  const auto r = parse("a_0.set_pose(x=1, y=2, rotation=45)");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].severity, Severity::kWarning);
  EXPECT_EQ(r.program.poses.at("a_0").z, 0.0);
}

TEST(Parse, TotalOnArbitraryBytes) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> byte(0, 255);
  const std::string alphabet = "abz_0.,()=#\n -+e9\"x";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const int n = i % 80;
    for (int k = 0; k < n; ++k) s += (i % 2) ? static_cast<char>(byte(rng)) : alphabet[pick(rng)];
    EXPECT_NO_THROW(parse(s));
  }
}

TEST(Parse, LineIndependence) {
  const std::string good1 = "bed_0.set_pose(x=2, y=1.2, z=0.25, rotation=90)\n";
  const std::string bad = "bed_0.set_pose(x=2, y=\n";
  const std::string good2 = "constraints.distance(a_0, b_0, min=0.5, max=1)\n";
  const auto with = parse(good1 + bad + good2);
  const auto without = parse(good1 + good2);
  EXPECT_TRUE(structurally_equal(with.program, without.program));
  EXPECT_EQ(errors(with), 1u);
  EXPECT_EQ(errors(without), 0u);
}

TEST(Serialize, Examples) {
  EXPECT_EQ(serialize_program({}).source, "");
  SceneProgram p;
  p.poses["bed_0"] = {2, 1.2, 0.25, -kPi};
  p.relations.push_back(Relation::against_wall("bed_0", WallSide::kNorth));
  EXPECT_EQ(serialize_program(p).source,
            "bed_0.set_pose(x=2.0000, y=1.2000, z=0.2500, rotation=180.0000)\n"
            "constraints.against_wall(bed_0, wall_north)\n");
}

TEST(Serialize, PosesSortedRelationsInOrder) {
  SceneProgram p;
  p.poses["nightstand_0"] = {1, 1, 0.3, 0};
  p.poses["bed_0"] = {2, 2, 0.25, 0};
  p.relations.push_back(Relation::point_towards("nightstand_0", "bed_0"));
  p.relations.push_back(Relation::distance("bed_0", "nightstand_0", 0, 0.5));
  const std::string text = serialize_program(p).source;
  EXPECT_LT(text.find("bed_0.set_pose"), text.find("nightstand_0.set_pose"));
  EXPECT_LT(text.find("point_towards"), text.find("distance"));
}

TEST(Serialize, RoundTrip) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-10, 10);
  std::uniform_real_distribution<double> a(-kPi, kPi);
  const std::vector<std::string> ids(kAssets.begin(), kAssets.end());
  for (int trial = 0; trial < 300; ++trial) {
    SceneProgram p;
    for (const auto& id : ids) {
      if (rng() % 2) p.poses[id] = {std::round(u(rng) * 1e4) / 1e4, std::round(u(rng) * 1e4) / 1e4,
                                    std::round(std::abs(u(rng)) * 1e4) / 1e4, normalize_theta(a(rng))};
    }
    for (int k = 0; k < 6; ++k) {
      const std::string& s = ids[rng() % ids.size()];
      std::string t = ids[rng() % ids.size()];
      if (t == s) continue;
      switch (rng() % 5) {
        case 0: {
          const double lo = std::round(std::abs(u(rng)) * 1e4) / 1e4;
          p.relations.push_back(Relation::distance(s, t, lo, lo + std::round(std::abs(u(rng)) * 1e4) / 1e4));
          break;
        }
        case 1: p.relations.push_back(Relation::on_top_of(s, t)); break;
        case 2: p.relations.push_back(Relation::align_with(s, t, normalize_theta(a(rng)))); break;
        case 3: p.relations.push_back(Relation::point_towards(s, t, normalize_theta(a(rng)))); break;
        default: p.relations.push_back(Relation::against_wall(s, static_cast<WallSide>(rng() % 4))); break;
      }
    }
    const auto back = parse_program(serialize_program(p), kAssets);
    EXPECT_EQ(back.error_count(), 0u);
    EXPECT_TRUE(structurally_equal(back.program, p, 1e-6, 1e-12));
  }
}

TEST(ExtractCodeBlock, Examples) {
  EXPECT_EQ(extract_code_block("Here is the layout:\n```\nA\n```").source, "A");
  EXPECT_EQ(extract_code_block("no fences at all").source, "no fences at all");
  EXPECT_EQ(extract_code_block("```python\nfirst\n```\ntext\n```\nsecond\n```").source, "first");
  EXPECT_EQ(extract_code_block("```python\nline1\nline2\n").source, "line1\nline2");
}
