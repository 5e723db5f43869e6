// layoutvlm command-line front end.
//
// Exit codes: 0 success, 1 error, 2 partial placement.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "layoutvlm.hpp"

namespace fs = std::filesystem;
using namespace layoutvlm;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kPartial = 2;

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

PlacementConfig config_or_default(const std::string& path) {
  return path.empty() ? PlacementConfig{} : load_config(path);
}

std::string instruction_text(const std::string& arg) {
  // "@file" reads the instruction from a file.
  if (!arg.empty() && arg[0] == '@') return read_text_file(arg.substr(1));
  return arg;
}

Mode mode_from(const std::string& s) {
  auto m = parse_mode(s);
  if (!m) throw Error("unknown mode '" + s + "' (expected live, record or replay)");
  return *m;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string room, inventory, instruction, mode = "replay", cache, out, config;
  bool trace = false;
};

int cmd_generate(const GenerateArgs& a) {
  const Room room = load_room(a.room);
  const Inventory inventory = load_inventory(a.inventory);
  const PlacementConfig cfg = config_or_default(a.config);
  const std::string instruction = instruction_text(a.instruction);
  ReplayMode mode{mode_from(a.mode), a.cache};
  if (mode.mode != Mode::kLive && a.cache.empty()) throw Error("--cache is required for record and replay");
  VlmClient client(EndpointConfig::from_env(), mode);
  const PromptLibrary prompts = PromptLibrary::load();

  GenerateResult result;
  nlohmann::json report = {{"instruction", instruction}, {"mode", a.mode}};
  int code = kOk;
  try {
    result = generate(room, inventory, instruction, client, prompts, cfg);
  } catch (const Error& e) {
    report["error"] = e.what();
    report["network_requests"] = client.network_attempts();
    write_json(fs::path(a.out) / "report.json", report);
    throw;
  }

  const fs::path out(a.out);
  write_file(out / "scene.scene", serialize_program(result.program).source);
  write_file(out / "layout.json", serialize_layout(result.state));
  write_file(out / "scene.svg", render_topdown_svg(result.state));
  nlohmann::json groups = nlohmann::json::array();
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& g : result.groups) {
    groups.push_back(to_json(g));
    traces.push_back(g.trace ? to_json(*g.trace) : nlohmann::json(nullptr));
  }
  write_json(out / "decode_reports.json", groups);
  if (a.trace) write_json(out / "trace.json", traces);

  const SceneScore score = score_scene(result.state);
  report["grouping"] = result.grouping.groups;
  report["grouping_warnings"] = result.grouping.warnings;
  report["groups"] = groups;
  report["failed_assets"] = result.failed_assets;
  report["placed"] = result.state.assets.size();
  report["score"] = to_json(score);
  report["network_requests"] = client.network_attempts();
  write_json(out / "report.json", report);

  if (result.partial()) {
    std::cerr << "partial placement; unplaced assets:";
    for (const auto& id : result.failed_assets) std::cerr << ' ' << id;
    std::cerr << '\n';
    for (const auto& g : result.groups) {
      if (!g.error.empty()) std::cerr << "  group [" << g.ids.front() << ", ...]: " << g.error << '\n';
    }
    code = kPartial;
  }
  std::cout << "placed " << result.state.assets.size() << " of " << inventory.size() << " assets; CF "
            << (score.collision_free ? "true" : "false") << ", IB " << (score.in_boundary ? "true" : "false")
            << "; network requests " << client.network_attempts() << '\n';
  return code;
}

// ---------------------------------------------------------------------------

struct OptimizeArgs {
  std::string program, room, inventory, out, config, suite;
  bool trace = false;
};

int optimize_one(const fs::path& program, const fs::path& room_path, const fs::path& inventory_path,
                 const fs::path& out, const PlacementConfig& cfg, bool trace, std::ostream& log) {
  const Room room = load_room(room_path.string());
  const Inventory inventory = load_inventory(inventory_path.string());
  ProgramText text{read_text_file(program.string()), ProgramOrigin::kFile};
  OptimizeProgramResult result = optimize_program(text, room, inventory, cfg);
  for (const auto& d : result.outcome.diagnostics) log << program.string() << ':' << format_diagnostic(d) << '\n';
  write_file(out / "layout.json", serialize_layout(result.state));
  write_file(out / "scene.svg", render_topdown_svg(result.state));
  write_json(out / "decode_report.json", to_json(result.outcome));
  if (trace && result.outcome.trace) write_json(out / "trace.json", to_json(*result.outcome.trace));
  if (!result.outcome.missing.empty()) {
    log << program.string() << ": assets without a pose:";
    for (const auto& id : result.outcome.missing) log << ' ' << id;
    log << '\n';
    return kPartial;
  }
  return kOk;
}

/// Each subdirectory holds room.json, inventory.json and program.scene; the
/// output mirrors it with layout.json next to copies of the inputs.
int optimize_suite(const OptimizeArgs& a, const PlacementConfig& cfg) {
  std::vector<fs::path> scenes;
  for (const auto& e : fs::directory_iterator(a.suite)) {
    if (e.is_directory() && fs::exists(e.path() / "program.scene")) scenes.push_back(e.path());
  }
  std::sort(scenes.begin(), scenes.end());
  if (scenes.empty()) throw Error("no scenes under " + a.suite);
  std::vector<std::future<std::pair<int, std::string>>> jobs;
  for (const auto& dir : scenes) {
    jobs.push_back(std::async(std::launch::async, [&, dir] {
      std::ostringstream log;
      const fs::path out = fs::path(a.out) / dir.filename();
      try {
        fs::create_directories(out);
        for (const char* f : {"room.json", "inventory.json"}) {
          fs::copy_file(dir / f, out / f, fs::copy_options::overwrite_existing);
        }
        const int code = optimize_one(dir / "program.scene", dir / "room.json", dir / "inventory.json", out, cfg,
                                      a.trace, log);
        return std::make_pair(code, log.str());
      } catch (const std::exception& e) {
        log << dir.string() << ": " << e.what() << '\n';
        return std::make_pair(kFailure, log.str());
      }
    }));
  }
  int worst = kOk;
  for (auto& j : jobs) {
    auto [code, log] = j.get();
    std::cerr << log;
    worst = std::max(worst, code == kFailure ? 3 : code);
  }
  std::cout << "optimized " << scenes.size() << " scenes\n";
  return worst == 3 ? kFailure : worst;
}

int cmd_optimize(const OptimizeArgs& a) {
  const PlacementConfig cfg = config_or_default(a.config);
  if (!a.suite.empty()) return optimize_suite(a, cfg);
  if (a.program.empty() || a.room.empty() || a.inventory.empty()) {
    throw Error("optimize needs a program file, --room and --inventory (or --suite)");
  }
  const int code = optimize_one(a.program, a.room, a.inventory, a.out, cfg, a.trace, std::cerr);
  std::cout << "wrote " << (fs::path(a.out) / "layout.json").string() << '\n';
  return code;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string layout, room, inventory, out, suite, instruction, mode = "replay", cache, csv;
  bool judge = false;
  double tolerance_iou = 0.01;
  double slack = 0.01;
};

int cmd_eval(const EvalArgs& a) {
  const EvalConfig cfg{a.tolerance_iou, a.slack};
  nlohmann::json report;
  if (!a.suite.empty()) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(a.suite)) {
      if (e.is_directory() && fs::exists(e.path() / "layout.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<SceneState> scenes;
    std::vector<std::string> names;
    for (const auto& d : dirs) {
      const Room room = load_room((d / "room.json").string());
      const Inventory inventory = load_inventory((d / "inventory.json").string());
      scenes.push_back(load_layout((d / "layout.json").string(), room, inventory));
      names.push_back(d.filename().string());
    }
    const SuiteReport suite = score_suite(scenes, cfg);
    report = to_json(suite);
    for (std::size_t i = 0; i < names.size(); ++i) report["rows"][i]["scene"] = names[i];
    if (!a.csv.empty()) write_file(a.csv, suite_csv(suite, names));
    std::cout << "CF " << suite.cf_percent << "%, IB " << suite.ib_percent << "% over " << scenes.size()
              << " scenes\n";
  } else {
    if (a.layout.empty() || a.room.empty() || a.inventory.empty()) {
      throw Error("eval needs a layout file, --room and --inventory (or --suite)");
    }
    const Room room = load_room(a.room);
    const Inventory inventory = load_inventory(a.inventory);
    const SceneState state = load_layout(a.layout, room, inventory);
    SceneScore score = score_scene(state, cfg);
    std::string judge_warning;
    if (a.judge) {
      try {
        VlmClient client(EndpointConfig::from_env(), ReplayMode{mode_from(a.mode), a.cache});
        score.judged = judge_semantics(state, instruction_text(a.instruction), client, PromptLibrary::load(), cfg);
        if (!score.judged->position && !score.judged->rotation) {
          judge_warning = "judge unavailable; no semantic scores";
          for (const auto& d : score.judged->diagnostics) judge_warning += "\n  " + d;
          score.judged.reset();
        }
      } catch (const Error& e) {
        judge_warning = std::string("judge unavailable: ") + e.what();
      }
      if (!judge_warning.empty()) std::cerr << "warning: " << judge_warning << '\n';
    }
    report = to_json(score);
    if (!judge_warning.empty()) report["judge_warning"] = judge_warning;
    std::cout << "CF " << (score.collision_free ? "true" : "false") << ", IB "
              << (score.in_boundary ? "true" : "false") << '\n';
  }
  if (a.out.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    write_json(a.out, report);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string input, room, inventory, out, format = "svg";
  double ppm = 80.0;
  double grid = 2.0;
  bool no_labels = false, no_arrows = false, no_grid = false;
};

int cmd_render(const RenderArgs& a) {
  const Room room = load_room(a.room);
  const Inventory inventory = load_inventory(a.inventory);
  SceneState state{room, {}};
  if (fs::path(a.input).extension() == ".scene") {
    std::set<std::string> ids;
    for (const auto& s : inventory) ids.insert(s.id);
    const ParseResult parsed = parse_program({read_text_file(a.input), ProgramOrigin::kFile}, ids);
    for (const auto& d : parsed.diagnostics) std::cerr << a.input << ':' << format_diagnostic(d) << '\n';
    if (parsed.error_count() > 0) return kFailure;
    for (const auto& s : inventory) {
      if (auto p = parsed.program.poses.find(s.id); p != parsed.program.poses.end()) {
        state.assets.push_back({s, p->second, true, std::nullopt});
      }
    }
  } else {
    state = load_layout(a.input, room, inventory);
  }
  RenderOptions opts;
  opts.pixels_per_meter = a.ppm;
  opts.grid_spacing = a.grid;
  opts.show_labels = !a.no_labels;
  opts.show_arrows = !a.no_arrows;
  opts.show_grid = !a.no_grid;
  if (a.format == "png") {
    opts.format = ImageFormat::kPng;
  } else if (a.format != "svg") {
    throw Error("unknown format '" + a.format + "' (expected svg or png)");
  }
  write_file(a.out, render_topdown(state, opts));
  return kOk;
}

int cmd_cache_ls(const std::string& dir) {
  const ReplayCache cache(dir);
  for (const auto& e : cache.list()) {
    std::cout << e.digest << "  " << e.model << "  " << e.timestamp << "  " << e.response_bytes << " bytes\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable 3D scene layout from relations and pose estimates"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Group, propose, decode and optimize a full scene");
  g->add_option("--room", gen.room, "Room JSON")->required();
  g->add_option("--inventory", gen.inventory, "Inventory JSON")->required();
  g->add_option("--instruction", gen.instruction, "Layout instruction, or @file")->required();
  g->add_option("--mode", gen.mode, "live, record or replay")->capture_default_str();
  g->add_option("--cache", gen.cache, "Replay cache directory");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--config", gen.config, "JSON overriding configuration defaults");
  g->add_flag("--trace", gen.trace, "Write optimization traces");

  OptimizeArgs opt;
  auto* o = app.add_subcommand("optimize", "Decode and optimize a scene program without a VLM");
  o->add_option("program", opt.program, "Scene program (.scene)");
  o->add_option("--room", opt.room, "Room JSON");
  o->add_option("--inventory", opt.inventory, "Inventory JSON");
  o->add_option("--suite", opt.suite, "Directory of scenes to optimize in parallel");
  o->add_option("--out", opt.out, "Output directory")->required();
  o->add_option("--config", opt.config, "JSON overriding configuration defaults");
  o->add_flag("--trace", opt.trace, "Write the optimization trace");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Collision-free and in-boundary metrics, optionally judged");
  e->add_option("layout", ev.layout, "Layout JSON");
  e->add_option("--room", ev.room, "Room JSON");
  e->add_option("--inventory", ev.inventory, "Inventory JSON");
  e->add_option("--suite", ev.suite, "Directory of scenes, each with room, inventory and layout JSON");
  e->add_option("--out", ev.out, "Report path (stdout when omitted)");
  e->add_option("--csv", ev.csv, "Also write per-scene rows as CSV (suite only)");
  e->add_option("--tolerance-iou", ev.tolerance_iou, "IoU above which a pair collides")->capture_default_str();
  e->add_option("--slack", ev.slack, "Allowed protrusion in meters")->capture_default_str();
  e->add_flag("--judge", ev.judge, "Add judge-scored semantic alignment");
  e->add_option("--instruction", ev.instruction, "Instruction for the judge, or @file");
  e->add_option("--mode", ev.mode, "live, record or replay")->capture_default_str();
  e->add_option("--cache", ev.cache, "Replay cache directory");

  RenderArgs rd;
  auto* r = app.add_subcommand("render", "Top-down image of a layout or scene program");
  r->add_option("input", rd.input, "Layout JSON or .scene program")->required();
  r->add_option("--room", rd.room, "Room JSON")->required();
  r->add_option("--inventory", rd.inventory, "Inventory JSON")->required();
  r->add_option("--out", rd.out, "Image path")->required();
  r->add_option("--format", rd.format, "svg or png")->capture_default_str();
  r->add_option("--ppm", rd.ppm, "Pixels per meter")->capture_default_str();
  r->add_option("--grid", rd.grid, "Grid spacing in meters")->capture_default_str();
  r->add_flag("--no-labels", rd.no_labels, "Omit asset labels");
  r->add_flag("--no-arrows", rd.no_arrows, "Omit front arrows");
  r->add_flag("--no-grid", rd.no_grid, "Omit grid marks");

  std::string cache_dir;
  auto* c = app.add_subcommand("replay-cache", "Inspect a replay cache");
  c->require_subcommand(1);
  auto* ls = c->add_subcommand("ls", "List cached requests");
  ls->add_option("--cache", cache_dir, "Replay cache directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kFailure;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*o) return cmd_optimize(opt);
    if (*e) return cmd_eval(ev);
    if (*r) return cmd_render(rd);
    if (*ls) return cmd_cache_ls(cache_dir);
  } catch (const ParseError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kFailure;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
