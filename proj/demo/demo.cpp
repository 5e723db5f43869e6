// Places the bundled dining fixture from its hand-written program, prints
// the optimization trace and the final poses, and writes before/after
// top-down renders.
//
//   layoutvlm_demo [output dir]

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "layoutvlm.hpp"

namespace fs = std::filesystem;
using namespace layoutvlm;

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("demo_out");
  const fs::path dir = fs::path(LAYOUTVLM_DATA_DIR) / "fixtures" / "dining";
  try {
    const Room room = load_room((dir / "room.json").string());
    const Inventory inventory = load_inventory((dir / "inventory.json").string());
    const ProgramText text{read_text_file((dir / "dining.scene").string()), ProgramOrigin::kFile};

    std::set<std::string> ids;
    for (const auto& a : inventory) ids.insert(a.id);
    const SceneProgram proposed = parse_program(text, ids).program;
    SceneState before{room, {}};
    for (const auto& a : inventory) before.assets.push_back({a, proposed.poses.at(a.id), false, std::nullopt});

    const OptimizeProgramResult result = optimize_program(text, room, inventory);
    const auto& trace = *result.outcome.trace;
    std::cout << std::fixed << std::setprecision(4) << "iteration      total   semantic    physics\n";
    for (const auto& c : trace.checkpoints) {
      std::cout << std::setw(9) << c.iteration << std::setw(11) << c.total << std::setw(11) << c.semantic
                << std::setw(11) << c.physics << '\n';
    }
    std::cout << "best checkpoint at iteration " << trace.best_iteration << "\n\n";
    for (const auto& a : result.state.assets) {
      std::cout << std::left << std::setw(14) << a.spec.id << std::right << " x=" << a.pose.x << " y=" << a.pose.y
                << " rotation=" << std::setprecision(1) << rad_to_deg(a.pose.theta) << std::setprecision(4) << '\n';
    }
    const SceneScore before_score = score_scene(before);
    const SceneScore after_score = score_scene(result.state);
    std::cout << "\nproposed: " << before_score.collisions.size() << " collisions, "
              << before_score.protrusions.size() << " protrusions\n"
              << "placed:   " << after_score.collisions.size() << " collisions, " << after_score.protrusions.size()
              << " protrusions\n";

    fs::create_directories(out);
    std::ofstream(out / "before.svg") << render_topdown_svg(before);
    std::ofstream(out / "after.svg") << render_topdown_svg(result.state);
    std::ofstream(out / "layout.json") << serialize_layout(result.state);
    std::cout << "wrote " << (out / "before.svg").string() << " and " << (out / "after.svg").string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "demo: " << e.what() << '\n';
    return 1;
  }
}
