#pragma once

// Umbrella header.

#include "layoutvlm/autodiff.hpp"
#include "layoutvlm/decoder.hpp"
#include "layoutvlm/dsl.hpp"
#include "layoutvlm/eval.hpp"
#include "layoutvlm/geometry.hpp"
#include "layoutvlm/objectives.hpp"
#include "layoutvlm/optimizer.hpp"
#include "layoutvlm/pipeline.hpp"
#include "layoutvlm/render.hpp"
#include "layoutvlm/render_png.hpp"
#include "layoutvlm/scene.hpp"
#include "layoutvlm/vlm.hpp"
