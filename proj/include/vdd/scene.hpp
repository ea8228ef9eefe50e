#pragma once

#include <string>
#include <vector>

#include "vdd/tensor.hpp"

namespace vdd {

// Pixels not covered by any object sit at this distance.
inline constexpr double kBackgroundDepth = 10.0;

struct SceneObject {
    enum class Shape { Circle, Rectangle };
    Shape shape = Shape::Circle;
    double size = 1.0;      // circle radius / rectangle half-extent, pixels
    double r = 1, g = 1, b = 1;  // color in [0,1]
    std::vector<double> x, y;    // per-frame centers (x = column, y = row)
    std::vector<double> depth;   // per-frame distances, strictly positive
};

// Declarative multi-object scene; renders deterministically.
struct SceneSpec {
    int frames = 1;
    int height = 32, width = 32;
    double background = 0.0;  // gray shade in [0,1]
    std::string prompt;
    std::vector<SceneObject> objects;

    void validate() const;
};

struct RenderedVideo {
    TensorPtr rgb;    // [F,3,H,W] in [-1,1]
    TensorPtr depth;  // [F,1,H,W] raw distances
    std::string prompt;

    int frames() const { return rgb->extent(0); }
};

// Line-oriented scene text (format documented in docs/formats.md).
SceneSpec parse_scene(const std::string& text);
SceneSpec load_scene(const std::string& path);

// Painter's rule per pixel: nearest covering object supplies both color and
// depth; background otherwise. Ties go to the earlier object.
RenderedVideo render(const SceneSpec& spec);

// Inverse depth (1/d), normalized per video so the nearest pixel maps to +1
// and the farthest to -1 (constant-depth videos map to 0), then
// block-averaged down to the latent grid [F,1,h,w].
TensorPtr depth_to_latent(const TensorPtr& depth, int h, int w);

// Indices round(k*(F-1)/(n-1)), endpoints included; n == 1 gives frame 0.
std::vector<int> evenly_spaced_indices(int total, int n);
RenderedVideo sample_frames(const RenderedVideo& video, int n);

// Canonical fixture set; scene text is the single source of truth and is
// mirrored by the files under fixtures/scenes/.
const std::vector<std::string>& fixture_names();
const std::string& fixture_scene_text(const std::string& name);
SceneSpec fixture_scene(const std::string& name);

}  // namespace vdd
