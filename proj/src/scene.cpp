#include "vdd/scene.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "vdd/errors.hpp"

namespace vdd {

void SceneSpec::validate() const {
    if (frames < 1) throw ConfigError("scene needs at least one frame");
    if (height < 1 || width < 1) throw ConfigError("scene canvas must be positive");
    if (background < 0 || background > 1) throw ConfigError("background shade must be in [0,1]");
    for (size_t i = 0; i < objects.size(); ++i) {
        const auto& o = objects[i];
        if (o.size <= 0) throw ConfigError("object size must be positive");
        if (static_cast<int>(o.x.size()) != frames || static_cast<int>(o.y.size()) != frames)
            throw ConfigError("object " + std::to_string(i) + " xy trajectory length does not match frame count");
        if (static_cast<int>(o.depth.size()) != frames)
            throw ConfigError("object " + std::to_string(i) + " depth trajectory length does not match frame count");
        for (double d : o.depth)
            if (!(d > 0)) throw ConfigError("object depths must be strictly positive");
    }
}

namespace {

std::vector<double> parse_numbers(std::istringstream& ss, size_t n, const char* what) {
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (vals.size() != n)
        throw ConfigError(std::string(what) + ": expected " + std::to_string(n) + " numbers, got " + std::to_string(vals.size()));
    return vals;
}

}  // namespace

SceneSpec parse_scene(const std::string& text) {
    SceneSpec spec;
    bool have_header = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "scene") {
            if (!(ss >> spec.frames >> spec.height >> spec.width >> spec.background))
                throw ConfigError("scene header must be: scene F H W bg");
            have_header = true;
        } else if (key == "prompt") {
            std::string rest;
            std::getline(ss, rest);
            const size_t start = rest.find_first_not_of(' ');
            spec.prompt = start == std::string::npos ? "" : rest.substr(start);
        } else if (key == "object") {
            if (!have_header) throw ConfigError("object before scene header");
            SceneObject obj;
            std::string shape;
            if (!(ss >> shape >> obj.size >> obj.r >> obj.g >> obj.b))
                throw ConfigError("object line must be: object <circle|rectangle> size r g b");
            if (shape == "circle")
                obj.shape = SceneObject::Shape::Circle;
            else if (shape == "rectangle")
                obj.shape = SceneObject::Shape::Rectangle;
            else
                throw ConfigError("unknown shape: " + shape);
            spec.objects.push_back(obj);
        } else if (key == "xy") {
            if (spec.objects.empty()) throw ConfigError("xy line before any object");
            auto vals = parse_numbers(ss, static_cast<size_t>(spec.frames) * 2, "xy");
            auto& obj = spec.objects.back();
            for (int f = 0; f < spec.frames; ++f) {
                obj.x.push_back(vals[static_cast<size_t>(2 * f)]);
                obj.y.push_back(vals[static_cast<size_t>(2 * f + 1)]);
            }
        } else if (key == "depth") {
            if (spec.objects.empty()) throw ConfigError("depth line before any object");
            spec.objects.back().depth = parse_numbers(ss, static_cast<size_t>(spec.frames), "depth");
        } else {
            throw ConfigError("unknown scene directive: " + key);
        }
    }
    if (!have_header) throw ConfigError("scene text has no header line");
    spec.validate();
    return spec;
}

SceneSpec load_scene(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open scene file " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_scene(buf.str());
}

namespace {

bool covers(const SceneObject& o, int frame, double px, double py) {
    const double dx = px - o.x[static_cast<size_t>(frame)];
    const double dy = py - o.y[static_cast<size_t>(frame)];
    if (o.shape == SceneObject::Shape::Circle) return dx * dx + dy * dy <= o.size * o.size;
    return std::abs(dx) <= o.size && std::abs(dy) <= o.size;
}

}  // namespace

RenderedVideo render(const SceneSpec& spec) {
    spec.validate();
    const int f_n = spec.frames, h = spec.height, w = spec.width;
    auto rgb = zeros<float>({f_n, 3, h, w});
    auto depth = zeros<float>({f_n, 1, h, w});
    const float bg = static_cast<float>(2.0 * spec.background - 1.0);
    for (int f = 0; f < f_n; ++f)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                double best_depth = kBackgroundDepth;
                const SceneObject* best = nullptr;
                for (const auto& o : spec.objects) {
                    const double d = o.depth[static_cast<size_t>(f)];
                    if (d < best_depth && covers(o, f, px, py)) {
                        best_depth = d;
                        best = &o;
                    }
                }
                const int64_t pix = (static_cast<int64_t>(f) * h + y) * w + x;
                depth->data[static_cast<size_t>(pix)] = static_cast<float>(best_depth);
                const int64_t plane = static_cast<int64_t>(h) * w;
                const int64_t base = (static_cast<int64_t>(f) * 3) * plane + static_cast<int64_t>(y) * w + x;
                if (best) {
                    rgb->data[static_cast<size_t>(base)] = static_cast<float>(2.0 * best->r - 1.0);
                    rgb->data[static_cast<size_t>(base + plane)] = static_cast<float>(2.0 * best->g - 1.0);
                    rgb->data[static_cast<size_t>(base + 2 * plane)] = static_cast<float>(2.0 * best->b - 1.0);
                } else {
                    rgb->data[static_cast<size_t>(base)] = bg;
                    rgb->data[static_cast<size_t>(base + plane)] = bg;
                    rgb->data[static_cast<size_t>(base + 2 * plane)] = bg;
                }
            }
    return RenderedVideo{rgb, depth, spec.prompt};
}

TensorPtr depth_to_latent(const TensorPtr& depth, int h, int w) {
    if (depth->rank() != 4 || depth->extent(1) != 1) throw ShapeError("depth must be [F,1,H,W]");
    const int f_n = depth->extent(0), hp = depth->extent(2), wp = depth->extent(3);
    if (h < 1 || w < 1 || hp % h != 0 || wp % w != 0)
        throw ShapeError("latent grid must evenly divide the pixel grid");
    for (float d : depth->data)
        if (!(d > 0)) throw NumericError("depth_to_latent needs strictly positive depths");

    // Inverse depth, normalized over the whole video: near -> +1, far -> -1.
    std::vector<double> inv(depth->data.size());
    double vmin = HUGE_VAL, vmax = -HUGE_VAL;
    for (size_t i = 0; i < inv.size(); ++i) {
        inv[i] = 1.0 / static_cast<double>(depth->data[i]);
        vmin = std::min(vmin, inv[i]);
        vmax = std::max(vmax, inv[i]);
    }
    const double span = vmax - vmin;
    for (auto& v : inv) v = span < 1e-12 ? 0.0 : 2.0 * (v - vmin) / span - 1.0;

    const int fy = hp / h, fx = wp / w;
    auto out = zeros<float>({f_n, 1, h, w});
    for (int f = 0; f < f_n; ++f)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int yy = 0; yy < fy; ++yy)
                    for (int xx = 0; xx < fx; ++xx)
                        acc += inv[(static_cast<size_t>(f) * hp + (static_cast<size_t>(y) * fy + yy)) * wp +
                                   static_cast<size_t>(x) * fx + xx];
                out->data[(static_cast<size_t>(f) * h + y) * w + x] = static_cast<float>(acc / (fy * fx));
            }
    return out;
}

std::vector<int> evenly_spaced_indices(int total, int n) {
    if (n < 1) throw ConfigError("frame count must be >= 1");
    if (n > total) throw ConfigError("cannot sample " + std::to_string(n) + " frames from " + std::to_string(total));
    std::vector<int> idx(static_cast<size_t>(n));
    if (n == 1) return idx;  // frame 0
    for (int k = 0; k < n; ++k)
        idx[static_cast<size_t>(k)] = static_cast<int>(std::lround(static_cast<double>(k) * (total - 1) / (n - 1)));
    return idx;
}

RenderedVideo sample_frames(const RenderedVideo& video, int n) {
    const auto idx = evenly_spaced_indices(video.frames(), n);
    const int h = video.rgb->extent(2), w = video.rgb->extent(3);
    auto rgb = zeros<float>({n, 3, h, w});
    auto depth = zeros<float>({n, 1, h, w});
    const int64_t rgb_fs = 3ll * h * w, d_fs = static_cast<int64_t>(h) * w;
    for (int k = 0; k < n; ++k) {
        std::copy_n(video.rgb->data.data() + idx[static_cast<size_t>(k)] * rgb_fs, rgb_fs, rgb->data.data() + k * rgb_fs);
        std::copy_n(video.depth->data.data() + idx[static_cast<size_t>(k)] * d_fs, d_fs, depth->data.data() + k * d_fs);
    }
    return RenderedVideo{rgb, depth, video.prompt};
}

// ---------------------------------------------------------------------------
// Canonical fixtures (mirrored as files under fixtures/scenes/)
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, std::string>& fixture_map() {
    static const std::map<std::string, std::string> fixtures = {
        {"two_circle_crossing",
         "scene 8 32 32 0.1\n"
         "prompt a red circle crossing a blue circle\n"
         "object circle 5 1.0 0.2 0.2\n"
         "xy 5 16 8 16 11 16 14 16 17 16 20 16 23 16 26 16\n"
         "depth 2 2 2 2 2 2 2 2\n"
         "object circle 5 0.2 0.3 1.0\n"
         "xy 26 16 23 16 20 16 17 16 14 16 11 16 8 16 5 16\n"
         "depth 5 5 5 5 5 5 5 5\n"},
        {"occlusion_chain",
         "scene 8 32 32 0.1\n"
         "prompt three overlapping circles in a row\n"
         "object circle 5 1.0 0.2 0.2\n"
         "xy 10 14 10.5 14 11 14 11.5 14 12 14 12.5 14 13 14 13.5 14\n"
         "depth 2 2 2 2 2 2 2 2\n"
         "object circle 5 0.2 0.9 0.3\n"
         "xy 16 17 16 17 16 17 16 17 16 17 16 17 16 17 16 17\n"
         "depth 4 4 4 4 4 4 4 4\n"
         "object circle 5 0.2 0.3 1.0\n"
         "xy 22 14 21.5 14 21 14 20.5 14 20 14 19.5 14 19 14 18.5 14\n"
         "depth 6 6 6 6 6 6 6 6\n"},
        {"static_pair",
         "scene 8 32 32 0.1\n"
         "prompt a red circle beside a blue square\n"
         "object circle 4 1.0 0.2 0.2\n"
         "xy 9 16 9 16 9 16 9 16 9 16 9 16 9 16 9 16\n"
         "depth 3 3 3 3 3 3 3 3\n"
         "object rectangle 4 0.2 0.3 1.0\n"
         "xy 23 16 23 16 23 16 23 16 23 16 23 16 23 16 23 16\n"
         "depth 5 5 5 5 5 5 5 5\n"},
        {"color_swap_pair",
         "scene 8 32 32 0.1\n"
         "prompt a blue circle beside a red square\n"
         "object circle 4 0.2 0.3 1.0\n"
         "xy 9 16 9 16 9 16 9 16 9 16 9 16 9 16 9 16\n"
         "depth 3 3 3 3 3 3 3 3\n"
         "object rectangle 4 1.0 0.2 0.2\n"
         "xy 23 16 23 16 23 16 23 16 23 16 23 16 23 16 23 16\n"
         "depth 5 5 5 5 5 5 5 5\n"},
        {"approach_recede",
         "scene 8 32 32 0.1\n"
         "prompt a green circle approaching and receding\n"
         "object circle 5 0.2 0.9 0.3\n"
         "xy 16 16 16 16 16 16 16 16 16 16 16 16 16 16 16 16\n"
         "depth 8 6 4 2 2 4 6 8\n"},
        {"single_object",
         "scene 8 32 32 0.1\n"
         "prompt a green circle drifting right\n"
         "object circle 4 0.2 0.9 0.3\n"
         "xy 8 16 10 16 12 16 14 16 16 16 18 16 20 16 22 16\n"
         "depth 3 3 3 3 3 3 3 3\n"},
    };
    return fixtures;
}

}  // namespace

const std::vector<std::string>& fixture_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& [k, v] : fixture_map()) n.push_back(k);
        return n;
    }();
    return names;
}

const std::string& fixture_scene_text(const std::string& name) {
    auto it = fixture_map().find(name);
    if (it == fixture_map().end()) throw ConfigError("unknown fixture scene: " + name);
    return it->second;
}

SceneSpec fixture_scene(const std::string& name) { return parse_scene(fixture_scene_text(name)); }

}  // namespace vdd
