#include "vdd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vdd/errors.hpp"

namespace fs = std::filesystem;

namespace vdd {

namespace {

unsigned char to_byte(float v) {
    const double scaled = (static_cast<double>(v) + 1.0) * 0.5 * 255.0;
    return static_cast<unsigned char>(std::clamp(std::lround(scaled), 0l, 255l));
}

void read_pnm_header(std::ifstream& f, const char* magic, int& w, int& h, int& maxval, const std::string& path) {
    std::string m;
    f >> m;
    if (m != magic) throw IoError(path + ": expected " + magic + " header");
    f >> w >> h >> maxval;
    if (!f || w < 1 || h < 1) throw IoError(path + ": bad PNM header");
    f.get();  // single whitespace before raster
}

std::string frame_path(const std::string& dir, const char* stem, const char* ext, int index) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.%s", stem, index, ext);
    return (fs::path(dir) / name).string();
}

}  // namespace

void write_ppm(const std::string& path, const TensorPtr& rgb_frame) {
    if (rgb_frame->rank() != 3 || rgb_frame->extent(0) != 3) throw ShapeError("write_ppm expects [3,H,W]");
    const int h = rgb_frame->extent(1), w = rgb_frame->extent(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] =
                    to_byte(rgb_frame->data[static_cast<size_t>(c * plane + y * w + x)]);
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

TensorPtr read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    int w, h, maxval;
    read_pnm_header(f, "P6", w, h, maxval, path);
    if (maxval != 255) throw IoError(path + ": only 8-bit PPM supported");
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError(path + ": truncated raster");
    auto t = zeros<float>({3, h, w});
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t->data[static_cast<size_t>(c * plane + y * w + x)] =
                    static_cast<float>(raw[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)] / 255.0 * 2.0 - 1.0);
    return t;
}

void write_pgm16(const std::string& path, const TensorPtr& frame, double dmin, double dmax) {
    if (frame->rank() != 3 || frame->extent(0) != 1) throw ShapeError("write_pgm16 expects [1,H,W]");
    const int h = frame->extent(1), w = frame->extent(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P5\n" << w << " " << h << "\n65535\n";
    const double span = dmax - dmin;
    std::vector<unsigned char> row(static_cast<size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = frame->data[static_cast<size_t>(y) * w + static_cast<size_t>(x)];
            const long v = span <= 0 ? 0 : std::clamp(std::lround(65535.0 * (d - dmin) / span), 0l, 65535l);
            row[static_cast<size_t>(x) * 2] = static_cast<unsigned char>(v >> 8);  // big-endian per PGM convention
            row[static_cast<size_t>(x) * 2 + 1] = static_cast<unsigned char>(v & 0xFF);
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

TensorPtr read_pgm16(const std::string& path, double dmin, double dmax) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    int w, h, maxval;
    read_pnm_header(f, "P5", w, h, maxval, path);
    if (maxval != 65535) throw IoError(path + ": only 16-bit PGM supported");
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 2);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError(path + ": truncated raster");
    auto t = zeros<float>({1, h, w});
    const double span = dmax - dmin;
    for (int i = 0; i < w * h; ++i) {
        const unsigned v = (static_cast<unsigned>(raw[static_cast<size_t>(i) * 2]) << 8) | raw[static_cast<size_t>(i) * 2 + 1];
        t->data[static_cast<size_t>(i)] = static_cast<float>(dmin + span * v / 65535.0);
    }
    return t;
}

void write_video_dir(const std::string& dir, const RenderedVideo& video) {
    fs::create_directories(dir);
    const int f_n = video.frames(), h = video.rgb->extent(2), w = video.rgb->extent(3);
    double dmin = HUGE_VAL, dmax = -HUGE_VAL;
    for (float d : video.depth->data) {
        dmin = std::min(dmin, static_cast<double>(d));
        dmax = std::max(dmax, static_cast<double>(d));
    }
    for (int f = 0; f < f_n; ++f) {
        auto rgb = zeros<float>({3, h, w});
        std::copy_n(video.rgb->data.data() + static_cast<int64_t>(f) * 3 * h * w, 3ll * h * w, rgb->data.data());
        write_ppm(frame_path(dir, "frame", "ppm", f), rgb);
        auto dep = zeros<float>({1, h, w});
        std::copy_n(video.depth->data.data() + static_cast<int64_t>(f) * h * w, static_cast<int64_t>(h) * w, dep->data.data());
        write_pgm16(frame_path(dir, "depth", "pgm", f), dep, dmin, dmax);
    }
    {
        std::ofstream f((fs::path(dir) / "depth_range.txt").string());
        char buf[80];
        std::snprintf(buf, sizeof buf, "%.9g %.9g\n", dmin, dmax);
        f << buf;
    }
    if (!video.prompt.empty()) {
        std::ofstream f((fs::path(dir) / "prompt.txt").string());
        f << video.prompt << "\n";
    }
}

RenderedVideo read_video_dir(const std::string& dir) {
    int f_n = 0;
    while (fs::exists(frame_path(dir, "frame", "ppm", f_n))) ++f_n;
    if (f_n == 0) throw IoError("no frame_0000.ppm under " + dir);

    double dmin = 0, dmax = 0;
    {
        std::ifstream f((fs::path(dir) / "depth_range.txt").string());
        if (!f || !(f >> dmin >> dmax)) throw IoError("missing or bad depth_range.txt under " + dir);
    }
    auto first = read_ppm(frame_path(dir, "frame", "ppm", 0));
    const int h = first->extent(1), w = first->extent(2);
    auto rgb = zeros<float>({f_n, 3, h, w});
    auto depth = zeros<float>({f_n, 1, h, w});
    for (int f = 0; f < f_n; ++f) {
        auto fr = f == 0 ? first : read_ppm(frame_path(dir, "frame", "ppm", f));
        if (fr->extent(1) != h || fr->extent(2) != w) throw IoError("inconsistent frame sizes under " + dir);
        std::copy_n(fr->data.data(), 3ll * h * w, rgb->data.data() + static_cast<int64_t>(f) * 3 * h * w);
        auto dp = read_pgm16(frame_path(dir, "depth", "pgm", f), dmin, dmax);
        if (dp->extent(1) != h || dp->extent(2) != w) throw IoError("inconsistent depth sizes under " + dir);
        std::copy_n(dp->data.data(), static_cast<int64_t>(h) * w, depth->data.data() + static_cast<int64_t>(f) * h * w);
    }
    std::string prompt;
    {
        std::ifstream f((fs::path(dir) / "prompt.txt").string());
        if (f) std::getline(f, prompt);
    }
    return RenderedVideo{rgb, depth, prompt};
}

TensorPtr read_video_frames(const std::string& dir) {
    int f_n = 0;
    while (fs::exists(frame_path(dir, "frame", "ppm", f_n))) ++f_n;
    if (f_n == 0) throw IoError("no frame_0000.ppm under " + dir);
    auto first = read_ppm(frame_path(dir, "frame", "ppm", 0));
    const int h = first->extent(1), w = first->extent(2);
    auto rgb = zeros<float>({f_n, 3, h, w});
    for (int f = 0; f < f_n; ++f) {
        auto fr = f == 0 ? first : read_ppm(frame_path(dir, "frame", "ppm", f));
        std::copy_n(fr->data.data(), 3ll * h * w, rgb->data.data() + static_cast<int64_t>(f) * 3 * h * w);
    }
    return rgb;
}

void write_contact_sheet(const std::string& path, const TensorPtr& rgb_video) {
    if (rgb_video->rank() != 4 || rgb_video->extent(1) != 3) throw ShapeError("contact sheet expects [F,3,H,W]");
    const int f_n = rgb_video->extent(0), h = rgb_video->extent(2), w = rgb_video->extent(3);
    auto sheet = zeros<float>({3, h, f_n * w});
    for (int f = 0; f < f_n; ++f)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                std::copy_n(rgb_video->data.data() + ((static_cast<int64_t>(f) * 3 + c) * h + y) * w, w,
                            sheet->data.data() + (static_cast<int64_t>(c) * h + y) * f_n * w + static_cast<int64_t>(f) * w);
    write_ppm(path, sheet);
}

}  // namespace vdd
