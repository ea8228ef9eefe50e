#include "vdd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "vdd/errors.hpp"

namespace fs = std::filesystem;

namespace vdd {

namespace {

void put_u32_le(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32_le(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32_le(std::ofstream& f, const float* data, size_t n) {
    // Host is little-endian on every supported target; keep the explicit
    // byte path so the format stays pinned regardless.
    std::vector<unsigned char> buf(n * 4);
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        buf[i * 4] = static_cast<unsigned char>(bits);
        buf[i * 4 + 1] = static_cast<unsigned char>(bits >> 8);
        buf[i * 4 + 2] = static_cast<unsigned char>(bits >> 16);
        buf[i * 4 + 3] = static_cast<unsigned char>(bits >> 24);
    }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void get_f32_le(std::ifstream& f, float* data, size_t n) {
    std::vector<unsigned char> buf(n * 4);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = static_cast<uint32_t>(buf[i * 4]) | (static_cast<uint32_t>(buf[i * 4 + 1]) << 8) |
                              (static_cast<uint32_t>(buf[i * 4 + 2]) << 16) |
                              (static_cast<uint32_t>(buf[i * 4 + 3]) << 24);
        std::memcpy(&data[i], &bits, 4);
    }
}

std::string shape_header(const std::vector<int>& shape) {
    std::ostringstream os;
    os << shape.size();
    for (int e : shape) os << " " << e;
    return os.str();
}

std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write("VDT1", 4);
    const std::string header = shape_header(t.shape);
    put_u32_le(f, static_cast<uint32_t>(header.size()));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    put_f32_le(f, t.data.data(), t.data.size());
    if (!f) throw IoError("short write on " + path);
}

TensorPtr load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "VDT1", 4) != 0) throw IoError(path + " is not a VDT1 tensor file");
    const uint32_t hlen = get_u32_le(f);
    std::string header(hlen, '\0');
    f.read(header.data(), hlen);
    std::istringstream hs(header);
    int rank = -1;
    if (!(hs >> rank) || rank < 1) throw IoError(path + ": bad tensor header");
    std::vector<int> shape(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i)
        if (!(hs >> shape[static_cast<size_t>(i)])) throw IoError(path + ": bad tensor header");
    auto t = zeros<float>(shape);
    get_f32_le(f, t->data.data(), t->data.size());
    if (!f) throw IoError(path + ": truncated tensor data");
    return t;
}

std::string format_manifest(const VideoModel& model) {
    std::string out;
    for (const auto* p : model.params.sorted_by_name()) {
        out += p->name;
        out += " [" + join_ints(p->tensor->shape) + "] ";
        out += p->kind;
        out += p->tensor->requires_grad ? " 1\n" : " 0\n";
    }
    return out;
}

void save_checkpoint(const VideoModel& model, const std::string& dir) {
    fs::create_directories(dir);
    for (const auto* p : model.params.sorted_by_name())
        save_tensor((fs::path(dir) / (p->name + ".vdt")).string(), *p->tensor);
    {
        std::ofstream f((fs::path(dir) / "manifest.txt").string());
        f << format_manifest(model);
    }
    {
        std::ofstream f((fs::path(dir) / "config.txt").string());
        const auto& c = model.cfg;
        f << "base_width=" << c.base_width << "\n";
        f << "channel_mult=" << join_ints(c.channel_mult) << "\n";
        f << "res_blocks=" << c.res_blocks << "\n";
        f << "attention_resolutions=" << join_ints(c.attention_resolutions) << "\n";
        f << "d_k=" << c.d_k << "\n";
        f << "latent_channels=" << c.latent_channels << "\n";
        f << "latent_size=" << c.latent_size << "\n";
        f << "norm_groups=" << c.norm_groups << "\n";
        f << "time_embed_dim=" << c.time_embed_dim << "\n";
        f << "text_tokens=" << c.text_tokens << "\n";
        f << "text_dim=" << c.text_dim << "\n";
        f << "ae_width=" << c.ae_width << "\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "schedule_steps=%d\nschedule_beta_start=%.17g\nschedule_beta_end=%.17g\n",
                      model.schedule.steps, model.schedule.beta_start, model.schedule.beta_end);
        f << buf;
    }
}

VideoModel load_checkpoint(const std::string& dir) {
    std::map<std::string, std::string> kv;
    {
        std::ifstream f((fs::path(dir) / "config.txt").string());
        if (!f) throw IoError("missing config.txt under " + dir);
        std::string line;
        while (std::getline(f, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    auto geti = [&](const char* k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw IoError(std::string("config.txt missing key ") + k);
        return std::stoi(it->second);
    };
    auto getd = [&](const char* k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw IoError(std::string("config.txt missing key ") + k);
        return std::stod(it->second);
    };
    UNetConfig cfg;
    cfg.base_width = geti("base_width");
    cfg.channel_mult = split_ints(kv.at("channel_mult"));
    cfg.res_blocks = geti("res_blocks");
    cfg.attention_resolutions = split_ints(kv.at("attention_resolutions"));
    cfg.d_k = geti("d_k");
    cfg.latent_channels = geti("latent_channels");
    cfg.latent_size = geti("latent_size");
    cfg.norm_groups = geti("norm_groups");
    cfg.time_embed_dim = geti("time_embed_dim");
    cfg.text_tokens = geti("text_tokens");
    cfg.text_dim = geti("text_dim");
    cfg.ae_width = geti("ae_width");

    VideoModel model(cfg, 0);
    model.schedule.steps = geti("schedule_steps");
    model.schedule.beta_start = getd("schedule_beta_start");
    model.schedule.beta_end = getd("schedule_beta_end");

    std::ifstream mf((fs::path(dir) / "manifest.txt").string());
    if (!mf) throw IoError("missing manifest.txt under " + dir);
    std::string name, shape, kind;
    int trainable;
    size_t rows = 0;
    while (mf >> name >> shape >> kind >> trainable) {
        const auto* p = model.params.find(name);
        if (!p) throw IoError("manifest names unknown parameter " + name);
        auto t = load_tensor((fs::path(dir) / (name + ".vdt")).string());
        if (t->shape != p->tensor->shape)
            throw IoError("checkpoint shape mismatch for " + name + ": " + shape_str(t->shape) + " vs " +
                          shape_str(p->tensor->shape));
        p->tensor->data = t->data;
        p->tensor->requires_grad = trainable != 0;
        ++rows;
    }
    if (rows != model.params.all().size())
        throw IoError("manifest lists " + std::to_string(rows) + " parameters, model has " +
                      std::to_string(model.params.all().size()));
    return model;
}

}  // namespace vdd
