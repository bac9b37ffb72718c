#include "recolor/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace recolor {

namespace {

constexpr char kMagic[8] = {'R', 'C', 'Q', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
  uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  std::ostringstream meta_ss;
  for (const auto& [k, v] : meta) meta_ss << k << "=" << v << "\n";
  write_str(out, meta_ss.str());
  write_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    write_str(out, name);
    write_u32(out, static_cast<uint32_t>(t.ndim()));
    for (int d : t.shape()) write_u32(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path.string() + " is not a checkpoint file");
  uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  std::istringstream meta_ss(read_str(in));
  std::string line;
  while (std::getline(meta_ss, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  uint64_t count = read_u64(in);
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = read_str(in);
    uint32_t ndim = read_u32(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_u32(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data in " + path.string());
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void checkpoint_store_module(Checkpoint& ck, nn::Module& m) {
  std::vector<nn::Param*> ps;
  m.collect_params(ps);
  m.collect_buffers(ps);
  for (nn::Param* p : ps) ck.put(p->name, p->value);
}

void checkpoint_restore_module(const Checkpoint& ck, nn::Module& m) {
  std::vector<nn::Param*> ps;
  m.collect_params(ps);
  m.collect_buffers(ps);
  for (nn::Param* p : ps) {
    const Tensor* t = ck.find(p->name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor '" + p->name + "'");
    if (t->shape() != p->value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + p->name + "': file has " +
                               t->shape_str() + ", model expects " + p->value.shape_str());
    std::copy_n(t->data(), t->numel(), p->value.data());
  }
}

void store_recolor_config(Checkpoint& ck, const RecolorConfig& cfg) {
  ck.meta["colors"] = std::to_string(cfg.num_colors);
  ck.meta["temperature"] = std::to_string(cfg.temperature);
  ck.meta["widths"] = cfg.widths_str();
  ck.meta["pam_dim"] = std::to_string(cfg.pam_dim);
  ck.meta["seed"] = std::to_string(cfg.seed);
}

RecolorConfig parse_recolor_config(const Checkpoint& ck) {
  RecolorConfig cfg;
  auto get = [&](const char* key) -> std::string {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end())
      throw std::runtime_error(std::string("checkpoint: missing meta key '") + key + "'");
    return it->second;
  };
  cfg.num_colors = std::stoi(get("colors"));
  cfg.temperature = std::stof(get("temperature"));
  cfg.pam_dim = std::stoi(get("pam_dim"));
  cfg.seed = std::stoull(get("seed"));
  cfg.encoder_channels.clear();
  std::istringstream ws(get("widths"));
  std::string tok;
  while (std::getline(ws, tok, ',')) cfg.encoder_channels.push_back(std::stoi(tok));
  cfg.validate();
  return cfg;
}

}  // namespace recolor
