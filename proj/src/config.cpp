#include "recolor/config.hpp"

#include <fstream>
#include <stdexcept>

namespace recolor {

KvMap read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  KvMap kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: " + path.string() + ":" + std::to_string(line_no) +
                               ": expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_kv_file(const KvMap& kv, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

}  // namespace recolor
