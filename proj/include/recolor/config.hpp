#ifndef RECOLOR_CONFIG_HPP
#define RECOLOR_CONFIG_HPP

#include <filesystem>
#include <map>
#include <string>

namespace recolor {

// Flat key=value text config; snapshots are diff-able across runs.
using KvMap = std::map<std::string, std::string>;

KvMap read_kv_file(const std::filesystem::path& path);
void write_kv_file(const KvMap& kv, const std::filesystem::path& path);

}  // namespace recolor

#endif  // RECOLOR_CONFIG_HPP
