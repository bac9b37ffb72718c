#ifndef RECOLOR_CHECKPOINT_HPP
#define RECOLOR_CHECKPOINT_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "recolor/nn.hpp"
#include "recolor/recolor_net.hpp"
#include "recolor/tensor.hpp"

namespace recolor {

// Versioned binary container: a key=value metadata block plus named float
// tensors, raw bits, so a round trip is exact.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
  const Tensor* find(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Snapshot of a module tree (params + buffers) under its parameter names.
void checkpoint_store_module(Checkpoint& ck, nn::Module& m);
// Loads by name; every module tensor must be present with matching shape.
void checkpoint_restore_module(const Checkpoint& ck, nn::Module& m);

void store_recolor_config(Checkpoint& ck, const RecolorConfig& cfg);
RecolorConfig parse_recolor_config(const Checkpoint& ck);

}  // namespace recolor

#endif  // RECOLOR_CHECKPOINT_HPP
