#pragma once

#include <map>
#include <string>
#include <vector>

#include "prunix/model.hpp"
#include "prunix/pruning.hpp"

namespace prunix {

// Checkpoint file: UTF-8 manifest (tensor name, dtype, shape, byte offset,
// optional scale) terminated by "end", followed by raw little-endian
// payloads. Round-trips bit-exactly.
struct Checkpoint {
  Model model;
  std::map<std::string, std::string> meta;
  std::vector<float> scales;  // per parameter layer; 0 = uncalibrated
  PruneMask mask;
  bool has_mask = false;
};

void save_checkpoint(const std::string& path, const Model& m,
                     const std::map<std::string, std::string>& meta,
                     const std::vector<float>& scales,
                     const PruneMask* mask = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace prunix
