#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lim/tensor.hpp"

namespace lim {

// A named-tensor archive stored as two files sharing a prefix:
//   <prefix>.limt  — concatenated binary tensor records
//   <prefix>.json  — {"meta": {string: string}, "params": {name: byte offset}}
// The pack keeps parameters in the order given at save time; offsets in the
// index locate each record inside the pack.
struct CheckpointContents {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> params;
};

void save_checkpoint(const std::string& prefix, const CheckpointContents& contents);
CheckpointContents load_checkpoint(const std::string& prefix);

// Convenience lookup; throws IoError when the name is absent.
const Tensor& checkpoint_param(const CheckpointContents& contents, const std::string& name);

}  // namespace lim
