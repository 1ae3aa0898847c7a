#include "lim/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "lim/error.hpp"

namespace lim {

namespace {

using nlohmann::json;

std::string pack_path(const std::string& prefix) { return prefix + ".limt"; }
std::string index_path(const std::string& prefix) { return prefix + ".json"; }

}  // namespace

void save_checkpoint(const std::string& prefix, const CheckpointContents& contents) {
  for (std::size_t i = 0; i < contents.params.size(); ++i) {
    if (!contents.params[i].second.defined()) {
      throw ContractError("save_checkpoint: undefined tensor for " + contents.params[i].first);
    }
    for (std::size_t j = i + 1; j < contents.params.size(); ++j) {
      if (contents.params[i].first == contents.params[j].first) {
        throw ContractError("save_checkpoint: duplicate parameter name " +
                            contents.params[i].first);
      }
    }
  }

  std::ofstream pack(pack_path(prefix), std::ios::binary | std::ios::trunc);
  if (!pack) throw IoError("save_checkpoint: cannot open " + pack_path(prefix));
  json params = json::object();
  for (const auto& [name, tensor] : contents.params) {
    params[name] = static_cast<std::uint64_t>(pack.tellp());
    write_limt(pack, tensor);
  }
  pack.flush();
  if (!pack) throw IoError("save_checkpoint: write failed for " + pack_path(prefix));

  json index;
  index["meta"] = contents.meta;
  index["params"] = params;
  std::ofstream idx(index_path(prefix), std::ios::trunc);
  if (!idx) throw IoError("save_checkpoint: cannot open " + index_path(prefix));
  idx << index.dump(2) << "\n";
  idx.flush();
  if (!idx) throw IoError("save_checkpoint: write failed for " + index_path(prefix));
}

CheckpointContents load_checkpoint(const std::string& prefix) {
  std::ifstream idx(index_path(prefix));
  if (!idx) throw IoError("load_checkpoint: cannot open " + index_path(prefix));
  json index;
  try {
    idx >> index;
  } catch (const json::exception& e) {
    throw IoError("load_checkpoint: malformed index " + index_path(prefix) + ": " + e.what());
  }
  if (!index.is_object() || !index.contains("meta") || !index.contains("params") ||
      !index["meta"].is_object() || !index["params"].is_object()) {
    throw IoError("load_checkpoint: index " + index_path(prefix) +
                  " must hold objects \"meta\" and \"params\"");
  }

  CheckpointContents contents;
  for (const auto& [key, value] : index["meta"].items()) {
    if (!value.is_string()) {
      throw IoError("load_checkpoint: meta entry " + key + " is not a string");
    }
    contents.meta[key] = value.get<std::string>();
  }

  std::ifstream pack(pack_path(prefix), std::ios::binary);
  if (!pack) throw IoError("load_checkpoint: cannot open " + pack_path(prefix));
  std::vector<std::pair<std::uint64_t, std::string>> order;
  for (const auto& [name, offset] : index["params"].items()) {
    if (!offset.is_number_unsigned()) {
      throw IoError("load_checkpoint: offset for " + name + " is not an unsigned integer");
    }
    order.emplace_back(offset.get<std::uint64_t>(), name);
  }
  std::sort(order.begin(), order.end());
  for (const auto& [offset, name] : order) {
    pack.clear();
    pack.seekg(static_cast<std::streamoff>(offset));
    if (!pack) throw IoError("load_checkpoint: cannot seek to " + name);
    contents.params.emplace_back(name, read_limt(pack));
  }
  return contents;
}

const Tensor& checkpoint_param(const CheckpointContents& contents, const std::string& name) {
  for (const auto& [n, t] : contents.params) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no parameter named " + name);
}

}  // namespace lim
