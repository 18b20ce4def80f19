#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "mage/param_vector.hpp"

namespace mage {

struct Provenance {
  std::string task;
  std::int64_t seed = 0;
  std::string config_digest;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  ParamVector params;
  Provenance provenance;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header line "schema=1 kind=<tag> len=<d> shape=AxBxC task=<t> seed=<s> config=<digest>",
// then one shortest round-trip decimal per line.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text, const std::string& origin = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also rejects a kind other than `expected_kind`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind);

}  // namespace mage
