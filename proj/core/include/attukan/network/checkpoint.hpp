#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attukan/numerics/param_store.hpp"

namespace attukan::network {

inline constexpr int kCheckpointFormatVersion = 1;

/// Structured checkpoint failure. Nothing is written to the destination
/// store when loading throws.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, version, manifest, length, mismatch };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind k);

/// Extra state carried by a checkpoint next to the tensors.
struct CheckpointMeta {
  nlohmann::json config = nlohmann::json::object();    // run configuration echo
  nlohmann::json training = nlohmann::json::object();  // epoch, rng state, ...
};

/// Blob file that accompanies a manifest: "<stem>.bin" in the same directory.
std::filesystem::path blob_path(const std::filesystem::path& manifest);

/// Serialises every entry of `store` (values, and Adam moments of trainable
/// entries) as little-endian float32 into the blob, and the manifest as JSON.
void save_checkpoint(const std::filesystem::path& manifest, const ParamStore& store,
                     const CheckpointMeta& meta);

/// Reads and validates the manifest and blob.
nlohmann::json read_manifest(const std::filesystem::path& manifest);

/// Restores every tensor listed in the manifest into `store`, which must hold
/// exactly the same names and shapes. All validation happens before the
/// first write.
CheckpointMeta load_checkpoint(const std::filesystem::path& manifest, ParamStore& store);

/// In-memory forms used by the file functions.
std::vector<std::uint8_t> encode_blob(const ParamStore& store, nlohmann::json& tensors);
CheckpointMeta decode_checkpoint(const nlohmann::json& manifest, const std::vector<std::uint8_t>& blob,
                                 ParamStore& store);

}  // namespace attukan::network
