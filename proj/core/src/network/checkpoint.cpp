#include "attukan/network/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace attukan::network {

namespace fs = std::filesystem;
using nlohmann::json;
using Kind = CheckpointError::Kind;

const char* to_string(CheckpointError::Kind k) {
  switch (k) {
    case Kind::io: return "io";
    case Kind::version: return "version";
    case Kind::manifest: return "manifest";
    case Kind::length: return "length";
    case Kind::mismatch: return "mismatch";
  }
  return "unknown";
}

fs::path blob_path(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

namespace {

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

void append(std::vector<std::uint8_t>& blob, json& tensors, const std::string& name, const Tensor& t,
            const char* kind, std::int64_t step) {
  json rec;
  rec["name"] = name;
  rec["shape"] = t.shape();
  rec["dtype"] = "f32";
  rec["offset"] = blob.size();
  rec["kind"] = kind;
  if (step >= 0) rec["step"] = step;
  for (double v : t.data()) put_f32(blob, v);
  tensors.push_back(std::move(rec));
}

struct Slot {
  std::size_t entry;
  std::string kind;
  std::size_t offset;
  std::int64_t step;
};

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const void* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::io, "cannot write " + p.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw CheckpointError(Kind::io, "write failed for " + p.string());
}

}  // namespace

std::vector<std::uint8_t> encode_blob(const ParamStore& store, json& tensors) {
  std::vector<std::uint8_t> blob;
  tensors = json::array();
  for (const auto& e : store.entries()) {
    if (!e.trainable) {
      append(blob, tensors, e.name, e.value, "buffer", -1);
      continue;
    }
    append(blob, tensors, e.name, e.value, "value", e.step);
    append(blob, tensors, e.name, e.m.empty() ? Tensor::zeros_like(e.value) : e.m, "adam_m", -1);
    append(blob, tensors, e.name, e.v.empty() ? Tensor::zeros_like(e.value) : e.v, "adam_v", -1);
  }
  return blob;
}

void save_checkpoint(const fs::path& manifest, const ParamStore& store, const CheckpointMeta& meta) {
  json m;
  m["format_version"] = kCheckpointFormatVersion;
  json tensors;
  const auto blob = encode_blob(store, tensors);
  m["blob"] = blob_path(manifest).filename().string();
  m["blob_bytes"] = blob.size();
  m["config"] = meta.config;
  m["training"] = meta.training;
  m["tensors"] = std::move(tensors);
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  write_file(blob_path(manifest), blob.data(), blob.size());
  const std::string text = m.dump(2) + "\n";
  write_file(manifest, text.data(), text.size());
}

json read_manifest(const fs::path& manifest) {
  const auto bytes = read_file(manifest);
  json m;
  try {
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::manifest, manifest.string() + ": " + e.what());
  }
  if (!m.is_object() || !m.contains("format_version") || !m["format_version"].is_number_integer())
    throw CheckpointError(Kind::manifest, manifest.string() + ": missing format_version");
  if (m["format_version"].get<int>() != kCheckpointFormatVersion)
    throw CheckpointError(Kind::version, "checkpoint format version " + m["format_version"].dump() +
                                             " is not supported (expected " +
                                             std::to_string(kCheckpointFormatVersion) + ")");
  return m;
}

CheckpointMeta decode_checkpoint(const json& m, const std::vector<std::uint8_t>& blob, ParamStore& store) {
  if (m.value("format_version", -1) != kCheckpointFormatVersion)
    throw CheckpointError(Kind::version, "unsupported checkpoint format version");
  std::vector<Slot> slots;
  try {
    const std::size_t declared = m.at("blob_bytes").get<std::size_t>();
    if (declared != blob.size())
      throw CheckpointError(Kind::length, "blob has " + std::to_string(blob.size()) +
                                              " bytes but the manifest declares " + std::to_string(declared));
    std::vector<int> seen(store.size() * 3, 0);
    std::size_t expected_offset = 0;
    for (const auto& rec : m.at("tensors")) {
      const std::string name = rec.at("name").get<std::string>();
      if (rec.at("dtype").get<std::string>() != "f32")
        throw CheckpointError(Kind::manifest, name + ": unsupported dtype " + rec.at("dtype").dump());
      if (!store.contains(name)) throw CheckpointError(Kind::mismatch, "checkpoint tensor " + name + " is not in the model");
      const std::size_t idx = store.index_of(name);
      const ParamEntry& e = store.entry(idx);
      const Shape shape = rec.at("shape").get<Shape>();
      if (shape != e.value.shape())
        throw CheckpointError(Kind::mismatch, name + ": checkpoint shape " + attukan::to_string(shape) +
                                                  " vs model " + attukan::to_string(e.value.shape()));
      const std::string kind = rec.at("kind").get<std::string>();
      int k;
      if (kind == "buffer" && !e.trainable) k = 0;
      else if (kind == "value" && e.trainable) k = 0;
      else if (kind == "adam_m" && e.trainable) k = 1;
      else if (kind == "adam_v" && e.trainable) k = 2;
      else throw CheckpointError(Kind::mismatch, name + ": unexpected tensor kind " + kind);
      if (seen[idx * 3 + k]++) throw CheckpointError(Kind::manifest, name + ": duplicate " + kind);
      const std::size_t offset = rec.at("offset").get<std::size_t>();
      if (offset != expected_offset)
        throw CheckpointError(Kind::manifest, name + ": offset " + std::to_string(offset) + ", expected " +
                                                  std::to_string(expected_offset));
      expected_offset += e.value.size() * 4;
      if (expected_offset > blob.size())
        throw CheckpointError(Kind::length, name + ": tensor extends past the end of the blob");
      slots.push_back({idx, kind, offset, rec.contains("step") ? rec["step"].get<std::int64_t>() : 0});
    }
    if (expected_offset != blob.size())
      throw CheckpointError(Kind::length, "blob has " + std::to_string(blob.size() - expected_offset) +
                                              " trailing bytes");
    for (std::size_t i = 0; i < store.size(); ++i) {
      const bool tr = store.entry(i).trainable;
      if (!seen[i * 3] || (tr && (!seen[i * 3 + 1] || !seen[i * 3 + 2])))
        throw CheckpointError(Kind::mismatch, "model tensor " + store.entry(i).name + " is missing from the checkpoint");
    }
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::manifest, std::string("malformed manifest: ") + e.what());
  }

  for (const Slot& s : slots) {
    ParamEntry& e = store.entry(s.entry);
    Tensor t(e.value.shape());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f32(&blob[s.offset + 4 * i]);
    if (s.kind == "adam_m") {
      e.m = std::move(t);
    } else if (s.kind == "adam_v") {
      e.v = std::move(t);
    } else {
      e.value = std::move(t);
      if (s.kind == "value") e.step = s.step;
    }
  }
  CheckpointMeta meta;
  meta.config = m.value("config", json::object());
  meta.training = m.value("training", json::object());
  return meta;
}

CheckpointMeta load_checkpoint(const fs::path& manifest, ParamStore& store) {
  const json m = read_manifest(manifest);
  const fs::path blob_file = manifest.parent_path() / m.value("blob", blob_path(manifest).filename().string());
  return decode_checkpoint(m, read_file(blob_file), store);
}

}  // namespace attukan::network
