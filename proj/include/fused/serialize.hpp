#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fused/adapter.hpp"
#include "fused/model.hpp"

namespace fused {

// Checkpoints are little-endian with a 4-byte magic, a version word, and a
// trailing 64-bit FNV-1a checksum over everything before it. Identical
// objects always produce identical bytes.

std::vector<std::uint8_t> encode_model(const LayeredModel& model);
LayeredModel decode_model(const std::vector<std::uint8_t>& bytes);
void save_model(const LayeredModel& model, const std::string& path);
LayeredModel load_model(const std::string& path);

std::vector<std::uint8_t> encode_adapters(const AdapterSet& adapters);
AdapterSet decode_adapters(const std::vector<std::uint8_t>& bytes);
void save_adapters(const AdapterSet& adapters, const std::string& path);
AdapterSet load_adapters(const std::string& path);

// Checkpoint sizes in bytes, as written by the encoders above.
std::uint64_t model_checkpoint_bytes(const LayeredModel& model);
std::uint64_t adapter_checkpoint_bytes(const AdapterSet& adapters);

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t len);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace fused
