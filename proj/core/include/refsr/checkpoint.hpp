#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "refsr/tensor.hpp"

namespace refsr {

/// Serializable parameter set of one network (or any named array collection).
///
/// `arch_id` plus `config` fully determine the array shapes. Arrays are keyed by
/// name and kept in lexicographic order.
struct NetworkParams {
  std::string arch_id;
  std::uint32_t version = 1;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, Tensor> arrays;

  const Tensor& array(const std::string& name) const;
  Tensor& array(const std::string& name);
  std::size_t parameter_count() const;

  friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
    return a.arch_id == b.arch_id && a.version == b.version && a.config == b.config &&
           a.arrays == b.arrays;
  }
};

/// Container format version written into every file.
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Little-endian container:
///   "RSRCKPT1" | u32 format_version | u32 section_count
///   per section: str arch_id | u32 version | str config_json | u32 array_count
///                per array: str name | i32 dims[4] | f64 values[prod(dims)]
///   u64 FNV-1a 64 checksum of every preceding byte
/// where str = u32 byte length followed by UTF-8 bytes.
std::vector<std::uint8_t> encode_bundle(const std::vector<NetworkParams>& sections);
std::vector<NetworkParams> decode_bundle(const std::vector<std::uint8_t>& bytes);

/// Atomic write (temp file + rename).
void save_bundle(const std::vector<NetworkParams>& sections, const std::filesystem::path& path);
std::vector<NetworkParams> load_bundle(const std::filesystem::path& path);

void save_params(const NetworkParams& params, const std::filesystem::path& path);
/// Loads a single-section file. Corrupt or truncated data -> CorruptionError.
NetworkParams load_params(const std::filesystem::path& path);

/// Section lookup by arch_id; ConfigurationError if absent.
const NetworkParams& find_section(const std::vector<NetworkParams>& sections,
                                  const std::string& arch_id);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t file_checksum(const std::filesystem::path& path);

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace refsr
