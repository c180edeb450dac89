#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dvgnn/autodiff.hpp"
#include "dvgnn/pipeline.hpp"

namespace dvgnn {

// Binary parameter container:
//   "DVGN", u16 version, u32 record count, then per record
//   u16 name length, name bytes, u8 rank, u32 dims[rank], f64 values.
// All integers and doubles little-endian.
inline constexpr std::uint16_t kModelFormatVersion = 1;

std::string encode_params(const ParamStore& store);
ParamStore decode_params(const std::string& bytes, const std::string& origin = "<memory>");

void save_params(const std::string& path, const ParamStore& store);
ParamStore load_params(const std::string& path);

// Flat `key = value` text; keys match the CLI long option names.
std::string run_config_text(const RunConfig& cfg);
RunConfig run_config_from(const std::map<std::string, std::string>& kv, const std::string& origin);
RunConfig load_run_config(const std::string& path);

}  // namespace dvgnn
