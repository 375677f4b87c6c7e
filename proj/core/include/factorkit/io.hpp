#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "factorkit/engine.hpp"
#include "factorkit/tensor.hpp"

namespace factorkit {

// FKT1 container, all integers and floats little-endian:
//
//   "FKT1"  u32 record_count
//   record: u32 name_len, name bytes, u32 dims[4], u8 has_bias,
//           f32 payload[dims product], f32 bias[dims[0]] if has_bias
//
// Parameter files hold one record per conv layer in topological order. Tensor
// files hold a single record without bias.
void write_parameters(std::ostream& os, const CompiledGraph& graph, const Parameters& params);
void save_parameters(const std::filesystem::path& path, const CompiledGraph& graph,
                     const Parameters& params);
Parameters read_parameters(std::istream& is);
Parameters load_parameters(const std::filesystem::path& path);

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t);
void save_tensor(const std::filesystem::path& path, const std::string& name, const Tensor& t);
Tensor read_tensor(std::istream& is, std::string* name = nullptr);
Tensor load_tensor(const std::filesystem::path& path, std::string* name = nullptr);

// Binary PPM (P6), maxval up to 65535. Returns (1, 3, H, W) scaled to [0, 1].
Tensor read_ppm(std::istream& is);
Tensor load_ppm(const std::filesystem::path& path);
// 8-bit P6 from a (1, 3, H, W) tensor, values clamped to [0, 1].
void save_ppm(const std::filesystem::path& path, const Tensor& image);

}  // namespace factorkit
