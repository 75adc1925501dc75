#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "rorl/nn/adam.hpp"
#include "rorl/nn/mlp.hpp"

namespace rorl::nn {

/// Network checkpoint, version 1. All integers and floats little-endian.
///
///   offset  size      field
///   0       8         magic "RORLMLP\0"
///   8       4  u32    format version (1)
///   12      4  u32    output activation (0 = identity, 1 = relu)
///   16      4  u32    number of layer sizes L+1
///   20      4(L+1)    u32 layer sizes, input first
///   ..      8  u64    parameter count P
///   ..      8P f64    parameters in layer order: W_0 row-major, b_0, W_1, ...
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_mlp(std::ostream& out, const MlpD& net);
MlpD read_mlp(std::istream& in);
void save_mlp(const std::filesystem::path& path, const MlpD& net);
MlpD load_mlp(const std::filesystem::path& path);

/// Adam state: magic "RORLADAM", u32 version, i64 step, f64 lr, beta1,
/// beta2, epsilon, u64 n, f64 first_moment[n], f64 second_moment[n].
void write_adam(std::ostream& out, const AdamState<double>& state);
AdamState<double> read_adam(std::istream& in);

namespace le {
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
void put_f64s(std::ostream& out, std::span<const double> values);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
double get_f64(std::istream& in);
void get_f64s(std::istream& in, std::span<double> values);
}  // namespace le

}  // namespace rorl::nn
