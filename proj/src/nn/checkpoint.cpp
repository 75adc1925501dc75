#include "rorl/nn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "rorl/errors.hpp"

namespace rorl::nn {
namespace le {
namespace {

template <typename T>
void put(std::ostream& out, T v) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw IoError("unexpected end of binary stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void put_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void put_f64(std::ostream& out, double v) { put(out, v); }
void put_f64s(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double v : values) put(out, v);
  }
}
std::uint32_t get_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get<std::uint64_t>(in); }
double get_f64(std::istream& in) { return get<double>(in); }
void get_f64s(std::istream& in, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size_bytes())))
      throw IoError("unexpected end of binary stream");
  } else {
    for (double& v : values) v = get<double>(in);
  }
}

}  // namespace le

namespace {
constexpr char kMlpMagic[8] = {'R', 'O', 'R', 'L', 'M', 'L', 'P', '\0'};
constexpr char kAdamMagic[8] = {'R', 'O', 'R', 'L', 'A', 'D', 'A', 'M'};

void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
  char buf[8];
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0)
    throw IoError(std::string("not a ") + what + " checkpoint");
}
}  // namespace

void write_mlp(std::ostream& out, const MlpD& net) {
  out.write(kMlpMagic, 8);
  le::put_u32(out, kCheckpointVersion);
  le::put_u32(out, net.output_activation() == Activation::relu ? 1u : 0u);
  le::put_u32(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int n : net.layer_sizes()) le::put_u32(out, static_cast<std::uint32_t>(n));
  le::put_u64(out, static_cast<std::uint64_t>(net.num_params()));
  le::put_f64s(out, std::span<const double>(net.params().data(), net.params().size()));
}

MlpD read_mlp(std::istream& in) {
  expect_magic(in, kMlpMagic, "network");
  const auto version = le::get_u32(in);
  if (version != kCheckpointVersion)
    throw IoError("unsupported network checkpoint version " + std::to_string(version));
  const auto act = le::get_u32(in);
  const auto count = le::get_u32(in);
  if (count < 2 || count > 64) throw IoError("corrupt network checkpoint (layer count)");
  std::vector<int> sizes(count);
  for (auto& n : sizes) n = static_cast<int>(le::get_u32(in));
  MlpD net(sizes, act == 1 ? Activation::relu : Activation::identity);
  const auto n_params = le::get_u64(in);
  if (n_params != static_cast<std::uint64_t>(net.num_params()))
    throw IoError("corrupt network checkpoint (parameter count)");
  le::get_f64s(in, std::span<double>(net.params().data(), net.params().size()));
  return net;
}

void save_mlp(const std::filesystem::path& path, const MlpD& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_mlp(out, net);
}

MlpD load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_mlp(in);
}

void write_adam(std::ostream& out, const AdamState<double>& state) {
  out.write(kAdamMagic, 8);
  le::put_u32(out, kCheckpointVersion);
  le::put_u64(out, static_cast<std::uint64_t>(state.step_count));
  le::put_f64(out, state.learning_rate);
  le::put_f64(out, state.beta1);
  le::put_f64(out, state.beta2);
  le::put_f64(out, state.epsilon);
  le::put_u64(out, static_cast<std::uint64_t>(state.first_moment.size()));
  le::put_f64s(out, std::span<const double>(state.first_moment.data(), state.first_moment.size()));
  le::put_f64s(out,
               std::span<const double>(state.second_moment.data(), state.second_moment.size()));
}

AdamState<double> read_adam(std::istream& in) {
  expect_magic(in, kAdamMagic, "optimizer");
  if (le::get_u32(in) != kCheckpointVersion) throw IoError("unsupported optimizer version");
  AdamState<double> s;
  s.step_count = static_cast<std::int64_t>(le::get_u64(in));
  s.learning_rate = le::get_f64(in);
  s.beta1 = le::get_f64(in);
  s.beta2 = le::get_f64(in);
  s.epsilon = le::get_f64(in);
  const auto n = static_cast<Eigen::Index>(le::get_u64(in));
  s.first_moment.resize(n);
  s.second_moment.resize(n);
  le::get_f64s(in, std::span<double>(s.first_moment.data(), n));
  le::get_f64s(in, std::span<double>(s.second_moment.data(), n));
  return s;
}

}  // namespace rorl::nn
