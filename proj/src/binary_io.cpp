#include "rmgn/binary_io.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "rmgn/errors.hpp"

namespace rmgn::io {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InvariantError("unexpected end of binary stream");
  return v;
}

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void write_f32(std::ostream& out, float v) { put(out, v); }
void write_f64(std::ostream& out, double v) { put(out, v); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_u64(out, d);
  out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * 8));
}

std::uint32_t read_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get<std::uint64_t>(in); }
float read_f32(std::istream& in) { return get<float>(in); }
double read_f64(std::istream& in) { return get<double>(in); }

std::string read_string(std::istream& in) {
  const auto n = read_u32(in);
  if (n > (1u << 20)) throw InvariantError("string length out of range");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw InvariantError("unexpected end of binary stream");
  return s;
}

Tensor read_tensor(std::istream& in) {
  const auto rank = read_u32(in);
  if (rank == 0 || rank > 8) throw InvariantError("tensor rank out of range");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = read_u64(in);
    count *= d;
    if (count > kMaxElements) throw InvariantError("tensor too large");
  }
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 8));
  if (!in) throw InvariantError("unexpected end of binary stream");
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace rmgn::io
