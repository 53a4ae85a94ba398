#pragma once

// Little-endian primitives for checkpoint and flow files.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "rmgn/tensor.hpp"

namespace rmgn::io {

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);
void write_tensor(std::ostream& out, const Tensor& t);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);
Tensor read_tensor(std::istream& in);

}  // namespace rmgn::io
