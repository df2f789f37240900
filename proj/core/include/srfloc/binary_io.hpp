#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace srfloc {

// Little-endian primitive I/O. Readers throw std::runtime_error on short
// reads so truncated files never yield a partially constructed object.

void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_i64(std::ostream& os, std::int64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_bytes(std::ostream& os, const void* data, std::size_t n);
void write_magic(std::ostream& os, const char magic[4]);

std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::int64_t read_i64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
void read_bytes(std::istream& is, void* data, std::size_t n);
// Throws if the stream does not start with the expected 4-byte magic.
void expect_magic(std::istream& is, const char magic[4], const std::string& what);

// 64-bit FNV-1a, used for artifact checksums in run manifests.
std::uint64_t fnv1a_file(const std::string& path);

}  // namespace srfloc
