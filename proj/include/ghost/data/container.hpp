#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ghost/error.hpp"

namespace ghost::data {

enum class DType { F64, F32, I64, I32, U8 };

std::size_t dtype_size(DType t);
std::string_view dtype_name(DType t);
DType parse_dtype(std::string_view name);

template <typename T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<double>() { return DType::F64; }
template <> constexpr DType dtype_of<float>() { return DType::F32; }
template <> constexpr DType dtype_of<std::int64_t>() { return DType::I64; }
template <> constexpr DType dtype_of<std::int32_t>() { return DType::I32; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }

/// Self-describing binary blob. On disk: one UTF-8 header line
///
///   GHOSTC 1 name=<name> dtype=<f64|f32|i64|i32|u8> dims=<d0,d1,...> seed=<u64> crc32=<hex8> [<key>=<value> ...]
///
/// followed by '\n' and the little-endian payload (product(dims) elements).
/// Attribute keys and values must not contain whitespace.
struct Container {
  std::string name;
  DType dtype = DType::F64;
  std::vector<std::size_t> dims;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> attrs;
  std::vector<std::byte> payload;

  std::size_t element_count() const;

  template <typename T>
  static Container from(std::string name, std::vector<std::size_t> dims, std::span<const T> values,
                        std::uint64_t seed = 0) {
    Container c;
    c.name = std::move(name);
    c.dtype = dtype_of<T>();
    c.dims = std::move(dims);
    c.seed = seed;
    c.payload.resize(values.size_bytes());
    if (!values.empty()) std::memcpy(c.payload.data(), values.data(), values.size_bytes());
    if (c.element_count() != values.size()) {
      throw Error(ErrorCode::HeaderMismatch, "payload length does not match dims for " + c.name);
    }
    return c;
  }

  template <typename T>
  std::vector<T> values() const {
    if (dtype != dtype_of<T>()) throw Error(ErrorCode::HeaderMismatch, "dtype mismatch reading " + name);
    std::vector<T> out(payload.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), payload.data(), payload.size());
    return out;
  }

  const std::string& attr(const std::string& key) const;
  std::string attr_or(const std::string& key, std::string fallback) const;
};

std::uint32_t crc32_of(std::span<const std::byte> bytes);

void write_container(std::ostream& os, const Container& c);
Container read_container(std::istream& is);

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

}  // namespace ghost::data
