#include "ghost/data/container.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <cstdio>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

namespace ghost::data {

namespace {

constexpr std::string_view kMagic = "GHOSTC";
constexpr int kVersion = 1;

bool has_space(std::string_view s) {
  return std::ranges::any_of(s, [](char ch) { return ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r'; });
}

void swap_elements(std::vector<std::byte>& bytes, std::size_t width) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + width <= bytes.size(); i += width) {
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   bytes.begin() + static_cast<std::ptrdiff_t>(i + width));
    }
  } else {
    (void)bytes;
    (void)width;
  }
}

std::uint64_t parse_u64(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw Error(ErrorCode::HeaderMismatch, "bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F64: return 8;
    case DType::F32: return 4;
    case DType::I64: return 8;
    case DType::I32: return 4;
    case DType::U8: return 1;
  }
  return 0;
}

std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::F64: return "f64";
    case DType::F32: return "f32";
    case DType::I64: return "i64";
    case DType::I32: return "i32";
    case DType::U8: return "u8";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  for (DType t : {DType::F64, DType::F32, DType::I64, DType::I32, DType::U8}) {
    if (dtype_name(t) == name) return t;
  }
  throw Error(ErrorCode::HeaderMismatch, "unknown dtype '" + std::string(name) + "'");
}

std::size_t Container::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const std::string& Container::attr(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw Error(ErrorCode::HeaderMismatch, name + " has no attribute " + key);
  return it->second;
}

std::string Container::attr_or(const std::string& key, std::string fallback) const {
  auto it = attrs.find(key);
  return it == attrs.end() ? std::move(fallback) : it->second;
}

std::uint32_t crc32_of(std::span<const std::byte> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_container(std::ostream& os, const Container& c) {
  if (c.name.empty() || has_space(c.name)) throw Error(ErrorCode::InvalidArgument, "container name must be non-empty without whitespace");
  if (c.payload.size() != c.element_count() * dtype_size(c.dtype)) {
    throw Error(ErrorCode::HeaderMismatch, "payload length does not match dims for " + c.name);
  }
  std::vector<std::byte> le = c.payload;
  swap_elements(le, dtype_size(c.dtype));

  std::ostringstream header;
  header << kMagic << ' ' << kVersion << " name=" << c.name << " dtype=" << dtype_name(c.dtype) << " dims=";
  for (std::size_t i = 0; i < c.dims.size(); ++i) header << (i ? "," : "") << c.dims[i];
  char crc[9];
  std::snprintf(crc, sizeof crc, "%08x", crc32_of(le));
  header << " seed=" << c.seed << " crc32=" << crc;
  for (const auto& [k, v] : c.attrs) {
    if (k.empty() || has_space(k) || has_space(v) || k.find('=') != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "attribute '" + k + "' contains whitespace or '='");
    }
    header << ' ' << k << '=' << v;
  }
  header << '\n';
  os << header.str();
  os.write(reinterpret_cast<const char*>(le.data()), static_cast<std::streamsize>(le.size()));
  if (!os) throw Error(ErrorCode::Io, "write failed for " + c.name);
}

Container read_container(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::HeaderMismatch, "missing container header");
  std::istringstream fields(line);
  std::string magic;
  int version = 0;
  fields >> magic >> version;
  if (magic != kMagic) throw Error(ErrorCode::HeaderMismatch, "not a container (magic '" + magic + "')");
  if (version != kVersion) throw Error(ErrorCode::HeaderMismatch, "unsupported container version " + std::to_string(version));

  Container c;
  std::optional<std::uint32_t> crc;
  bool have_dtype = false, have_dims = false;
  std::string tok;
  while (fields >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::HeaderMismatch, "malformed header field '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "name") {
      c.name = val;
    } else if (key == "dtype") {
      c.dtype = parse_dtype(val);
      have_dtype = true;
    } else if (key == "dims") {
      have_dims = true;
      std::string_view rest = val;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        c.dims.push_back(parse_u64(rest.substr(0, comma), "dim"));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
    } else if (key == "seed") {
      c.seed = parse_u64(val, "seed");
    } else if (key == "crc32") {
      std::uint32_t v = 0;
      auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v, 16);
      if (ec != std::errc{} || val.size() != 8) throw Error(ErrorCode::HeaderMismatch, "bad crc32 field");
      crc = v;
    } else {
      c.attrs[key] = val;
    }
  }
  if (c.name.empty() || !have_dtype || !have_dims || !crc) {
    throw Error(ErrorCode::HeaderMismatch, "container header lacks required fields");
  }

  c.payload.resize(c.element_count() * dtype_size(c.dtype));
  is.read(reinterpret_cast<char*>(c.payload.data()), static_cast<std::streamsize>(c.payload.size()));
  if (static_cast<std::size_t>(is.gcount()) != c.payload.size()) {
    throw Error(ErrorCode::TruncatedPayload, "payload of " + c.name + " is truncated");
  }
  if (crc32_of(c.payload) != *crc) throw Error(ErrorCode::ChecksumMismatch, "CRC32 mismatch in " + c.name);
  swap_elements(c.payload, dtype_size(c.dtype));
  return c;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_container(os, c);
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return read_container(is);
}

}  // namespace ghost::data
