#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <zlib.h>

#include <fstream>
#include <sstream>

#include "ghost/data/container.hpp"
#include "ghost/data/idx.hpp"
#include "ghost/error.hpp"
#include "support.hpp"

using namespace ghost;
using data::Image;

namespace {

void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

std::filesystem::path write_raw(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
  return path;
}

std::string idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                       const std::vector<std::uint8_t>& payload) {
  std::string s;
  put_be32(s, magic);
  put_be32(s, n);
  put_be32(s, rows);
  put_be32(s, cols);
  s.append(payload.begin(), payload.end());
  return s;
}

template <typename E>
ErrorCode code_of(E&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

// Decompresses a gzip file with plain zlib calls, independent of the loader.
std::vector<std::uint8_t> gunzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  REQUIRE(f != nullptr);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 15];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  gzclose(f);
  return out;
}

}  // namespace

TEST_CASE("image rejects out-of-range pixels") {
  CHECK_THROWS_AS(Image(2, 1, std::vector<double>{0.0, 1.5}), Error);
  CHECK_THROWS_AS(Image(2, 2, std::vector<double>{0.0}), Error);
  CHECK(Image(2, 1, std::vector<double>{0.0, 1.0}).is_binary());
  CHECK_FALSE(Image(2, 1, std::vector<double>{0.0, 0.5}).is_binary());
}

TEST_CASE("sampling config rounding") {
  CHECK(data::SamplingConfig(256, 0.15).n_patterns() == 38);
  CHECK(data::SamplingConfig(256, 0.05).n_patterns() == 13);
  CHECK(data::SamplingConfig(1024, 0.05).n_patterns() == 51);
  // Ceil rounding reproduces the published counts.
  using data::PatternRounding;
  CHECK(data::SamplingConfig(1024, 0.05, PatternRounding::Ceil).n_patterns() == 52);
  CHECK(data::SamplingConfig(1024, 0.15, PatternRounding::Ceil).n_patterns() == 154);
  CHECK(data::SamplingConfig(1024, 0.02, PatternRounding::Ceil).n_patterns() == 21);
  CHECK(data::SamplingConfig(1024, 0.03, PatternRounding::Ceil).n_patterns() == 31);
  CHECK(data::SamplingConfig(1024, 0.5).side() == 32);
  CHECK_THROWS_AS(data::SamplingConfig(1024, 0.0), Error);
  CHECK_THROWS_AS(data::SamplingConfig(1024, 1.5), Error);
  CHECK_THROWS_AS(data::SamplingConfig(100, 0.001), Error);
  CHECK(data::SamplingConfig::with_patterns(64, 16).sampling_ratio() == doctest::Approx(0.25));
}

TEST_CASE("load_idx: one all-zero 28x28 image") {
  auto dir = testing::scratch_dir("idx-zero");
  auto path = write_raw(dir / "one.idx", idx_images(0x803, 1, 28, 28, std::vector<std::uint8_t>(784, 0)));
  auto set = data::load_idx(path);
  REQUIRE(set.size() == 1);
  CHECK(set.images[0].width() == 28);
  CHECK(set.images[0].height() == 28);
  CHECK(set.images[0] == Image(28, 28, 0.0));
  CHECK_FALSE(set.labels.has_value());
}

TEST_CASE("load_idx errors") {
  auto dir = testing::scratch_dir("idx-errors");
  auto bad = write_raw(dir / "bad.idx", idx_images(0x802, 1, 2, 2, std::vector<std::uint8_t>(4, 0)));
  CHECK(code_of([&] { data::load_idx(bad); }) == ErrorCode::BadMagic);

  auto truncated = write_raw(dir / "short.idx", idx_images(0x803, 2, 2, 2, std::vector<std::uint8_t>(5, 0)));
  CHECK(code_of([&] { data::load_idx(truncated); }) == ErrorCode::TruncatedPayload);

  auto images = write_raw(dir / "img.idx", idx_images(0x803, 2, 2, 2, std::vector<std::uint8_t>(8, 0)));
  std::string labels;
  put_be32(labels, 0x801);
  put_be32(labels, 3);
  labels += std::string("\x01\x02\x03", 3);
  auto lab = write_raw(dir / "lab.idx", labels);
  CHECK(code_of([&] { data::load_idx(images, lab); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("load_idx maps byte k to exactly k/255") {
  auto dir = testing::scratch_dir("idx-values");
  std::vector<std::uint8_t> bytes(256);
  for (int k = 0; k < 256; ++k) bytes[k] = static_cast<std::uint8_t>(k);
  auto path = write_raw(dir / "ramp.idx", idx_images(0x803, 1, 16, 16, bytes));
  auto set = data::load_idx(path);
  for (int k = 0; k < 256; ++k) CHECK(set.images[0][k] == static_cast<double>(k) / 255.0);
}

TEST_CASE("bundled MNIST subset header matches an independent byte read") {
  const auto images = testing::data_dir() / "mnist5k-train-images-idx3-ubyte.gz";
  const auto labels = testing::data_dir() / "mnist5k-train-labels-idx1-ubyte.gz";
  const auto raw = gunzip(images);
  auto be = [&](std::size_t off) {
    return (std::uint32_t(raw[off]) << 24) | (std::uint32_t(raw[off + 1]) << 16) | (std::uint32_t(raw[off + 2]) << 8) |
           std::uint32_t(raw[off + 3]);
  };
  REQUIRE(raw.size() >= 16);
  CHECK(be(0) == 0x803);
  const std::uint32_t n = be(4), rows = be(8), cols = be(12);
  CHECK(raw.size() == 16 + std::size_t(n) * rows * cols);

  auto set = data::load_idx(images, labels);
  CHECK(set.size() == n);
  CHECK(set.size() == 4000);
  CHECK(set.images[0].height() == rows);
  CHECK(set.images[0].width() == cols);
  CHECK(set.images[0].width() == 28);
  REQUIRE(set.labels);
  CHECK(set.labels->size() == n);
  // Spot check pixel values of the last image against the raw bytes.
  const std::size_t base = 16 + std::size_t(n - 1) * rows * cols;
  for (std::size_t i = 0; i < std::size_t(rows) * cols; i += 37) {
    CHECK(set.images.back()[i] == raw[base + i] / 255.0);
  }
}

TEST_CASE("preprocess examples") {
  data::ImageSet zeros{{Image(28, 28, 0.0)}, std::nullopt, data::Split::Train};
  CHECK(data::preprocess(zeros, 32).images[0] == Image(32, 32, 0.0));
  data::ImageSet ones{{Image(28, 28, 1.0)}, std::nullopt, data::Split::Train};
  CHECK(data::preprocess(ones, 32).images[0] == Image(32, 32, 1.0));
  data::ImageSet grey{{Image(28, 28, 0.4)}, std::nullopt, data::Split::Train};
  CHECK(data::preprocess(grey, 32, 0.5).images[0] == Image(32, 32, 0.0));
  CHECK(data::preprocess(grey, 32, 0.3).images[0] == Image(32, 32, 1.0));

  CHECK(code_of([] { data::preprocess(data::ImageSet{}, 32); }) == ErrorCode::EmptySet);
  CHECK(code_of([&] { data::preprocess(zeros, 32, 1.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { data::preprocess(zeros, 32, 0.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("preprocess is idempotent on binary images at target size") {
  std::mt19937_64 rng(11);
  data::ImageSet set;
  for (int i = 0; i < 20; ++i) set.images.push_back(testing::random_binary(32, 32, rng));
  set.labels = std::vector<int>(20, 3);
  const auto once = data::preprocess(set, 32);
  CHECK(once.images == set.images);
  const auto twice = data::preprocess(once, 32);
  CHECK(twice.images == once.images);
  CHECK(twice.labels == set.labels);
}

TEST_CASE("bilinear resize keeps constants and the corner-centred ramp") {
  const Image c(7, 5, 0.25);
  const Image r = data::resize_bilinear(c, 13, 9);
  for (double v : r.pixels()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  // 2 -> 4 along x: source coordinates -0.25, 0.25, 0.75, 1.25, clamped at the edges
  const Image two(2, 1, std::vector<double>{0.0, 1.0});
  const Image four = data::resize_bilinear(two, 4, 1);
  CHECK(four[0] == doctest::Approx(0.0));
  CHECK(four[1] == doctest::Approx(0.25));
  CHECK(four[2] == doctest::Approx(0.75));
  CHECK(four[3] == doctest::Approx(1.0));
}

TEST_CASE("image set validation") {
  data::ImageSet s{{Image(2, 2), Image(3, 2)}, std::nullopt, data::Split::Train};
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::DimensionMismatch);
  s.images[1] = Image(2, 2);
  s.labels = std::vector<int>{1};
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::DimensionMismatch);
  s.labels = std::vector<int>{1, 2};
  s.validate();
  CHECK(s.head(1).size() == 1);
  CHECK(s.head(1).labels->size() == 1);
  CHECK(s.head(99).size() == 2);
}

TEST_CASE("container examples") {
  auto dir = testing::scratch_dir("container");
  SUBCASE("empty payload") {
    auto c = data::Container::from<double>("empty", {0}, std::span<const double>{});
    data::save_container(dir / "e.bin", c);
    auto back = data::load_container(dir / "e.bin");
    CHECK(back.dims == std::vector<std::size_t>{0});
    CHECK(back.payload.empty());
    CHECK(back.name == "empty");
  }
  SUBCASE("2x2 float payload") {
    const std::vector<float> v{1, 2, 3, 4};
    auto c = data::Container::from<float>("m", {2, 2}, std::span<const float>(v), 42);
    c.attrs["kind"] = "test";
    data::save_container(dir / "m.bin", c);
    auto back = data::load_container(dir / "m.bin");
    CHECK(back.values<float>() == v);
    CHECK(back.seed == 42);
    CHECK(back.attr("kind") == "test");
    CHECK(back.dtype == data::DType::F32);
  }
  SUBCASE("corrupted payload byte") {
    const std::vector<double> v{1.0, 2.0};
    data::save_container(dir / "c.bin", data::Container::from<double>("c", {2}, std::span<const double>(v)));
    std::fstream f(dir / "c.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-1, std::ios::end);
    char ch;
    f.get(ch);
    f.seekp(-1, std::ios::end);
    f.put(static_cast<char>(ch ^ 0x5A));
    f.close();
    CHECK(code_of([&] { data::load_container(dir / "c.bin"); }) == ErrorCode::ChecksumMismatch);
  }
  SUBCASE("header mismatches") {
    const std::vector<double> v{1.0, 2.0, 3.0};
    CHECK(code_of([&] { data::Container::from<double>("x", {2, 2}, std::span<const double>(v)); }) ==
          ErrorCode::HeaderMismatch);
    std::istringstream garbage("NOTAHEADER\n");
    CHECK(code_of([&] { data::read_container(garbage); }) == ErrorCode::HeaderMismatch);
    auto c = data::Container::from<double>("x", {3}, std::span<const double>(v));
    CHECK(code_of([&] { c.values<float>(); }) == ErrorCode::HeaderMismatch);
  }
  SUBCASE("truncated payload") {
    const std::vector<double> v{1.0, 2.0, 3.0};
    std::ostringstream os;
    data::write_container(os, data::Container::from<double>("t", {3}, std::span<const double>(v)));
    std::string s = os.str();
    s.resize(s.size() - 4);
    std::istringstream is(s);
    CHECK(code_of([&] { data::read_container(is); }) == ErrorCode::TruncatedPayload);
  }
}

TEST_CASE("crc32 matches the standard check value") {
  const std::string s = "123456789";
  CHECK(data::crc32_of(std::as_bytes(std::span(s.data(), s.size()))) == 0xCBF43926u);
}

template <typename T>
void round_trip_random(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rank_dist(1, 3), dim_dist(0, 5);
  std::vector<std::size_t> dims(static_cast<std::size_t>(rank_dist(rng)));
  std::size_t n = 1;
  for (auto& d : dims) n *= (d = static_cast<std::size_t>(dim_dist(rng)));
  std::vector<T> v(n);
  for (auto& x : v) {
    std::uint64_t bits = rng();
    std::memcpy(&x, &bits, sizeof(T));  // any bit pattern, NaNs included
  }
  auto c = data::Container::from<T>("p", dims, std::span<const T>(v), rng());
  std::stringstream ss;
  data::write_container(ss, c);
  auto back = data::read_container(ss);
  CHECK(back.dims == dims);
  CHECK(back.seed == c.seed);
  CHECK(back.payload == c.payload);
}

TEST_CASE("container round trip is bit exact for random payloads") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    round_trip_random<double>(rng);
    round_trip_random<float>(rng);
    round_trip_random<std::int64_t>(rng);
    round_trip_random<std::int32_t>(rng);
    round_trip_random<std::uint8_t>(rng);
  }
}

TEST_CASE("pgm round trip for binary images") {
  auto dir = testing::scratch_dir("pgm");
  std::mt19937_64 rng(3);
  const Image img = testing::random_binary(9, 5, rng);
  data::write_pgm(dir / "x.pgm", img);
  CHECK(data::read_pgm(dir / "x.pgm") == img);
  std::ifstream f(dir / "x.pgm", std::ios::binary);
  std::string magic;
  f >> magic;
  CHECK(magic == "P5");
}

TEST_CASE("montage layout") {
  const Image a(2, 2, 1.0), b(2, 2, 0.0);
  const Image m = data::montage({{a, b}, {b, a}}, 1, 0.5);
  CHECK(m.width() == 7);
  CHECK(m.height() == 7);
  CHECK(m(0, 0) == 0.5);
  CHECK(m(1, 1) == 1.0);
  CHECK(m(1, 3) == 0.5);
  CHECK(m(1, 4) == 0.0);
  CHECK(m(5, 5) == 1.0);
}
