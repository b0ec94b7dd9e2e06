#include <doctest.h>

#include <filesystem>

#include "superlex/codec.hpp"
#include "superlex/errors.hpp"

using namespace superlex;

TEST_CASE("base64: RFC 4648 test vectors") {
  auto enc = [](std::string s) {
    return codec::base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");
  const auto back = codec::base64_decode("Zm9vYmE=");
  CHECK(std::string(back.begin(), back.end()) == "fooba");
}

TEST_CASE("float packing round trips") {
  const std::vector<double> v{0.0, -1.5, 3.25, 1e-3, 12345.678};
  CHECK(codec::unpack_f64(codec::pack_f64(v), v.size()) == v);
  const auto f = codec::unpack_f32(codec::pack_f32(v), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(f[i] == static_cast<double>(static_cast<float>(v[i])));
  CHECK_THROWS(codec::unpack_f64(codec::pack_f64(v), v.size() + 1));
}

TEST_CASE("fnv1a64 known values") {
  CHECK(codec::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(codec::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(codec::hash_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("fmt9 prints nine significant digits") {
  CHECK(codec::fmt9(1.0 / 3.0) == "0.333333333");
  CHECK(codec::fmt9(0.5) == "0.5");
  CHECK(codec::fmt9(123456789012.0) == "1.23456789e+11");
}

TEST_CASE("file io reports the path") {
  const auto dir = std::filesystem::temp_directory_path() / "superlex_codec_test";
  std::filesystem::create_directories(dir);
  codec::write_file(dir / "x.txt", "hello");
  CHECK(codec::read_file(dir / "x.txt") == "hello");
  try {
    codec::read_file(dir / "missing.txt");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing.txt") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
