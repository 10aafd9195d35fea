#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "plugtag/io.hpp"

using namespace plugtag;

TEST_CASE("crc32 known vectors") {
  // Standard check value for the reflected IEEE polynomial.
  CHECK(crc32("123456789", 9) == 0xCBF43926u);
  CHECK(crc32("", 0) == 0u);
  CHECK(crc32("a", 1) == 0xE8B7BE43u);
}

TEST_CASE("fnv1a64 known vectors") {
  Fnv1a64 h;
  CHECK(h.digest() == 0xcbf29ce484222325ULL);  // offset basis
  h.update("a", 1);
  CHECK(h.digest() == 0xaf63dc4c8601ec8cULL);
  Fnv1a64 h2;
  h2.update("foobar", 6);
  CHECK(h2.digest() == 0x85944171f73967e8ULL);
}

TEST_CASE("pod round trip is little-endian") {
  std::ostringstream os;
  write_pod<uint32_t>(os, 0x01020304u);
  const std::string s = os.str();
  REQUIRE(s.size() == 4);
  CHECK(static_cast<unsigned char>(s[0]) == 0x04);
  CHECK(static_cast<unsigned char>(s[3]) == 0x01);
  std::istringstream is(s);
  CHECK(read_pod<uint32_t>(is) == 0x01020304u);
}

TEST_CASE("string round trip") {
  std::ostringstream os;
  write_string(os, "hello");
  write_string(os, "");
  std::istringstream is(os.str());
  CHECK(read_string(is) == "hello");
  CHECK(read_string(is) == "");
}

TEST_CASE("truncated read reports Truncated") {
  std::istringstream is("\x02\x00");
  CHECK_THROWS_AS(read_pod<uint32_t>(is), FormatError);
  try {
    std::istringstream is2("\x02");
    read_pod<uint32_t>(is2);
  } catch (const FormatError& e) {
    CHECK(e.fault() == FormatFault::Truncated);
  }
}

TEST_CASE("write_file_atomic writes and overwrites") {
  const std::string path = "io_test_atomic.tmp";
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  std::ifstream is(path);
  std::string got;
  std::getline(is, got);
  CHECK(got == "second");
  std::remove(path.c_str());
}
