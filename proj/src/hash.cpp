#include "vtrack/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace vtrack {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 1 << 16> buf;
  std::uint64_t h = fnv1a({});
  while (in) {
    in.read(buf.data(), buf.size());
    h = fnv1a({buf.data(), static_cast<std::size_t>(in.gcount())}, h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char s[17];
  std::snprintf(s, sizeof(s), "%016llx", static_cast<unsigned long long>(v));
  return s;
}

}  // namespace vtrack
