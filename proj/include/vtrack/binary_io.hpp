#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>

namespace vtrack::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with host byte order, which must be little-endian");

template <typename T>
void put_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

template <typename T>
void put_le_array(std::ostream& out, std::span<const T> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
void get_le_array(std::istream& in, std::span<T> values) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

}  // namespace vtrack::io
