#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace vtrack {

/// 64-bit FNV-1a, used to fingerprint configs and inputs in run manifests.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace vtrack
