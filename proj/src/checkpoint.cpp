#include "vtrack/binary_io.hpp"
#include "vtrack/mesh_net.hpp"

#include <cstring>
#include <fstream>

namespace vtrack {

namespace {
constexpr char kMagic[5] = {'V', 'T', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto& p = checkpoint.params;
  out.write(kMagic, sizeof(kMagic));
  io::put_le<std::uint32_t>(out, kVersion);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.config.input_width));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.config.hidden_width));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.config.depth));
  io::put_le<std::uint32_t>(out, p.config.gating ? 1u : 0u);
  io::put_le<double>(out, p.config.leaky_slope);
  io::put_le<std::uint64_t>(out, checkpoint.step);
  const auto tensors = p.tensors();
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  std::vector<float> buffer;
  for (const auto* t : tensors) {
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->value.rows()));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->value.cols()));
    buffer.resize(static_cast<std::size_t>(t->value.size()));
    for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = static_cast<float>(t->value.data()[i]);
    io::put_le_array<float>(out, buffer);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path.string() + ": not a network checkpoint");
  }
  const auto version = io::get_le<std::uint32_t>(in);
  if (version != kVersion) throw UnsupportedError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  NetConfig cfg;
  cfg.input_width = static_cast<int>(io::get_le<std::uint32_t>(in));
  cfg.hidden_width = static_cast<int>(io::get_le<std::uint32_t>(in));
  cfg.depth = static_cast<int>(io::get_le<std::uint32_t>(in));
  cfg.gating = io::get_le<std::uint32_t>(in) != 0;
  cfg.leaky_slope = io::get_le<double>(in);
  Checkpoint ck;
  ck.step = io::get_le<std::uint64_t>(in);
  if (!in) throw std::runtime_error(path.string() + ": truncated checkpoint header");
  ck.params = EstimatorParams::zeros(cfg);
  const auto tensors = ck.params.tensors();
  const auto count = io::get_le<std::uint32_t>(in);
  if (count != tensors.size()) throw std::runtime_error(path.string() + ": tensor count does not match the architecture");
  std::vector<float> buffer;
  for (auto* t : tensors) {
    const auto rows = io::get_le<std::uint32_t>(in);
    const auto cols = io::get_le<std::uint32_t>(in);
    if (rows != t->value.rows() || cols != t->value.cols()) {
      throw std::runtime_error(path.string() + ": tensor shape does not match the architecture");
    }
    buffer.resize(static_cast<std::size_t>(rows) * cols);
    io::get_le_array<float>(in, buffer);
    for (std::size_t i = 0; i < buffer.size(); ++i) t->value.data()[i] = buffer[i];
  }
  if (!in) throw std::runtime_error(path.string() + ": truncated checkpoint");
  return ck;
}

}  // namespace vtrack
