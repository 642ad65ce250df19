#include "fednewsrec/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fednewsrec/dataset.h"
#include "fednewsrec/error.h"

namespace fednewsrec {
namespace {

constexpr char kMagic[8] = {'F', 'N', 'R', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw CheckpointError("checkpoint is truncated");
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

std::string get_string(std::istream& in, std::uint32_t max_len) {
  const auto len = get_le<std::uint32_t>(in);
  if (len > max_len) throw CheckpointError("checkpoint string field too long");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw CheckpointError("checkpoint is truncated");
  return s;
}

}  // namespace

void check_layout(const ParamLayout& expected, const ParamLayout& actual) {
  if (expected.size() != actual.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(actual.size()) +
                          " matrices, model expects " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != actual[i].name || expected[i].shape != actual[i].shape) {
      throw CheckpointError("checkpoint layout mismatch at entry " + std::to_string(i) + ": '" +
                            actual[i].name + "' " + shape_string(actual[i].shape) +
                            ", model expects '" + expected[i].name + "' " +
                            shape_string(expected[i].shape));
    }
  }
}

void write_checkpoint(std::ostream& out, const HyperParams& hp, const ModelParams& params) {
  std::ostringstream settings;
  for (const auto& [k, v] : to_settings(hp)) settings << k << " = " << v << '\n';
  const std::string text = settings.str();

  out.write(kMagic, sizeof(kMagic));
  put_le(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const ParamLayout& layout = params.layout();
  put_le(out, static_cast<std::uint32_t>(layout.size()));
  for (const auto& spec : layout) {
    put_le(out, static_cast<std::uint32_t>(spec.name.size()));
    out.write(spec.name.data(), static_cast<std::streamsize>(spec.name.size()));
    put_le(out, static_cast<std::uint32_t>(spec.shape.size()));
    for (std::size_t d : spec.shape) put_le(out, static_cast<std::uint64_t>(d));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    for (double v : params.at(i).values()) put_le(out, v);
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const HyperParams& hp,
                     const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, hp, params);
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  std::istringstream settings_text(get_string(in, 1u << 20));
  HyperParams hp;
  try {
    apply_settings(parse_settings(settings_text), hp);
    hp.validate();
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint hyperparameters invalid: ") + e.what());
  }

  const auto count = get_le<std::uint32_t>(in);
  if (count > 4096) throw CheckpointError("checkpoint manifest too large");
  ParamLayout manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamSpec spec;
    spec.name = get_string(in, 1024);
    const auto rank = get_le<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw CheckpointError("bad rank for '" + spec.name + "'");
    for (std::uint32_t r = 0; r < rank; ++r) {
      spec.shape.push_back(static_cast<std::size_t>(get_le<std::uint64_t>(in)));
    }
    manifest.push_back(std::move(spec));
  }

  ModelParams params(hp);
  check_layout(params.layout(), manifest);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    for (double& v : params.at(i).values()) v = get_le<double>(in);
  }
  if (!params.all_finite()) throw CheckpointError("checkpoint contains non-finite values");
  return {hp, std::move(params)};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace fednewsrec
