#include "hornn/fsq.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "hornn/errors.hpp"

namespace hornn {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'S', 'Q', '1'};
// Guards against allocating absurd buffers from a corrupt header.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(std::string("FSQ1: truncated while reading ") + what);
  }
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(std::string("FSQ1: ") + what + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, checked_u32(s.size(), "string length"));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const char* what) {
  const std::uint32_t len = get_u32(in, what);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw FormatError(std::string("FSQ1: truncated ") + what);
  return s;
}

}  // namespace

void write_fsq(std::ostream& out, const SequenceBatch& batch) {
  batch.validate(true);
  out.write(kMagic.data(), 4);
  put_u32(out, checked_u32(batch.length(), "T"));
  put_u32(out, checked_u32(batch.dim(), "D"));
  put_u32(out, checked_u32(batch.num_classes, "C"));
  for (double v : batch.frames.span()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (std::int32_t y : batch.labels) put_u32(out, static_cast<std::uint32_t>(y));
  put_string(out, batch.utterance_id);
  put_string(out, batch.segment_id);
  if (!out) throw std::runtime_error("FSQ1: write failed");
}

SequenceBatch read_fsq(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) throw FormatError("FSQ1: bad magic");
  const std::uint32_t T = get_u32(in, "T");
  const std::uint32_t D = get_u32(in, "D");
  const std::uint32_t C = get_u32(in, "C");
  if (std::uint64_t{T} * D > kMaxElements) throw FormatError("FSQ1: frame block too large");
  SequenceBatch b;
  b.frames = Matrix(T, D);
  for (double& v : b.frames.span()) v = std::bit_cast<float>(get_u32(in, "frames"));
  b.labels.resize(T);
  for (std::int32_t& y : b.labels) y = static_cast<std::int32_t>(get_u32(in, "labels"));
  b.num_classes = C;
  b.utterance_id = get_string(in, "utterance id");
  b.segment_id = get_string(in, "segment id");
  try {
    b.validate(true);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("FSQ1: ") + e.what());
  }
  return b;
}

void write_fsq_file(const std::filesystem::path& path, const SequenceBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_fsq(out, batch);
}

SequenceBatch read_fsq_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open sequence file " + path.string());
  try {
    return read_fsq(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                    std::span<const SequenceBatch> batches) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.txt";
  std::ofstream list(manifest);
  if (!list) throw std::runtime_error("cannot write " + manifest.string());
  for (std::size_t i = 0; i < batches.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.fsq", i);
    write_fsq_file(dir / name, batches[i]);
    list << name << '\n';
  }
  return manifest;
}

std::vector<SequenceBatch> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream list(manifest);
  if (!list) throw ConfigError("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<SequenceBatch> out;
  std::string line;
  while (std::getline(list, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(read_fsq_file(base / line));
  }
  if (out.empty()) throw ConfigError("manifest " + manifest.string() + " lists no sequences");
  return out;
}

}  // namespace hornn
