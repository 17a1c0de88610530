#include "bmssl/checkpoint.hpp"

#include <limits>

#include "bmssl/byte_io.hpp"
#include "bmssl/error.hpp"

namespace bmssl {

namespace {

constexpr std::string_view kMagic = "BMSL";
constexpr std::string_view kStepKey = "meta_step=";

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& checkpoint) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(checkpoint.params.size()));
  for (const auto& [name, t] : checkpoint.params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ValidationError("tensor name too long: " + name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(d);
    for (double v : t.data()) w.put<double>(v);
  }
  const std::string text = checkpoint.config.serialize() + std::string(kStepKey) +
                           std::to_string(checkpoint.meta_step) + "\n";
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text);
  return w.bytes();
}

Checkpoint decode_checkpoint(std::vector<unsigned char> bytes, const std::string& context) {
  ByteReader r(std::move(bytes), context);
  if (r.get_bytes(kMagic.size()) != kMagic) throw IoError(context + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError(context + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint cp;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_bytes(r.get<std::uint16_t>());
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    const std::size_t numel = shape_numel(shape);
    if (numel > r.remaining() / sizeof(double)) throw IoError(context + ": tensor '" + name + "' overruns the file");
    std::vector<double> data(numel);
    for (auto& v : data) v = r.get<double>();
    try {
      cp.params.insert(std::move(name), Tensor(std::move(shape), std::move(data)));
    } catch (const ValidationError& e) {
      throw IoError(context + ": corrupt tensor: " + e.what());
    }
  }
  std::string text = r.get_bytes(r.get<std::uint32_t>());
  if (!r.at_end()) throw IoError(context + ": trailing bytes after config");
  const auto pos = text.rfind(kStepKey);
  if (pos == std::string::npos) throw IoError(context + ": config lacks a meta_step entry");
  try {
    cp.meta_step = std::stoull(text.substr(pos + kStepKey.size()));
  } catch (const std::exception&) {
    throw IoError(context + ": malformed meta_step entry");
  }
  cp.config = RunConfig::parse(std::string_view(text).substr(0, pos));
  return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path), path); }

}  // namespace bmssl
