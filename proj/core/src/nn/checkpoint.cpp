#include "pairint/nn/checkpoint.hpp"

#include <zlib.h>

#include "pairint/binary_io.hpp"

namespace pairint::nn {

namespace {

constexpr std::string_view kMagic = "PIRN1";

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

const Tensor<float>& ParamStore::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw Error(ErrorCode::CorruptFile, "checkpoint has no entry '" + name + "'");
  return it->second;
}

void ParamStore::put(const std::string& name, Tensor<float> t) {
  if (Tensor<float>::count(t.shape) != t.data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor '" + name + "' data does not match its shape");
  }
  entries[name] = std::move(t);
}

void ParamStore::set_scalar(const std::string& name, double v) {
  put("buffer." + name, Tensor<float>({1}, static_cast<float>(v)));
}

double ParamStore::scalar(const std::string& name) const {
  const auto& t = at("buffer." + name);
  if (t.size() != 1) throw Error(ErrorCode::CorruptFile, "metadata entry '" + name + "' is not a scalar");
  return t.data[0];
}

// Layout: magic, u16 version, u32 count, entries, u32 CRC32 of everything
// after the magic.
std::string encode_checkpoint(const ParamStore& store) {
  std::string body;
  binio::put<std::uint16_t>(body, kCheckpointVersion);
  binio::put<std::uint32_t>(body, static_cast<std::uint32_t>(store.entries.size()));
  for (const auto& [name, t] : store.entries) {
    binio::put<std::uint32_t>(body, static_cast<std::uint32_t>(name.size()));
    body += name;
    binio::put<std::uint8_t>(body, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) binio::put<std::uint32_t>(body, static_cast<std::uint32_t>(d));
    for (float v : t.data) binio::put_f32(body, v);
  }
  std::string out(kMagic);
  out += body;
  binio::put<std::uint32_t>(out, crc_of(body));
  return out;
}

ParamStore decode_checkpoint(std::span<const char> bytes) {
  binio::Reader r(bytes, "checkpoint");
  if (r.get_string(kMagic.size()) != kMagic) throw Error(ErrorCode::CorruptFile, "not a PIRN1 checkpoint");
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < kMagic.size() + 2 + 4 + 4) throw Error(ErrorCode::CorruptFile, "checkpoint is truncated");
  const std::string_view body(bytes.data() + kMagic.size(), bytes.size() - kMagic.size() - 4);
  binio::Reader tail(bytes.subspan(bytes.size() - 4), "checkpoint");
  if (crc_of(body) != tail.get<std::uint32_t>()) throw Error(ErrorCode::CorruptFile, "checkpoint checksum mismatch");

  binio::Reader br(std::span<const char>(body.data(), body.size()), "checkpoint");
  br.get<std::uint16_t>();
  const auto count = br.get<std::uint32_t>();
  ParamStore store;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = br.get<std::uint32_t>();
    std::string name = br.get_string(len);
    const auto rank = br.get<std::uint8_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = br.get<std::uint32_t>();
    const std::size_t n = Tensor<float>::count(shape);
    if (n > br.remaining() / 4) throw Error(ErrorCode::CorruptFile, "checkpoint entry '" + name + "' is truncated");
    Tensor<float> t(shape);
    for (auto& v : t.data) v = br.get_f32();
    if (store.contains(name)) throw Error(ErrorCode::CorruptFile, "duplicate checkpoint entry '" + name + "'");
    store.entries.emplace(std::move(name), std::move(t));
  }
  if (br.remaining() != 0) throw Error(ErrorCode::CorruptFile, "trailing bytes in checkpoint");
  return store;
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_checkpoint(store));
}

ParamStore load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace pairint::nn
