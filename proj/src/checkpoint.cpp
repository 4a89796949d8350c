#include "cxr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace cxr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using Bytes = std::vector<unsigned char>;

template <typename U>
void put(Bytes& out, U value) {
  unsigned char raw[sizeof(U)];
  std::memcpy(raw, &value, sizeof(U));
  out.insert(out.end(), raw, raw + sizeof(U));
}

std::uint32_t crc_of(const unsigned char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  while (size > 0) {
    const auto piece = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, piece);
    data += piece;
    size -= piece;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  Reader(const Bytes& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename U>
  U take(const char* what) {
    U value;
    std::memcpy(&value, need(sizeof(U), what), sizeof(U));
    return value;
  }

  const unsigned char* need(std::size_t count, const char* what) {
    if (end_ - pos_ < count) {
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
    const unsigned char* at = bytes_.data() + pos_;
    pos_ += count;
    return at;
  }

  std::size_t position() const { return pos_; }

 private:
  const Bytes& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

template <typename T>
nlohmann::json make_header(const ModelGraph<T>& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& spec : model.layers()) layers.push_back(spec);
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& name : model.parameter_layers()) {
    const auto& p = model.parameters().at(name);
    counts.push_back({{"layer", name}, {"elements", p.weight.size() + p.bias.size()}});
  }
  return nlohmann::json{{"element_width", sizeof(T)},
                        {"input_shape", model.input_shape()},
                        {"class_names", model.class_names()},
                        {"layers", layers},
                        {"parameter_layers", counts}};
}

}  // namespace

template <typename T>
void save_checkpoint(const ModelGraph<T>& model, const std::filesystem::path& path) {
  Bytes out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = make_header(model).dump();
  put<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& name : model.parameter_layers()) {
    const auto& p = model.parameters().at(name);
    const std::size_t bytes = (p.weight.size() + p.bias.size()) * sizeof(T);
    put<std::uint64_t>(out, bytes);
    const auto* w = reinterpret_cast<const unsigned char*>(p.weight.raw());
    const auto* b = reinterpret_cast<const unsigned char*>(p.bias.raw());
    out.insert(out.end(), w, w + p.weight.size() * sizeof(T));
    out.insert(out.end(), b, b + p.bias.size() * sizeof(T));
  }
  put<std::uint32_t>(out, crc_of(out.data(), out.size()));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError(CheckpointError::Kind::Io, "failed writing checkpoint " + path.string());
}

template <typename T>
ModelGraph<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError(CheckpointError::Kind::Io, "cannot read checkpoint " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader in(bytes, bytes.size());
  const unsigned char* magic = in.need(4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = in.take<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::Version,
                          "unsupported checkpoint version " + std::to_string(version) +
                              " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_size = in.take<std::uint64_t>("header length");
  const unsigned char* header_bytes = in.need(header_size, "header");

  nlohmann::json header;
  std::vector<std::string> class_names;
  std::vector<LayerSpec> layers;
  Shape input_shape;
  std::size_t width = 0;
  try {
    header = nlohmann::json::parse(header_bytes, header_bytes + header_size);
    width = header.at("element_width").get<std::size_t>();
    input_shape = header.at("input_shape").get<Shape>();
    class_names = header.at("class_names").get<std::vector<std::string>>();
    layers = header.at("layers").get<std::vector<LayerSpec>>();
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Header, std::string("malformed checkpoint header: ") + e.what());
  }
  if (width != sizeof(T)) {
    throw CheckpointError(CheckpointError::Kind::SpecMismatch,
                          "checkpoint stores " + std::to_string(width) + "-byte elements, expected " +
                              std::to_string(sizeof(T)));
  }

  ModelGraph<T> model = [&] {
    try {
      ModelGraph<T> m(layers, input_shape, class_names.size());
      m.set_class_names(class_names);
      return m;
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(CheckpointError::Kind::SpecMismatch,
                            std::string("checkpoint layer specs are inconsistent: ") + e.what());
    }
  }();

  for (const auto& name : model.parameter_layers()) {
    auto& p = model.parameters(name);
    const auto stored = in.take<std::uint64_t>("parameter blob length");
    const std::size_t expected = (p.weight.size() + p.bias.size()) * sizeof(T);
    if (stored != expected) {
      throw CheckpointError(CheckpointError::Kind::SpecMismatch,
                            "layer '" + name + "' stores " + std::to_string(stored) +
                                " parameter bytes but its spec requires " + std::to_string(expected));
    }
    const unsigned char* blob = in.need(expected, "parameter blob");
    std::memcpy(p.weight.raw(), blob, p.weight.size() * sizeof(T));
    std::memcpy(p.bias.raw(), blob + p.weight.size() * sizeof(T), p.bias.size() * sizeof(T));
  }
  const std::size_t payload_end = in.position();
  const auto stored_crc = in.take<std::uint32_t>("checksum");
  if (in.position() != bytes.size()) {
    throw CheckpointError(CheckpointError::Kind::SpecMismatch,
                          "checkpoint has " + std::to_string(bytes.size() - in.position()) +
                              " unexpected trailing bytes");
  }
  if (crc_of(bytes.data(), payload_end) != stored_crc) {
    throw CheckpointError(CheckpointError::Kind::Checksum, "checkpoint checksum mismatch in " + path.string());
  }
  return model;
}

template void save_checkpoint(const ModelGraph<float>&, const std::filesystem::path&);
template void save_checkpoint(const ModelGraph<double>&, const std::filesystem::path&);
template ModelGraph<float> load_checkpoint(const std::filesystem::path&);
template ModelGraph<double> load_checkpoint(const std::filesystem::path&);

}  // namespace cxr
