#include <bit>
#include <cstring>

#include "ltqa/model.hpp"

namespace ltqa {

namespace {

constexpr std::string_view kMagic = "LTQACKPT";

void put_u16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xFF);
  out += static_cast<char>(v >> 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) | (static_cast<unsigned char>(b[1]) << 8));
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic);
  put_u32(out, kCheckpointVersion);
  const std::string header = nlohmann::json{{"config", checkpoint.config.to_json()}, {"metadata", checkpoint.metadata}}.dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;

  const auto tensors = checkpoint.params.named_tensors();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(tensor->rows()));
    put_u32(out, static_cast<std::uint32_t>(tensor->cols()));
    for (Eigen::Index i = 0; i < tensor->size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(tensor->data()[i]));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(in.u32()));
    if (!header.is_object() || !header.contains("config")) throw FormatError("checkpoint header lacks config");
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.config = EncoderConfig::from_json(header.at("config"));
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  ckpt.params = Parameters<float>::zeros(ckpt.config);
  auto tensors = ckpt.params.named_tensors();
  const auto count = in.u32();
  if (count != tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(tensors.size()));
  }
  for (auto& [name, tensor] : tensors) {
    auto stored_name = in.take(in.u16());
    if (stored_name != name) {
      throw FormatError("checkpoint tensor '" + std::string(stored_name) + "' where '" + name + "' was expected");
    }
    const auto rows = in.u32();
    const auto cols = in.u32();
    if (rows != tensor->rows() || cols != tensor->cols()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    }
    for (Eigen::Index i = 0; i < tensor->size(); ++i) tensor->data()[i] = std::bit_cast<float>(in.u32());
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint tensors");
  if (!ckpt.params.all_finite()) throw FormatError("checkpoint contains non-finite values");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ltqa
