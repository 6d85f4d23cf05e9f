#include "checkpoint.hpp"

#include <bit>
#include <cstring>

#include "errors.hpp"
#include "io_util.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");

namespace mdbert {

namespace {

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::string serialize_checkpoint(const ParamStore<float>& params, const std::string& config_text) {
  std::string out;
  out.append("MDB1", 4);
  put_u32(out, kCheckpointFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(config_text.size()));
  out.append(config_text);
  for (const auto& entry : params.entries()) {
    put_u32(out, static_cast<std::uint32_t>(entry.name.size()));
    out.append(entry.name);
    put_u32(out, static_cast<std::uint32_t>(entry.tensor->rank()));
    for (std::size_t d : entry.tensor->shape) put_u64(out, static_cast<std::uint64_t>(d));
    out.append(reinterpret_cast<const char*>(entry.tensor->data.data()),
               entry.tensor->data.size() * sizeof(float));
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore<float>& params, const std::string& config_text) {
  write_file_atomic(path, serialize_checkpoint(params, config_text));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string buf = read_text_file(path);
  Reader r{buf};
  if (r.bytes(4) != "MDB1") throw DataError("checkpoint: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion)
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  LoadedCheckpoint loaded;
  loaded.config_text = r.bytes(r.u32());
  while (r.pos < buf.size()) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    Tensor<float> t(shape);
    r.need(t.size() * sizeof(float));
    std::memcpy(t.data.data(), buf.data() + r.pos, t.size() * sizeof(float));
    r.pos += t.size() * sizeof(float);
    loaded.params.add(name, std::move(t));
  }
  return loaded;
}

}  // namespace mdbert
