#include "funginet/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "funginet/fsutil.hpp"

namespace funginet {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'N', 'T'};
constexpr std::uint8_t kVersion = 0x01;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_values(std::string& out, const Tensor& t) {
  std::size_t bytes = t.size() * dtype_size(t.dtype());
  if constexpr (std::endian::native == std::endian::little) {
    std::size_t offset = out.size();
    out.resize(offset + bytes);
    const void* src = t.dtype() == DType::f32 ? static_cast<const void*>(t.f32())
                                              : static_cast<const void*>(t.f64());
    std::memcpy(out.data() + offset, src, bytes);
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t.dtype() == DType::f32)
        put_u32(out, std::bit_cast<std::uint32_t>(t.f32()[i]));
      else
        put_u64(out, std::bit_cast<std::uint64_t>(t.f64()[i]));
    }
  }
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  void set_context(std::string ctx) { context_ = std::move(ctx); }

  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw std::runtime_error("checkpoint truncated while reading " +
                               (context_.empty() ? std::string("header") : context_) + ": " +
                               path_);
    }
    const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }

  std::uint8_t take_u8() { return take(1)[0]; }

  std::uint32_t take_u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }

  std::uint64_t take_u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }

  std::string take_string(std::size_t n) {
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string path_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelGraph& model, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));

  for (const ParamEntry& p : model.parameters()) {
    for (std::size_t i = 0; i < p.tensor.size(); ++i) {
      if (!std::isfinite(p.tensor.value_at(i))) {
        throw std::runtime_error("save_checkpoint: parameter '" + p.name +
                                 "' contains non-finite values");
      }
    }
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    out.push_back(static_cast<char>(p.tensor.dtype() == DType::f32 ? 0 : 1));
    out.push_back(static_cast<char>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) put_u64(out, d);
    put_values(out, p.tensor);
  }

  nlohmann::json prov;
  prov["architecture"] = model.architecture;
  prov["num_classes"] = model.declared_classes;
  prov["seed"] = model.creation_seed;
  std::string prov_text = prov.dump();
  put_u32(out, static_cast<std::uint32_t>(prov_text.size()));
  out += prov_text;

  write_file_atomic(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path);

  std::string magic = r.take_string(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint8_t version = r.take_u8();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " (expected 1): " + path);
  }
  std::uint32_t count = r.take_u32();

  LoadedCheckpoint ckpt;
  ckpt.tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    r.set_context("tensor #" + std::to_string(t));
    std::uint32_t name_len = r.take_u32();
    std::string name = r.take_string(name_len);
    r.set_context("tensor '" + name + "'");
    std::uint8_t dtype_code = r.take_u8();
    if (dtype_code > 1) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has unknown dtype code " +
                               std::to_string(dtype_code) + ": " + path);
    }
    DType dtype = dtype_code == 0 ? DType::f32 : DType::f64;
    std::uint8_t rank = r.take_u8();
    std::vector<std::size_t> shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.take_u64()));
    Tensor tensor = Tensor::zeros(shape, dtype);
    std::size_t bytes_needed = tensor.size() * dtype_size(dtype);
    const std::uint8_t* raw = r.take(bytes_needed);
    if constexpr (std::endian::native == std::endian::little) {
      void* dst = dtype == DType::f32 ? static_cast<void*>(tensor.f32())
                                      : static_cast<void*>(tensor.f64());
      std::memcpy(dst, raw, bytes_needed);
    } else {
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        if (dtype == DType::f32) {
          std::uint32_t v = 0;
          for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
          tensor.f32()[i] = std::bit_cast<float>(v);
        } else {
          std::uint64_t v = 0;
          for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
          tensor.f64()[i] = std::bit_cast<double>(v);
        }
      }
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(tensor));
  }

  r.set_context("provenance block");
  std::uint32_t prov_len = r.take_u32();
  std::string prov_text = r.take_string(prov_len);
  if (!r.exhausted()) {
    throw std::runtime_error("checkpoint has trailing bytes after the provenance block: " + path);
  }
  nlohmann::json prov = nlohmann::json::parse(prov_text, nullptr, false);
  if (prov.is_discarded() || !prov.is_object()) {
    throw std::runtime_error("checkpoint provenance block is not valid JSON: " + path);
  }
  ckpt.provenance.architecture = prov.value("architecture", std::string("custom"));
  ckpt.provenance.num_classes = prov.value("num_classes", 0);
  ckpt.provenance.seed = prov.value("seed", std::uint64_t{0});
  return ckpt;
}

}  // namespace funginet
