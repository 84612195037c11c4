#include "checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "error.hpp"

namespace wdistill {

namespace {

constexpr const char* kFormat = "wdistill-checkpoint";
constexpr int kVersion = 1;

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["config"] = ckpt.config;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& [key, t] : ckpt.tensors) {
    manifest["tensors"].push_back({{"key", key}, {"shape", t.shape()}});
  }
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [key, t] : ckpt.tensors) {
    for (double v : t.data()) write_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  const std::uint64_t n = read_u64(is);
  if (!is || n > (std::uint64_t{1} << 32)) throw IoError("corrupt checkpoint header in " + path.string());
  std::string text(n, '\0');
  is.read(text.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated checkpoint manifest in " + path.string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("unreadable checkpoint manifest in " + path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kFormat) throw IoError(path.string() + " is not a wdistill checkpoint");

  Checkpoint ckpt;
  ckpt.config = manifest.at("config");
  for (const auto& entry : manifest.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = std::bit_cast<double>(read_u64(is));
    if (!is) throw IoError("truncated tensor payload in " + path.string());
    ckpt.tensors.emplace_back(entry.at("key").get<std::string>(), Tensor::from_data(std::move(shape), std::move(values)));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after payload in " + path.string());
  return ckpt;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {{"enc_depth", cfg.enc_depth}, {"dec_depth", cfg.dec_depth}, {"width", cfg.width},
          {"ffn_hidden", cfg.ffn_hidden}, {"heads", cfg.heads},         {"vocab", cfg.vocab},
          {"max_len", cfg.max_len}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.enc_depth = j.value("enc_depth", cfg.enc_depth);
    cfg.dec_depth = j.value("dec_depth", cfg.dec_depth);
    cfg.width = j.value("width", cfg.width);
    cfg.ffn_hidden = j.value("ffn_hidden", 4 * cfg.width);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.vocab = j.value("vocab", cfg.vocab);
    cfg.max_len = j.value("max_len", cfg.max_len);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const TransformerParams& params,
                const nlohmann::json& meta) {
  params.check_complete(cfg);
  Checkpoint ckpt;
  ckpt.config = {{"kind", "model"}, {"model", model_config_to_json(cfg)}, {"meta", meta}};
  for (const auto& [key, t] : params) ckpt.tensors.emplace_back(key.to_string(), t);
  save_checkpoint(path, ckpt);
}

SavedModel load_model(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config.value("kind", "") != "model") throw IoError(path.string() + " does not hold a model");
  SavedModel out;
  out.config = model_config_from_json(ckpt.config.at("model"));
  out.meta = ckpt.config.value("meta", nlohmann::json::object());
  for (auto& [name, t] : ckpt.tensors) {
    t.set_requires_grad(true);
    out.params.set(WeightKey::parse(name), t);
  }
  out.params.check_complete(out.config);
  return out;
}

}  // namespace wdistill
