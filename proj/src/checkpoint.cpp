#include <cstdint>
#include <cstring>
#include <fstream>

#include "pc2wf/model.hpp"

namespace pc2wf {

namespace {

constexpr char kMagic[8] = {'P', 'C', '2', 'W', 'F', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError(std::string("checkpoint truncated in ") + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const HeadBundle& bundle) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, bundle.config.architecture_hash());
  std::string cfg = bundle.config.to_json();
  put(out, static_cast<std::uint64_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  auto& b = const_cast<HeadBundle&>(bundle);
  auto params = b.parameters();
  auto buffers = b.buffers();
  put(out, static_cast<std::uint64_t>(params.size()));
  put(out, static_cast<std::uint64_t>(buffers.size()));
  for (const auto* t : params) nn::write_tensor(out, *t);
  for (const auto* t : buffers) nn::write_tensor(out, *t);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

HeadBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + " is not a model checkpoint");
  }
  auto version = get<std::uint32_t>(in, "header");
  if (version != kVersion) {
    throw ParseError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  auto hash = get<std::uint64_t>(in, "header");
  auto cfg_len = get<std::uint64_t>(in, "header");
  if (cfg_len > (1u << 20)) throw ParseError("checkpoint config block is implausibly large");
  std::string cfg_text(cfg_len, '\0');
  if (!in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len))) throw ParseError("checkpoint truncated in config");
  ModelConfig cfg = ModelConfig::from_json(cfg_text);
  if (cfg.architecture_hash() != hash) {
    throw ParseError("checkpoint architecture hash does not match its configuration");
  }
  HeadBundle bundle = HeadBundle::create(cfg, 0);
  auto params = bundle.parameters();
  auto buffers = bundle.buffers();
  auto n_params = get<std::uint64_t>(in, "header");
  auto n_buffers = get<std::uint64_t>(in, "header");
  if (n_params != params.size() || n_buffers != buffers.size()) {
    throw ParseError("checkpoint tensor count does not match the architecture");
  }
  auto fill = [&](nn::Tensor2* dst, std::size_t i) {
    nn::Tensor2 t = nn::read_tensor(in);
    if (t.rows() != dst->rows() || t.cols() != dst->cols()) {
      throw ParseError("checkpoint tensor " + std::to_string(i) + " has the wrong shape");
    }
    *dst = std::move(t);
  };
  for (std::size_t i = 0; i < params.size(); ++i) fill(params[i], i);
  for (std::size_t i = 0; i < buffers.size(); ++i) fill(buffers[i], params.size() + i);
  return bundle;
}

}  // namespace pc2wf
