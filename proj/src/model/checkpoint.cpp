#include "mario/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "mario/error.hpp"

namespace mario {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'R', 'I', 'O', 'C', 'K', 'P'};

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error(ErrorCode::BadFormat, "truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::size_t limit) {
  const auto n = get<std::uint32_t>(in);
  if (n > limit) throw Error(ErrorCode::BadFormat, "string length out of range");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw Error(ErrorCode::BadFormat, "truncated checkpoint");
  return s;
}

void put_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  put_string(out, name);
  put<std::uint32_t>(out, 2);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put<float>(out, static_cast<float>(m.data()[i]));
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::Generator ? "generator" : "infill"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "generator") return ModelKind::Generator;
  if (text == "infill") return ModelKind::Infill;
  throw Error(ErrorCode::BadFormat, "unknown model kind '" + std::string(text) + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},
          {"context_len", c.context_len},
          {"ffn_mult", c.ffn_mult},
          {"prompt_vocab_size", c.prompt_vocab_size},
          {"prompt_layers", c.prompt_layers},
          {"prompt_context", c.prompt_context},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.context_len = j.at("context_len").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.prompt_vocab_size = j.at("prompt_vocab_size").get<int>();
    c.prompt_layers = j.at("prompt_layers").get<int>();
    c.prompt_context = j.at("prompt_context").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json header = {{"model", to_json(ck.params.config)},
                           {"step", ck.step},
                           {"vocab", ck.vocab.serialize()},
                           {"metadata", ck.metadata}};
  if (ck.opt) {
    header["adam"] = {{"lr", ck.opt->hp.lr},
                      {"beta1", ck.opt->hp.beta1},
                      {"beta2", ck.opt->hp.beta2},
                      {"eps", ck.opt->hp.eps},
                      {"step", ck.opt->step}};
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string text = header.dump();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  const auto names = tensor_names(ck.params);
  const auto values = tensors(ck.params);
  std::uint32_t count = static_cast<std::uint32_t>(names.size());
  if (ck.opt) count *= 3;
  put<std::uint32_t>(out, count);
  for (std::size_t i = 0; i < names.size(); ++i) put_tensor(out, names[i], *values[i]);
  if (ck.opt) {
    if (ck.opt->m.size() != names.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match model");
    for (std::size_t i = 0; i < names.size(); ++i) put_tensor(out, "adam.m/" + names[i], ck.opt->m[i]);
    for (std::size_t i = 0; i < names.size(); ++i) put_tensor(out, "adam.v/" + names[i], ck.opt->v[i]);
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::BadFormat, path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::BadFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(in);
  if (header_len > (1u << 28)) throw Error(ErrorCode::BadFormat, "header too large");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw Error(ErrorCode::BadFormat, "truncated header");

  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ck.step = header.at("step").get<std::int64_t>();
    ck.vocab = Vocab::deserialize(header.at("vocab").get<std::string>());
    ck.metadata = header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("checkpoint header: ") + e.what());
  }
  ck.params = init_model(model_config_from_json(header.at("model")));

  std::map<std::string, Matrix> stored;
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = get_string(in, 4096);
    const auto rank = get<std::uint32_t>(in);
    if (rank != 2) throw Error(ErrorCode::BadFormat, "tensor " + name + " has rank " + std::to_string(rank));
    const auto rows = get<std::uint32_t>(in), cols = get<std::uint32_t>(in);
    if (static_cast<std::uint64_t>(rows) * cols > (1u << 28)) throw Error(ErrorCode::BadFormat, "tensor too large");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get<float>(in);
    stored.emplace(std::move(name), std::move(m));
  }

  auto take = [&](const std::string& name, Matrix& dest) {
    auto it = stored.find(name);
    if (it == stored.end()) throw Error(ErrorCode::BadFormat, "missing tensor " + name);
    if (it->second.rows() != dest.rows() || it->second.cols() != dest.cols()) {
      throw Error(ErrorCode::BadFormat, "tensor " + name + " has the wrong shape");
    }
    dest = std::move(it->second);
  };
  const auto named = tensors(ck.params);
  for (const auto& t : named) take(t.name, *t.tensor);
  if (header.contains("adam")) {
    const auto& a = header["adam"];
    AdamConfig hp{a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                  a.at("eps").get<double>()};
    OptState opt = init_opt_state(ck.params, hp);
    opt.step = a.at("step").get<std::int64_t>();
    for (std::size_t i = 0; i < named.size(); ++i) {
      take("adam.m/" + named[i].name, opt.m[i]);
      take("adam.v/" + named[i].name, opt.v[i]);
    }
    ck.opt = std::move(opt);
  }
  return ck;
}

}  // namespace mario
