#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adgs2s/model.hpp"

namespace adgs2s::model {

// ---------------------------------------------------------------------------
// ADGS2S-v1 layout. Integers are little-endian; a block is a u64 byte
// length followed by its bytes.
//
//   "ADGS2S-v1\n"
//   block  hyperparameters, "key=value\n" lines in key order
//   block  description vocabulary, "token\tcount\n" per id
//   block  code vocabulary, same form
//   block  graph, ADG-GRAPH-v1 text
//   u64    parameter count
//   per parameter, in name order:
//     u32 name length, name bytes, u32 rows, u32 cols,
//     rows*cols float32 values in row-major order
//   u64    FNV-1a hash of every preceding byte
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "ADGS2S-v1\n";

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class Writer {
 public:
  void raw(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void block(std::string_view s) {
    u64(s.size());
    raw(s);
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::string take() { return std::move(out_); }
  std::string_view view() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : in_(bytes) {}

  std::string_view raw(std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint: truncated");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = raw(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = raw(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string_view block() {
    const auto n = u64();
    if (n > in_.size() - pos_) throw FormatError("checkpoint: block length exceeds file size");
    return raw(static_cast<std::size_t>(n));
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t position() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

inline std::string vocab_block(const Vocabulary& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += v.token(static_cast<TokenId>(i)) + "\t" + std::to_string(v.count(static_cast<TokenId>(i))) + "\n";
  return out;
}

inline Vocabulary parse_vocab(std::string_view text) {
  Vocabulary v;
  std::size_t id = 0, begin = 0;
  while (begin < text.size()) {
    const auto end = text.find('\n', begin);
    if (end == std::string_view::npos) throw FormatError("checkpoint: vocabulary line without newline");
    const auto line = text.substr(begin, end - begin);
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) throw FormatError("checkpoint: vocabulary line without count");
    const std::string token(line.substr(0, tab));
    std::size_t count = 0;
    try {
      count = std::stoull(std::string(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw FormatError("checkpoint: bad vocabulary count");
    }
    if (id < v.size()) {
      if (v.token(static_cast<TokenId>(id)) != token) throw FormatError("checkpoint: reserved token mismatch");
      if (count > 0) v.add(token, count);
    } else if (v.contains(token) || static_cast<std::size_t>(v.add(token, count)) != id) {
      throw FormatError("checkpoint: duplicate vocabulary token '" + token + "'");
    }
    ++id;
    begin = end + 1;
  }
  if (id < 4) throw FormatError("checkpoint: vocabulary lacks reserved tokens");
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::map<std::string, std::string> hyperparameters(const ModelConfig& c) {
  return {{"word_dim", std::to_string(c.word_dim)},
          {"code_dim", std::to_string(c.code_dim)},
          {"hidden", std::to_string(c.hidden)},
          {"mlp_hidden", std::to_string(c.mlp_hidden)},
          {"window_layers", std::to_string(c.window_layers)},
          {"half_window", std::to_string(c.half_window)},
          {"dropout", format_double(c.dropout)},
          {"embedder.hops", std::to_string(c.embedder.hops)},
          {"embedder.aggregator", embed::to_string(c.embedder.aggregator)},
          {"embedder.virtualization", embed::to_string(c.embedder.virtualization)},
          {"embedder.concat_cap", std::to_string(c.embedder.concat_cap)},
          {"embedder.direction", c.embedder.use_edge_direction ? "1" : "0"},
          {"embedder.labels", c.embedder.use_edge_labels ? "1" : "0"},
          {"embedder.activation", embed::to_string(c.embedder.activation)}};
}

inline ModelConfig parse_hyperparameters(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t begin = 0;
  while (begin < text.size()) {
    const auto end = text.find('\n', begin);
    if (end == std::string_view::npos) throw FormatError("checkpoint: hyperparameter line without newline");
    const auto line = text.substr(begin, end - begin);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("checkpoint: hyperparameter line without '='");
    kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    begin = end + 1;
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("checkpoint: missing hyperparameter ") + key);
    return it->second;
  };
  ModelConfig c;
  try {
    c.word_dim = std::stol(get("word_dim"));
    c.code_dim = std::stol(get("code_dim"));
    c.hidden = std::stol(get("hidden"));
    c.mlp_hidden = std::stol(get("mlp_hidden"));
    c.window_layers = std::stoi(get("window_layers"));
    c.half_window = std::stoi(get("half_window"));
    c.dropout = std::stod(get("dropout"));
    c.embedder.hops = std::stoi(get("embedder.hops"));
    c.embedder.aggregator = embed::parse_aggregator(get("embedder.aggregator"));
    c.embedder.virtualization = embed::parse_virtualization(get("embedder.virtualization"));
    c.embedder.concat_cap = std::stoul(get("embedder.concat_cap"));
    c.embedder.use_edge_direction = get("embedder.direction") == "1";
    c.embedder.use_edge_labels = get("embedder.labels") == "1";
    c.embedder.activation = embed::parse_activation(get("embedder.activation"));
    c.embedder.dim = c.code_dim;
    c.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: bad hyperparameter block: ") + e.what());
  }
  return c;
}

}  // namespace detail

/// Serialises the model. Values are stored as float32; models produced by
/// construction or `train` hold float-representable values, so a round trip
/// is exact.
inline std::string save_checkpoint(Seq2SeqModel& m) {
  detail::Writer w;
  w.raw(kCheckpointMagic);
  std::string hp;
  for (const auto& [k, v] : detail::hyperparameters(m.config())) hp += k + "=" + v + "\n";
  w.block(hp);
  w.block(detail::vocab_block(m.description_vocab()));
  w.block(detail::vocab_block(m.code_vocab()));
  w.block(graph::dump_graph(m.graph()));
  const auto params = m.parameters();
  w.u64(params.size());
  for (const auto* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.raw(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rows()));
    w.u32(static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) w.f32(static_cast<float>(p->value(r, c)));
  }
  w.u64(detail::fnv1a(w.view()));
  return w.take();
}

/// Rebuilds a model from `save_checkpoint` output. Throws FormatError on any
/// malformation; nothing is returned unless every parameter loaded.
inline std::unique_ptr<Seq2SeqModel> load_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("checkpoint: bad header");
  if (bytes.size() < kCheckpointMagic.size() + 8) throw FormatError("checkpoint: truncated");
  const auto body = bytes.substr(0, bytes.size() - 8);
  detail::Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != detail::fnv1a(body)) throw FormatError("checkpoint: checksum mismatch (corrupt or truncated)");

  detail::Reader r(body);
  r.raw(kCheckpointMagic.size());
  const ModelConfig config = detail::parse_hyperparameters(r.block());
  Vocabulary desc = detail::parse_vocab(r.block());
  Vocabulary code = detail::parse_vocab(r.block());
  graph::Adg g = [&] {
    try {
      return graph::load_graph(std::string(r.block()));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(std::string("checkpoint: bad graph block: ") + e.what());
    }
  }();
  auto model = std::make_unique<Seq2SeqModel>(std::move(desc), std::move(code), std::move(g), config, 0);
  const auto params = model->parameters();
  const auto count = r.u64();
  if (count != params.size())
    throw FormatError("checkpoint: expected " + std::to_string(params.size()) + " parameters, found " +
                      std::to_string(count));
  for (auto* p : params) {
    const auto len = r.u32();
    const std::string name(r.raw(len));
    if (name != p->name) throw FormatError("checkpoint: expected parameter '" + p->name + "', found '" + name + "'");
    const auto rows = r.u32(), cols = r.u32();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw FormatError("checkpoint: size mismatch for '" + name + "'");
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) p->value(i, j) = static_cast<double>(r.f32());
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");
  return model;
}

}  // namespace adgs2s::model
