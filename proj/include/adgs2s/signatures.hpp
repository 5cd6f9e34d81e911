#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adgs2s/adg.hpp"
#include "adgs2s/error.hpp"
#include "adgs2s/vocabulary.hpp"

namespace adgs2s::ingest {

// Signature grammar, one declaration per line:
//
//   type <Name> [: <ParentName>]
//   method <Name> ( [<Type> {, <Type>}] ) -> [<Type> {, <Type>}]
//   # comment
//
// A type referenced before (or without) a `type` line is declared
// implicitly as a root type; a later `type` line may still give it a parent.

struct TypeDecl {
  graph::ParamType type;
  std::size_t line = 0;
  bool implicit = false;
};

struct MethodDecl {
  graph::ApiMethod method;
  std::size_t line = 0;
};

struct SignatureCorpus {
  std::vector<TypeDecl> types;
  std::vector<MethodDecl> methods;

  graph::TypeHierarchy hierarchy() const {
    std::vector<graph::ParamType> t;
    t.reserve(types.size());
    for (const auto& d : types) t.push_back(d.type);
    return graph::TypeHierarchy(std::move(t));
  }

  std::vector<graph::ApiMethod> api_methods() const {
    std::vector<graph::ApiMethod> m;
    m.reserve(methods.size());
    for (const auto& d : methods) m.push_back(d.method);
    return m;
  }

  graph::Adg build_graph(graph::BuildOptions options = {}) const {
    return graph::Adg::build(api_methods(), hierarchy(), options);
  }

  /// Equality of the declared content; source lines and implicitness are
  /// provenance only.
  friend bool operator==(const SignatureCorpus& a, const SignatureCorpus& b) {
    auto sorted_types = [](const SignatureCorpus& c) {
      std::vector<graph::ParamType> t;
      for (const auto& d : c.types) t.push_back(d.type);
      std::sort(t.begin(), t.end(), [](const auto& x, const auto& y) { return x.name < y.name; });
      return t;
    };
    if (sorted_types(a) != sorted_types(b) || a.methods.size() != b.methods.size()) return false;
    for (std::size_t i = 0; i < a.methods.size(); ++i)
      if (a.methods[i].method != b.methods[i].method) return false;
    return true;
  }
};

namespace detail {

inline bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}
inline bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' || c == '.' || c == '#';
}

class LineScanner {
 public:
  LineScanner(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  std::size_t column() const { return pos_ + 1; }

  bool accept(std::string_view punct) {
    skip_space();
    if (text_.substr(pos_, punct.size()) == punct) {
      pos_ += punct.size();
      return true;
    }
    return false;
  }
  void expect(std::string_view punct) {
    if (!accept(punct)) error("expected '" + std::string(punct) + "'");
  }
  bool peek_ident() {
    skip_space();
    return pos_ < text_.size() && ident_start(text_[pos_]);
  }
  std::string ident(std::string_view what) {
    skip_space();
    if (pos_ >= text_.size() || !ident_start(text_[pos_])) error("expected " + std::string(what));
    const std::size_t begin = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(begin, pos_ - begin));
  }
  [[noreturn]] void error(const std::string& msg) const { throw ParseError(line_, pos_ + 1, msg); }

 private:
  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline SignatureCorpus parse_signatures(std::string_view text) {
  SignatureCorpus corpus;
  std::unordered_map<std::string, std::size_t> type_index;
  std::unordered_map<std::string, std::size_t> method_line;

  auto reference = [&](const std::string& name, std::size_t line) {
    if (type_index.count(name) == 0) {
      type_index.emplace(name, corpus.types.size());
      corpus.types.push_back({{name, std::nullopt}, line, true});
    }
  };

  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(begin, end - begin);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    begin = end + 1;
    ++line_no;

    detail::LineScanner sc(raw, line_no);
    if (sc.at_end() || sc.accept("#")) {
      if (end == text.size()) break;
      continue;
    }

    const std::string keyword = sc.ident("'type' or 'method'");
    if (keyword == "type") {
      const std::string name = sc.ident("type name");
      std::optional<std::string> parent;
      if (sc.accept(":")) parent = sc.ident("parent type name");
      if (!sc.at_end()) sc.error("unexpected trailing text");
      if (parent && *parent == name) sc.error("type '" + name + "' cannot extend itself");
      auto it = type_index.find(name);
      if (it != type_index.end()) {
        auto& decl = corpus.types[it->second];
        if (!decl.implicit)
          throw ParseError(line_no, 1,
                           "duplicate type '" + name + "' (first declared on line " + std::to_string(decl.line) + ")");
        decl.implicit = false;
        decl.line = line_no;
        decl.type.parent = parent;
      } else {
        type_index.emplace(name, corpus.types.size());
        corpus.types.push_back({{name, parent}, line_no, false});
      }
      if (parent) reference(*parent, line_no);
    } else if (keyword == "method") {
      graph::ApiMethod m;
      m.name = sc.ident("method name");
      auto list = [&](std::vector<std::string>& into, bool closed) {
        if (closed ? !sc.accept(")") : !sc.at_end()) {
          do {
            into.push_back(sc.ident("type name"));
          } while (sc.accept(","));
          if (closed) sc.expect(")");
        }
      };
      sc.expect("(");
      list(m.inputs, true);
      sc.expect("->");
      list(m.outputs, false);
      if (!sc.at_end()) sc.error("unexpected trailing text");

      if (auto prev = method_line.find(m.name); prev != method_line.end())
        throw ParseError(line_no, 1,
                         "duplicate method '" + m.name + "' (first declared on line " +
                             std::to_string(prev->second) + ")");
      method_line.emplace(m.name, line_no);
      for (const auto& t : m.inputs) reference(t, line_no);
      for (const auto& t : m.outputs) reference(t, line_no);
      corpus.methods.push_back({std::move(m), line_no});
    } else {
      throw ParseError(line_no, 1, "unknown declaration '" + keyword + "'");
    }
    if (end == text.size()) break;
  }

  // Surface cycles here, with a line number, instead of at graph build.
  try {
    (void)corpus.hierarchy();
  } catch (const ConstructionError& e) {
    throw ParseError(corpus.types.empty() ? 1 : corpus.types.back().line, 1, e.what());
  }
  return corpus;
}

/// Canonical text: every type explicit, parents before children (ties by
/// name), then methods in declaration order.
inline std::string emit_signatures(const SignatureCorpus& corpus) {
  std::map<std::string, std::optional<std::string>> parent;
  for (const auto& d : corpus.types) parent[d.type.name] = d.type.parent;

  std::ostringstream out;
  std::map<std::string, bool> done;
  std::vector<std::string> order;
  std::function<void(const std::string&)> visit = [&](const std::string& name) {
    if (done[name]) return;
    done[name] = true;
    if (auto p = parent[name]) visit(*p);
    order.push_back(name);
  };
  for (const auto& [name, p] : parent) visit(name);
  for (const auto& name : order) {
    out << "type " << name;
    if (parent[name]) out << " : " << *parent[name];
    out << '\n';
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
  };
  for (const auto& d : corpus.methods) {
    out << "method " << d.method.name << " (" << join(d.method.inputs) << ") ->";
    if (!d.method.outputs.empty()) out << ' ' << join(d.method.outputs);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Tokenization and datasets.
// ---------------------------------------------------------------------------

/// Descriptions: special characters become spaces, text is lowercased, and
/// '.' survives only inside a word.
inline std::vector<std::string> tokenize_description(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '.') cur.pop_back();
    std::size_t lead = 0;
    while (lead < cur.size() && cur[lead] == '.') ++lead;
    if (lead < cur.size()) out.push_back(cur.substr(lead));
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_' || c == '.' || c == '#')
      cur.push_back(static_cast<char>(std::tolower(u)));
    else
      flush();
  }
  flush();
  return out;
}

/// Code: identifiers (qualified names kept whole) and numbers are single
/// tokens; every other non-space character is a token of its own.
inline std::vector<std::string> tokenize_code(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' || c == '#'; };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (word(c)) {
      std::size_t j = i;
      while (j < text.size() && (word(text[j]) || (text[j] == '.' && j + 1 < text.size() && word(text[j + 1]))))
        ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

struct Example {
  std::vector<std::string> description;
  std::vector<std::string> code;

  friend bool operator==(const Example&, const Example&) = default;
};

/// Tab-separated records: description, code.
inline std::vector<Example> read_dataset(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(line_no, 1, "expected exactly two tab-separated fields");
    Example ex{tokenize_description(std::string_view(line).substr(0, tab)),
               tokenize_code(std::string_view(line).substr(tab + 1))};
    if (ex.description.empty()) throw ParseError(line_no, 1, "empty description");
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<Example> read_dataset(const std::string& text) {
  std::istringstream is(text);
  return read_dataset(is);
}

inline void write_dataset(const std::vector<Example>& data, std::ostream& out) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
    return s;
  };
  for (const auto& ex : data) out << join(ex.description) << '\t' << join(ex.code) << '\n';
}

// ---------------------------------------------------------------------------
// Code-token <-> graph-node linking for decoder query switching.
// ---------------------------------------------------------------------------

class ApiTokenIndex {
 public:
  ApiTokenIndex() = default;
  explicit ApiTokenIndex(std::size_t vocabulary_size) : nodes_(vocabulary_size) {}

  void link(TokenId token, graph::NodeId node) {
    nodes_.at(static_cast<std::size_t>(token)) = node;
    ++linked_;
  }

  std::optional<graph::NodeId> node(TokenId token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= nodes_.size()) return std::nullopt;
    return nodes_[static_cast<std::size_t>(token)];
  }

  std::size_t size() const noexcept { return linked_; }
  std::size_t vocabulary_size() const noexcept { return nodes_.size(); }

  std::vector<std::pair<TokenId, graph::NodeId>> entries() const {
    std::vector<std::pair<TokenId, graph::NodeId>> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i]) out.emplace_back(static_cast<TokenId>(i), *nodes_[i]);
    return out;
  }

 private:
  std::vector<std::optional<graph::NodeId>> nodes_;
  std::size_t linked_ = 0;
};

/// A code token names an API method when it equals the method's name.
inline ApiTokenIndex link_api_tokens(const Vocabulary& vocabulary, const graph::Adg& adg) {
  ApiTokenIndex index(vocabulary.size());
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (auto node = adg.find(vocabulary.tokens()[i])) index.link(static_cast<TokenId>(i), *node);
  }
  return index;
}

}  // namespace adgs2s::ingest
