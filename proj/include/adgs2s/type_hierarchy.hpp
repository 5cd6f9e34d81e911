#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adgs2s/error.hpp"

namespace adgs2s::graph {

using TypeId = std::uint32_t;

struct ParamType {
  std::string name;
  std::optional<std::string> parent;

  friend bool operator==(const ParamType&, const ParamType&) = default;
};

/// Declared parameter types and their single-inheritance relation.
///
/// Type ids are assigned in lexicographic name order, so ordering by id is
/// ordering by name. Every tag-ordered structure in the library relies on
/// this.
class TypeHierarchy {
 public:
  TypeHierarchy() = default;

  explicit TypeHierarchy(std::vector<ParamType> types) {
    std::sort(types.begin(), types.end(),
              [](const ParamType& a, const ParamType& b) { return a.name < b.name; });
    for (std::size_t i = 0; i < types.size(); ++i) {
      if (types[i].name.empty()) throw ConstructionError("type name must be non-empty");
      if (i > 0 && types[i].name == types[i - 1].name)
        throw ConstructionError("duplicate type '" + types[i].name + "'");
      index_.emplace(types[i].name, static_cast<TypeId>(i));
    }
    types_ = std::move(types);

    parent_.assign(types_.size(), std::nullopt);
    for (std::size_t i = 0; i < types_.size(); ++i) {
      if (!types_[i].parent) continue;
      auto it = index_.find(*types_[i].parent);
      if (it == index_.end())
        throw ConstructionError("type '" + types_[i].name + "' extends undeclared type '" +
                                *types_[i].parent + "'");
      parent_[i] = it->second;
    }

    // Ancestor chains, nearest first. A chain longer than the type count
    // means the parent links loop.
    ancestors_.resize(types_.size());
    for (std::size_t i = 0; i < types_.size(); ++i) {
      auto cur = parent_[i];
      while (cur) {
        if (ancestors_[i].size() >= types_.size())
          throw ConstructionError("inheritance cycle through type '" + types_[i].name + "'");
        ancestors_[i].push_back(*cur);
        cur = parent_[*cur];
      }
    }
    descendants_.resize(types_.size());
    for (std::size_t i = 0; i < types_.size(); ++i) {
      descendants_[i].push_back(static_cast<TypeId>(i));
      for (TypeId a : ancestors_[i]) descendants_[a].push_back(static_cast<TypeId>(i));
    }
    for (auto& d : descendants_) std::sort(d.begin(), d.end());
  }

  std::size_t size() const noexcept { return types_.size(); }
  const std::vector<ParamType>& types() const noexcept { return types_; }

  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  std::optional<TypeId> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TypeId id(std::string_view name) const {
    auto found = find(name);
    if (!found) throw InvalidInput("undeclared type '" + std::string(name) + "'");
    return *found;
  }

  const std::string& name(TypeId id) const { return types_.at(id).name; }
  std::optional<TypeId> parent(TypeId id) const { return parent_.at(id); }

  /// Transitive supertypes, nearest first.
  const std::vector<TypeId>& ancestors(TypeId id) const { return ancestors_.at(id); }
  /// The type itself plus every transitive subtype, ascending.
  const std::vector<TypeId>& descendants(TypeId id) const { return descendants_.at(id); }

  /// A value of `provided` can be passed where `required` is expected.
  bool matches(TypeId provided, TypeId required) const {
    if (provided == required) return true;
    const auto& chain = ancestors_[provided];
    return std::find(chain.begin(), chain.end(), required) != chain.end();
  }

  friend bool operator==(const TypeHierarchy& a, const TypeHierarchy& b) { return a.types_ == b.types_; }

 private:
  std::vector<ParamType> types_;
  std::unordered_map<std::string, TypeId> index_;
  std::vector<std::optional<TypeId>> parent_;
  std::vector<std::vector<TypeId>> ancestors_;
  std::vector<std::vector<TypeId>> descendants_;
};

/// True iff `provided` equals `required` or is a transitive subtype of it.
inline bool param_match(std::string_view provided, std::string_view required,
                        const TypeHierarchy& hierarchy) {
  return hierarchy.matches(hierarchy.id(provided), hierarchy.id(required));
}

}  // namespace adgs2s::graph
