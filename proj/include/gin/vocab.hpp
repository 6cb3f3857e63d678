#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace gin {

// String-to-row mapping with row 0 reserved for unknowns.
class Vocab {
 public:
  static constexpr int kUnk = 0;

  Vocab() : names_{"<unk>"} {}

  int add(const std::string& s) {
    auto [it, fresh] = index_.try_emplace(s, static_cast<int>(names_.size()));
    if (fresh) names_.push_back(s);
    return it->second;
  }

  int lookup(const std::string& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& s) const { return index_.count(s) > 0; }
  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int row) const { return names_.at(static_cast<std::size_t>(row)); }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> names_;
};

}  // namespace gin
