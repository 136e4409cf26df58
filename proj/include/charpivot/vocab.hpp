#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace charpivot {

/// Interns token strings as dense ids in first-seen order.
class Vocab {
 public:
  std::uint32_t intern(std::string_view token) {
    auto it = ids_.find(std::string(token));
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(tokens_.size());
    tokens_.emplace_back(token);
    ids_.emplace(tokens_.back(), id);
    return id;
  }

  std::optional<std::uint32_t> find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& token(std::uint32_t id) const { return tokens_[id]; }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

}  // namespace charpivot
