#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "litevsr/types.hpp"

namespace litevsr {

// Token inventory for the acoustic model's output layer. The CTC blank is not
// a token; it takes id size() in logit space.
//
// Vocabulary files hold one token per line. "<space>" denotes a literal space
// and a leading U+2581 (sentencepiece word marker) decodes to a space, so BPE
// inventories exported by common toolkits load unchanged. Lines starting with
// '#' are comments.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // Space, a-z, apostrophe, <unk>: 29 tokens.
  static Vocabulary characters();
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int blank_id() const { return size(); }
  const std::string& token(int id) const { return tokens_.at(id); }

  // Greedy longest-match segmentation. Characters with no matching token map
  // to <unk> when present, otherwise DataError.
  TokenSequence encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> surface_;  // decoded text of each token
  std::unordered_map<std::string, int> by_surface_;
  size_t max_surface_len_ = 0;
  int unk_id_ = -1;
};

}  // namespace litevsr
