#include "litevsr/vocab.hpp"

#include <fstream>

#include <fmt/format.h>

#include "litevsr/errors.hpp"

namespace litevsr {

namespace {

constexpr std::string_view kWordMarker = "\xE2\x96\x81";  // U+2581

std::string surface_of(const std::string& token) {
  if (token == "<space>") return " ";
  if (token.starts_with(kWordMarker)) {
    return " " + token.substr(kWordMarker.size());
  }
  return token;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw ConfigError("vocabulary is empty");
  for (int id = 0; id < size(); ++id) {
    const std::string& tok = tokens_[id];
    if (tok == "<unk>") {
      unk_id_ = id;
      surface_.push_back("");
      continue;
    }
    std::string surface = surface_of(tok);
    if (surface.empty()) throw ConfigError(fmt::format("empty token at id {}", id));
    if (!by_surface_.emplace(surface, id).second) {
      throw ConfigError(fmt::format("duplicate token '{}' at id {}", tok, id));
    }
    max_surface_len_ = std::max(max_surface_len_, surface.size());
    surface_.push_back(std::move(surface));
  }
}

Vocabulary Vocabulary::characters() {
  std::vector<std::string> tokens{"<space>"};
  for (char c = 'a'; c <= 'z'; ++c) tokens.emplace_back(1, c);
  tokens.emplace_back("'");
  tokens.emplace_back("<unk>");
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open vocabulary {}", path.string()));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write vocabulary {}", path.string()));
  out << "# one token per line; CTC blank is implicit at id " << blank_id() << '\n';
  for (const auto& t : tokens_) out << t << '\n';
}

TokenSequence Vocabulary::encode(const std::string& text) const {
  TokenSequence seq;
  seq.vocab_size = size();
  size_t pos = 0;
  while (pos < text.size()) {
    int match = -1;
    size_t match_len = 0;
    for (size_t len = std::min(max_surface_len_, text.size() - pos); len > 0; --len) {
      auto it = by_surface_.find(text.substr(pos, len));
      if (it != by_surface_.end()) {
        match = it->second;
        match_len = len;
        break;
      }
    }
    if (match < 0) {
      if (unk_id_ < 0) {
        throw DataError(fmt::format("no token covers '{}' at offset {}", text[pos], pos));
      }
      match = unk_id_;
      match_len = 1;
    }
    seq.ids.push_back(match);
    pos += match_len;
  }
  return seq;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) {
      throw DataError(fmt::format("token id {} outside vocabulary", id));
    }
    out += surface_[id];
  }
  return out;
}

}  // namespace litevsr
