#include "vocab/vocabulary.hpp"

#include "common/container.hpp"
#include "common/error.hpp"
#include "describe/describer.hpp"

#include <cctype>

namespace duet::vocab {

const std::vector<std::string>& special_names() {
  static const std::vector<std::string> n = {"<pad>",    "<sys>",     "<eos>",       "<unk>",
                                             "<Audio>",  "</Audio>",  "<Leader>",    "</Leader>",
                                             "<Relation>", "</Relation>", "<Follower>", "</Follower>"};
  return n;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (ch == ',' || ch == '.' || ch == ':' || ch == ';') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words, int k_motion, int k_relation, int k_audio,
                       std::map<std::string, std::string> templates)
    : words_(std::move(words)), templates_(std::move(templates)) {
  if (k_motion < 1 || k_relation < 1 || k_audio < 1) fail(ErrorCode::kInvalidArgument, "vocabulary: codebook sizes must be >= 1");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty()) fail(ErrorCode::kInvalidArgument, "vocabulary: empty word");
    if (!word_index_.emplace(words_[i], kSpecialCount + static_cast<int>(i)).second) {
      fail(ErrorCode::kInvalidArgument, "vocabulary: duplicate word '" + words_[i] + "'");
    }
  }
  special_ = {0, kSpecialCount};
  text_ = {special_.end, special_.end + static_cast<int>(words_.size())};
  motion_ = {text_.end, text_.end + k_motion};
  relation_ = {motion_.end, motion_.end + k_relation};
  audio_ = {relation_.end, relation_.end + k_audio};
}

Range Vocabulary::range(TokenClass c) const {
  switch (c) {
    case TokenClass::kSpecial: return special_;
    case TokenClass::kText: return text_;
    case TokenClass::kMotion: return motion_;
    case TokenClass::kRelation: return relation_;
    case TokenClass::kAudio: return audio_;
  }
  return {};
}

TokenClass Vocabulary::classify(int id) const {
  if (special_.contains(id)) return TokenClass::kSpecial;
  if (text_.contains(id)) return TokenClass::kText;
  if (motion_.contains(id)) return TokenClass::kMotion;
  if (relation_.contains(id)) return TokenClass::kRelation;
  if (audio_.contains(id)) return TokenClass::kAudio;
  fail(ErrorCode::kOutOfRange, "token id " + std::to_string(id) + " outside the vocabulary");
}

int Vocabulary::to_id(const Range& r, int k, const char* what) const {
  if (k < 0 || k >= r.size()) {
    fail(ErrorCode::kOutOfRange, std::string(what) + " index " + std::to_string(k) + " outside [0, " +
                                     std::to_string(r.size()) + ")");
  }
  return r.begin + k;
}

int Vocabulary::index_of(int id, TokenClass expected) const {
  if (classify(id) != expected) fail(ErrorCode::kOutOfRange, "token id " + std::to_string(id) + " has the wrong class");
  return id - range(expected).begin;
}

int Vocabulary::word_id(const std::string& w) const {
  const auto it = word_index_.find(w);
  return it == word_index_.end() ? kUnk : it->second;
}

std::string Vocabulary::token_string(int id) const {
  switch (classify(id)) {
    case TokenClass::kSpecial: return special_names()[static_cast<std::size_t>(id)];
    case TokenClass::kText: return words_[static_cast<std::size_t>(id - text_.begin)];
    case TokenClass::kMotion: return "<M_" + std::to_string(id - motion_.begin) + ">";
    case TokenClass::kRelation: return "<R_" + std::to_string(id - relation_.begin) + ">";
    case TokenClass::kAudio: return "<A_" + std::to_string(id - audio_.begin) + ">";
  }
  return {};
}

std::vector<int> Vocabulary::encode_text(const std::string& text) const {
  std::vector<int> out;
  for (const std::string& w : split_words(text)) out.push_back(word_id(w));
  return out;
}

std::string Vocabulary::decode_text(std::span<const int> ids) const {
  std::string s;
  for (int id : ids) {
    const std::string w = token_string(id);
    const bool punct = w.size() == 1 && (w == "," || w == "." || w == ":" || w == ";");
    if (!s.empty() && !punct) s += ' ';
    s += w;
  }
  return s;
}

const std::string& Vocabulary::template_text(const std::string& task) const {
  const auto it = templates_.find(task);
  if (it == templates_.end()) fail(ErrorCode::kInvalidArgument, "no instruction template for task '" + task + "'");
  return it->second;
}

nlohmann::json Vocabulary::manifest() const {
  nlohmann::json ranges;
  ranges["special"] = {special_.begin, special_.end};
  ranges["text"] = {text_.begin, text_.end};
  ranges["motion"] = {motion_.begin, motion_.end};
  ranges["relation"] = {relation_.begin, relation_.end};
  ranges["audio"] = {audio_.begin, audio_.end};
  return {{"kind", "vocabulary"},
          {"size", size()},
          {"ranges", ranges},
          {"specials", special_names()},
          {"words", words_},
          {"template_version", kTemplateVersion},
          {"templates", templates_}};
}

Vocabulary Vocabulary::from_manifest(const nlohmann::json& j) {
  try {
    if (j.at("specials").get<std::vector<std::string>>() != special_names()) {
      fail(ErrorCode::kIncompatible, "vocabulary manifest: special tokens differ");
    }
    const auto& r = j.at("ranges");
    auto width = [&](const char* k) { return r.at(k).at(1).get<int>() - r.at(k).at(0).get<int>(); };
    Vocabulary v(j.at("words").get<std::vector<std::string>>(), width("motion"), width("relation"), width("audio"),
                 j.at("templates").get<std::map<std::string, std::string>>());
    if (v.manifest() != j) fail(ErrorCode::kIncompatible, "vocabulary manifest: ranges inconsistent with contents");
    return v;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("vocabulary manifest: ") + e.what());
  }
}

std::string Vocabulary::hash() const { return fnv1a_hex(manifest().dump()); }

std::map<std::string, std::string> default_templates() {
  return {
      {"l2f", "generate the follower motion from the music , leader motion and relation"},
      {"role_leader", "generate the leader motion for the music"},
      {"role_follower", "generate the follower motion for the music , leader motion and relation"},
      {"complete_leader", "complete the leader motion"},
      {"complete_follower", "complete the follower motion"},
      {"cross_l2f", "predict the follower motion from the leader motion"},
      {"cross_f2l", "predict the leader motion from the follower motion"},
      {"text2motion_leader", "generate the leader motion described by the caption :"},
      {"text2motion_follower", "generate the follower motion described by the caption :"},
      {"motion2text_leader", "describe the leader motion"},
      {"motion2text_follower", "describe the follower motion"},
      {"style", "style :"},
  };
}

Vocabulary default_vocabulary(int k_motion, int k_relation, int k_audio, const std::vector<std::string>& extra_words) {
  std::vector<std::string> words;
  std::map<std::string, bool> seen;
  auto add = [&](const std::string& text) {
    for (const std::string& w : split_words(text)) {
      if (!seen[w]) {
        seen[w] = true;
        words.push_back(w);
      }
    }
  };
  for (const char* p : {",", ".", ":", ";"}) add(p);
  for (const auto& phrase : describe::phrase_set(describe::default_rules(motion::Skeleton::smpl22()))) add(phrase);
  const auto templates = default_templates();
  for (const auto& [task, text] : templates) add(text);
  for (const auto& w : extra_words) add(w);
  return Vocabulary(std::move(words), k_motion, k_relation, k_audio, templates);
}

}  // namespace duet::vocab
