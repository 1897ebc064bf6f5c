#pragma once

#include "json.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace duet::vocab {

enum class TokenClass { kSpecial, kText, kMotion, kRelation, kAudio };

enum Special : int {
  kPad = 0,
  kSys,
  kEos,
  kUnk,
  kAudioOpen,
  kAudioClose,
  kLeaderOpen,
  kLeaderClose,
  kRelationOpen,
  kRelationClose,
  kFollowerOpen,
  kFollowerClose,
  kSpecialCount
};

struct Range {
  int begin = 0;
  int end = 0;  // exclusive
  [[nodiscard]] int size() const { return end - begin; }
  [[nodiscard]] bool contains(int id) const { return id >= begin && id < end; }
};

/// Lower-cased words; ',', '.', ':' and ';' become separate tokens.
std::vector<std::string> split_words(const std::string& text);

/// Id layout: [specials][text words][motion K_m][relation K_r][audio K_a].
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, int k_motion, int k_relation, int k_audio,
             std::map<std::string, std::string> templates);

  [[nodiscard]] int size() const { return audio_.end; }
  [[nodiscard]] Range range(TokenClass c) const;
  [[nodiscard]] TokenClass classify(int id) const;

  [[nodiscard]] int motion_id(int k) const { return to_id(motion_, k, "motion"); }
  [[nodiscard]] int relation_id(int k) const { return to_id(relation_, k, "relation"); }
  [[nodiscard]] int audio_id(int k) const { return to_id(audio_, k, "audio"); }
  /// Codebook index of a token id, rejecting ids of another class.
  [[nodiscard]] int index_of(int id, TokenClass expected) const;

  [[nodiscard]] int word_id(const std::string& w) const;  // kUnk when unknown
  [[nodiscard]] bool has_word(const std::string& w) const { return word_index_.count(w) != 0; }
  [[nodiscard]] std::string token_string(int id) const;
  [[nodiscard]] std::vector<int> encode_text(const std::string& text) const;
  [[nodiscard]] std::string decode_text(std::span<const int> ids) const;

  [[nodiscard]] const std::map<std::string, std::string>& templates() const { return templates_; }
  [[nodiscard]] const std::string& template_text(const std::string& task) const;
  [[nodiscard]] const std::vector<std::string>& words() const { return words_; }

  [[nodiscard]] nlohmann::json manifest() const;
  static Vocabulary from_manifest(const nlohmann::json& j);
  /// Hash of the manifest; checkpoints record it for compatibility checks.
  [[nodiscard]] std::string hash() const;

 private:
  int to_id(const Range& r, int k, const char* what) const;

  std::vector<std::string> words_;
  std::map<std::string, int> word_index_;
  std::map<std::string, std::string> templates_;
  Range special_, text_, motion_, relation_, audio_;
};

const std::vector<std::string>& special_names();

/// Instruction templates, keyed by task tag.
std::map<std::string, std::string> default_templates();
inline constexpr int kTemplateVersion = 1;

/// Text vocabulary from the describer phrases, the templates and any extra
/// words (style labels), in first-seen order.
Vocabulary default_vocabulary(int k_motion, int k_relation, int k_audio, const std::vector<std::string>& extra_words);

}  // namespace duet::vocab
