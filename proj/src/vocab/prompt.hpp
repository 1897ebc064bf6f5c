#pragma once

#include "vocab/vocabulary.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace duet::vocab {

enum class SpanKind { kAudio, kLeader, kRelation, kFollower };

/// One marker-delimited modality span holding codebook indices.
struct Segment {
  SpanKind kind = SpanKind::kLeader;
  std::vector<int> indices;
  bool target = false;  // supervised: indices[context:] plus the closing marker
  int context = 0;      // leading indices kept as context inside a target span
  bool operator==(const Segment&) const = default;
};

/// Structured prompt: <sys> text, spans, optional text answer closed by <eos>.
struct Prompt {
  std::vector<int> sys_text;  // text-class ids
  std::vector<Segment> spans;
  bool has_response = false;
  std::vector<int> response;  // text-class ids
  bool response_target = false;
  bool open_tail = false;  // last span has its opener but no content or closer (inference)
  bool operator==(const Prompt&) const = default;
};

struct PromptSequence {
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;  // 1 = supervised target position
  std::string task;
};

PromptSequence assemble(const Vocabulary& v, const Prompt& p, const std::string& task);

/// Structure of an id sequence; with a mask the target flags are recovered as
/// well. Throws kUnbalancedMarker naming the span on a missing closer.
Prompt parse_prompt(const Vocabulary& v, std::span<const int> ids, std::span<const std::uint8_t> mask = {});

struct PromptOptions {
  bool audio = true;
  bool relation = true;
  bool captions = true;  // style metadata and text-motion tasks
};

/// Leader-to-follower layout. With `inference` the prompt ends at the
/// <Follower> opener and the follower list is ignored.
PromptSequence leader_to_follower(const Vocabulary& v, std::span<const int> audio, std::span<const int> leader,
                                  std::span<const int> relation, std::span<const int> follower,
                                  const std::string& style, bool inference, const PromptOptions& opt = {});

/// Contiguous group of windows of one sequence, all tracks aligned.
struct TokenChunk {
  std::string sequence;
  int first_window = 0;
  std::vector<int> audio;     // per frame
  std::vector<int> leader;    // per window
  std::vector<int> follower;  // per window
  std::vector<int> relation;  // per window
  std::vector<std::string> leader_captions;  // per window
  std::vector<std::string> follower_captions;
  std::string style;
};

/// Task families of the alignment stage, in a fixed order.
const std::vector<std::string>& stage1_families();

/// One example per family per chunk (uniform mix); families needing captions
/// are skipped when captions are off. Sub-choices (role, direction) use `rng`.
std::vector<PromptSequence> build_stage1_tasks(const Vocabulary& v, std::span<const TokenChunk> chunks, std::mt19937_64& rng,
                                               const PromptOptions& opt = {});

/// Fine-tuning examples: leader-to-follower with only the chunk's initial
/// relation token.
std::vector<PromptSequence> build_stage2_tasks(const Vocabulary& v, std::span<const TokenChunk> chunks,
                                               const PromptOptions& opt = {});

/// Text-only examples (captions and instructions) for pretraining the base model.
std::vector<PromptSequence> build_text_tasks(const Vocabulary& v, std::span<const TokenChunk> chunks);

}  // namespace duet::vocab
