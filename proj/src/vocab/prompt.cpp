#include "vocab/prompt.hpp"

#include "common/error.hpp"

#include <array>

namespace duet::vocab {

namespace {

struct Markers {
  int open, close;
  TokenClass cls;
  const char* name;
};

Markers markers(SpanKind k) {
  switch (k) {
    case SpanKind::kAudio: return {kAudioOpen, kAudioClose, TokenClass::kAudio, "Audio"};
    case SpanKind::kLeader: return {kLeaderOpen, kLeaderClose, TokenClass::kMotion, "Leader"};
    case SpanKind::kRelation: return {kRelationOpen, kRelationClose, TokenClass::kRelation, "Relation"};
    case SpanKind::kFollower: return {kFollowerOpen, kFollowerClose, TokenClass::kMotion, "Follower"};
  }
  return {};
}

bool opener_kind(int id, SpanKind* out) {
  for (SpanKind k : {SpanKind::kAudio, SpanKind::kLeader, SpanKind::kRelation, SpanKind::kFollower}) {
    if (markers(k).open == id) {
      *out = k;
      return true;
    }
  }
  return false;
}

int to_id(const Vocabulary& v, TokenClass c, int k) {
  switch (c) {
    case TokenClass::kMotion: return v.motion_id(k);
    case TokenClass::kRelation: return v.relation_id(k);
    case TokenClass::kAudio: return v.audio_id(k);
    default: break;
  }
  fail(ErrorCode::kInternal, "span class without codebook");
}

void check_text(const Vocabulary& v, std::span<const int> ids) {
  for (int id : ids) {
    if (v.classify(id) != TokenClass::kText && id != kUnk) fail(ErrorCode::kInvalidArgument, "non-text id inside a text field");
  }
}

}  // namespace

PromptSequence assemble(const Vocabulary& v, const Prompt& p, const std::string& task) {
  PromptSequence s;
  s.task = task;
  auto put = [&](int id, bool m) {
    s.ids.push_back(id);
    s.mask.push_back(m ? 1 : 0);
  };
  check_text(v, p.sys_text);
  put(kSys, false);
  for (int id : p.sys_text) put(id, false);
  for (std::size_t i = 0; i < p.spans.size(); ++i) {
    const Segment& seg = p.spans[i];
    const Markers m = markers(seg.kind);
    const bool open = p.open_tail && i + 1 == p.spans.size();
    if (open && (!seg.indices.empty() || seg.target)) {
      fail(ErrorCode::kInvalidArgument, "open tail span must be empty and unsupervised");
    }
    if (seg.context < 0 || seg.context > static_cast<int>(seg.indices.size())) {
      fail(ErrorCode::kInvalidArgument, "span context length out of range");
    }
    put(m.open, false);
    if (open) break;
    for (std::size_t j = 0; j < seg.indices.size(); ++j) {
      put(to_id(v, m.cls, seg.indices[j]), seg.target && static_cast<int>(j) >= seg.context);
    }
    put(m.close, seg.target);
  }
  if (p.has_response) {
    if (p.open_tail) fail(ErrorCode::kInvalidArgument, "a text response cannot follow an open span");
    check_text(v, p.response);
    for (int id : p.response) put(id, p.response_target);
    put(kEos, p.response_target);
  }
  return s;
}

Prompt parse_prompt(const Vocabulary& v, std::span<const int> ids, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != ids.size()) fail(ErrorCode::kInvalidArgument, "mask length differs from token length");
  auto masked = [&](std::size_t i) { return !mask.empty() && mask[i] != 0; };
  Prompt p;
  std::size_t i = 0;
  if (ids.empty() || ids[0] != kSys) fail(ErrorCode::kFormat, "prompt must start with <sys>");
  ++i;
  while (i < ids.size() && (v.classify(ids[i]) == TokenClass::kText || ids[i] == kUnk)) p.sys_text.push_back(ids[i++]);
  SpanKind kind{};
  while (i < ids.size() && opener_kind(ids[i], &kind)) {
    const Markers m = markers(kind);
    Segment seg;
    seg.kind = kind;
    ++i;
    if (i == ids.size() && kind == SpanKind::kFollower) {
      p.spans.push_back(seg);
      p.open_tail = true;
      return p;
    }
    const std::size_t begin = i;
    while (i < ids.size() && ids[i] != m.close) {
      if (v.classify(ids[i]) != m.cls) {
        fail(ErrorCode::kUnbalancedMarker, std::string("<") + m.name + "> span: missing </" + m.name + ">");
      }
      seg.indices.push_back(v.index_of(ids[i], m.cls));
      ++i;
    }
    if (i == ids.size()) fail(ErrorCode::kUnbalancedMarker, std::string("<") + m.name + "> span: missing </" + m.name + ">");
    seg.target = masked(i);
    if (seg.target) {
      std::size_t j = begin;
      while (j < i && !masked(j)) ++j;
      seg.context = static_cast<int>(j - begin);
    }
    ++i;
    p.spans.push_back(std::move(seg));
  }
  if (i < ids.size()) {
    p.has_response = true;
    while (i < ids.size() && ids[i] != kEos) {
      if (v.classify(ids[i]) != TokenClass::kText && ids[i] != kUnk) {
        fail(ErrorCode::kFormat, "unexpected token '" + v.token_string(ids[i]) + "' at position " + std::to_string(i));
      }
      p.response.push_back(ids[i++]);
    }
    if (i == ids.size()) fail(ErrorCode::kUnbalancedMarker, "text response: missing <eos>");
    p.response_target = masked(i);
    if (++i != ids.size()) fail(ErrorCode::kFormat, "tokens after <eos>");
  }
  return p;
}

namespace {

std::vector<int> sys_text(const Vocabulary& v, const std::string& task, const std::string& style, const std::string& caption,
                          const PromptOptions& opt) {
  std::string text = v.template_text(task);
  if (opt.captions && !style.empty()) text += " " + v.template_text("style") + " " + style;
  if (!caption.empty()) text += " " + caption;
  return v.encode_text(text);
}

std::string join_captions(std::span<const std::string> caps) {
  std::string s;
  for (std::size_t i = 0; i < caps.size(); ++i) s += (i ? " ; " : "") + caps[i];
  return s;
}

}  // namespace

PromptSequence leader_to_follower(const Vocabulary& v, std::span<const int> audio, std::span<const int> leader,
                                  std::span<const int> relation, std::span<const int> follower, const std::string& style,
                                  bool inference, const PromptOptions& opt) {
  Prompt p;
  p.sys_text = sys_text(v, "l2f", style, "", opt);
  if (opt.audio) p.spans.push_back({SpanKind::kAudio, {audio.begin(), audio.end()}});
  p.spans.push_back({SpanKind::kLeader, {leader.begin(), leader.end()}});
  if (opt.relation) p.spans.push_back({SpanKind::kRelation, {relation.begin(), relation.end()}});
  if (inference) {
    p.spans.push_back({SpanKind::kFollower, {}});
    p.open_tail = true;
  } else {
    p.spans.push_back({SpanKind::kFollower, {follower.begin(), follower.end()}, true, 0});
  }
  return assemble(v, p, "l2f");
}

const std::vector<std::string>& stage1_families() {
  static const std::vector<std::string> f = {"role_generation", "motion_completion", "cross_role", "text_to_motion",
                                             "motion_to_text"};
  return f;
}

std::vector<PromptSequence> build_stage1_tasks(const Vocabulary& v, std::span<const TokenChunk> chunks, std::mt19937_64& rng,
                                               const PromptOptions& opt) {
  std::vector<PromptSequence> out;
  std::bernoulli_distribution coin(0.5);
  for (const TokenChunk& c : chunks) {
    for (const std::string& family : stage1_families()) {
      const bool text_task = family == "text_to_motion" || family == "motion_to_text";
      if (text_task && !opt.captions) continue;
      const bool lead = coin(rng);
      const std::string role = lead ? "leader" : "follower";
      const SpanKind kind = lead ? SpanKind::kLeader : SpanKind::kFollower;
      const std::vector<int>& track = lead ? c.leader : c.follower;
      const std::vector<std::string>& caps = lead ? c.leader_captions : c.follower_captions;
      Prompt p;
      std::string tag;
      if (family == "role_generation") {
        if (lead) {
          tag = "role_leader";
          p.sys_text = sys_text(v, tag, c.style, "", opt);
          if (opt.audio) p.spans.push_back({SpanKind::kAudio, c.audio});
          p.spans.push_back({SpanKind::kLeader, c.leader, true, 0});
        } else {
          tag = "role_follower";
          p.sys_text = sys_text(v, tag, c.style, "", opt);
          if (opt.audio) p.spans.push_back({SpanKind::kAudio, c.audio});
          p.spans.push_back({SpanKind::kLeader, c.leader});
          if (opt.relation) p.spans.push_back({SpanKind::kRelation, c.relation});
          p.spans.push_back({SpanKind::kFollower, c.follower, true, 0});
        }
      } else if (family == "motion_completion") {
        tag = "complete_" + role;
        p.sys_text = sys_text(v, tag, c.style, "", opt);
        p.spans.push_back({kind, track, true, static_cast<int>(track.size() / 2)});
      } else if (family == "cross_role") {
        tag = lead ? "cross_f2l" : "cross_l2f";
        p.sys_text = sys_text(v, tag, c.style, "", opt);
        const SpanKind src = lead ? SpanKind::kFollower : SpanKind::kLeader;
        p.spans.push_back({src, lead ? c.follower : c.leader});
        p.spans.push_back({kind, track, true, 0});
      } else if (family == "text_to_motion") {
        tag = "text2motion_" + role;
        p.sys_text = sys_text(v, tag, c.style, join_captions(caps), opt);
        p.spans.push_back({kind, track, true, 0});
      } else {
        tag = "motion2text_" + role;
        p.sys_text = sys_text(v, tag, c.style, "", opt);
        p.spans.push_back({kind, track});
        p.has_response = true;
        p.response = v.encode_text(join_captions(caps));
        p.response_target = true;
      }
      out.push_back(assemble(v, p, tag));
    }
  }
  return out;
}

std::vector<PromptSequence> build_stage2_tasks(const Vocabulary& v, std::span<const TokenChunk> chunks,
                                               const PromptOptions& opt) {
  std::vector<PromptSequence> out;
  for (const TokenChunk& c : chunks) {
    const std::span<const int> initial(c.relation.data(), c.relation.empty() ? 0 : 1);
    out.push_back(leader_to_follower(v, c.audio, c.leader, initial, c.follower, c.style, false, opt));
  }
  return out;
}

std::vector<PromptSequence> build_text_tasks(const Vocabulary& v, std::span<const TokenChunk> chunks) {
  std::vector<PromptSequence> out;
  for (const TokenChunk& c : chunks) {
    for (const auto* caps : {&c.leader_captions, &c.follower_captions}) {
      Prompt p;
      p.has_response = true;
      p.response = v.encode_text(join_captions(*caps));
      p.response_target = true;
      out.push_back(assemble(v, p, "text"));
    }
  }
  for (const auto& [task, text] : v.templates()) {
    Prompt p;
    p.has_response = true;
    p.response = v.encode_text(text);
    p.response_target = true;
    out.push_back(assemble(v, p, "text"));
  }
  return out;
}

}  // namespace duet::vocab
