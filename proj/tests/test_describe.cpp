#include "describe/describer.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace duet;
using duet::describe::Caption;

namespace {

const motion::Skeleton& skel() {
  static const motion::Skeleton sk = motion::Skeleton::smpl22();
  return sk;
}

// 20-frame window from a pose generator, canonicalized like the tokenizer does.
template <class F>
motion::MotionWindow window_of(F pose_at) {
  std::vector<motion::JointMat> p;
  for (int i = 0; i < 20; ++i) p.push_back(pose_at(i / 19.0));
  const auto frames = motion::compute_features(p, skel());
  return motion::canonicalize_window(frames, skel());
}

Caption caption(const motion::MotionWindow& w) {
  const auto rules = describe::default_rules(skel());
  return describe::describe_window(w, skel(), rules);
}

bool has(const Caption& c, const std::string& phrase) {
  return std::find(c.phrases.begin(), c.phrases.end(), phrase) != c.phrases.end();
}

}  // namespace

TEST_CASE("rule set contract") {
  const auto rules = describe::default_rules(skel());
  CHECK(rules.size() >= 24);
  for (std::size_t i = 1; i < rules.size(); ++i) CHECK(rules[i].id > rules[i - 1].id);
  CHECK(describe::phrase_set(rules).back() == "holds position");
}

TEST_CASE("static window holds position") {
  auto w = window_of([](double) { return fixtures::posed(skel(), 1.0, 2.0, 0.7); });
  const Caption c = caption(w);
  CHECK(c.phrases == std::vector<std::string>{"holds position"});
  CHECK(c.text() == "holds position");
}

TEST_CASE("raised left hand") {
  const auto& sk = skel();
  auto w = window_of([&](double s) {
    auto p = fixtures::posed(sk, 0.0, 0.0, 0.0);
    // wrist rises from shoulder height to 0.5 m above it
    p(sk.l_wrist, 1) = p(sk.l_shoulder, 1) + 0.5 * s;
    return p;
  });
  const Caption c = caption(w);
  CHECK(has(c, "left hand raises above the shoulder"));
  CHECK_FALSE(has(c, "right hand raises above the shoulder"));
  CHECK_FALSE(has(c, "left hand lowers"));
}

TEST_CASE("forward step, turns and speed qualifiers") {
  const auto& sk = skel();
  CHECK(has(caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, 0.5 * s, 0.0); })), "steps forward"));
  // forward is the dancer's own facing direction
  auto turned = window_of([&](double s) { return fixtures::posed(sk, 0.5 * s, 0.0, M_PI / 2); });
  CHECK(has(caption(turned), "steps forward"));
  CHECK_FALSE(has(caption(turned), "steps to the left"));
  CHECK(has(caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, -0.5 * s, 0.0); })), "steps backward"));
  CHECK(has(caption(window_of([&](double s) { return fixtures::posed(sk, 0.5 * s, 0.0, 0.0); })), "steps to the left"));

  const double q = M_PI / 4;
  const Caption ccw = caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, 0.0, q * s); }));
  CHECK(has(ccw, "turns counterclockwise"));
  CHECK_FALSE(has(ccw, "turns clockwise"));
  CHECK(has(caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, 0.0, -q * s); })), "turns clockwise"));
  CHECK_FALSE(has(caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, 0.0, 0.4 * s); })),
                  "turns counterclockwise"));

  // 19 frames at 20 fps: 2.85 m covered at 3 m/s
  const Caption fast = caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, 2.85 * s, 0.0); }));
  CHECK(has(fast, "moves quickly"));
  const Caption slow = caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, 0.19 * s, 0.0); }));
  CHECK(has(slow, "moves slowly"));
  CHECK_FALSE(has(slow, "moves quickly"));
}

TEST_CASE("triggers are monotone in displacement and deterministic") {
  const auto& sk = skel();
  bool seen = false;
  for (int k = 0; k <= 40; ++k) {
    const double dist = 0.05 * k;
    const bool hit = has(caption(window_of([&](double s) { return fixtures::posed(sk, 0.0, dist * s, 0.0); })), "steps forward");
    if (seen) CHECK(hit);
    seen = seen || hit;
    if (dist <= 0.2) CHECK_FALSE(hit);
  }
  CHECK(seen);
  std::mt19937_64 rng(3);
  auto track = motion::compute_features(fixtures::random_track(sk, 20, rng), sk);
  auto w = motion::canonicalize_window(track, sk);
  CHECK(caption(w).phrases == caption(w).phrases);
}

TEST_CASE("caption corpus round trip") {
  const auto path = std::filesystem::temp_directory_path() / "duet_captions.tsv";
  std::vector<describe::CaptionRecord> recs{{"seq_001", 0, "holds position"}, {"seq_001", 1, "steps forward, moves slowly"}};
  describe::write_caption_corpus(path, recs);
  const auto back = describe::read_caption_corpus(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].window == 1);
  CHECK(back[1].text == recs[1].text);
  std::filesystem::remove(path);
}
