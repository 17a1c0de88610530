#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "bmssl/ablation.hpp"
#include "bmssl/error.hpp"
#include "bmssl/gradcheck.hpp"

using namespace bmssl;

namespace {

const GradcheckReport& tiny_report() {
  static const GradcheckReport report = run_gradcheck({});
  return report;
}

}  // namespace

TEST(Gradcheck, TinySuitePasses) {
  const GradcheckReport& r = tiny_report();
  for (const auto& e : r.entries) {
    EXPECT_TRUE(e.passed) << e.check << " " << e.max_relative_error;
    EXPECT_LT(e.max_relative_error, 1e-5) << e.check;
    EXPECT_GT(e.coordinates, 0u) << e.check;
  }
  EXPECT_TRUE(r.all_passed());
}

TEST(Gradcheck, EachOpExactlyOnce) {
  std::multiset<std::string> names;
  std::size_t ops = 0;
  for (const auto& e : tiny_report().entries) {
    names.insert(e.check);
    if (e.check.rfind("op:", 0) == 0) ++ops;
  }
  EXPECT_EQ(ops, 21u);
  for (const auto& n : names) EXPECT_EQ(names.count(n), 1u) << n;
  for (const char* n : {"op:matmul", "op:softmax", "op:log-softmax", "op:l2-normalize", "op:scatter-add",
                        "loss:total", "meta:standard", "meta:bootstrapped"})
    EXPECT_EQ(names.count(n), 1u) << n;
  EXPECT_EQ(tiny_report().entries.back().check, "meta:bootstrapped");
}

TEST(Gradcheck, CorruptedGradientFails) {
  GradcheckOptions opt;
  opt.hook = [](const std::string& check, LeafValues& g) {
    if (check == "meta:standard") g.begin()->second.data()[0] += 1.0;
  };
  const GradcheckReport r = run_gradcheck(opt);
  EXPECT_FALSE(r.all_passed());
  for (const auto& e : r.entries) EXPECT_EQ(e.passed, e.check != "meta:standard") << e.check;
}

TEST(Gradcheck, CsvHasOneRowPerEntry) {
  std::ostringstream out;
  write_gradcheck_csv(out, tiny_report());
  const std::string s = out.str();
  std::size_t lines = 0;
  for (char ch : s) lines += ch == '\n' ? 1 : 0;
  EXPECT_EQ(lines, tiny_report().entries.size() + 1);
  EXPECT_EQ(s.rfind("check,", 0), 0u);
}

TEST(Gradcheck, ScaleNames) {
  EXPECT_EQ(parse_gradcheck_scale("tiny"), GradcheckScale::Tiny);
  EXPECT_EQ(parse_gradcheck_scale("small"), GradcheckScale::Small);
  EXPECT_THROW(parse_gradcheck_scale("huge"), ValidationError);
}

TEST(Ablation, GridContents) {
  RunConfig base;
  base.mode = RunMode::MetaSsl;
  const auto delta = ablation_grid(AblationKind::Delta, base);
  ASSERT_EQ(delta.size(), 5u);
  const std::size_t deltas[] = {1, 5, 10, 15, 20};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(delta[i].config.delta, deltas[i]);
    EXPECT_EQ(delta[i].config.mode, RunMode::Bmssl);
    EXPECT_EQ(delta[i].setting, "delta=" + std::to_string(deltas[i]));
  }
  const auto aug = ablation_grid(AblationKind::Augmentation, base);
  ASSERT_EQ(aug.size(), 4u);
  EXPECT_EQ(aug[0].setting, "A1");
  EXPECT_EQ(aug[3].config.augmentation, AugmentLevelId::A4);
  for (const auto& c : aug) EXPECT_EQ(c.config.mode, RunMode::MetaSsl);
  const auto structure = ablation_grid(AblationKind::Structure, base);
  ASSERT_EQ(structure.size(), 3u);
  EXPECT_EQ(structure[0].config.mode, RunMode::Scratch);
  EXPECT_EQ(structure[1].config.mode, RunMode::MetricOnly);
  EXPECT_EQ(structure[2].config.mode, RunMode::Bmssl);
  EXPECT_EQ(parse_ablation("structure"), AblationKind::Structure);
  EXPECT_THROW(parse_ablation("depth"), ValidationError);
}

TEST(Ablation, CsvLayout) {
  std::vector<AblationOutcome> rows(2);
  rows[0] = {"delta=1", RunMode::Bmssl, 0.5, 10, 2.5};
  rows[1] = {"delta=5", RunMode::Bmssl, 0.75, 10, std::nullopt};
  std::ostringstream out;
  write_ablation_csv(out, AblationKind::Delta, rows);
  EXPECT_EQ(out.str(), std::string(kAblationHeader) + "\ndelta,delta=1,bmssl,0.5,10,2.5\ndelta,delta=5,bmssl,0.75,10,\n");
}

TEST(Ablation, SmallStructureRun) {
  RunConfig base;
  base.meta_steps = 2;
  base.hidden = 8;
  base.projection = 4;
  base.eval_episodes = 4;
  base.eval_query = 3;
  base.class_count = 8;
  base.per_class = 8;
  base.record_time = false;
  std::size_t seen = 0;
  const auto rows = run_ablation(AblationKind::Structure, base, [&](const AblationOutcome&) { ++seen; });
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(seen, 3u);
  EXPECT_EQ(rows[0].meta_steps, 0u);
  EXPECT_EQ(rows[2].meta_steps, 2u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.steps_per_second.has_value());
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);
  }
}
