#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include "support.hpp"
#include "surglab/pipeline.hpp"
#include "surglab/synthgen.hpp"

using namespace surglab;
using namespace surglab::testing;

namespace {

Dataset small_dataset(std::uint64_t seed) {
  GeneratorSpec spec;
  spec.n_interventions = 4;
  spec.activities_mean = 30;
  spec.activities_sd = 5;
  spec.seed = seed;
  return generate_dataset(spec);
}

FoldTrainingSpec quick_spec(const char* mask, bool with_duration) {
  FoldTrainingSpec fs;
  fs.model.hidden = 8;
  fs.model.epochs = 2;
  fs.model.batch_size = 16;
  fs.model.window_n = 3;
  fs.mask = MaskConfig::from_name(mask);
  fs.with_duration = with_duration;
  fs.seed = 9;
  return fs;
}

}  // namespace

TEST(ClassTableTest, SortedUniqueTuples) {
  Vocabulary v;
  const auto a = tuple(v, {"hold", "classic forceps", "muscle"}, {"none", "none", "none"}, 0, 1);
  const auto b = tuple(v, {"cut", "scalpel", "disc"}, {"none", "none", "none"}, 1, 2);
  const ClassTable t({a.labels, b.labels, a.labels});
  ASSERT_EQ(t.size(), 2u);
  EXPECT_LT(t.tuple(0), t.tuple(1));
  EXPECT_EQ(t.find(a.labels), a.labels < b.labels ? std::optional<std::size_t>(0) : std::optional<std::size_t>(1));
  EXPECT_TRUE(t.contains(b.labels));
  auto c = a.labels;
  c[5] = kUnknown;
  EXPECT_FALSE(t.contains(c));
  EXPECT_EQ(t.find(c), std::nullopt);
}

TEST(ClassTableTest, FromTrainingFoldsOnly) {
  Dataset d;
  d.name = "two";
  Intervention x, y;
  x.id = "x";
  y.id = "y";
  x.activities = {tuple(d.vocab, {"hold", "classic forceps", "muscle"}, {"none", "none", "none"}, 0, 1)};
  y.activities = {tuple(d.vocab, {"cut", "scalpel", "disc"}, {"none", "none", "none"}, 0, 1)};
  d.interventions = {x, y};
  const std::size_t train[] = {0};
  const auto t = ClassTable::from(d, train);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_FALSE(t.contains(y.activities[0].labels));
}

TEST(TrainFoldModel, PredictsOnlyKnownClassesAndReportsUnseen) {
  const auto d = small_dataset(1);
  const std::size_t train[] = {0, 1, 2};
  const auto m = train_fold_model(d, train, quick_spec("IS", false), d.interventions[3].id);
  const auto& test = d.interventions[3].activities;
  const auto pred = m.predict(test, d.vocab);
  ASSERT_EQ(pred.size(), test.size());
  for (const auto& p : pred) EXPECT_TRUE(m.classes.contains(p));
  std::size_t unseen = 0;
  for (const auto& a : test) unseen += m.classes.contains(a.labels) ? 0 : 1;
  EXPECT_DOUBLE_EQ(m.unseen_rate(test), static_cast<double>(unseen) / static_cast<double>(test.size()));
  EXPECT_EQ(m.fold, d.interventions[3].id);
  EXPECT_TRUE(m.predict(std::vector<ActivityTuple>{}, d.vocab).empty());
}

TEST(TrainFoldModel, DurationScalingUsesTrainingDurations) {
  const auto d = small_dataset(2);
  const std::size_t train[] = {0, 1};
  const auto m = train_fold_model(d, train, quick_spec("VIS", true));
  double sum = 0.0;
  std::size_t n = 0;
  for (auto k : train)
    for (const auto& a : d.interventions[k].activities) {
      sum += a.duration();
      ++n;
    }
  EXPECT_NEAR(m.params.scaling.mean, sum / static_cast<double>(n), 1e-9);
  EXPECT_EQ(m.params.scaling.index, static_cast<std::int64_t>(FeatureLayout(d.vocab, true).duration_index()));
  EXPECT_GT(m.params.scaling.sd, 0.0);
  EXPECT_EQ(m.params.config.input_dim, FeatureLayout(d.vocab, false).dim() + 1);
}

TEST(TrainFoldModel, Errors) {
  const auto d = small_dataset(3);
  EXPECT_THROW(train_fold_model(d, std::vector<std::size_t>{}, quick_spec("IS", false)), ValidationError);
}

TEST(ModelArtifact, RoundTripPreservesPredictions) {
  const auto d = small_dataset(4);
  const std::size_t train[] = {1, 2, 3};
  const auto m = train_fold_model(d, train, quick_spec("VS", true), d.interventions[0].id);
  const auto path = scratch_dir("artifact") / "nested" / "model.bin";
  save_model(m, d.vocab, path);
  const auto back = load_model(path, d.vocab);
  EXPECT_EQ(back.params.values, m.params.values);
  EXPECT_EQ(back.params.adam_m, m.params.adam_m);
  EXPECT_EQ(back.params.adam_v, m.params.adam_v);
  EXPECT_EQ(back.params.adam_step, m.params.adam_step);
  EXPECT_EQ(back.classes.tuples(), m.classes.tuples());
  EXPECT_EQ(back.mask, m.mask);
  EXPECT_EQ(back.with_duration, m.with_duration);
  EXPECT_EQ(back.fold, m.fold);
  EXPECT_EQ(back.dataset, m.dataset);
  EXPECT_EQ(back.params.config.window_n, m.params.config.window_n);
  const auto& test = d.interventions[0].activities;
  EXPECT_EQ(back.predict(test, d.vocab), m.predict(test, d.vocab));
}

TEST(ModelArtifact, VocabularyMismatchIsError) {
  const auto d = small_dataset(5);
  const std::size_t train[] = {0, 1};
  const auto m = train_fold_model(d, train, quick_spec("I", false));
  const auto path = scratch_dir("artifact_vocab") / "model.bin";
  save_model(m, d.vocab, path);
  auto other = d.vocab;
  other.intern(ElementKind::Structure, "a structure never seen");
  EXPECT_THROW(load_model(path, other), ValidationError);
}

TEST(ModelArtifact, CorruptFilesAreErrors) {
  const auto dir = scratch_dir("artifact_bad");
  Vocabulary v;
  EXPECT_THROW(load_model(dir / "missing.bin", v), Error);
  {
    std::ofstream os(dir / "junk.bin", std::ios::binary);
    os << "not a model at all";
  }
  EXPECT_THROW(load_model(dir / "junk.bin", v), Error);

  const auto d = small_dataset(6);
  const std::size_t train[] = {0, 1};
  const auto m = train_fold_model(d, train, quick_spec("S", false));
  save_model(m, d.vocab, dir / "ok.bin");
  const auto size = std::filesystem::file_size(dir / "ok.bin");
  std::filesystem::resize_file(dir / "ok.bin", size - 8);
  EXPECT_THROW(load_model(dir / "ok.bin", d.vocab), Error);
}
