#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "support.hpp"
#include "surglab/corruption.hpp"
#include "surglab/experiment.hpp"
#include "surglab/synthgen.hpp"

using namespace surglab;
using namespace surglab::testing;

namespace {

Dataset one_intervention(std::vector<ActivityTuple> acts, Vocabulary v) {
  Dataset d;
  d.name = "d";
  d.vocab = std::move(v);
  Intervention iv;
  iv.id = "a";
  iv.activities = std::move(acts);
  d.interventions.push_back(std::move(iv));
  return d;
}

// n abutting tuples whose labels cycle through the data labels of each kind.
std::vector<ActivityTuple> cycling_sequence(const Vocabulary& v, std::size_t n) {
  std::vector<ActivityTuple> seq(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < kPositions; ++p)
      seq[i].labels[p] = static_cast<LabelId>(kFirstDataLabel + (i + p) % v.data_size(kind_of(p)));
    seq[i].t_start = static_cast<double>(i);
    seq[i].t_end = static_cast<double>(i + 1);
  }
  return seq;
}

Vocabulary letters(std::size_t n) {
  Vocabulary v;
  for (auto kind : kAllKinds)
    for (std::size_t k = 0; k < n; ++k) v.intern(kind, std::string(1, static_cast<char>('a' + k)));
  return v;
}

std::size_t hamming(const std::vector<ActivityTuple>& a, const std::vector<ActivityTuple>& b, std::size_t p) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i].labels[p] != b[i].labels[p] ? 1 : 0;
  return n;
}

// Visible time per (position, label), `none` excluded.
std::map<std::pair<std::size_t, LabelId>, double> label_mass(const std::vector<ActivityTuple>& seq,
                                                             const MaskConfig& m) {
  std::map<std::pair<std::size_t, LabelId>, double> out;
  for (const auto& t : seq)
    for (std::size_t p = 0; p < kPositions; ++p)
      if (m.visible(p) && t.labels[p] != kNone) out[{p, t.labels[p]}] += t.duration();
  return out;
}

}  // namespace

TEST(FrequencyTableTest, DurationShares) {
  Vocabulary v;
  const std::vector seq = {tuple(v, {"hold", "forceps", "disc"}, {"cut", "scalpel", "disc"}, 0, 10),
                           tuple(v, {"cut", "forceps", "disc"}, {"cut", "scalpel", "disc"}, 10, 40)};
  const auto f = build_frequency_table(one_intervention(seq, v));
  EXPECT_DOUBLE_EQ(f.probability(0, v.id(ElementKind::Verb, "hold")), 0.25);
  EXPECT_DOUBLE_EQ(f.probability(0, v.id(ElementKind::Verb, "cut")), 0.75);
  EXPECT_DOUBLE_EQ(f.probability(1, v.id(ElementKind::Instrument, "forceps")), 1.0);
  EXPECT_DOUBLE_EQ(f.mass(3, v.id(ElementKind::Verb, "cut")), 40.0);
  EXPECT_EQ(f.top_two(0), (std::vector<LabelId>{v.id(ElementKind::Verb, "cut"), v.id(ElementKind::Verb, "hold")}));
  EXPECT_EQ(f.top_two(1).size(), 1u);
  EXPECT_THROW(build_frequency_table(Dataset{}), ValidationError);
}

TEST(FrequencyTableTest, PresetProbabilitiesSumToOne) {
  const auto d = generate_dataset(preset_spec("LDH.L", 1));
  const auto f = build_frequency_table(d);
  for (std::size_t p = 0; p < kPositions; ++p) {
    double sum = 0.0;
    for (std::size_t id = 0; id < f.labels(p); ++id) {
      const double q = f.probability(p, static_cast<LabelId>(id));
      EXPECT_GE(q, 0.0);
      sum += q;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9) << "position " << p;
  }
}

TEST(CorruptedCount, NearestWithHalvesUp) {
  EXPECT_EQ(corrupted_count(0.25, 10000), 2500u);
  EXPECT_EQ(corrupted_count(0.25, 10), 3u);
  EXPECT_EQ(corrupted_count(0.5, 3), 2u);
  EXPECT_EQ(corrupted_count(0.05, 29), 1u);
  EXPECT_EQ(corrupted_count(0.05, 9), 0u);
  EXPECT_EQ(corrupted_count(1.0, 7), 7u);
  EXPECT_EQ(corrupted_count(0.0, 7), 0u);
}

TEST(Corrupt, RateZeroIsIdentity) {
  Rng rng(31);
  const auto d = random_dataset(rng, 3);
  const auto f = build_frequency_table(d);
  for (auto kind : {NoiseKind::Uniform, NoiseKind::Frequency, NoiseKind::Pairwise, NoiseKind::NoSignal}) {
    const auto& seq = d.interventions[0].activities;
    EXPECT_EQ(corrupt(seq, {kind, 0.0, 5, 9}, d.vocab, &f), seq);
  }
}

TEST(Corrupt, FullNoSignalBlanksEverything) {
  Rng rng(32);
  const auto d = random_dataset(rng, 1);
  const auto& seq = d.interventions[0].activities;
  const auto out = corrupt(seq, {NoiseKind::NoSignal, 1.0, 1, 4}, d.vocab);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (auto l : out[i].labels) EXPECT_EQ(l, kNone);
    EXPECT_EQ(out[i].t_start, seq[i].t_start);
    EXPECT_EQ(out[i].t_end, seq[i].t_end);
  }
}

TEST(Corrupt, OnlyAlternativeLabelIsUsed) {
  Vocabulary v;
  v.intern(ElementKind::Verb, "cut");
  v.intern(ElementKind::Verb, "coagulate");
  v.intern(ElementKind::Instrument, "needle-holders");
  v.intern(ElementKind::Instrument, "classic forceps");
  v.intern(ElementKind::Structure, "ligament");
  v.intern(ElementKind::Structure, "fascia");
  const std::vector seq = {tuple(v, {"cut", "needle-holders", "ligament"}, {"cut", "needle-holders", "ligament"}, 0, 5)};
  const auto out = corrupt(seq, {NoiseKind::Uniform, 1.0, 1, 3}, v);
  EXPECT_EQ(out[0].at(Hand::Right, ElementKind::Verb), v.id(ElementKind::Verb, "coagulate"));
  EXPECT_EQ(out[0].at(Hand::Left, ElementKind::Instrument), v.id(ElementKind::Instrument, "classic forceps"));
  EXPECT_EQ(out[0].at(Hand::Right, ElementKind::Structure), v.id(ElementKind::Structure, "fascia"));
}

TEST(Corrupt, Errors) {
  auto v = letters(1);
  const auto seq = cycling_sequence(v, 4);
  EXPECT_THROW(corrupt(seq, {NoiseKind::Uniform, 0.5, 1, 1}, v), ValidationError);
  auto v2 = letters(3);
  const auto seq2 = cycling_sequence(v2, 4);
  EXPECT_THROW(corrupt(seq2, {NoiseKind::Frequency, 0.5, 1, 1}, v2), ValidationError);
  EXPECT_THROW(corrupt(seq2, {NoiseKind::Pairwise, 0.5, 1, 1}, v2), ValidationError);
  EXPECT_THROW(corrupt(seq2, {NoiseKind::Uniform, 1.5, 1, 1}, v2), ValidationError);
  EXPECT_NO_THROW(corrupt(seq, {NoiseKind::NoSignal, 0.5, 1, 1}, v));
}

TEST(Corrupt, UniformChangesExactlyTheSelectedCount) {
  auto v = letters(5);
  const auto seq = cycling_sequence(v, 10000);
  const auto out = corrupt(seq, {NoiseKind::Uniform, 0.25, 1, 77}, v);
  for (std::size_t p = 0; p < kPositions; ++p) EXPECT_EQ(hamming(seq, out, p), 2500u) << p;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    ASSERT_EQ(out[i].t_start, seq[i].t_start);
    ASSERT_EQ(out[i].t_end, seq[i].t_end);
    for (auto l : out[i].labels) ASSERT_GE(l, kFirstDataLabel);
  }
}

TEST(Corrupt, DeterministicGivenSeed) {
  auto v = letters(4);
  const auto seq = cycling_sequence(v, 300);
  const NoiseSpec a{NoiseKind::Uniform, 0.3, 1, 5};
  EXPECT_EQ(corrupt(seq, a, v), corrupt(seq, a, v));
  NoiseSpec b = a;
  b.seed = 6;
  EXPECT_NE(corrupt(seq, a, v), corrupt(seq, b, v));
}

TEST(Corrupt, FrequencyReplacementFollowsDurationTable) {
  auto v = letters(4);
  // Table masses a:1 b:2 c:3 d:4 at every position.
  std::vector<ActivityTuple> table_seq;
  double t = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    ActivityTuple a;
    a.labels.fill(static_cast<LabelId>(kFirstDataLabel + k));
    a.t_start = t;
    a.t_end = t + static_cast<double>(k + 1);
    t = a.t_end;
    table_seq.push_back(a);
  }
  const auto f = build_frequency_table(one_intervention(table_seq, v));

  std::vector<ActivityTuple> seq(100000);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    seq[i].labels.fill(kFirstDataLabel);  // label "a" everywhere
    seq[i].labels[3] = kNone;
    seq[i].t_start = static_cast<double>(i);
    seq[i].t_end = static_cast<double>(i + 1);
  }
  const auto out = corrupt(seq, {NoiseKind::Frequency, 1.0, 1, 123}, v, &f);
  for (std::size_t p : {0u, 3u}) {
    std::map<LabelId, double> counts;
    for (const auto& a : out) counts[a.labels[p]] += 1.0;
    // Renormalised table without the original label.
    std::map<LabelId, double> want;
    double total = 0.0;
    for (LabelId id = kFirstDataLabel; id < kFirstDataLabel + 4; ++id)
      if (id != seq[0].labels[p]) total += f.mass(p, id);
    for (LabelId id = kFirstDataLabel; id < kFirstDataLabel + 4; ++id)
      if (id != seq[0].labels[p]) want[id] = f.mass(p, id) / total;
    double tv = 0.0;
    for (LabelId id = 0; id < kFirstDataLabel + 4; ++id)
      tv += std::abs(counts[id] / static_cast<double>(out.size()) - want[id]);
    EXPECT_LT(0.5 * tv, 0.02) << "position " << p;
    EXPECT_EQ(counts[seq[0].labels[p]], 0.0);
  }
}

TEST(Corrupt, PairwiseSwapsTopTwoOnly) {
  Rng rng(33);
  const auto d = generate_dataset(preset_spec("LDH.R", 1));
  const auto f = build_frequency_table(d);
  for (const auto& iv : d.interventions) {
    const auto& seq = iv.activities;
    const auto out = corrupt(seq, {NoiseKind::Pairwise, 0.5, 1, rng()}, d.vocab, &f);
    for (std::size_t p = 0; p < kPositions; ++p) {
      const auto pair = f.top_two(p);
      ASSERT_EQ(pair.size(), 2u);
      EXPECT_LE(hamming(seq, out, p), corrupted_count(0.5, seq.size()));
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (out[i].labels[p] == seq[i].labels[p]) continue;
        const bool in_pair = seq[i].labels[p] == pair[0] || seq[i].labels[p] == pair[1];
        ASSERT_TRUE(in_pair);
        ASSERT_TRUE(out[i].labels[p] == pair[0] || out[i].labels[p] == pair[1]);
        ASSERT_NE(out[i].labels[p], seq[i].labels[p]);
      }
    }
  }
}

TEST(Corrupt, PairwiseAtFullRateSwapsEveryEligibleOccurrence) {
  Vocabulary v;
  const std::vector seq = {tuple(v, {"hold", "forceps", "disc"}, {"cut", "scalpel", "disc"}, 0, 10),
                           tuple(v, {"cut", "forceps", "disc"}, {"cut", "scalpel", "disc"}, 10, 40),
                           tuple(v, {"clip", "forceps", "disc"}, {"cut", "scalpel", "disc"}, 40, 41)};
  const auto f = build_frequency_table(one_intervention(seq, v));
  const auto out = corrupt(seq, {NoiseKind::Pairwise, 1.0, 1, 1}, v, &f);
  EXPECT_EQ(out[0].labels[0], v.id(ElementKind::Verb, "cut"));
  EXPECT_EQ(out[1].labels[0], v.id(ElementKind::Verb, "hold"));
  EXPECT_EQ(out[2].labels[0], v.id(ElementKind::Verb, "clip"));
  // A single-label position has no pair and stays as it is.
  EXPECT_EQ(out[0].labels[1], seq[0].labels[1]);
}

TEST(ApplyDelay, ZeroDelayIsIdentityOnVisiblePositions) {
  Rng rng(34);
  for (int c = 0; c < 100; ++c) {
    Vocabulary v;
    const auto iv = random_intervention(rng, v, "x");
    EXPECT_EQ(apply_delay(iv, {0.0, std::nullopt}, MaskConfig::all()), iv.activities);
    const auto m = MaskConfig::from_name("IS");
    std::vector<ActivityTuple> masked;
    for (const auto& a : iv.activities) masked.push_back(apply_mask(a, m));
    merge_equal_neighbours(masked);
    EXPECT_EQ(apply_delay(iv, {0.0, std::nullopt}, m), masked);
  }
}

TEST(ApplyDelay, IdleVisibleTupleDoesNotSwallowGap) {
  Vocabulary v;
  Intervention iv;
  iv.activities = {tuple(v, {"hold", "forceps", "disc"}, {"none", "none", "none"}, 0, 4),
                   tuple(v, {"none", "none", "none"}, {"cut", "scalpel", "disc"}, 6, 8)};
  const MaskConfig right_only({false, false, false, true, true, true});
  std::vector<ActivityTuple> masked;
  for (const auto& a : iv.activities) masked.push_back(apply_mask(a, right_only));
  EXPECT_EQ(apply_delay(iv, {0.0, std::nullopt}, right_only), masked);
  const auto shifted = apply_delay(iv, {1.0, std::nullopt}, right_only);
  ASSERT_FALSE(shifted.empty());
  EXPECT_EQ(shifted.front().t_end, 4.0);
  EXPECT_EQ(shifted.back().t_end, 9.0);
}

TEST(ApplyDelay, SingleActivityShift) {
  Vocabulary v;
  Intervention iv;
  iv.activities = {tuple(v, {"hold", "forceps", "disc"}, {"cut", "scalpel", "disc"}, 0, 10)};
  const auto out = apply_delay(iv, {3.0, std::nullopt}, MaskConfig::all());
  ASSERT_EQ(out.size(), 2u);
  for (auto l : out[0].labels) EXPECT_EQ(l, kNone);
  EXPECT_EQ(out[0].t_start, 0.0);
  EXPECT_EQ(out[0].t_end, 3.0);
  EXPECT_EQ(out[1].labels, iv.activities[0].labels);
  EXPECT_EQ(out[1].t_start, 3.0);
  EXPECT_EQ(out[1].t_end, 13.0);
}

TEST(ApplyDelay, AbuttingActivitiesKeepOrder) {
  Vocabulary v;
  Intervention iv;
  iv.activities = {tuple(v, {"hold", "forceps", "disc"}, {"cut", "scalpel", "disc"}, 0, 4),
                   tuple(v, {"hold", "forceps", "disc"}, {"clip", "clipper", "disc"}, 4, 10)};
  const auto m = MaskConfig::from_name("I");
  const auto out = apply_delay(iv, {2.0, std::nullopt}, m);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[1].t_start, 2.0);
  EXPECT_EQ(out[1].t_end, 6.0);
  EXPECT_EQ(out[1].labels, apply_mask(iv.activities[0], m).labels);
  EXPECT_EQ(out[2].t_start, 6.0);
  EXPECT_EQ(out[2].t_end, 12.0);
  EXPECT_EQ(out[2].labels, apply_mask(iv.activities[1], m).labels);
  EXPECT_EQ(out[0].labels[0], kUnknown);
  EXPECT_EQ(out[0].labels[1], kNone);
}

TEST(ApplyDelay, ConservesVisibleLabelTime) {
  Rng rng(35);
  for (int c = 0; c < 100; ++c) {
    Vocabulary v;
    const auto iv = random_intervention(rng, v, "x");
    const double delay = 0.5 * static_cast<double>(uniform_index(rng, 61));
    std::array<bool, kPositions> bits{};
    for (auto& b : bits) b = bernoulli(rng, 0.6);
    const MaskConfig m(bits);
    const auto out = apply_delay(iv, {delay, std::nullopt}, m);
    const auto want = label_mass(iv.activities, m);
    const auto got = label_mass(out, m);
    ASSERT_EQ(got.size(), want.size()) << "case " << c;
    for (const auto& [key, mass] : want) ASSERT_NEAR(got.at(key), mass, 1e-9) << "case " << c;
    if (!out.empty()) ASSERT_LE(out.back().t_end, iv.activities.back().t_end + delay);
    for (std::size_t i = 0; i < out.size(); ++i) {
      ASSERT_GT(out[i].duration(), 0.0);
      if (i) ASSERT_GE(out[i].t_start, out[i - 1].t_end);
      for (std::size_t p = 0; p < kPositions; ++p)
        if (!bits[p]) ASSERT_EQ(out[i].labels[p], kUnknown);
    }
  }
}

TEST(ApplyDelay, PerPositionDelaysConserveTimeToo) {
  Rng rng(36);
  for (int c = 0; c < 50; ++c) {
    Vocabulary v;
    const auto iv = random_intervention(rng, v, "x");
    DelaySpec spec;
    spec.per_position = std::array<double, kPositions>{};
    for (auto& d : *spec.per_position) d = static_cast<double>(uniform_index(rng, 8));
    const auto out = apply_delay(iv, spec, MaskConfig::all());
    const auto want = label_mass(iv.activities, MaskConfig::all());
    const auto got = label_mass(out, MaskConfig::all());
    for (const auto& [key, mass] : want) ASSERT_NEAR(got.at(key), mass, 1e-9) << "case " << c;
  }
  Intervention empty;
  EXPECT_TRUE(apply_delay(empty, {5.0, std::nullopt}, MaskConfig::all()).empty());
  EXPECT_THROW(apply_delay(empty, {-1.0, std::nullopt}, MaskConfig::all()), ValidationError);
}
