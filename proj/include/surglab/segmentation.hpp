// Change-point segmentation of per-hand annotation streams into 6-tuples.
#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "surglab/types.hpp"

namespace surglab {

namespace detail {

inline std::vector<double> change_points(std::span<const HandAnnotation> left,
                                         std::span<const HandAnnotation> right) {
  std::vector<double> points;
  points.reserve(2 * (left.size() + right.size()));
  for (auto stream : {left, right})
    for (const auto& a : stream) {
      points.push_back(a.t_start);
      points.push_back(a.t_end);
    }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  return points;
}

inline std::vector<HandAnnotation> sorted_checked(std::span<const HandAnnotation> stream,
                                                  Hand hand) {
  std::vector<HandAnnotation> out(stream.begin(), stream.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i].t_end > out[i].t_start))
      throw ValidationError(std::string(hand_name(hand)) + " hand annotation with t_end <= t_start");
    if (i > 0 && out[i].t_start < out[i - 1].t_end)
      throw ValidationError(std::string(hand_name(hand)) + " hand annotations overlap at t=" +
                            std::to_string(out[i].t_start));
  }
  return out;
}

}  // namespace detail

/// Merges temporally adjacent tuples with identical labels, in place.
/// Tuples separated by a gap are kept apart.
inline void merge_equal_neighbours(std::vector<ActivityTuple>& seq) {
  if (seq.empty()) return;
  std::size_t w = 0;
  for (std::size_t r = 1; r < seq.size(); ++r) {
    if (seq[r].labels == seq[w].labels && seq[r].t_start == seq[w].t_end) {
      seq[w].t_end = seq[r].t_end;
    } else {
      seq[++w] = seq[r];
    }
  }
  seq.resize(w + 1);
}

/// Builds the ordered 6-tuple sequence from the two hands' annotations.
///
/// Every start/end instant of either hand is a change point. Each interval
/// between consecutive change points yields one tuple taken from whichever
/// annotation covers it on each hand; an idle hand contributes `none` for all
/// three of its positions, and intervals where both hands are idle yield no
/// tuple. Abutting intervals with equal tuples are then merged. Labels are
/// interned into `vocab`.
inline std::vector<ActivityTuple> merge_hands(std::span<const HandAnnotation> left,
                                              std::span<const HandAnnotation> right,
                                              Vocabulary& vocab) {
  auto l = detail::sorted_checked(left, Hand::Left);
  auto r = detail::sorted_checked(right, Hand::Right);
  auto points = detail::change_points(l, r);

  auto intern = [&](const HandAnnotation& a, Hand hand, Labels& labels) {
    labels[position_of(hand, ElementKind::Verb)] = vocab.intern(ElementKind::Verb, a.verb);
    labels[position_of(hand, ElementKind::Instrument)] =
        vocab.intern(ElementKind::Instrument, a.instrument);
    labels[position_of(hand, ElementKind::Structure)] =
        vocab.intern(ElementKind::Structure, a.structure);
  };

  std::vector<ActivityTuple> out;
  std::size_t li = 0, ri = 0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double a = points[k], b = points[k + 1];
    while (li < l.size() && l[li].t_end <= a) ++li;
    while (ri < r.size() && r[ri].t_end <= a) ++ri;
    const bool left_active = li < l.size() && l[li].t_start <= a;
    const bool right_active = ri < r.size() && r[ri].t_start <= a;
    if (!left_active && !right_active) continue;

    ActivityTuple t;
    t.labels.fill(kNone);
    t.t_start = a;
    t.t_end = b;
    if (left_active) intern(l[li], Hand::Left, t.labels);
    if (right_active) intern(r[ri], Hand::Right, t.labels);
    out.push_back(t);
  }
  merge_equal_neighbours(out);
  return out;
}

/// Splits merged tuples back into per-hand records (inverse of merge_hands up
/// to segmentation). A hand whose three positions are all `none` emits nothing.
inline std::vector<HandAnnotation> split_hands(std::span<const ActivityTuple> seq,
                                               const Vocabulary& vocab,
                                               const std::string& actor = "surgeon") {
  std::vector<HandAnnotation> out;
  for (const auto& t : seq) {
    for (Hand hand : {Hand::Left, Hand::Right}) {
      const LabelId v = t.at(hand, ElementKind::Verb);
      const LabelId i = t.at(hand, ElementKind::Instrument);
      const LabelId s = t.at(hand, ElementKind::Structure);
      if (v == kNone && i == kNone && s == kNone) continue;
      HandAnnotation a;
      a.actor = actor;
      a.hand = hand;
      a.verb = vocab.label(ElementKind::Verb, v);
      a.instrument = vocab.label(ElementKind::Instrument, i);
      a.structure = vocab.label(ElementKind::Structure, s);
      a.t_start = t.t_start;
      a.t_end = t.t_end;
      out.push_back(std::move(a));
    }
  }
  return out;
}

}  // namespace surglab
