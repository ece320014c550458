// Core data model for low-level surgical activities.
//
// An activity is a 6-tuple of labels, one per (hand, element kind) position,
// in the order (left verb, left instrument, left structure, right verb,
// right instrument, right structure). Labels are integer ids into a
// per-kind Vocabulary; ids 0 and 1 are the reserved tokens `unknown`
// (hidden by a mask) and `none` (no signal / idle hand).
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace surglab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class ElementKind : std::uint8_t { Verb = 0, Instrument = 1, Structure = 2 };
enum class Hand : std::uint8_t { Left = 0, Right = 1 };

inline constexpr std::size_t kKinds = 3;
inline constexpr std::size_t kPositions = 6;
inline constexpr std::array<ElementKind, kKinds> kAllKinds = {
    ElementKind::Verb, ElementKind::Instrument, ElementKind::Structure};

constexpr ElementKind kind_of(std::size_t position) {
  return static_cast<ElementKind>(position % kKinds);
}
constexpr Hand hand_of(std::size_t position) {
  return position < kKinds ? Hand::Left : Hand::Right;
}
constexpr std::size_t position_of(Hand hand, ElementKind kind) {
  return static_cast<std::size_t>(hand) * kKinds + static_cast<std::size_t>(kind);
}

inline std::string_view kind_name(ElementKind kind) {
  switch (kind) {
    case ElementKind::Verb: return "verb";
    case ElementKind::Instrument: return "instrument";
    case ElementKind::Structure: return "structure";
  }
  return "?";
}

inline std::string_view hand_name(Hand hand) {
  return hand == Hand::Left ? "left" : "right";
}

using LabelId = std::int32_t;
inline constexpr LabelId kUnknown = 0;
inline constexpr LabelId kNone = 1;
inline constexpr LabelId kFirstDataLabel = 2;
inline constexpr std::string_view kUnknownToken = "unknown";
inline constexpr std::string_view kNoneToken = "none";

constexpr bool is_reserved(LabelId id) { return id == kUnknown || id == kNone; }

/// Per-kind label tables. Every kind starts with the two reserved tokens,
/// so `unknown` and `none` have the same id in every kind.
class Vocabulary {
 public:
  Vocabulary() {
    for (std::size_t k = 0; k < kKinds; ++k) {
      labels_[k] = {std::string(kUnknownToken), std::string(kNoneToken)};
      index_[k] = {{std::string(kUnknownToken), kUnknown},
                   {std::string(kNoneToken), kNone}};
    }
  }

  /// Returns the id of `label`, appending it if new.
  LabelId intern(ElementKind kind, std::string_view label) {
    if (label.empty()) throw ValidationError("empty label for " + std::string(kind_name(kind)));
    auto k = static_cast<std::size_t>(kind);
    auto it = index_[k].find(std::string(label));
    if (it != index_[k].end()) return it->second;
    auto id = static_cast<LabelId>(labels_[k].size());
    labels_[k].emplace_back(label);
    index_[k].emplace(std::string(label), id);
    return id;
  }

  std::optional<LabelId> find(ElementKind kind, std::string_view label) const {
    auto k = static_cast<std::size_t>(kind);
    auto it = index_[k].find(std::string(label));
    if (it == index_[k].end()) return std::nullopt;
    return it->second;
  }

  LabelId id(ElementKind kind, std::string_view label) const {
    if (auto found = find(kind, label)) return *found;
    throw ValidationError("label '" + std::string(label) + "' is not a known " +
                          std::string(kind_name(kind)));
  }

  const std::string& label(ElementKind kind, LabelId id) const {
    const auto& table = labels_[static_cast<std::size_t>(kind)];
    if (id < 0 || static_cast<std::size_t>(id) >= table.size())
      throw ValidationError("label id " + std::to_string(id) + " out of range for " +
                            std::string(kind_name(kind)));
    return table[static_cast<std::size_t>(id)];
  }

  /// Number of ids for `kind`, reserved tokens included.
  std::size_t size(ElementKind kind) const { return labels_[static_cast<std::size_t>(kind)].size(); }
  std::size_t data_size(ElementKind kind) const { return size(kind) - 2; }

  std::span<const std::string> labels(ElementKind kind) const {
    return labels_[static_cast<std::size_t>(kind)];
  }

  bool contains(ElementKind kind, LabelId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < size(kind);
  }

  bool operator==(const Vocabulary& other) const { return labels_ == other.labels_; }

 private:
  std::array<std::vector<std::string>, kKinds> labels_;
  std::array<std::unordered_map<std::string, LabelId>, kKinds> index_;
};

/// One hand's annotation record: (actor, hand, verb, instrument, structure, start, end).
struct HandAnnotation {
  std::string actor = "surgeon";
  Hand hand = Hand::Right;
  std::string verb;
  std::string instrument;
  std::string structure;
  double t_start = 0.0;
  double t_end = 0.0;

  bool operator==(const HandAnnotation&) const = default;
};

using Labels = std::array<LabelId, kPositions>;

struct ActivityTuple {
  Labels labels{};
  double t_start = 0.0;
  double t_end = 0.0;

  double duration() const { return t_end - t_start; }
  LabelId at(Hand hand, ElementKind kind) const { return labels[position_of(hand, kind)]; }

  bool operator==(const ActivityTuple&) const = default;
};

struct Phase {
  std::string name;
  double t_start = 0.0;
  double t_end = 0.0;

  bool operator==(const Phase&) const = default;
};

struct Intervention {
  std::string id;
  std::string site;
  std::string surgeon_id;
  std::vector<Phase> phases;
  std::vector<ActivityTuple> activities;

  bool operator==(const Intervention&) const = default;

  /// Total time between the earliest and latest annotated instant.
  double duration() const {
    if (activities.empty() && phases.empty()) return 0.0;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    auto extend = [&](double a, double b) {
      if (first) { lo = a; hi = b; first = false; return; }
      lo = std::min(lo, a);
      hi = std::max(hi, b);
    };
    for (const auto& a : activities) extend(a.t_start, a.t_end);
    for (const auto& p : phases) extend(p.t_start, p.t_end);
    return hi - lo;
  }
};

/// Throws ValidationError unless activities are ordered, non-overlapping,
/// strictly positive in duration and free of abutting duplicates.
inline void validate(const Intervention& iv) {
  const auto& acts = iv.activities;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    if (!(acts[i].t_end > acts[i].t_start))
      throw ValidationError(iv.id + ": activity " + std::to_string(i) + " has non-positive duration");
    if (i == 0) continue;
    if (acts[i].t_start < acts[i - 1].t_end)
      throw ValidationError(iv.id + ": activities " + std::to_string(i - 1) + " and " +
                            std::to_string(i) + " overlap or are out of order");
    if (acts[i].t_start == acts[i - 1].t_end && acts[i].labels == acts[i - 1].labels)
      throw ValidationError(iv.id + ": activities " + std::to_string(i - 1) + " and " +
                            std::to_string(i) + " are identical neighbours");
  }
  for (const auto& p : iv.phases)
    if (!(p.t_end > p.t_start)) throw ValidationError(iv.id + ": phase '" + p.name + "' is empty");
}

struct Dataset {
  std::string name;
  std::vector<Intervention> interventions;
  Vocabulary vocab;

  const Intervention* find(std::string_view id) const {
    for (const auto& iv : interventions)
      if (iv.id == id) return &iv;
    return nullptr;
  }
};

inline void validate(const Dataset& d) {
  for (const auto& iv : d.interventions) {
    validate(iv);
    for (const auto& a : iv.activities)
      for (std::size_t p = 0; p < kPositions; ++p)
        if (!d.vocab.contains(kind_of(p), a.labels[p]))
          throw ValidationError(iv.id + ": label id outside the vocabulary");
  }
}

/// Which of the six positions are visible.
class MaskConfig {
 public:
  constexpr MaskConfig() = default;
  constexpr explicit MaskConfig(std::array<bool, kPositions> visible) : visible_(visible) {}

  /// Parses a six-character 0/1 pattern such as "010010".
  static MaskConfig from_pattern(std::string_view pattern) {
    if (pattern.size() != kPositions) throw ValidationError("mask pattern must have 6 digits");
    std::array<bool, kPositions> v{};
    for (std::size_t i = 0; i < kPositions; ++i) {
      if (pattern[i] != '0' && pattern[i] != '1')
        throw ValidationError("mask pattern must contain only 0 and 1");
      v[i] = pattern[i] == '1';
    }
    return MaskConfig(v);
  }

  /// Canonical kind-level names: V, I, S, VI, VS, IS, VIS (both hands).
  static MaskConfig from_name(std::string_view name) {
    if (name.empty()) throw ValidationError("empty configuration name");
    std::array<bool, kKinds> kinds{};
    for (char c : name) {
      std::size_t k;
      switch (c) {
        case 'V': k = 0; break;
        case 'I': k = 1; break;
        case 'S': k = 2; break;
        default: throw ValidationError("unknown configuration '" + std::string(name) + "'");
      }
      if (kinds[k]) throw ValidationError("repeated element in configuration '" + std::string(name) + "'");
      kinds[k] = true;
    }
    std::array<bool, kPositions> v{};
    for (std::size_t p = 0; p < kPositions; ++p) v[p] = kinds[p % kKinds];
    return MaskConfig(v);
  }

  static constexpr MaskConfig all() { return MaskConfig({true, true, true, true, true, true}); }

  constexpr bool visible(std::size_t position) const { return visible_[position]; }
  std::string pattern() const {
    std::string s(kPositions, '0');
    for (std::size_t i = 0; i < kPositions; ++i) s[i] = visible_[i] ? '1' : '0';
    return s;
  }

  /// "VI"-style name when both hands agree per kind, otherwise the 0/1 pattern.
  std::string name() const {
    std::string out;
    static constexpr char letters[] = {'V', 'I', 'S'};
    for (std::size_t k = 0; k < kKinds; ++k) {
      if (visible_[k] != visible_[k + kKinds]) return pattern();
      if (visible_[k]) out += letters[k];
    }
    return out.empty() ? pattern() : out;
  }

  constexpr bool operator==(const MaskConfig&) const = default;

 private:
  std::array<bool, kPositions> visible_{};
};

/// Accepts either a canonical name or a 0/1 pattern.
inline MaskConfig parse_mask(std::string_view text) {
  if (!text.empty() && (text[0] == '0' || text[0] == '1')) return MaskConfig::from_pattern(text);
  return MaskConfig::from_name(text);
}

}  // namespace surglab
