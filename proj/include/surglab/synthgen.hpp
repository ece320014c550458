// Synthetic surgical workflow generator with tunable element coupling.
//
// Hierarchical sampling per intervention: phases in fixed order; inside a
// phase a first-order Markov chain over the right-hand structure; the
// instrument drawn from a structure-conditioned table; the verb from an
// (instrument, structure)-conditioned table. Each dependency is a mixture
// "conditioned table with probability coupling, uniform otherwise". The left
// hand follows the same scheme over a small support set of instruments and
// verbs ("hold"-like labels) and mostly shares the right hand's structure.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "surglab/rng.hpp"
#include "surglab/types.hpp"

namespace surglab {

struct Coupling {
  double verb = 0.9;        // verb | (instrument, structure)
  double instrument = 0.8;  // instrument | structure
  double structure = 0.8;   // structure | (phase, previous structure)
};

struct GeneratorSpec {
  std::string name = "synthetic";
  std::string site = "synthetic";
  std::size_t n_interventions = 10;
  std::size_t n_phases = 4;
  double activities_mean = 100.0;
  double activities_sd = 20.0;
  std::size_t n_verbs = 10;
  std::size_t n_instruments = 20;
  std::size_t n_structures = 8;
  Coupling coupling;
  /// Log-normal activity duration law (natural log of seconds). The dataset
  /// is rescaled so its mean activity duration is exp(mu + sd^2/2 + effect^2).
  double duration_log_mean = 2.3;
  double duration_log_sd = 0.7;
  /// Spread of per-verb and per-instrument offsets to the log-mean.
  double duration_label_effect = 0.5;
  /// Probability that a verb is the instrument's habitual verb.
  double verb_instrument_affinity = 0.9;
  /// Size of each structure's right-hand instrument candidate set.
  double instruments_per_structure = 6.0;
  /// Probability of keeping the previous right-hand instrument when it is a
  /// candidate for the new structure.
  double instrument_persistence = 0.4;
  /// Probability that an extra instrument candidate of a structure must have
  /// a habitual verb not yet used by that structure's candidates.
  double distinct_candidate_verbs = 1.0;
  /// Exponent shaping the instrument preference weights (0 = flat).
  double instrument_weight_skew = 1.0;
  /// Share of a phase's left-hand activities that use its main instrument.
  double left_instrument_focus = 0.88;
  /// Probability that the left hand works on the right hand's structure.
  double left_structure_sharing = 0.99;
  std::size_t n_surgeons = 1;
  std::uint64_t seed = 1;

  void validate() const {
    auto count = [](std::size_t v, const char* what) {
      if (v < 1) throw ValidationError(std::string("generator: ") + what + " must be >= 1");
    };
    count(n_interventions, "n_interventions");
    count(n_phases, "n_phases");
    count(n_verbs, "n_verbs");
    count(n_instruments, "n_instruments");
    count(n_structures, "n_structures");
    count(n_surgeons, "n_surgeons");
    if (!(activities_mean >= 1.0)) throw ValidationError("generator: activities_mean must be >= 1");
    if (!(activities_sd >= 0.0)) throw ValidationError("generator: activities_sd must be >= 0");
    if (!(duration_log_sd >= 0.0) || !(duration_label_effect >= 0.0) || !(instrument_weight_skew >= 0.0))
      throw ValidationError("generator: duration spreads must be >= 0");
    if (!(instruments_per_structure >= 1.0))
      throw ValidationError("generator: instruments_per_structure must be >= 1");
    for (double c : {coupling.verb, coupling.instrument, coupling.structure, verb_instrument_affinity,
                     instrument_persistence, left_structure_sharing, distinct_candidate_verbs,
                     left_instrument_focus})
      if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("generator: couplings must lie in [0,1]");
  }
};

namespace detail {

inline std::string numbered(std::string_view stem, std::size_t i) {
  std::string n = std::to_string(i + 1);
  if (n.size() < 2) n.insert(0, "0");
  return std::string(stem) + "_" + n;
}

/// Random positive weights with a heavy head, normalised to sum 1.
inline std::vector<double> skewed_weights(Rng& rng, std::size_t n, double sharpness) {
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& x : w) {
    x = std::pow(-std::log(1.0 - uniform01(rng)), sharpness);
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

/// Fixed semantics of a procedure, shared by all its interventions.
struct ProcedureModel {
  std::vector<std::vector<std::size_t>> phase_structures;
  std::vector<std::vector<std::vector<double>>> transitions;  // [phase][from][to-in-phase]
  std::vector<std::vector<std::size_t>> right_instruments;    // [structure] candidates
  std::vector<std::vector<double>> right_instrument_w;
  std::vector<std::vector<std::size_t>> left_instruments;  // [phase] candidates
  std::vector<std::vector<double>> left_instrument_w;
  std::vector<std::vector<std::size_t>> right_verb;  // [instrument][structure]
  std::vector<std::vector<std::size_t>> left_verb;
  std::vector<double> verb_log_offset;
  std::vector<double> instrument_log_offset;
  std::vector<double> phase_share;
  std::size_t left_verb_support = 1;
  std::size_t left_instrument_support = 1;
};

inline ProcedureModel build_procedure(const GeneratorSpec& spec) {
  Rng rng(derive_seed(spec.seed, {tag("procedure")}));
  const std::size_t S = spec.n_structures, I = spec.n_instruments, V = spec.n_verbs,
                    P = spec.n_phases;
  ProcedureModel m;

  // Structures per phase: round-robin coverage plus random extras.
  const std::size_t per_phase = std::min(S, std::max<std::size_t>(2, (S + 1) / 2));
  m.phase_structures.resize(P);
  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span(order), rng);
  for (std::size_t s = 0; s < S; ++s) m.phase_structures[s % P].push_back(order[s]);
  for (auto& list : m.phase_structures) {
    while (list.size() < per_phase) {
      const std::size_t s = uniform_index(rng, S);
      if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
    }
  }
  m.transitions.resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    const auto n = m.phase_structures[p].size();
    m.transitions[p].assign(S, {});
    for (std::size_t from = 0; from < S; ++from) m.transitions[p][from] = skewed_weights(rng, n, 2.0);
  }

  // Verb tables: each instrument has a habitual verb, independent of the
  // structure; a few popular verbs are shared by many instruments.
  std::vector<std::size_t> habitual(I);
  const auto verb_popularity = skewed_weights(rng, V, 0.7);
  for (std::size_t i = 0; i < I; ++i) habitual[i] = i < V ? i : sample_discrete(rng, verb_popularity);
  shuffle(std::span(habitual), rng);

  // Right-hand instruments: each structure draws a candidate set from the
  // whole pool, so most instruments are used on several structures. With
  // probability distinct_candidate_verbs a candidate must bring a habitual
  // verb the set does not have yet, which lets (verb, structure) single out
  // the instrument.
  const std::size_t per_structure =
      std::min(I, std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(spec.instruments_per_structure))));
  std::vector<std::size_t> pool(I);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  shuffle(std::span(pool), rng);
  m.right_instruments.assign(S, {});
  auto has_verb = [&](const std::vector<std::size_t>& list, std::size_t i) {
    return std::any_of(list.begin(), list.end(), [&](std::size_t j) { return habitual[j] == habitual[i]; });
  };
  // Coverage: every instrument joins the smallest set, preferring sets
  // without its verb.
  for (std::size_t i : pool) {
    auto key = [&](std::size_t t) { return std::pair(has_verb(m.right_instruments[t], i), m.right_instruments[t].size()); };
    std::size_t best = 0;
    for (std::size_t t = 1; t < S; ++t)
      if (key(t) < key(best)) best = t;
    m.right_instruments[best].push_back(i);
  }
  for (std::size_t s = 0; s < S; ++s) {
    auto& list = m.right_instruments[s];
    while (list.size() < per_structure) {
      const bool fresh = bernoulli(rng, spec.distinct_candidate_verbs);
      std::size_t i = uniform_index(rng, I);
      for (int attempt = 0; attempt < 64 && fresh && has_verb(list, i); ++attempt) i = uniform_index(rng, I);
      if (std::find(list.begin(), list.end(), i) == list.end()) list.push_back(i);
    }
    m.right_instrument_w.push_back(skewed_weights(rng, list.size(), spec.instrument_weight_skew));
  }

  // Left hand: one main instrument for the whole procedure plus a stand-in
  // per phase, not tied to the structure, and mostly one holding verb
  // whatever the instrument.
  m.left_instrument_support = std::min(I, std::max<std::size_t>(2, (I + 4) / 5));
  m.left_verb_support = std::min(V, m.left_instrument_support);
  m.left_instruments.assign(P, {});
  for (std::size_t p = 0; p < P; ++p) {
    auto& list = m.left_instruments[p];
    list.push_back(0);
    if (m.left_instrument_support < 2) {
      m.left_instrument_w.push_back({1.0});
      continue;
    }
    list.push_back(1 + uniform_index(rng, m.left_instrument_support - 1));
    m.left_instrument_w.push_back({spec.left_instrument_focus, 1.0 - spec.left_instrument_focus});
  }

  m.right_verb.assign(I, std::vector<std::size_t>(S));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t s = 0; s < S; ++s)
      m.right_verb[i][s] = bernoulli(rng, spec.verb_instrument_affinity) ? habitual[i] : uniform_index(rng, V);
  m.left_verb.assign(I, std::vector<std::size_t>(S));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t s = 0; s < S; ++s)
      m.left_verb[i][s] = bernoulli(rng, spec.verb_instrument_affinity) ? 0 : uniform_index(rng, m.left_verb_support);

  for (std::size_t v = 0; v < V; ++v)
    m.verb_log_offset.push_back(spec.duration_label_effect * standard_normal(rng));
  for (std::size_t i = 0; i < I; ++i)
    m.instrument_log_offset.push_back(spec.duration_label_effect * standard_normal(rng));
  for (auto* offsets : {&m.verb_log_offset, &m.instrument_log_offset}) {
    const double mean = std::accumulate(offsets->begin(), offsets->end(), 0.0) /
                        static_cast<double>(offsets->size());
    for (auto& o : *offsets) o -= mean;
  }

  m.phase_share = skewed_weights(rng, P, 0.5);
  return m;
}

/// Activity counts with sample mean and sd matched to the targets.
inline std::vector<std::size_t> activity_counts(const GeneratorSpec& spec) {
  Rng rng(derive_seed(spec.seed, {tag("counts")}));
  const std::size_t n = spec.n_interventions;
  std::vector<double> z(n);
  for (auto& x : z) x = standard_normal(rng);
  if (n >= 2) {
    double mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : z) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    for (auto& x : z) x = sd > 0.0 ? (x - mean) / sd : 0.0;
  } else {
    z.assign(n, 0.0);
  }
  std::vector<std::size_t> out(n);
  const double floor_count = static_cast<double>(spec.n_phases);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = static_cast<std::size_t>(
        std::max(floor_count, std::round(spec.activities_mean + spec.activities_sd * z[k])));
  return out;
}

/// Splits `total` activities over phases (largest remainder, at least one each).
inline std::vector<std::size_t> split_phases(std::size_t total, const std::vector<double>& share,
                                             Rng& rng) {
  const std::size_t P = share.size();
  std::vector<double> w(P);
  double sum = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    w[p] = share[p] * std::exp(0.3 * standard_normal(rng));
    sum += w[p];
  }
  std::vector<std::size_t> out(P, 1);
  const std::size_t rest = total - P;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < P; ++p) {
    const double exact = static_cast<double>(rest) * w[p] / sum;
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    out[p] += whole;
    assigned += whole;
    remainders.emplace_back(exact - static_cast<double>(whole), p);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t k = 0; assigned < rest; ++k, ++assigned) out[remainders[k % P].second] += 1;
  return out;
}

}  // namespace detail

/// Generates a dataset; a pure function of `spec` (including its seed).
inline Dataset generate_dataset(const GeneratorSpec& spec) {
  spec.validate();
  const auto model = detail::build_procedure(spec);
  const std::size_t S = spec.n_structures, I = spec.n_instruments, V = spec.n_verbs;
  const auto& c = spec.coupling;

  Dataset d;
  d.name = spec.name;
  std::vector<LabelId> verb_id(V), inst_id(I), struct_id(S);
  for (std::size_t v = 0; v < V; ++v) verb_id[v] = d.vocab.intern(ElementKind::Verb, detail::numbered("verb", v));
  for (std::size_t i = 0; i < I; ++i)
    inst_id[i] = d.vocab.intern(ElementKind::Instrument, detail::numbered("instrument", i));
  for (std::size_t s = 0; s < S; ++s)
    struct_id[s] = d.vocab.intern(ElementKind::Structure, detail::numbered("structure", s));

  const auto counts = detail::activity_counts(spec);
  // Raw durations first; timestamps are laid out once the dataset-wide
  // duration scale is known.
  std::vector<std::vector<double>> raw(spec.n_interventions);
  std::vector<std::vector<std::size_t>> phase_ends(spec.n_interventions);
  double raw_total = 0.0;
  std::size_t raw_count = 0;
  for (std::size_t k = 0; k < spec.n_interventions; ++k) {
    Rng rng(derive_seed(spec.seed, {tag("intervention"), k}));
    Intervention iv;
    iv.id = spec.name + "_" + detail::numbered("case", k).substr(5);
    iv.site = spec.site;
    iv.surgeon_id = detail::numbered("surgeon", k % spec.n_surgeons);

    const auto per_phase = detail::split_phases(counts[k], model.phase_share, rng);
    Labels previous{};
    bool have_previous = false;
    std::size_t prev_structure = 0, prev_instrument = 0;

    for (std::size_t p = 0; p < spec.n_phases; ++p) {
      const auto& members = model.phase_structures[p];
      for (std::size_t a = 0; a < per_phase[p]; ++a) {
        std::size_t rs = 0, ri = 0, rv = 0, ls = 0, li = 0, lv = 0;
        auto draw = [&] {
          if (a == 0) {
            rs = members[uniform_index(rng, members.size())];
          } else if (bernoulli(rng, c.structure)) {
            rs = members[sample_discrete(rng, model.transitions[p][prev_structure])];
          } else {
            rs = uniform_index(rng, S);
          }
          const auto& candidates = model.right_instruments[rs];
          if (!bernoulli(rng, c.instrument)) {
            ri = uniform_index(rng, I);
          } else if (have_previous && bernoulli(rng, spec.instrument_persistence) &&
                     std::find(candidates.begin(), candidates.end(), prev_instrument) != candidates.end()) {
            ri = prev_instrument;
          } else {
            ri = candidates[sample_discrete(rng, model.right_instrument_w[rs])];
          }
          rv = bernoulli(rng, c.verb) ? model.right_verb[ri][rs] : uniform_index(rng, V);
          ls = bernoulli(rng, spec.left_structure_sharing) ? rs : uniform_index(rng, S);
          li = bernoulli(rng, c.instrument)
                   ? model.left_instruments[p][sample_discrete(rng, model.left_instrument_w[p])]
                   : uniform_index(rng, I);
          lv = bernoulli(rng, c.verb) ? model.left_verb[li][ls] : uniform_index(rng, V);
        };
        auto labels_of = [&] {
          return Labels{verb_id[lv], inst_id[li], struct_id[ls],
                        verb_id[rv], inst_id[ri], struct_id[rs]};
        };

        draw();
        for (int attempt = 0; attempt < 32 && have_previous && labels_of() == previous; ++attempt) draw();
        if (have_previous && labels_of() == previous) {
          if (I > 1) ri = (ri + 1 + uniform_index(rng, I - 1)) % I;
          else rs = (rs + 1) % S;
          rv = bernoulli(rng, c.verb) ? model.right_verb[ri][rs] : uniform_index(rng, V);
        }

        const double log_mean = spec.duration_log_mean + model.verb_log_offset[rv] +
                                model.instrument_log_offset[ri];
        const double duration = std::exp(log_mean + spec.duration_log_sd * standard_normal(rng));
        raw[k].push_back(duration);
        raw_total += duration;
        ++raw_count;

        ActivityTuple tuple;
        tuple.labels = labels_of();
        iv.activities.push_back(tuple);
        previous = tuple.labels;
        have_previous = true;
        prev_structure = rs;
        prev_instrument = ri;
      }
      phase_ends[k].push_back(iv.activities.size());
    }
    d.interventions.push_back(std::move(iv));
  }

  // Skewed label usage moves the realised mean away from the law's nominal
  // mean; one dataset-wide factor restores it without touching label effects.
  const double nominal = std::exp(spec.duration_log_mean + 0.5 * spec.duration_log_sd * spec.duration_log_sd +
                                  spec.duration_label_effect * spec.duration_label_effect);
  const double scale = raw_count > 0 ? nominal / (raw_total / static_cast<double>(raw_count)) : 1.0;
  for (std::size_t k = 0; k < d.interventions.size(); ++k) {
    auto& iv = d.interventions[k];
    double t = 0.0;
    std::size_t a = 0;
    for (std::size_t p = 0; p < spec.n_phases; ++p) {
      const double phase_start = t;
      for (; a < phase_ends[k][p]; ++a) {
        const double duration = std::max(0.1, std::round(raw[k][a] * scale * 10.0) / 10.0);
        iv.activities[a].t_start = t;
        iv.activities[a].t_end = std::round((t + duration) * 10.0) / 10.0;
        t = iv.activities[a].t_end;
      }
      iv.phases.push_back({detail::numbered("phase", p), phase_start, t});
    }
  }
  validate(d);
  return d;
}

/// Names accepted by preset().
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"ACDF.L", "ACDF.R", "LDH.L", "LDH.R",
                                                 "PA.L",   "PA.R",   "CS"};
  return names;
}

/// Generator targets sized after the seven clinical datasets. Rennes presets
/// use tighter instrument coupling than Leipzig ones; CS is near-deterministic.
inline GeneratorSpec preset(std::string_view name) {
  struct Row {
    std::string_view name, site;
    std::size_t surgeons, interventions;
    double minutes, activities, activities_sd;
    std::size_t phases, verbs, instruments, structures;
  };
  static constexpr Row rows[] = {
      {"ACDF.L", "Leipzig", 4, 16, 156, 367, 149, 5, 12, 25, 11},
      {"ACDF.R", "Rennes", 5, 48, 85, 244, 76, 5, 12, 30, 7},
      {"LDH.L", "Leipzig", 6, 25, 80, 242, 72, 4, 12, 27, 10},
      {"LDH.R", "Rennes", 5, 20, 34, 148, 49, 4, 11, 23, 8},
      {"PA.L", "Leipzig", 2, 15, 78, 266, 77, 5, 15, 32, 7},
      {"PA.R", "Rennes", 1, 11, 58, 213, 46, 6, 15, 30, 9},
      {"CS", "Munich", 2, 19, 12, 29, 5, 7, 12, 15, 7},
  };
  for (const auto& r : rows) {
    if (r.name != name) continue;
    GeneratorSpec s;
    s.name = std::string(r.name);
    s.site = std::string(r.site);
    s.n_surgeons = r.surgeons;
    s.n_interventions = r.interventions;
    s.n_phases = r.phases;
    s.activities_mean = r.activities;
    s.activities_sd = r.activities_sd;
    s.n_verbs = r.verbs;
    s.n_instruments = r.instruments;
    s.n_structures = r.structures;
    // Mean activity duration from the procedure length; log-normal mean is
    // exp(mu + sigma^2/2).
    const double mean_seconds = r.minutes * 60.0 / r.activities;
    // The two label offsets add effect^2 to the log-variance.
    s.duration_log_sd = 0.7;
    s.duration_log_mean = std::log(mean_seconds) - 0.5 * s.duration_log_sd * s.duration_log_sd -
                          s.duration_label_effect * s.duration_label_effect;
    s.instruments_per_structure = std::max(3.0, 0.35 * static_cast<double>(r.instruments));
    s.instrument_weight_skew = 2.0;
    if (r.site == "Munich") {
      s.coupling = {0.998, 0.995, 0.98};
      s.instruments_per_structure = 3.0;
    } else if (r.site == "Rennes") {
      s.coupling = {0.99, 0.985, 0.8};
    } else {
      s.coupling = {0.985, 0.96, 0.75};
    }
    return s;
  }
  throw ValidationError("unknown preset '" + std::string(name) + "'");
}

}  // namespace surglab
