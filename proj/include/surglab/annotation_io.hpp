// Annotation files (JSON lines, one per intervention) and dataset manifests.
//
// Activity record:
//   {"type":"activity","actor":"surgeon","hand":"left","verb":"hold",
//    "instrument":"classic forceps","structure":"muscle","t_start":10.0,"t_end":14.5}
// Phase record:
//   {"type":"phase","name":"discectomy","t_start":0.0,"t_end":600.0}
//
// A manifest is a JSON document listing the intervention files of a dataset:
//   {"format_version":1,"name":"LDH.R",
//    "vocabulary":{"verb":[...],"instrument":[...],"structure":[...]},
//    "interventions":[{"id":"...","file":"...jsonl","site":"...","surgeon_id":"..."}]}
// The vocabulary block is optional; when present it pins label ids so that a
// saved dataset reloads with identical ids.
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "surglab/segmentation.hpp"
#include "surglab/types.hpp"

namespace surglab {

struct AnnotationFile {
  std::vector<HandAnnotation> activities;
  std::vector<Phase> phases;
};

namespace detail {

inline double number_field(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw ParseError(line, std::string("missing numeric field '") + key + "'");
  return it->get<double>();
}

inline std::string string_field(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw ParseError(line, std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

}  // namespace detail

/// Parses one annotation file. Blank lines are ignored; record order is kept.
inline AnnotationFile parse_annotations(std::string_view content) {
  AnnotationFile out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "record is not an object");

    const std::string type = detail::string_field(j, "type", line_no);
    const double t_start = detail::number_field(j, "t_start", line_no);
    const double t_end = detail::number_field(j, "t_end", line_no);
    if (!(t_end > t_start))
      throw ValidationError("line " + std::to_string(line_no) + ": t_end must exceed t_start");
    if (t_start < 0.0)
      throw ValidationError("line " + std::to_string(line_no) + ": negative t_start");

    if (type == "phase") {
      out.phases.push_back({detail::string_field(j, "name", line_no), t_start, t_end});
    } else if (type == "activity") {
      HandAnnotation a;
      if (auto it = j.find("actor"); it != j.end()) {
        if (!it->is_string()) throw ParseError(line_no, "field 'actor' must be a string");
        a.actor = it->get<std::string>();
      }
      const std::string hand = detail::string_field(j, "hand", line_no);
      if (hand == "left") a.hand = Hand::Left;
      else if (hand == "right") a.hand = Hand::Right;
      else throw ParseError(line_no, "hand must be \"left\" or \"right\"");
      a.verb = detail::string_field(j, "verb", line_no);
      a.instrument = detail::string_field(j, "instrument", line_no);
      a.structure = detail::string_field(j, "structure", line_no);
      if (a.verb.empty() || a.instrument.empty() || a.structure.empty())
        throw ParseError(line_no, "empty element label");
      a.t_start = t_start;
      a.t_end = t_end;
      out.activities.push_back(std::move(a));
    } else {
      throw ParseError(line_no, "unknown record type '" + type + "'");
    }
  }
  return out;
}

/// Builds an Intervention (tuples via merge_hands) from parsed records.
inline Intervention to_intervention(const AnnotationFile& file, Vocabulary& vocab, std::string id,
                                    std::string site = {}, std::string surgeon_id = {}) {
  std::vector<HandAnnotation> left, right;
  for (const auto& a : file.activities) (a.hand == Hand::Left ? left : right).push_back(a);
  Intervention iv;
  iv.id = std::move(id);
  iv.site = std::move(site);
  iv.surgeon_id = std::move(surgeon_id);
  iv.phases = file.phases;
  iv.activities = merge_hands(left, right, vocab);
  return iv;
}

/// Writes an intervention as JSON lines: phases first, then per-hand records
/// in tuple order.
inline std::string serialize_intervention(const Intervention& iv, const Vocabulary& vocab) {
  std::string out;
  for (const auto& p : iv.phases) {
    nlohmann::json j = {{"type", "phase"}, {"name", p.name}, {"t_start", p.t_start}, {"t_end", p.t_end}};
    out += j.dump();
    out += '\n';
  }
  for (const auto& a : split_hands(iv.activities, vocab)) {
    nlohmann::json j = {{"type", "activity"},   {"actor", a.actor},
                        {"hand", std::string(hand_name(a.hand))},
                        {"verb", a.verb},       {"instrument", a.instrument},
                        {"structure", a.structure},
                        {"t_start", a.t_start}, {"t_end", a.t_end}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  Dataset d;
  d.name = m.value("name", manifest_path.stem().string());
  if (auto it = m.find("vocabulary"); it != m.end()) {
    for (ElementKind kind : kAllKinds) {
      auto kit = it->find(std::string(kind_name(kind)));
      if (kit == it->end()) continue;
      for (const auto& label : *kit) d.vocab.intern(kind, label.get<std::string>());
    }
  }
  const auto base = manifest_path.parent_path();
  if (!m.contains("interventions") || !m["interventions"].is_array())
    throw Error(manifest_path.string() + ": manifest has no 'interventions' array");
  for (const auto& entry : m["interventions"]) {
    const auto file = entry.at("file").get<std::string>();
    const auto parsed = parse_annotations(detail::read_file(base / file));
    d.interventions.push_back(to_intervention(parsed, d.vocab, entry.value("id", file),
                                              entry.value("site", ""),
                                              entry.value("surgeon_id", "")));
  }
  validate(d);
  return d;
}

/// Writes `<dir>/manifest.json` plus one `.jsonl` file per intervention.
inline std::filesystem::path save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format_version"] = 1;
  m["name"] = d.name;
  for (ElementKind kind : kAllKinds) {
    auto labels = d.vocab.labels(kind);
    m["vocabulary"][std::string(kind_name(kind))] =
        std::vector<std::string>(labels.begin() + kFirstDataLabel, labels.end());
  }
  m["interventions"] = nlohmann::json::array();
  for (const auto& iv : d.interventions) {
    const std::string file = iv.id + ".jsonl";
    detail::write_file(dir / file, serialize_intervention(iv, d.vocab));
    m["interventions"].push_back(
        {{"id", iv.id}, {"file", file}, {"site", iv.site}, {"surgeon_id", iv.surgeon_id}});
  }
  const auto path = dir / "manifest.json";
  detail::write_file(path, m.dump(2) + "\n");
  return path;
}

}  // namespace surglab
