#pragma once

#include <svprobe/error.hpp>
#include <svprobe/metrics.hpp>
#include <svprobe/probe.hpp>
#include <svprobe/tensor.hpp>
#include <svprobe/transcribe.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace svprobe {

// ---------------------------------------------------------------------------
// Tasks and run configuration
// ---------------------------------------------------------------------------

enum class Task { singer_id, svt, technique };

inline Task parse_task(std::string_view name) {
  if (name == "singer_id") return Task::singer_id;
  if (name == "svt") return Task::svt;
  if (name == "technique") return Task::technique;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected singer_id, svt or technique)");
}

inline const char* to_string(Task t) {
  switch (t) {
    case Task::singer_id: return "singer_id";
    case Task::svt: return "svt";
    case Task::technique: return "technique";
  }
  return "?";
}

inline TaskKind task_kind(Task t) {
  return t == Task::svt ? TaskKind::frame_transcription : TaskKind::clip_classification;
}

// Stage-1 share of the published schedules: 6 epochs for singer ID and
// transcription, 5 for technique classification.
inline std::size_t default_stage1_epochs(Task t) { return t == Task::technique ? 5 : 6; }

struct RunConfig {
  Task task = Task::singer_id;
  TrainConfig train;
  std::optional<std::size_t> stage1_epochs;  // unset: task default
  DecoderConfig decoder;
  MatchTolerances tolerances;
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  TrainConfig effective_train_config() const {
    TrainConfig c = train;
    c.stage1_epochs = stage1_epochs.value_or(default_stage1_epochs(task));
    c.seed = seed;
    return c;
  }

  void validate() const {
    effective_train_config().validate();
    decoder.validate();
    tolerances.validate();
    if (manifest.empty()) throw ConfigError("config: manifest path is required");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(out)) {
    throw ConfigError("config: '" + key + "' expects a real number, got '" + v + "'");
  }
  return out;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

}  // namespace detail

inline void apply_config_value(RunConfig& c, const std::string& key, const std::string& value,
                               const std::filesystem::path& base_dir = {}) {
  using detail::parse_count;
  using detail::parse_real;
  if (key == "task") c.task = parse_task(value);
  else if (key == "manifest") c.manifest = base_dir / value;
  else if (key == "out" || key == "output_dir") c.output_dir = base_dir / value;
  else if (key == "seed") c.seed = parse_count(key, value);
  else if (key == "stage1_lr") c.train.stage1_lr = parse_real(key, value);
  else if (key == "stage1_epochs") c.stage1_epochs = parse_count(key, value);
  else if (key == "batch_size") c.train.batch_size = parse_count(key, value);
  else if (key == "onset_weight") c.train.onset_weight = parse_real(key, value);
  else if (key == "silence_weight") c.train.silence_weight = parse_real(key, value);
  else if (key == "class_alpha") c.train.class_alpha = parse_real(key, value);
  else if (key == "onset_threshold") c.decoder.onset_threshold = parse_real(key, value);
  else if (key == "silence_threshold") c.decoder.silence_threshold = parse_real(key, value);
  else if (key == "min_note_frames") c.decoder.min_note_frames = parse_count(key, value);
  else if (key == "onset_tolerance") c.tolerances.onset_s = parse_real(key, value);
  else if (key == "pitch_tolerance_cents") c.tolerances.pitch_cents = parse_real(key, value);
  else if (key == "offset_tolerance") c.tolerances.offset_s = parse_real(key, value);
  else if (key == "offset_ratio") c.tolerances.offset_ratio = parse_real(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

// "key = value" lines; '#' starts a comment. Relative paths resolve against
// base_dir.
inline RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_config_value(c, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)), base_dir);
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Manifest: JSON Lines, one clip per line:
//   {"id": "...", "features": "clip.svpf", "split": "train", "label": "alto"}
//   {"id": "...", "features": "clip.svpf", "split": "test",
//    "notes": [[onset_s, offset_s, pitch], ...]}       (or "notes_file": "x.txt")
// Relative paths resolve against the manifest's directory.
// ---------------------------------------------------------------------------

enum class Split { train, validation, test };

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "valid" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw Error("unknown split '" + std::string(s) + "'");
}

inline const char* to_string(Split s) {
  return s == Split::train ? "train" : s == Split::validation ? "validation" : "test";
}

struct ManifestEntry {
  std::string id;
  std::filesystem::path feature_path;
  std::variant<std::string, NoteList> payload;  // class label or notes
  Split split = Split::train;

  bool has_label() const noexcept { return std::holds_alternative<std::string>(payload); }
};

inline std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                                                 const std::string& source = "<manifest>") {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty() || detail::trim(line)[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    try {
      const auto rec = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = rec.at("id").get<std::string>();
      e.feature_path = base_dir / rec.at("features").get<std::string>();
      e.split = parse_split(rec.at("split").get<std::string>());
      const int kinds = int(rec.contains("label")) + int(rec.contains("notes")) + int(rec.contains("notes_file"));
      if (kinds != 1) throw Error("exactly one of label, notes, notes_file is required");
      if (rec.contains("label")) {
        e.payload = rec["label"].get<std::string>();
      } else if (rec.contains("notes")) {
        NoteList notes;
        for (const auto& n : rec["notes"]) {
          if (!n.is_array() || n.size() != 3) throw Error("note must be [onset_s, offset_s, pitch]");
          notes.push_back({n[0].get<double>(), n[1].get<double>(), n[2].get<double>()});
        }
        std::stable_sort(notes.begin(), notes.end(),
                         [](const NoteEvent& a, const NoteEvent& b) { return a.onset_s < b.onset_s; });
        e.payload = std::move(notes);
      } else {
        e.payload = read_note_file(base_dir / rec["notes_file"].get<std::string>());
      }
      if (!seen.insert(e.id).second) throw Error("duplicate id '" + e.id + "'");
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(where + ex.what());
    } catch (const Error& ex) {
      throw Error(where + ex.what());
    }
  }
  return entries;
}

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.parent_path(), path.string());
}

inline std::string manifest_line(const ManifestEntry& e, const std::filesystem::path& relative_features) {
  nlohmann::ordered_json rec;
  rec["id"] = e.id;
  rec["features"] = relative_features.generic_string();
  rec["split"] = to_string(e.split);
  if (const auto* label = std::get_if<std::string>(&e.payload)) {
    rec["label"] = *label;
  } else {
    auto notes = nlohmann::ordered_json::array();
    for (const auto& n : std::get<NoteList>(e.payload)) notes.push_back({n.onset_s, n.offset_s, n.pitch});
    rec["notes"] = std::move(notes);
  }
  return rec.dump();
}

// ---------------------------------------------------------------------------
// Experiment data
// ---------------------------------------------------------------------------

struct ExperimentData {
  Task task = Task::singer_id;
  std::vector<ManifestEntry> entries;
  std::vector<FeatureStack> features;     // parallel to entries
  std::vector<std::string> class_names;   // classification only, sorted
  std::size_t layers = 0;
  std::size_t dim = 0;

  std::vector<std::size_t> split_indices(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].split == s) idx.push_back(i);
    }
    return idx;
  }

  std::size_t class_index(const std::string& label) const {
    const auto it = std::lower_bound(class_names.begin(), class_names.end(), label);
    if (it == class_names.end() || *it != label) throw Error("label '" + label + "' not seen in training split");
    return static_cast<std::size_t>(it - class_names.begin());
  }

  // Reference notes of a transcription clip, clipped to its feature span.
  NoteList reference_notes(std::size_t i) const {
    const auto& f = features[i];
    return clip_notes_to_window(std::get<NoteList>(entries[i].payload), 0.0,
                                static_cast<double>(f.frames()) / f.frame_rate(), f.frame_rate());
  }

  Example example(std::size_t i) const {
    if (task == Task::svt) {
      const auto& f = features[i];
      return {f, rasterize_notes(reference_notes(i), f.frames(), f.frame_rate())};
    }
    return {features[i], class_index(std::get<std::string>(entries[i].payload))};
  }
};

inline ExperimentData load_experiment_data(const RunConfig& config) {
  config.validate();
  ExperimentData data;
  data.task = config.task;
  data.entries = load_manifest(config.manifest);
  if (data.entries.empty()) throw Error("manifest has no entries");
  const bool wants_label = config.task != Task::svt;
  std::set<std::string> labels;
  for (const auto& e : data.entries) {
    if (e.has_label() != wants_label) {
      throw Error("entry '" + e.id + "': task " + to_string(config.task) + " needs " +
                  (wants_label ? "a class label" : "a note list"));
    }
    if (wants_label && e.split == Split::train) labels.insert(std::get<std::string>(e.payload));
  }
  data.class_names.assign(labels.begin(), labels.end());

  for (const auto& e : data.entries) {
    data.features.push_back(read_feature_file(e.feature_path));
    const auto& f = data.features.back();
    if (data.features.size() == 1) {
      data.layers = f.layers();
      data.dim = f.dim();
    } else if (f.layers() != data.layers || f.dim() != data.dim) {
      throw Error("entry '" + e.id + "': feature shape differs from the first entry");
    }
  }
  if (data.split_indices(Split::train).empty()) throw Error("manifest has no training entries");
  if (wants_label) {
    if (data.class_names.size() < 2) throw Error("classification needs at least two training classes");
    for (const auto& e : data.entries) data.class_index(std::get<std::string>(e.payload));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct TrainedProbe {
  ProbeModel model;
  std::vector<double> history;
  std::vector<double> class_weights;  // empty for unit weights
};

inline TrainedProbe train_probe(const RunConfig& config, const ExperimentData& data) {
  TrainConfig tc = config.effective_train_config();
  std::vector<Example> examples;
  for (std::size_t i : data.split_indices(Split::train)) examples.push_back(data.example(i));

  if (config.task == Task::technique) {
    std::vector<std::size_t> counts(data.class_names.size(), 0);
    for (const auto& ex : examples) ++counts[std::get<std::size_t>(ex.target)];
    tc.class_weights = inverse_frequency_weights(counts, tc.class_alpha);
  }
  const std::size_t outputs = config.task == Task::svt ? channel::kTotal : data.class_names.size();
  ProbeModel init = make_probe_model(task_kind(config.task), data.layers, data.dim, outputs, config.seed);
  TrainResult r = train_stage1(examples, std::move(init), tc);
  return {std::move(r.model), std::move(r.epoch_loss), tc.class_weights};
}

struct Evaluation {
  std::string report;        // key/value lines
  std::string clip_records;  // JSON Lines, one per clip, then an aggregate record
};

namespace detail {

inline nlohmann::ordered_json prf_json(const PRF& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"matched", p.matched}};
}

inline nlohmann::ordered_json scores_json(const TranscriptionScores& s) {
  nlohmann::ordered_json j;
  for (Criterion c : kCriteria) j[to_string(c)] = prf_json(s[c]);
  return j;
}

}  // namespace detail

inline Evaluation evaluate_split(const RunConfig& config, const ExperimentData& data,
                                 const ProbeModel& model, Split split) {
  const auto idx = data.split_indices(split);
  const std::string prefix = std::string(to_string(split)) + ".";
  Evaluation out;
  if (idx.empty()) return out;

  if (config.task == Task::svt) {
    std::vector<TranscriptionScores> per_clip;
    for (std::size_t i : idx) {
      const auto& f = data.features[i];
      const NoteList ref = data.reference_notes(i);
      const NoteList est = decode_notes(forward_frame(model, f), config.decoder, f.frame_rate());
      per_clip.push_back(transcription_scores(ref, est, config.tolerances));
      nlohmann::ordered_json rec;
      rec["split"] = to_string(split);
      rec["id"] = data.entries[i].id;
      rec["ref_notes"] = ref.size();
      rec["est_notes"] = est.size();
      rec["scores"] = detail::scores_json(per_clip.back());
      auto notes = nlohmann::ordered_json::array();
      for (const auto& n : est) notes.push_back({n.onset_s, n.offset_s, n.pitch});
      rec["est"] = std::move(notes);
      out.clip_records += rec.dump() + '\n';
    }
    const TranscriptionScores avg = average_scores(per_clip);
    out.report = format_scores(avg, prefix);
    nlohmann::ordered_json agg;
    agg["split"] = to_string(split);
    agg["aggregate"] = detail::scores_json(avg);
    agg["clips"] = per_clip.size();
    out.clip_records += agg.dump() + '\n';
    return out;
  }

  Matrix logits(idx.size(), model.outputs());
  std::vector<std::size_t> labels;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t i = idx[r];
    const auto y = forward_clip(model, data.features[i]);
    std::copy(y.begin(), y.end(), logits.row(r).begin());
    labels.push_back(data.class_index(std::get<std::string>(data.entries[i].payload)));
    const auto row = logits.row(r);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    nlohmann::ordered_json rec;
    rec["split"] = to_string(split);
    rec["id"] = data.entries[i].id;
    rec["label"] = data.class_names[labels.back()];
    rec["predicted"] = data.class_names[pred];
    rec["label_rank"] = label_rank(row, labels.back());
    out.clip_records += rec.dump() + '\n';
  }
  std::set<std::size_t> ks;
  for (std::size_t k : {1, 2, 3}) {
    if (k < model.outputs()) ks.insert(k);
  }
  const ClassificationScores s = classification_scores(logits, labels, ks);
  out.report = format_scores(s, prefix);
  nlohmann::ordered_json agg;
  agg["split"] = to_string(split);
  agg["aggregate"] = {{"macro_f1", s.macro_f1}, {"accuracy", s.accuracy},
                      {"balanced_accuracy", s.balanced_accuracy}};
  for (const auto& [k, v] : s.topk_accuracy) agg["aggregate"]["top" + std::to_string(k) + "_accuracy"] = v;
  agg["clips"] = idx.size();
  out.clip_records += agg.dump() + '\n';
  return out;
}

inline std::string history_csv(const std::vector<double>& history) {
  std::string out = "epoch,train_loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    out += std::to_string(e + 1) + ',' + format_real(history[e]) + '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// Header lines shared by training and evaluation reports.
inline std::string describe_run(const RunConfig& config, const ExperimentData& data) {
  std::string out;
  out += "task = " + std::string(to_string(config.task)) + '\n';
  out += "seed = " + std::to_string(config.seed) + '\n';
  out += "layers = " + std::to_string(data.layers) + '\n';
  out += "dim = " + std::to_string(data.dim) + '\n';
  std::map<Split, std::set<std::string>> ids;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    for (std::size_t i : data.split_indices(s)) ids[s].insert(data.entries[i].id);
    out += std::string(to_string(s)) + ".clips = " + std::to_string(ids[s].size()) + '\n';
  }
  bool disjoint = true;
  for (const auto& id : ids[Split::test]) {
    if (ids[Split::train].count(id) || ids[Split::validation].count(id)) disjoint = false;
  }
  for (const auto& id : ids[Split::validation]) {
    if (ids[Split::train].count(id)) disjoint = false;
  }
  out += std::string("splits_disjoint = ") + (disjoint ? "true" : "false") + '\n';
  if (!data.class_names.empty()) {
    out += "classes =";
    for (const auto& c : data.class_names) out += ' ' + c;
    out += '\n';
  }
  return out;
}

struct RunReport {
  std::string report;
  std::string clip_records;
  TrainedProbe trained;
};

inline RunReport evaluate_model(const RunConfig& config, const ExperimentData& data, const ProbeModel& model) {
  if (model.layers() != data.layers || model.dim() != data.dim ||
      model.task_kind != task_kind(config.task)) {
    throw Error("checkpoint does not fit the manifest's features or task");
  }
  if (config.task != Task::svt && model.outputs() != data.class_names.size()) {
    throw Error("checkpoint class count does not match the manifest's training labels");
  }
  RunReport r;
  for (Split s : {Split::validation, Split::test}) {
    Evaluation e = evaluate_split(config, data, model, s);
    r.report += e.report;
    r.clip_records += e.clip_records;
  }
  return r;
}

// Trains a probe and writes model.svpm, history.csv and layer_weights.csv.
inline TrainedProbe train_and_save(const RunConfig& config, const ExperimentData& data) {
  TrainedProbe trained = train_probe(config, data);
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_checkpoint(trained.model, config.output_dir / "model.svpm");
    write_text_file(config.output_dir / "history.csv", history_csv(trained.history));
    write_text_file(config.output_dir / "layer_weights.csv",
                    layer_weight_csv(layer_weight_report(trained.model)));
  }
  return trained;
}

// Report of a stored checkpoint on the manifest's validation and test splits.
inline RunReport evaluate_checkpoint(const RunConfig& config, const ProbeModel& model) {
  config.validate();
  const ExperimentData data = load_experiment_data(config);
  RunReport r = evaluate_model(config, data, model);
  r.report = describe_run(config, data) + r.report;
  return r;
}

// Full experiment: load, train, evaluate, and write report.txt, clips.jsonl,
// model.svpm, history.csv and layer_weights.csv into the output directory.
inline RunReport run_experiment(const RunConfig& config) {
  config.validate();
  const ExperimentData data = load_experiment_data(config);
  TrainedProbe trained = train_and_save(config, data);
  RunReport r = evaluate_model(config, data, trained.model);
  std::string train_lines;
  const TrainConfig tc = config.effective_train_config();
  train_lines += "train.epochs = " + std::to_string(tc.stage1_epochs) + '\n';
  train_lines += "train.learning_rate = " + format_real(tc.stage1_lr) + '\n';
  if (!trained.history.empty()) train_lines += "train.final_loss = " + format_real(trained.history.back()) + '\n';
  for (std::size_t c = 0; c < trained.class_weights.size(); ++c) {
    train_lines += "class_weight." + data.class_names[c] + " = " + format_real(trained.class_weights[c]) + '\n';
  }
  for (const auto& e : layer_weight_report(trained.model)) {
    train_lines += "layer_weight." + e.label + " = " + format_real(e.weight) + '\n';
  }
  r.report = describe_run(config, data) + train_lines + r.report;
  if (!config.output_dir.empty()) {
    write_text_file(config.output_dir / "report.txt", r.report);
    write_text_file(config.output_dir / "clips.jsonl", r.clip_records);
  }
  r.trained = std::move(trained);
  return r;
}

}  // namespace svprobe
