#pragma once

#include <svprobe/error.hpp>
#include <svprobe/probe.hpp>
#include <svprobe/tensor.hpp>
#include <svprobe/transcribe.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace svprobe {

// ---------------------------------------------------------------------------
// Note matching
// ---------------------------------------------------------------------------

struct MatchTolerances {
  double onset_s = 0.05;
  double pitch_cents = 50.0;
  double offset_s = 0.05;
  double offset_ratio = 0.2;

  void validate() const {
    if (!(onset_s > 0.0) || !(pitch_cents > 0.0) || !(offset_s > 0.0) || !(offset_ratio > 0.0)) {
      throw ConfigError("match tolerances must be positive");
    }
  }
};

enum class Criterion { COn, COnP, COnPOff };

inline constexpr std::array<Criterion, 3> kCriteria{Criterion::COn, Criterion::COnP, Criterion::COnPOff};

inline const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::COn: return "COn";
    case Criterion::COnP: return "COnP";
    case Criterion::COnPOff: return "COnPOff";
  }
  return "?";
}

// Absorbs decimal representation error so that a delta written as exactly the
// tolerance (e.g. 0.05 s) is admitted.
inline constexpr double kTimeSlack = 1e-9;

inline double offset_tolerance(const NoteEvent& ref, const MatchTolerances& tol) {
  return std::max(tol.offset_s, tol.offset_ratio * ref.duration());
}

inline bool admissible(const NoteEvent& ref, const NoteEvent& est, const MatchTolerances& tol,
                       Criterion criterion) {
  if (std::abs(ref.onset_s - est.onset_s) > tol.onset_s + kTimeSlack) return false;
  if (criterion == Criterion::COn) return true;
  if (std::abs(ref.pitch - est.pitch) * 100.0 > tol.pitch_cents) return false;
  if (criterion == Criterion::COnP) return true;
  return std::abs(ref.offset_s - est.offset_s) <= offset_tolerance(ref, tol) + kTimeSlack;
}

using NoteMatching = std::vector<std::pair<std::size_t, std::size_t>>;

// Maximum-cardinality bipartite matching over admissible (ref, est) pairs,
// by augmenting paths. Pairs are returned in ascending ref order.
inline NoteMatching match_notes(const NoteList& ref, const NoteList& est, const MatchTolerances& tol,
                                Criterion criterion) {
  std::vector<std::vector<std::size_t>> edges(ref.size());
  for (std::size_t r = 0; r < ref.size(); ++r) {
    for (std::size_t e = 0; e < est.size(); ++e) {
      if (admissible(ref[r], est[e], tol, criterion)) edges[r].push_back(e);
    }
  }

  constexpr std::size_t kFree = static_cast<std::size_t>(-1);
  std::vector<std::size_t> est_owner(est.size(), kFree);
  std::vector<char> visited;

  std::function<bool(std::size_t)> augment = [&](std::size_t r) {
    for (std::size_t e : edges[r]) {
      if (visited[e]) continue;
      visited[e] = 1;
      if (est_owner[e] == kFree || augment(est_owner[e])) {
        est_owner[e] = r;
        return true;
      }
    }
    return false;
  };

  for (std::size_t r = 0; r < ref.size(); ++r) {
    visited.assign(est.size(), 0);
    augment(r);
  }

  NoteMatching pairs;
  for (std::size_t e = 0; e < est.size(); ++e) {
    if (est_owner[e] != kFree) pairs.emplace_back(est_owner[e], e);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

// ---------------------------------------------------------------------------
// Transcription scores
// ---------------------------------------------------------------------------

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
};

inline PRF make_prf(std::size_t matched, std::size_t n_est, std::size_t n_ref) {
  PRF s;
  s.matched = matched;
  s.precision = n_est ? static_cast<double>(matched) / static_cast<double>(n_est) : 0.0;
  s.recall = n_ref ? static_cast<double>(matched) / static_cast<double>(n_ref) : 0.0;
  const double sum = s.precision + s.recall;
  s.f1 = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
  return s;
}

struct TranscriptionScores {
  PRF con;
  PRF conp;
  PRF conpoff;

  const PRF& operator[](Criterion c) const {
    return c == Criterion::COn ? con : c == Criterion::COnP ? conp : conpoff;
  }
  PRF& operator[](Criterion c) {
    return c == Criterion::COn ? con : c == Criterion::COnP ? conp : conpoff;
  }
};

inline TranscriptionScores transcription_scores(const NoteList& ref, const NoteList& est,
                                                const MatchTolerances& tol = {}) {
  tol.validate();
  TranscriptionScores s;
  for (Criterion c : kCriteria) {
    s[c] = make_prf(match_notes(ref, est, tol, c).size(), est.size(), ref.size());
  }
  return s;
}

// Unweighted mean of per-clip precision/recall/F1; matched counts are summed.
inline TranscriptionScores average_scores(std::span<const TranscriptionScores> clips) {
  TranscriptionScores avg;
  if (clips.empty()) return avg;
  const double inv = 1.0 / static_cast<double>(clips.size());
  for (Criterion c : kCriteria) {
    for (const auto& clip : clips) {
      avg[c].precision += clip[c].precision * inv;
      avg[c].recall += clip[c].recall * inv;
      avg[c].f1 += clip[c].f1 * inv;
      avg[c].matched += clip[c].matched;
    }
  }
  return avg;
}

// ---------------------------------------------------------------------------
// Classification scores
// ---------------------------------------------------------------------------

struct ClassificationScores {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::map<std::size_t, double> topk_accuracy;
};

// Position of `label` when classes are sorted by descending logit, ties by
// ascending class index.
inline std::size_t label_rank(std::span<const double> logits, std::size_t label) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (logits[j] > logits[label] || (logits[j] == logits[label] && j < label)) ++rank;
  }
  return rank;
}

inline ClassificationScores classification_scores(const Matrix& logits,
                                                  std::span<const std::size_t> labels,
                                                  std::set<std::size_t> ks = {1}) {
  const std::size_t n = logits.rows();
  const std::size_t k_classes = logits.cols();
  if (n == 0 || labels.empty()) throw Error("classification_scores: empty input");
  if (labels.size() != n) throw Error("classification_scores: label count mismatch");
  ks.insert(1);
  for (std::size_t k : ks) {
    if (k == 0 || k >= k_classes) {
      throw Error("classification_scores: top-k with k=" + std::to_string(k) + " needs 0 < k < " +
                  std::to_string(k_classes));
    }
  }

  std::vector<std::size_t> support(k_classes, 0), predicted(k_classes, 0), correct(k_classes, 0);
  std::map<std::size_t, std::size_t> topk_hits;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels[i];
    if (y >= k_classes) throw Error("classification_scores: label out of range");
    const auto row = logits.row(i);
    const std::size_t rank = label_rank(row, y);
    const std::size_t pred = static_cast<std::size_t>(
        std::distance(row.begin(), std::max_element(row.begin(), row.end())));
    ++support[y];
    ++predicted[pred];
    if (pred == y) ++correct[y];
    for (std::size_t k : ks) {
      if (rank < k) ++topk_hits[k];
    }
  }

  ClassificationScores s;
  std::size_t total_correct = 0;
  double recall_sum = 0.0, f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k_classes; ++c) {
    total_correct += correct[c];
    if (support[c] == 0) continue;
    ++present;
    const double recall = static_cast<double>(correct[c]) / static_cast<double>(support[c]);
    const double precision =
        predicted[c] ? static_cast<double>(correct[c]) / static_cast<double>(predicted[c]) : 0.0;
    recall_sum += recall;
    f1_sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  s.accuracy = static_cast<double>(total_correct) / static_cast<double>(n);
  s.balanced_accuracy = recall_sum / static_cast<double>(present);
  s.macro_f1 = f1_sum / static_cast<double>(present);
  for (std::size_t k : ks) s.topk_accuracy[k] = static_cast<double>(topk_hits[k]) / static_cast<double>(n);
  return s;
}

// ---------------------------------------------------------------------------
// Layer contributions
// ---------------------------------------------------------------------------

struct LayerWeightEntry {
  std::string label;  // "L0" is the encoder input, "Ln" the n-th encoder layer output
  double weight = 0.0;
};

inline std::vector<LayerWeightEntry> layer_weight_report(const ProbeModel& model) {
  const auto w = model.layer_weights.normalized();
  std::vector<LayerWeightEntry> out;
  out.reserve(w.size());
  for (std::size_t l = 0; l < w.size(); ++l) out.push_back({"L" + std::to_string(l), w[l]});
  return out;
}

inline std::string layer_weight_csv(std::span<const LayerWeightEntry> entries) {
  std::string out = "layer,weight\n";
  for (const auto& e : entries) out += e.label + ',' + format_real(e.weight) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Key/value report text
// ---------------------------------------------------------------------------

inline std::string format_scores(const TranscriptionScores& s, const std::string& prefix = "") {
  std::string out;
  for (Criterion c : kCriteria) {
    const std::string key = prefix + to_string(c);
    out += key + ".precision = " + format_real(s[c].precision) + '\n';
    out += key + ".recall = " + format_real(s[c].recall) + '\n';
    out += key + ".f1 = " + format_real(s[c].f1) + '\n';
    out += key + ".matched = " + std::to_string(s[c].matched) + '\n';
  }
  return out;
}

inline std::string format_scores(const ClassificationScores& s, const std::string& prefix = "") {
  std::string out;
  out += prefix + "macro_f1 = " + format_real(s.macro_f1) + '\n';
  out += prefix + "accuracy = " + format_real(s.accuracy) + '\n';
  out += prefix + "balanced_accuracy = " + format_real(s.balanced_accuracy) + '\n';
  for (const auto& [k, v] : s.topk_accuracy) {
    out += prefix + "top" + std::to_string(k) + "_accuracy = " + format_real(v) + '\n';
  }
  return out;
}

}  // namespace svprobe
