#include "oracles.hpp"

#include <svprobe/metrics.hpp>
#include <svprobe/random.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace svprobe;

namespace {

NoteList random_note_list(Rng& rng, std::size_t max_notes) {
  NoteList notes;
  const std::size_t n = rng.below(max_notes + 1);
  for (std::size_t i = 0; i < n; ++i) {
    // Onsets on a 10 ms grid within 0.3 s so that many pairs compete.
    const double on = 0.01 * static_cast<double>(rng.below(30));
    const double dur = 0.02 * static_cast<double>(1 + rng.below(30));
    const double pitch = 60.0 + 0.25 * static_cast<double>(rng.below(9));
    notes.push_back({on, on + dur, pitch});
  }
  std::sort(notes.begin(), notes.end(), [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });
  return notes;
}

NoteEvent note(double on, double off, double pitch = 60.0) { return {on, off, pitch}; }

}  // namespace

TEST(MatchNotes, IdenticalListsMatchCompletely) {
  const NoteList notes{note(0.0, 0.5), note(0.6, 0.9, 62), note(1.0, 1.4, 64)};
  for (Criterion c : kCriteria) {
    const auto m = match_notes(notes, notes, {}, c);
    ASSERT_EQ(m.size(), 3u);
    for (const auto& [r, e] : m) EXPECT_EQ(r, e);
  }
}

TEST(MatchNotes, OnsetWithinTolerance) {
  EXPECT_EQ(match_notes({note(0.0, 0.5)}, {note(0.03, 0.5)}, {}, Criterion::COn).size(), 1u);
}

TEST(MatchNotes, EachNoteMatchedAtMostOnce) {
  const NoteList ref{note(0.0, 0.5)};
  const NoteList est{note(0.04, 0.5), note(0.05, 0.5)};
  EXPECT_EQ(match_notes(ref, est, {}, Criterion::COn).size(), 1u);
}

TEST(MatchNotes, FindsAugmentingPathsGreedyWouldMiss) {
  // Greedy nearest-onset would pair ref0 with est0 and strand ref1.
  const NoteList ref{note(0.00, 0.5), note(0.06, 0.5)};
  const NoteList est{note(0.03, 0.5), note(-0.04, 0.5)};
  EXPECT_EQ(match_notes(ref, est, {}, Criterion::COn).size(), 2u);
}

TEST(MatchNotes, CardinalityEqualsExhaustiveOptimum) {
  Rng rng(1);
  const MatchTolerances tol;
  for (int trial = 0; trial < 500; ++trial) {
    const NoteList ref = random_note_list(rng, 8), est = random_note_list(rng, 8);
    for (Criterion c : kCriteria) {
      const auto got = match_notes(ref, est, tol, c);
      const auto best = oracle::exhaustive_matching(ref, est, [&](const NoteEvent& r, const NoteEvent& e) {
        return admissible(r, e, tol, c);
      });
      ASSERT_EQ(got.size(), best) << "trial " << trial << " criterion " << to_string(c);
      std::set<std::size_t> refs, ests;
      for (const auto& [r, e] : got) {
        EXPECT_TRUE(admissible(ref[r], est[e], tol, c));
        EXPECT_TRUE(refs.insert(r).second);
        EXPECT_TRUE(ests.insert(e).second);
      }
    }
  }
}

TEST(MatchNotes, OnsetCardinalityIsSymmetric) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const NoteList a = random_note_list(rng, 8), b = random_note_list(rng, 8);
    EXPECT_EQ(match_notes(a, b, {}, Criterion::COn).size(), match_notes(b, a, {}, Criterion::COn).size());
  }
}

TEST(MatchNotes, CriteriaAreMonotone) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const NoteList a = random_note_list(rng, 8), b = random_note_list(rng, 8);
    const auto con = match_notes(a, b, {}, Criterion::COn).size();
    const auto conp = match_notes(a, b, {}, Criterion::COnP).size();
    const auto conpoff = match_notes(a, b, {}, Criterion::COnPOff).size();
    EXPECT_LE(conp, con);
    EXPECT_LE(conpoff, conp);
  }
}

TEST(Tolerances, OnsetBoundary) {
  const MatchTolerances tol;
  EXPECT_TRUE(admissible(note(1.0, 2.0), note(1.049, 2.0), tol, Criterion::COn));
  EXPECT_FALSE(admissible(note(1.0, 2.0), note(1.051, 2.0), tol, Criterion::COn));
  EXPECT_TRUE(admissible(note(1.0, 2.0), note(0.951, 2.0), tol, Criterion::COn));
  EXPECT_FALSE(admissible(note(1.0, 2.0), note(0.949, 2.0), tol, Criterion::COn));
  EXPECT_TRUE(admissible(note(0.0, 1.0), note(0.05, 1.0), tol, Criterion::COn));
}

TEST(Tolerances, PitchBoundary) {
  const MatchTolerances tol;
  EXPECT_TRUE(admissible(note(0, 1, 60.0), note(0, 1, 60.49), tol, Criterion::COnP));
  EXPECT_FALSE(admissible(note(0, 1, 60.0), note(0, 1, 60.51), tol, Criterion::COnP));
  EXPECT_FALSE(admissible(note(0, 1, 60.0), note(0, 1, 61.0), tol, Criterion::COnP));
}

TEST(Tolerances, OffsetUsesLargerOfAbsoluteAndRatio) {
  const MatchTolerances tol;
  // 0.1 s note: max(0.05, 0.02) = 0.05
  EXPECT_DOUBLE_EQ(offset_tolerance(note(0.0, 0.1), tol), 0.05);
  EXPECT_TRUE(admissible(note(0.0, 0.1), note(0.0, 0.149), tol, Criterion::COnPOff));
  EXPECT_FALSE(admissible(note(0.0, 0.1), note(0.0, 0.151), tol, Criterion::COnPOff));
  // 1.0 s note: max(0.05, 0.2) = 0.2
  EXPECT_DOUBLE_EQ(offset_tolerance(note(0.0, 1.0), tol), 0.2);
  EXPECT_TRUE(admissible(note(0.0, 1.0), note(0.0, 1.199), tol, Criterion::COnPOff));
  EXPECT_FALSE(admissible(note(0.0, 1.0), note(0.0, 1.201), tol, Criterion::COnPOff));
}

TEST(TranscriptionScores, PerfectTranscription) {
  const NoteList notes{note(0, 0.5), note(0.6, 0.9, 62), note(1.0, 1.4, 64), note(2.0, 2.1, 65)};
  const auto s = transcription_scores(notes, notes);
  for (Criterion c : kCriteria) {
    EXPECT_EQ(s[c].precision, 1.0);
    EXPECT_EQ(s[c].recall, 1.0);
    EXPECT_EQ(s[c].f1, 1.0);
    EXPECT_EQ(s[c].matched, 4u);
  }
}

TEST(TranscriptionScores, HalfMatched) {
  const auto s = transcription_scores({note(0, 0.5), note(1, 1.5)}, {note(0.01, 0.5), note(3, 3.5)});
  EXPECT_EQ(s.con.precision, 0.5);
  EXPECT_EQ(s.con.recall, 0.5);
  EXPECT_EQ(s.con.f1, 0.5);
}

TEST(TranscriptionScores, PitchOffBySixtyCents) {
  const auto s = transcription_scores({note(0, 0.5, 60.0)}, {note(0, 0.5, 60.6)});
  EXPECT_EQ(s.con.matched, 1u);
  EXPECT_EQ(s.conp.matched, 0u);
  EXPECT_EQ(s.conpoff.matched, 0u);
}

TEST(TranscriptionScores, EmptyListsScoreZero) {
  const auto s = transcription_scores({}, {note(0, 1)});
  EXPECT_EQ(s.con.precision, 0.0);
  EXPECT_EQ(s.con.recall, 0.0);
  EXPECT_EQ(s.con.f1, 0.0);
}

TEST(TranscriptionScores, F1IsHarmonicMean) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = transcription_scores(random_note_list(rng, 8), random_note_list(rng, 8));
    for (Criterion c : kCriteria) {
      const double p = s[c].precision, r = s[c].recall;
      EXPECT_NEAR(s[c].f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-15);
    }
  }
}

TEST(ClassificationScores, PerfectPredictions) {
  Matrix z(4, 4, 0.0);
  const std::vector<std::size_t> labels{0, 1, 2, 3};
  for (std::size_t i = 0; i < 4; ++i) z(i, labels[i]) = 5.0;
  const auto s = classification_scores(z, labels, {2, 3});
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_EQ(s.balanced_accuracy, 1.0);
  EXPECT_EQ(s.macro_f1, 1.0);
  for (const auto& [k, v] : s.topk_accuracy) EXPECT_EQ(v, 1.0) << k;
}

TEST(ClassificationScores, BalancedAccuracyByHand) {
  Matrix z(3, 2, 0.0);
  z(0, 0) = 1.0;  // predicts 0, label 0
  z(1, 1) = 1.0;  // predicts 1, label 0
  z(2, 1) = 1.0;  // predicts 1, label 1
  const std::vector<std::size_t> labels{0, 0, 1};
  const auto s = classification_scores(z, labels);
  EXPECT_DOUBLE_EQ(s.accuracy, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.balanced_accuracy, 0.75);
  // class 0: P=1, R=1/2 -> 2/3; class 1: P=1/2, R=1 -> 2/3
  EXPECT_DOUBLE_EQ(s.macro_f1, 2.0 / 3.0);
}

TEST(ClassificationScores, TopKOfSecondRankedLabel) {
  Matrix z(1, 5, 0.0);
  z(0, 3) = 2.0;
  z(0, 1) = 1.0;
  const std::vector<std::size_t> labels{1};
  const auto s = classification_scores(z, labels, {1, 2, 3});
  EXPECT_EQ(s.topk_accuracy.at(1), 0.0);
  EXPECT_EQ(s.topk_accuracy.at(2), 1.0);
  EXPECT_EQ(s.topk_accuracy.at(3), 1.0);
  EXPECT_EQ(s.accuracy, s.topk_accuracy.at(1));
}

TEST(ClassificationScores, TiesRankLowerIndexFirst) {
  Matrix z(1, 3, 0.0);
  EXPECT_EQ(label_rank(z.row(0), 0), 0u);
  EXPECT_EQ(label_rank(z.row(0), 2), 2u);
}

TEST(ClassificationScores, TopKIsMonotoneAndTop1IsAccuracy) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(30), k = 5;
    Matrix z(n, k);
    std::vector<std::size_t> labels(n);
    for (double& v : z.flat()) v = std::round(rng.uniform(-2, 2));
    for (auto& y : labels) y = rng.below(k);
    const auto s = classification_scores(z, labels, {1, 2, 3, 4});
    EXPECT_EQ(s.topk_accuracy.at(1), s.accuracy);
    double prev = 0.0;
    for (const auto& [kk, v] : s.topk_accuracy) {
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(ClassificationScores, UniformLabelsEqualRecallsGiveBalancedEqualsAccuracy) {
  Matrix z(6, 3, 0.0);
  const std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> preds{0, 1, 1, 2, 2, 0};
  for (std::size_t i = 0; i < 6; ++i) z(i, preds[i]) = 1.0;
  const auto s = classification_scores(z, labels);
  EXPECT_DOUBLE_EQ(s.balanced_accuracy, s.accuracy);
}

TEST(ClassificationScores, AbsentClassesAreExcluded) {
  Matrix z(2, 3, 0.0);
  z(0, 0) = 1.0;
  z(1, 1) = 1.0;
  const std::vector<std::size_t> labels{0, 1};
  const auto s = classification_scores(z, labels);
  EXPECT_EQ(s.balanced_accuracy, 1.0);
  EXPECT_EQ(s.macro_f1, 1.0);
}

TEST(ClassificationScores, Errors) {
  const std::vector<std::size_t> none;
  EXPECT_THROW(classification_scores(Matrix(0, 3), none), Error);
  const std::vector<std::size_t> one{0};
  EXPECT_THROW(classification_scores(Matrix(1, 3), one, {3}), Error);
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(classification_scores(Matrix(1, 3), bad), Error);
}

TEST(LayerWeightReport, ZeroLogitsAreUniform) {
  const ProbeModel m = make_probe_model(TaskKind::clip_classification, 13, 4, 2, 0);
  const auto report = layer_weight_report(m);
  ASSERT_EQ(report.size(), 13u);
  for (std::size_t l = 0; l < 13; ++l) {
    EXPECT_EQ(report[l].label, "L" + std::to_string(l));
    EXPECT_NEAR(report[l].weight, 1.0 / 13.0, 1e-15);
  }
  EXPECT_NEAR(report[0].weight, 0.0769, 1e-4);
}

TEST(LayerWeightReport, SumsToOne) {
  Rng rng(6);
  ProbeModel m = make_probe_model(TaskKind::clip_classification, 13, 4, 2, 0);
  for (int trial = 0; trial < 100; ++trial) {
    for (double& v : m.layer_weights.logits) v = rng.uniform(-10, 10);
    double total = 0.0;
    for (const auto& e : layer_weight_report(m)) total += e.weight;
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(LayerWeightReport, CsvTable) {
  const ProbeModel m = make_probe_model(TaskKind::clip_classification, 2, 4, 2, 0);
  EXPECT_EQ(layer_weight_csv(layer_weight_report(m)), "layer,weight\nL0,0.5\nL1,0.5\n");
}

TEST(Report, KeyValueFormat) {
  const auto s = transcription_scores({note(0, 1)}, {note(0, 1)});
  const std::string text = format_scores(s, "test.");
  EXPECT_NE(text.find("test.COn.f1 = 1\n"), std::string::npos);
  EXPECT_NE(text.find("test.COnPOff.matched = 1\n"), std::string::npos);
}
