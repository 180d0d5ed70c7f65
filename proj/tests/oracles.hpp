#pragma once

// Independent reference implementations used only by the test suites. None
// of these call into the code paths they check.

#include <svprobe/metrics.hpp>
#include <svprobe/tensor.hpp>
#include <svprobe/transcribe.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using svprobe::Matrix;
using svprobe::NoteEvent;
using svprobe::NoteList;

// Central differences of a scalar function.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double eps) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

inline double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Transcription loss written directly from its definition.
inline double naive_svt_loss(const Matrix& z, const svprobe::FrameTargets& y, double wo, double ws) {
  double total = 0.0;
  for (std::size_t t = 0; t < z.rows(); ++t) {
    auto bce = [](double logit, double target, double w) {
      const double p = naive_sigmoid(logit);
      return -(w * target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
    };
    auto ce = [&](std::size_t begin, std::size_t count, int target) {
      double denom = 0.0;
      for (std::size_t i = 0; i < count; ++i) denom += std::exp(z(t, begin + i));
      return -std::log(std::exp(z(t, begin + static_cast<std::size_t>(target))) / denom);
    };
    total += bce(z(t, 0), y.onset[t], wo) + bce(z(t, 1), y.silence[t], ws) + ce(2, 13, y.pitch_class[t]) +
             ce(15, 5, y.octave[t]);
  }
  return total / static_cast<double>(z.rows());
}

// Straight-line note decoder: same rule set, no shared helpers.
inline NoteList brute_force_decode(const Matrix& z, double onset_thr, double silence_thr, std::size_t min_frames,
                                   double fps) {
  const std::size_t n = z.rows();
  std::vector<bool> peak(n, false);
  for (std::size_t t = 0; t < n; ++t) {
    const double p = naive_sigmoid(z(t, 0));
    bool ok = p > onset_thr;
    if (t > 0 && p < naive_sigmoid(z(t - 1, 0))) ok = false;
    if (t + 1 < n && p < naive_sigmoid(z(t + 1, 0))) ok = false;
    peak[t] = ok;
  }
  std::vector<std::size_t> onsets;
  for (std::size_t t = 0; t < n; ++t) {
    if (peak[t] && (t == 0 || !peak[t - 1])) onsets.push_back(t);
  }
  NoteList out;
  for (std::size_t k = 0; k < onsets.size(); ++k) {
    const std::size_t on = onsets[k];
    const std::size_t stop = k + 1 < onsets.size() ? onsets[k + 1] : n;
    std::size_t off = stop;
    for (std::size_t t = on + 1; t < stop; ++t) {
      if (naive_sigmoid(z(t, 1)) > silence_thr) {
        off = t;
        break;
      }
    }
    if (off - on < min_frames) continue;
    std::vector<int> count(128, 0);
    for (std::size_t t = on; t < off; ++t) {
      int pc = 0;
      for (int i = 1; i < 13; ++i) {
        if (z(t, 2 + i) > z(t, 2 + pc)) pc = i;
      }
      int oc = 0;
      for (int i = 1; i < 5; ++i) {
        if (z(t, 15 + i) > z(t, 15 + oc)) oc = i;
      }
      if (pc == 12 || oc == 4) continue;
      ++count[12 * (oc + 3) + pc];
    }
    int best = -1;
    for (int m = 0; m < 128; ++m) {
      if (count[m] > 0 && (best < 0 || count[m] > count[best])) best = m;
    }
    if (best < 0) continue;
    out.push_back({on / fps, off / fps, static_cast<double>(best)});
  }
  return out;
}

// Largest number of admissible pairs over all injective assignments.
inline std::size_t exhaustive_matching(const NoteList& ref, const NoteList& est,
                                       const std::function<bool(const NoteEvent&, const NoteEvent&)>& ok) {
  std::vector<bool> used(est.size(), false);
  std::function<std::size_t(std::size_t)> best_from = [&](std::size_t r) -> std::size_t {
    if (r == ref.size()) return 0;
    std::size_t best = best_from(r + 1);  // leave ref r unmatched
    for (std::size_t e = 0; e < est.size(); ++e) {
      if (used[e] || !ok(ref[r], est[e])) continue;
      used[e] = true;
      best = std::max(best, 1 + best_from(r + 1));
      used[e] = false;
    }
    return best;
  };
  return best_from(0);
}

}  // namespace oracle
