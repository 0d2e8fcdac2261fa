/**
 * @file eval.hpp
 * @brief Corpus analyses: within-scale note ratios, melody/chord
 *        co-occurrence, drum coverage and longest verbatim match against the
 *        training keys.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "popgen/corpus.hpp"
#include "popgen/encoding.hpp"

namespace popgen {

inline constexpr int kRatioBins = 20;

using RatioHistogram = std::array<double, kRatioBins>;

struct WithinScaleReport {
  std::array<RatioHistogram, kNumScaleTypes> histograms{};  // normalized per type
  std::array<std::size_t, kNumScaleTypes> songs{};
  std::array<double, kNumScaleTypes> mean_inlier_mass{};     // pooled over all notes of the type
};

/// Bin of an inlier count ratio, computed in integers so that exact
/// fractions land in the expected bin.
inline int ratio_bin(std::uint64_t inliers, std::uint64_t total) {
  if (total == 0) return 0;
  return static_cast<int>(std::min<std::uint64_t>(kRatioBins - 1, (kRatioBins * inliers) / total));
}

/// Per song, the fraction of melody notes inside the song's scale, binned
/// over [0, 1] in 20 bins for each scale type.
inline WithinScaleReport within_scale_histogram(std::span<const Song> corpus) {
  WithinScaleReport rep;
  std::array<double, kNumScaleTypes> in_mass{}, all_mass{};
  for (const Song& s : corpus) {
    const auto hist = tone_histogram(s);
    std::uint64_t total = 0, inliers = 0;
    const PitchClassSet subset = tone_subset(s.scale);
    for (int t = 0; t < 12; ++t) {
      const auto n = static_cast<std::uint64_t>(hist[static_cast<std::size_t>(t)]);
      total += n;
      if (subset.contains(Tone(t))) inliers += n;
    }
    if (total == 0) continue;
    const auto ti = static_cast<std::size_t>(index_of(s.scale.type) - 1);
    rep.histograms[ti][static_cast<std::size_t>(ratio_bin(inliers, total))] += 1.0;
    ++rep.songs[ti];
    in_mass[ti] += static_cast<double>(inliers);
    all_mass[ti] += static_cast<double>(total);
  }
  for (std::size_t ti = 0; ti < kNumScaleTypes; ++ti) {
    if (rep.songs[ti] == 0) continue;
    for (double& v : rep.histograms[ti]) v /= static_cast<double>(rep.songs[ti]);
    rep.mean_inlier_mass[ti] = in_mass[ti] / all_mass[ti];
  }
  return rep;
}

/// "scale_type  bin_low  bin_high  fraction" with one header line, 80 rows.
inline void write_within_scale_tsv(std::ostream& out, const WithinScaleReport& rep) {
  out << "scale_type\tbin_low\tbin_high\tfraction\n";
  for (int ti = 0; ti < kNumScaleTypes; ++ti) {
    for (int b = 0; b < kRatioBins; ++b) {
      out << name_of(scale_type_from_index(ti + 1)) << '\t' << static_cast<double>(b) / kRatioBins << '\t'
          << static_cast<double>(b + 1) / kRatioBins << '\t' << rep.histograms[static_cast<std::size_t>(ti)][static_cast<std::size_t>(b)]
          << '\n';
    }
  }
}

using CooccurrenceMatrix = std::array<std::array<std::uint64_t, 12>, 12>;  // [melody tone][chord root]

/// Counts (melody tone, chord root) over every step where the melody sounds
/// and a chord is present; the chord is the nearest triad template.
inline std::array<CooccurrenceMatrix, kNumScaleTypes> melody_chord_cooccurrence(std::span<const Song> corpus) {
  std::array<CooccurrenceMatrix, kNumScaleTypes> out{};
  for (const Song& s : corpus) {
    auto& m = out[static_cast<std::size_t>(index_of(s.scale.type) - 1)];
    for (std::size_t t = 0; t < s.length(); ++t) {
      if (!s.melody[t].pitch || s.chords[t].empty()) continue;
      const int tone = Tone(*s.melody[t].pitch).value;
      const int root = nearest_chord(s.chords[t]).root().value;
      ++m[static_cast<std::size_t>(tone)][static_cast<std::size_t>(root)];
    }
  }
  return out;
}

/// One header line, then per scale type 12 rows "scale_type  tone  c0..c11".
inline void write_cooccurrence_tsv(std::ostream& out, const std::array<CooccurrenceMatrix, kNumScaleTypes>& mats) {
  out << "scale_type\tmelody_tone";
  for (int r = 0; r < 12; ++r) out << "\troot_" << kToneNames[static_cast<std::size_t>(r)];
  out << '\n';
  for (int ti = 0; ti < kNumScaleTypes; ++ti) {
    for (int tone = 0; tone < 12; ++tone) {
      out << name_of(scale_type_from_index(ti + 1)) << '\t' << kToneNames[static_cast<std::size_t>(tone)];
      for (int r = 0; r < 12; ++r) out << '\t' << mats[static_cast<std::size_t>(ti)][static_cast<std::size_t>(tone)][static_cast<std::size_t>(r)];
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Novelty
// ---------------------------------------------------------------------------

/// Suffix automaton over the training key sequences, joined with distinct
/// separators so that no match spans two songs.
class SuffixAutomaton {
 public:
  explicit SuffixAutomaton(std::span<const Ids> corpus) {
    states_.push_back({0, -1, {}});
    int separator = -1;
    for (const Ids& seq : corpus) {
      for (std::uint8_t v : seq) extend(v);
      extend(separator--);
    }
  }

  /// Longest contiguous run of `query` that occurs verbatim in the corpus.
  std::size_t longest_match(std::span<const std::uint8_t> query) const {
    int state = 0;
    std::size_t len = 0, best = 0;
    for (std::uint8_t v : query) {
      while (state != 0 && !states_[static_cast<std::size_t>(state)].next.count(v)) {
        state = states_[static_cast<std::size_t>(state)].link;
        len = static_cast<std::size_t>(states_[static_cast<std::size_t>(state)].len);
      }
      const auto& next = states_[static_cast<std::size_t>(state)].next;
      if (auto it = next.find(v); it != next.end()) {
        state = it->second;
        ++len;
      } else {
        len = 0;
      }
      best = std::max(best, len);
    }
    return best;
  }

 private:
  struct State {
    int len;
    int link;
    std::map<int, int> next;
  };

  void extend(int c) {
    const int cur = static_cast<int>(states_.size());
    states_.push_back({states_[static_cast<std::size_t>(last_)].len + 1, -1, {}});
    int p = last_;
    while (p != -1 && !states_[static_cast<std::size_t>(p)].next.count(c)) {
      states_[static_cast<std::size_t>(p)].next[c] = cur;
      p = states_[static_cast<std::size_t>(p)].link;
    }
    if (p == -1) {
      states_[static_cast<std::size_t>(cur)].link = 0;
    } else {
      const int q = states_[static_cast<std::size_t>(p)].next[c];
      if (states_[static_cast<std::size_t>(p)].len + 1 == states_[static_cast<std::size_t>(q)].len) {
        states_[static_cast<std::size_t>(cur)].link = q;
      } else {
        const int clone = static_cast<int>(states_.size());
        State copy = states_[static_cast<std::size_t>(q)];
        copy.len = states_[static_cast<std::size_t>(p)].len + 1;
        states_.push_back(std::move(copy));
        while (p != -1) {
          auto it = states_[static_cast<std::size_t>(p)].next.find(c);
          if (it == states_[static_cast<std::size_t>(p)].next.end() || it->second != q) break;
          it->second = clone;
          p = states_[static_cast<std::size_t>(p)].link;
        }
        states_[static_cast<std::size_t>(q)].link = clone;
        states_[static_cast<std::size_t>(cur)].link = clone;
      }
    }
    last_ = cur;
  }

  std::vector<State> states_;
  int last_ = 0;
};

struct NoveltyResult {
  std::size_t steps = 0;
  double seconds() const { return static_cast<double>(steps) * kStepSeconds; }
};

inline NoveltyResult novelty_longest_match(std::span<const std::uint8_t> generated, std::span<const Ids> corpus) {
  return {SuffixAutomaton(corpus).longest_match(generated)};
}

}  // namespace popgen
