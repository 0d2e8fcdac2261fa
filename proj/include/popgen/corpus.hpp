/**
 * @file corpus.hpp
 * @brief MIDI ingestion: tempo normalization onto the 0.125 s step grid,
 *        track categorization, scale detection and transposition to C.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "popgen/error.hpp"
#include "popgen/midi.hpp"
#include "popgen/theory.hpp"

namespace popgen {

inline constexpr double kStepSeconds = 0.125;
inline constexpr double kBeatSeconds = 0.5;
inline constexpr int kStepsPerBeat = 4;
inline constexpr int kStepsPerBar = 8;
inline constexpr int kStepsPerHalfBar = 4;

struct MelodyStep {
  std::optional<int> pitch;  // MIDI pitch, nullopt = silence
  bool pressed = false;      // a new note starts at this step

  friend bool operator==(const MelodyStep&, const MelodyStep&) = default;
};

using DrumHits = std::vector<std::uint8_t>;  // sorted drum pitches struck at a step

/// A normalized song on the fixed step grid.
struct Song {
  std::string source_id;
  Scale scale{};
  Tone original_root{};
  bool has_drums = false;
  std::vector<MelodyStep> melody;
  std::vector<PitchClassSet> chords;
  std::vector<DrumHits> drums;

  std::size_t length() const { return melody.size(); }

  /// Resizes all per-step tracks to `steps`.
  void resize(std::size_t steps) {
    melody.resize(steps);
    chords.resize(steps);
    drums.resize(steps);
  }
};

// ---------------------------------------------------------------------------
// Tempo normalization
// ---------------------------------------------------------------------------

/// Maps ticks of a source document onto the step grid.
class GridTiming {
 public:
  GridTiming(midi::TempoMap tempo, double modal_interval, double beat_duration)
      : tempo_(std::move(tempo)), modal_interval_(modal_interval), beat_duration_(beat_duration) {}

  double modal_interval() const { return modal_interval_; }
  /// Modal interval folded into [0.25, 0.5] s.
  double beat_duration() const { return beat_duration_; }
  /// Multiplier applied to source seconds.
  double scale_factor() const { return kBeatSeconds / beat_duration_; }

  double normalized_seconds(std::uint32_t tick) const { return tempo_.seconds(tick) * scale_factor(); }
  /// Unrounded grid position.
  double exact_step(std::uint32_t tick) const { return normalized_seconds(tick) / kStepSeconds; }
  long step(std::uint32_t tick) const { return std::lround(exact_step(tick)); }

 private:
  midi::TempoMap tempo_;
  double modal_interval_;
  double beat_duration_;
};

/// Finds the most frequent interval between adjacent note onsets (1 ms
/// buckets, ties to the shorter interval), folds it by factors of two into
/// [0.25, 0.5] s and rescales time so that the folded value lasts 0.5 s.
inline GridTiming normalize_tempo(const midi::MidiDocument& doc) {
  midi::TempoMap tempo(doc);
  std::vector<double> onsets;
  for (const midi::Track& track : doc.tracks) {
    for (const midi::MidiEvent& e : track) {
      if (e.kind == midi::EventKind::NoteOn) onsets.push_back(tempo.seconds(e.tick));
    }
  }
  if (onsets.empty()) throw EmptySongError("document contains no note events");
  std::sort(onsets.begin(), onsets.end());

  std::map<long, std::pair<int, double>> buckets;  // ms -> (count, sum of intervals)
  for (std::size_t i = 1; i < onsets.size(); ++i) {
    const double gap = onsets[i] - onsets[i - 1];
    const long ms = std::lround(gap * 1000.0);
    if (ms <= 0) continue;  // chord members / simultaneous onsets
    auto& [count, sum] = buckets[ms];
    ++count;
    sum += gap;
  }
  if (buckets.empty()) return GridTiming(std::move(tempo), kBeatSeconds, kBeatSeconds);

  int best_count = 0;
  double modal = kBeatSeconds;
  for (const auto& [ms, entry] : buckets) {
    if (entry.first > best_count) {
      best_count = entry.first;
      modal = entry.second / entry.first;
    }
  }
  double beat = modal;
  while (beat > 0.5 + 1e-9) beat /= 2.0;
  while (beat < 0.25 - 1e-9) beat *= 2.0;
  return GridTiming(std::move(tempo), modal, beat);
}

// ---------------------------------------------------------------------------
// Track categorization
// ---------------------------------------------------------------------------

struct GridNote {
  long start = 0;  // inclusive step
  long end = 0;    // exclusive step, > start
  int pitch = 0;
};

/// Notes of one (track, channel) pair on the grid.
struct Part {
  std::size_t track = 0;
  int channel = 0;
  std::vector<GridNote> notes;
  bool is_drum() const { return channel == midi::kDrumChannel; }
};

enum class TrackRole { Melody, Chord, Drum, Other };

struct PartStats {
  double unique_notes_per_bar = 0.0;
  double note_changes_per_bar = 0.0;
  double simultaneous_notes = 0.0;
};

struct Categorization {
  std::vector<Part> parts;
  std::vector<TrackRole> roles;  // parallel to parts
  std::vector<PartStats> stats;  // parallel to parts
  std::size_t melody = 0;        // index into parts
};

struct CategorizeConfig {
  double chord_change_max = 2.0;
  double chord_min_simultaneous = 2.0;
};

/// Splits every track by channel and quantizes its notes onto the grid.
inline std::vector<Part> split_parts(const midi::MidiDocument& doc, const GridTiming& timing) {
  std::vector<Part> parts;
  for (std::size_t ti = 0; ti < doc.tracks.size(); ++ti) {
    std::map<int, Part> by_channel;
    for (const midi::NoteSpan& n : midi::pair_notes(doc.tracks[ti])) {
      Part& p = by_channel[n.channel];
      p.track = ti;
      p.channel = n.channel;
      const long start = timing.step(n.start_tick);
      const long end = std::max(start + 1, timing.step(n.end_tick));
      p.notes.push_back({start, end, n.pitch});
    }
    for (auto& [ch, part] : by_channel) parts.push_back(std::move(part));
  }
  return parts;
}

/// Per-bar averages over the bars in which the part sounds.
inline PartStats part_stats(const Part& part) {
  if (part.notes.empty()) return {};
  long last = 0;
  for (const GridNote& n : part.notes) last = std::max(last, n.end);
  const std::size_t steps = static_cast<std::size_t>(last);
  std::vector<std::set<int>> sounding(steps);
  std::vector<bool> onset(steps, false);
  for (const GridNote& n : part.notes) {
    onset[static_cast<std::size_t>(n.start)] = true;
    for (long t = n.start; t < n.end; ++t) sounding[static_cast<std::size_t>(t)].insert(n.pitch);
  }
  const std::size_t bars = (steps + kStepsPerBar - 1) / kStepsPerBar;
  double unique_sum = 0.0, change_sum = 0.0;
  int active_bars = 0;
  for (std::size_t b = 0; b < bars; ++b) {
    std::set<int> unique;
    int changes = 0;
    for (std::size_t t = b * kStepsPerBar; t < std::min(steps, (b + 1) * kStepsPerBar); ++t) {
      unique.insert(sounding[t].begin(), sounding[t].end());
      if (onset[t]) ++changes;
    }
    if (unique.empty()) continue;
    ++active_bars;
    unique_sum += static_cast<double>(unique.size());
    change_sum += changes;
  }
  double simul_sum = 0.0;
  int sounding_steps = 0;
  for (const auto& s : sounding) {
    if (s.empty()) continue;
    simul_sum += static_cast<double>(s.size());
    ++sounding_steps;
  }
  PartStats st;
  if (active_bars > 0) {
    st.unique_notes_per_bar = unique_sum / active_bars;
    st.note_changes_per_bar = change_sum / active_bars;
  }
  if (sounding_steps > 0) st.simultaneous_notes = simul_sum / sounding_steps;
  return st;
}

/// Drum channel parts are drums; a part is a chord part when it changes
/// rarely and sounds several notes at once; the busiest remaining part is
/// the melody.
inline Categorization categorize_tracks(const midi::MidiDocument& doc, const GridTiming& timing,
                                        const CategorizeConfig& cfg = {}) {
  Categorization out;
  out.parts = split_parts(doc, timing);
  out.roles.assign(out.parts.size(), TrackRole::Other);
  out.stats.resize(out.parts.size());
  std::optional<std::size_t> melody;
  for (std::size_t i = 0; i < out.parts.size(); ++i) {
    const Part& p = out.parts[i];
    out.stats[i] = part_stats(p);
    if (p.is_drum()) {
      out.roles[i] = TrackRole::Drum;
      continue;
    }
    const PartStats& st = out.stats[i];
    if (st.note_changes_per_bar <= cfg.chord_change_max && st.simultaneous_notes >= cfg.chord_min_simultaneous) {
      out.roles[i] = TrackRole::Chord;
      continue;
    }
    if (!melody || st.note_changes_per_bar > out.stats[*melody].note_changes_per_bar) melody = i;
  }
  if (!melody) throw CategorizationError("no melody candidate track");
  out.melody = *melody;
  out.roles[*melody] = TrackRole::Melody;
  return out;
}

// ---------------------------------------------------------------------------
// Scale detection and transposition
// ---------------------------------------------------------------------------

/// Histogram of melody note onsets over the 12 tones.
inline std::array<double, 12> tone_histogram(const Song& song) {
  std::array<double, 12> h{};
  for (const MelodyStep& m : song.melody) {
    if (m.pitch && m.pressed) h[static_cast<std::size_t>(Tone(*m.pitch).value)] += 1.0;
  }
  return h;
}

inline double inlier_mass(const std::array<double, 12>& hist, const Scale& scale) {
  const PitchClassSet subset = tone_subset(scale);
  double m = 0.0;
  for (int t = 0; t < 12; ++t) {
    if (subset.contains(Tone(t))) m += hist[static_cast<std::size_t>(t)];
  }
  return m;
}

/// Scale whose tone subset captures the most histogram mass; ties go to the
/// lower type index, then the lower root.
inline Scale detect_scale(const std::array<double, 12>& hist) {
  Scale best{};
  double best_mass = -1.0;
  for (int id = 0; id < kNumScales; ++id) {
    const Scale s = Scale::from_id(id);
    const double m = inlier_mass(hist, s);
    if (m > best_mass) {
      best_mass = m;
      best = s;
    }
  }
  return best;
}

inline Scale detect_scale(const Song& song) { return detect_scale(tone_histogram(song)); }

/// Fraction of melody notes whose tone lies in the song's scale.
inline double within_scale_ratio(const Song& song) {
  const auto h = tone_histogram(song);
  double total = 0.0;
  for (double v : h) total += v;
  return total > 0.0 ? inlier_mass(h, song.scale) / total : 0.0;
}

/// Shifts melody and chords so that the scale root becomes C, using the
/// shift in [-6, +5] of smallest magnitude. Drums are left alone.
inline Song transpose_to_c(Song song) {
  const int shift = minimal_shift(song.scale.root, Tone(0));
  for (MelodyStep& m : song.melody) {
    if (m.pitch) *m.pitch += shift;
  }
  for (PitchClassSet& c : song.chords) c = c.transposed(shift);
  song.scale.root = Tone(0);
  return song;
}

// ---------------------------------------------------------------------------
// Song assembly
// ---------------------------------------------------------------------------

/// Builds the grid song from categorized parts: skyline melody, union of
/// chord-part pitch classes, drum onsets. Scale is left undetected.
inline Song assemble_song(const Categorization& cat, std::string source_id) {
  Song song;
  song.source_id = std::move(source_id);
  long last = 0;
  for (const Part& p : cat.parts) {
    for (const GridNote& n : p.notes) last = std::max(last, n.end);
  }
  const auto bars = static_cast<std::size_t>((std::max(last, 1L) + kStepsPerBar - 1) / kStepsPerBar);
  song.resize(bars * kStepsPerBar);
  const std::size_t steps = song.length();

  // Melody: highest sounding note per step; a switch of note counts as a press.
  const Part& mel = cat.parts[cat.melody];
  std::vector<int> chosen(steps, -1);
  for (std::size_t i = 0; i < mel.notes.size(); ++i) {
    const GridNote& n = mel.notes[i];
    for (long t = std::max(0L, n.start); t < n.end; ++t) {
      int& c = chosen[static_cast<std::size_t>(t)];
      if (c < 0 || mel.notes[static_cast<std::size_t>(c)].pitch < n.pitch ||
          (mel.notes[static_cast<std::size_t>(c)].pitch == n.pitch && n.start > mel.notes[static_cast<std::size_t>(c)].start)) {
        c = static_cast<int>(i);
      }
    }
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (chosen[t] < 0) continue;
    const GridNote& n = mel.notes[static_cast<std::size_t>(chosen[t])];
    song.melody[t].pitch = n.pitch;
    song.melody[t].pressed = n.start == static_cast<long>(t) || t == 0 || chosen[t - 1] != chosen[t];
  }

  for (std::size_t i = 0; i < cat.parts.size(); ++i) {
    const Part& p = cat.parts[i];
    if (cat.roles[i] == TrackRole::Chord) {
      for (const GridNote& n : p.notes) {
        for (long t = std::max(0L, n.start); t < n.end; ++t) song.chords[static_cast<std::size_t>(t)].insert(Tone(n.pitch));
      }
    } else if (cat.roles[i] == TrackRole::Drum) {
      song.has_drums = true;
      for (const GridNote& n : p.notes) {
        if (n.start >= 0) song.drums[static_cast<std::size_t>(n.start)].push_back(static_cast<std::uint8_t>(n.pitch));
      }
    }
  }
  for (DrumHits& d : song.drums) {
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
  }
  return song;
}

/// Outcome of ingesting one document, kept for the ingestion report.
struct IngestResult {
  Song song;               // normalized to C
  GridTiming timing;
  Categorization categorization;
  double inlier_ratio = 0.0;
};

/// Tempo normalization, categorization, scale detection and transposition.
inline IngestResult ingest_document(const midi::MidiDocument& doc, std::string source_id,
                                    const CategorizeConfig& cfg = {}) {
  GridTiming timing = normalize_tempo(doc);
  Categorization cat = categorize_tracks(doc, timing, cfg);
  Song song = assemble_song(cat, std::move(source_id));
  song.scale = detect_scale(song);
  song.original_root = song.scale.root;
  const double ratio = within_scale_ratio(song);
  song = transpose_to_c(std::move(song));
  return IngestResult{std::move(song), std::move(timing), std::move(cat), ratio};
}

}  // namespace popgen
