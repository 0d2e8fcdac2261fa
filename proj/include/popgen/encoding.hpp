/**
 * @file encoding.hpp
 * @brief Categorical encodings of a song: key/press per step, chord/drum
 *        per half-bar, and the drum pattern vocabulary.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "popgen/corpus.hpp"
#include "popgen/error.hpp"
#include "popgen/theory.hpp"

namespace popgen {

inline constexpr int kNumKeys = 37;
inline constexpr int kSilenceKey = 36;
inline constexpr int kLowestPitch = 48;   // C3
inline constexpr int kHighestPitch = 83;  // B5
inline constexpr int kNumPress = 8;
inline constexpr int kNumChords = kNumChordClasses;
inline constexpr int kNumDrums = 100;
inline constexpr int kDrumOovId = 99;
inline constexpr int kNumProfiles = 10;

using Ids = std::vector<std::uint8_t>;

struct EncodedSequences {
  ScaleType scale_type = ScaleType::Major;
  Ids key;      // per step, 0..36
  Ids press;    // per step, 0..7
  Ids profile;  // per step, 0..9
  Ids chord;    // per half-bar, 0..71
  Ids drum;     // per half-bar, 0..99

  std::size_t steps() const { return key.size(); }
  std::size_t half_bars() const { return chord.size(); }

  friend bool operator==(const EncodedSequences&, const EncodedSequences&) = default;
};

/// Folds a MIDI pitch into C3..B5 by whole octaves and returns its key id.
inline std::uint8_t key_id_of_pitch(int pitch) {
  while (pitch < kLowestPitch) pitch += 12;
  while (pitch > kHighestPitch) pitch -= 12;
  return static_cast<std::uint8_t>(pitch - kLowestPitch);
}

inline int pitch_of_key_id(int key) {
  if (key < 0 || key >= kSilenceKey) throw EncodingError("key id has no pitch");
  return kLowestPitch + key;
}

/// Forward counting sequence: 0 where a note starts or silence begins,
/// otherwise the previous id plus one, saturating at 7.
inline Ids encode_press(std::span<const std::uint8_t> keys, const std::vector<bool>& onsets) {
  Ids press(keys.size(), 0);
  for (std::size_t t = 1; t < keys.size(); ++t) {
    const bool restart = keys[t] != keys[t - 1] || (keys[t] != kSilenceKey && onsets[t]);
    press[t] = restart ? 0 : static_cast<std::uint8_t>(std::min(press[t - 1] + 1, kNumPress - 1));
  }
  return press;
}

/// Note-start flags implied by a key/press pair.
inline std::vector<bool> decode_onsets(std::span<const std::uint8_t> keys, std::span<const std::uint8_t> press) {
  std::vector<bool> onsets(keys.size(), false);
  for (std::size_t t = 0; t < keys.size(); ++t) {
    if (keys[t] == kSilenceKey) continue;
    onsets[t] = t == 0 || press[t] == 0 || keys[t] != keys[t - 1];
  }
  return onsets;
}

/// Re-derives press ids from keys plus the note boundaries the given press
/// ids imply. Sampled press sequences become valid counting sequences.
inline Ids canonical_press(std::span<const std::uint8_t> keys, std::span<const std::uint8_t> press) {
  return encode_press(keys, decode_onsets(keys, press));
}

/// Key ids and onset flags of a song's melody.
inline std::pair<Ids, std::vector<bool>> encode_melody(const Song& song) {
  Ids keys(song.length(), kSilenceKey);
  std::vector<bool> onsets(song.length(), false);
  for (std::size_t t = 0; t < song.length(); ++t) {
    const MelodyStep& m = song.melody[t];
    if (!m.pitch) continue;
    keys[t] = key_id_of_pitch(*m.pitch);
    onsets[t] = m.pressed;
  }
  return {std::move(keys), std::move(onsets)};
}

/// Chord id per half-bar: the pitch-class set at the half-bar's first step
/// (or its first non-empty step), mapped to the nearest triad template.
inline Ids encode_chords(const Song& song) {
  Ids ids(song.length() / kStepsPerHalfBar, 0);
  for (std::size_t h = 0; h < ids.size(); ++h) {
    PitchClassSet pcs;
    for (std::size_t k = 0; k < kStepsPerHalfBar && pcs.empty(); ++k) pcs = song.chords[h * kStepsPerHalfBar + k];
    ids[h] = static_cast<std::uint8_t>(nearest_chord(pcs).id());
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Drum vocabulary
// ---------------------------------------------------------------------------

/// Drum pitches struck at each of the four steps of a half-bar.
using DrumPattern = std::array<DrumHits, kStepsPerHalfBar>;

inline DrumPattern drum_pattern_at(const Song& song, std::size_t half_bar) {
  DrumPattern p;
  for (std::size_t k = 0; k < kStepsPerHalfBar; ++k) p[k] = song.drums[half_bar * kStepsPerHalfBar + k];
  return p;
}

/// Most frequent half-bar drum patterns. Ids 0..size-1 name patterns in
/// descending frequency; id 99 is reserved for anything outside the list.
struct DrumVocabulary {
  static constexpr std::size_t kCapacity = kNumDrums - 1;

  std::vector<DrumPattern> patterns;
  std::vector<std::uint64_t> counts;
  std::uint64_t total_half_bars = 0;
  /// Fraction of all half-bars covered by the 100 most frequent patterns.
  double top100_coverage = 0.0;

  std::uint8_t lookup(const DrumPattern& p) const {
    const auto it = std::find(patterns.begin(), patterns.end(), p);
    return it == patterns.end() ? static_cast<std::uint8_t>(kDrumOovId)
                                : static_cast<std::uint8_t>(it - patterns.begin());
  }

  /// Pattern for an id; the out-of-vocabulary id renders as silence.
  DrumPattern pattern(int id) const {
    if (id < 0 || id >= kNumDrums) throw EncodingError("drum id out of range 0..99");
    return static_cast<std::size_t>(id) < patterns.size() ? patterns[static_cast<std::size_t>(id)] : DrumPattern{};
  }

  friend bool operator==(const DrumVocabulary&, const DrumVocabulary&) = default;
};

/// Histogram of half-bar patterns over songs that have drum parts.
inline std::map<DrumPattern, std::uint64_t> drum_pattern_histogram(std::span<const Song> corpus) {
  std::map<DrumPattern, std::uint64_t> hist;
  for (const Song& s : corpus) {
    if (!s.has_drums) continue;
    for (std::size_t h = 0; h < s.length() / kStepsPerHalfBar; ++h) ++hist[drum_pattern_at(s, h)];
  }
  return hist;
}

/// Keeps the most frequent patterns (ties broken by pattern order). An empty
/// result means no song carried drums.
inline DrumVocabulary build_drum_vocabulary(std::span<const Song> corpus) {
  const auto hist = drum_pattern_histogram(corpus);
  std::vector<std::pair<DrumPattern, std::uint64_t>> ranked(hist.begin(), hist.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  DrumVocabulary v;
  std::uint64_t top100 = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    v.total_half_bars += ranked[i].second;
    if (i < 100) top100 += ranked[i].second;
    if (i < DrumVocabulary::kCapacity) {
      v.patterns.push_back(ranked[i].first);
      v.counts.push_back(ranked[i].second);
    }
  }
  v.top100_coverage = v.total_half_bars > 0 ? static_cast<double>(top100) / static_cast<double>(v.total_half_bars) : 0.0;
  return v;
}

inline Ids encode_drums(const Song& song, const DrumVocabulary& vocab) {
  Ids ids(song.length() / kStepsPerHalfBar, kDrumOovId);
  for (std::size_t h = 0; h < ids.size(); ++h) ids[h] = vocab.lookup(drum_pattern_at(song, h));
  return ids;
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// Rebuilds a song (root C) from its encoding. Chords come back as their
/// template pitch classes held over the half-bar.
inline Song decode_song(const EncodedSequences& enc, const DrumVocabulary& vocab) {
  Song song;
  song.scale = Scale{enc.scale_type, Tone(0)};
  song.resize(enc.steps());
  const std::vector<bool> on = decode_onsets(enc.key, enc.press);
  for (std::size_t t = 0; t < enc.steps(); ++t) {
    if (enc.key[t] == kSilenceKey) continue;
    song.melody[t].pitch = pitch_of_key_id(enc.key[t]);
    song.melody[t].pressed = on[t];
  }
  for (std::size_t h = 0; h < enc.half_bars() && (h + 1) * kStepsPerHalfBar <= enc.steps(); ++h) {
    const PitchClassSet pcs = ChordClass::from_id(enc.chord[h]).pitch_classes();
    const DrumPattern dp = vocab.pattern(enc.drum[h]);
    for (std::size_t k = 0; k < kStepsPerHalfBar; ++k) {
      song.chords[h * kStepsPerHalfBar + k] = pcs;
      song.drums[h * kStepsPerHalfBar + k] = dp[k];
    }
  }
  song.has_drums = !vocab.patterns.empty();
  return song;
}

}  // namespace popgen
