// Synthetic material shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "popgen/archive.hpp"
#include "popgen/encoding.hpp"
#include "popgen/midi.hpp"
#include "popgen/random.hpp"
#include "popgen/synth.hpp"

namespace popgen::testing {

// Scale-degree cells; each covers every degree of a 6- or 7-tone scale and
// never repeats a degree twice in a row.
inline const std::vector<std::vector<int>> kMelodyCells = {
    {0, 1, 2, 3, 4, 5, 6, 7},
    {7, 5, 6, 4, 3, 1, 2, 0},
    {0, 2, 4, 6, 1, 3, 5, 7},
    {4, 3, 2, 1, 0, 6, 5, 7},
    {0, 4, 2, 6, 1, 5, 3, 7},
};

/// Key id of a scale degree over C, degrees past the top wrapping an octave up.
inline std::uint8_t degree_key(ScaleType type, int degree) {
  const PitchClassSet subset = tone_subset(Scale{type, Tone(0)});
  std::vector<int> tones;
  for (int t = 0; t < 12; ++t) {
    if (subset.contains(Tone(t))) tones.push_back(t);
  }
  const int n = static_cast<int>(tones.size());
  return static_cast<std::uint8_t>(12 + tones[static_cast<std::size_t>(degree % n)] + 12 * (degree / n));
}

/// Three drum patterns on the half-bar, hits on the beat only.
inline DrumVocabulary test_vocabulary() {
  DrumVocabulary v;
  v.patterns = {
      {DrumHits{36}, DrumHits{}, DrumHits{}, DrumHits{}},
      {DrumHits{38}, DrumHits{}, DrumHits{}, DrumHits{}},
      {DrumHits{36, 42}, DrumHits{}, DrumHits{}, DrumHits{}},
  };
  v.counts = {3, 2, 1};
  v.total_half_bars = 6;
  v.top100_coverage = 1.0;
  return v;
}

/// A deterministic periodic song in C: each degree of a cell is held `hold` steps,
/// chords follow the key at every half-bar start, drums alternate.
inline EncodedSequences periodic_sequences(ScaleType type, std::size_t variant, std::size_t bars, int hold = 2) {
  const auto& cell = kMelodyCells[variant % kMelodyCells.size()];
  EncodedSequences e;
  e.scale_type = type;
  const std::size_t steps = bars * kStepsPerBar;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t note = t / static_cast<std::size_t>(hold);
    e.key.push_back(degree_key(type, cell[note % cell.size()]));
  }
  std::vector<bool> onsets(steps);
  for (std::size_t t = 0; t < steps; t += static_cast<std::size_t>(hold)) onsets[t] = true;
  e.press = encode_press(e.key, onsets);
  for (std::size_t t = 0; t < steps; ++t) e.profile.push_back(static_cast<std::uint8_t>((t / 16 + variant) % kNumProfiles));
  for (std::size_t h = 0; h < steps / kStepsPerHalfBar; ++h) {
    const int root = pitch_of_key_id(e.key[h * kStepsPerHalfBar]) % 12;
    const int type = (h / 2) % 2 == 0 ? 0 : 1;  // major, minor
    e.chord.push_back(static_cast<std::uint8_t>(type * 12 + root));
    e.drum.push_back(static_cast<std::uint8_t>(h % 3));
  }
  return e;
}

/// Writes `seq` as a multi-track MIDI document whose onsets all fall on
/// beats, so that tempo normalization keeps the grid unchanged.
inline std::vector<std::uint8_t> beat_grid_midi(std::size_t variant, ScaleType type, Tone root, std::size_t bars) {
  EncodedSequences e = periodic_sequences(type, variant, bars, 4);
  return midi::write_midi(render_song(e, test_vocabulary(), root));
}

/// A song with melody notes held four steps and a triad rooted on each
/// melody tone. Exactly `inliers` notes come from the scale subset and
/// `outliers` from its complement, in shuffled order.
inline Song controlled_song(Scale scale, int inliers, int outliers, Rng& rng) {
  const PitchClassSet subset = tone_subset(scale);
  std::vector<int> inside, outside;
  for (int t = 0; t < 12; ++t) (subset.contains(Tone(t)) ? inside : outside).push_back(t);
  std::vector<int> tones;
  for (int i = 0; i < inliers; ++i) tones.push_back(inside[static_cast<std::size_t>(i) % inside.size()]);
  for (int i = 0; i < outliers; ++i) {
    tones.push_back(outside[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(outside.size()) - 1))]);
  }
  shuffle(std::span<int>(tones), rng);

  Song s;
  s.source_id = "controlled";
  s.scale = scale;
  s.original_root = scale.root;
  s.resize(tones.size() * 4);
  for (std::size_t n = 0; n < tones.size(); ++n) {
    const int pitch = 60 + tones[n];
    const ChordClass chord = ChordClass::from_id(static_cast<int>(uniform_int(rng, 0, 1)) * 12 + tones[n]);
    for (std::size_t k = 0; k < 4; ++k) {
      s.melody[n * 4 + k] = {pitch, k == 0};
      s.chords[n * 4 + k] = chord.pitch_classes();
    }
  }
  return s;
}

inline CorpusArchive archive_of(const std::vector<EncodedSequences>& seqs) {
  CorpusArchive a;
  for (std::size_t i = 0; i < seqs.size(); ++i) a.songs.push_back({"song" + std::to_string(i), Tone(0), seqs[i]});
  a.vocab = test_vocabulary();
  return a;
}

}  // namespace popgen::testing
