/**
 * @file theory.hpp
 * @brief Twelve-tone pitch classes, scale types, triad classes and the
 *        Circle of Fifths.
 */
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "popgen/error.hpp"

namespace popgen {

/// A pitch class, 0 = C ... 11 = B.
struct Tone {
  int value = 0;

  constexpr Tone() = default;
  constexpr explicit Tone(int v) : value(((v % 12) + 12) % 12) {}

  constexpr Tone shifted(int semitones) const { return Tone(value + semitones); }
  friend constexpr bool operator==(Tone, Tone) = default;
  friend constexpr auto operator<=>(Tone, Tone) = default;
};

inline constexpr std::array<std::string_view, 12> kToneNames = {
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"};

inline std::string to_string(Tone t) { return std::string(kToneNames[static_cast<std::size_t>(t.value)]); }

/// Parses "C", "F#", "Bb", ... (case-insensitive letter, '#' or 'b' suffix).
inline std::optional<Tone> parse_tone(std::string_view name) {
  if (name.empty()) return std::nullopt;
  static constexpr std::array<int, 7> kLetter = {9, 11, 0, 2, 4, 5, 7};  // A..G
  char letter = name[0];
  if (letter >= 'a' && letter <= 'g') letter = static_cast<char>(letter - 'a' + 'A');
  if (letter < 'A' || letter > 'G') return std::nullopt;
  int value = kLetter[static_cast<std::size_t>(letter - 'A')];
  for (char c : name.substr(1)) {
    if (c == '#') ++value;
    else if (c == 'b') --value;
    else return std::nullopt;
  }
  return Tone(value);
}

/// Set of pitch classes as a 12-bit mask (bit k = tone k).
class PitchClassSet {
 public:
  constexpr PitchClassSet() = default;
  constexpr explicit PitchClassSet(std::uint16_t mask) : mask_(mask & 0x0FFFu) {}
  constexpr PitchClassSet(std::initializer_list<int> tones) {
    for (int t : tones) insert(Tone(t));
  }

  constexpr void insert(Tone t) { mask_ = static_cast<std::uint16_t>(mask_ | (1u << t.value)); }
  constexpr bool contains(Tone t) const { return (mask_ >> t.value) & 1u; }
  constexpr int size() const { return std::popcount(mask_); }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr std::uint16_t mask() const { return mask_; }

  /// Every member moved by `semitones` (mod 12).
  constexpr PitchClassSet transposed(int semitones) const {
    const int k = ((semitones % 12) + 12) % 12;
    const unsigned m = mask_;
    return PitchClassSet(static_cast<std::uint16_t>(((m << k) | (m >> (12 - k))) & 0x0FFFu));
  }

  constexpr int symmetric_difference_size(PitchClassSet other) const {
    return std::popcount(static_cast<std::uint16_t>(mask_ ^ other.mask_));
  }

  friend constexpr bool operator==(PitchClassSet, PitchClassSet) = default;

 private:
  std::uint16_t mask_ = 0;
};

// ---------------------------------------------------------------------------
// Scales
// ---------------------------------------------------------------------------

/// Scale types, numbered 1..4. Minor shares Major's tone subset (relative
/// minor), so it has no entry of its own.
enum class ScaleType : int { Major = 1, HarmonicMinor = 2, MelodicMinor = 3, Blues = 4 };

inline constexpr int kNumScaleTypes = 4;
inline constexpr int kNumScales = kNumScaleTypes * 12;

inline constexpr ScaleType scale_type_from_index(int index) {
  if (index < 1 || index > kNumScaleTypes) throw EncodingError("scale type index out of range 1..4");
  return static_cast<ScaleType>(index);
}
inline constexpr int index_of(ScaleType t) { return static_cast<int>(t); }

inline constexpr std::string_view name_of(ScaleType t) {
  switch (t) {
    case ScaleType::Major: return "major";
    case ScaleType::HarmonicMinor: return "harmonic-minor";
    case ScaleType::MelodicMinor: return "melodic-minor";
    case ScaleType::Blues: return "blues";
  }
  return "?";
}

struct IntervalSequence {
  std::array<int, 7> steps{};
  int length = 0;
};

/// Relative intervals from the root; each sequence sums to 12.
inline constexpr IntervalSequence intervals_of(ScaleType t) {
  switch (t) {
    case ScaleType::Major: return {{2, 2, 1, 2, 2, 2, 1}, 7};
    case ScaleType::HarmonicMinor: return {{2, 1, 2, 2, 1, 3, 1}, 7};
    case ScaleType::MelodicMinor: return {{2, 1, 2, 2, 2, 2, 1}, 7};
    case ScaleType::Blues: return {{3, 2, 1, 1, 3, 2, 0}, 6};
  }
  return {};
}

struct Scale {
  ScaleType type = ScaleType::Major;
  Tone root{};

  /// Dense index 0..47: (type - 1) * 12 + root.
  constexpr int id() const { return (index_of(type) - 1) * 12 + root.value; }
  static constexpr Scale from_id(int id) { return {scale_type_from_index(id / 12 + 1), Tone(id % 12)}; }

  friend constexpr bool operator==(const Scale&, const Scale&) = default;
};

inline std::string to_string(const Scale& s) { return to_string(s.root) + " " + std::string(name_of(s.type)); }

/// Tones reached by cumulatively applying the type's intervals from the root.
inline constexpr PitchClassSet tone_subset(const Scale& scale) {
  PitchClassSet set;
  const IntervalSequence iv = intervals_of(scale.type);
  int pos = scale.root.value;
  for (int k = 0; k < iv.length; ++k) {
    set.insert(Tone(pos));
    pos += iv.steps[static_cast<std::size_t>(k)];
  }
  return set;
}

// ---------------------------------------------------------------------------
// Chords
// ---------------------------------------------------------------------------

enum class ChordType : int { Major = 0, Minor, Augmented, Diminished, Sus2, Sus4 };

inline constexpr int kNumChordTypes = 6;
inline constexpr int kNumChordClasses = kNumChordTypes * 12;

inline constexpr std::array<std::array<int, 3>, kNumChordTypes> kTriadTemplates = {{
    {0, 4, 7},  // major
    {0, 3, 7},  // minor
    {0, 4, 8},  // augmented
    {0, 3, 6},  // diminished
    {0, 2, 7},  // sus2
    {0, 5, 7},  // sus4
}};

inline constexpr std::array<std::string_view, kNumChordTypes> kChordTypeNames = {"maj", "min", "aug", "dim", "sus2",
                                                                                 "sus4"};

/// One of the 72 triad classes; id = type * 12 + root.
class ChordClass {
 public:
  constexpr ChordClass() = default;
  constexpr ChordClass(ChordType type, Tone root) : id_(static_cast<int>(type) * 12 + root.value) {}

  static constexpr ChordClass from_id(int id) {
    if (id < 0 || id >= kNumChordClasses) throw EncodingError("chord id out of range 0..71");
    return ChordClass(static_cast<ChordType>(id / 12), Tone(id % 12));
  }

  constexpr int id() const { return id_; }
  constexpr ChordType type() const { return static_cast<ChordType>(id_ / 12); }
  constexpr Tone root() const { return Tone(id_ % 12); }

  /// Pitch classes of the triad template rooted at root().
  constexpr PitchClassSet pitch_classes() const {
    PitchClassSet set;
    for (int iv : kTriadTemplates[static_cast<std::size_t>(id_ / 12)]) set.insert(root().shifted(iv));
    return set;
  }

  friend constexpr bool operator==(ChordClass, ChordClass) = default;

 private:
  int id_ = 0;
};

inline std::string to_string(ChordClass c) {
  return to_string(c.root()) + std::string(kChordTypeNames[static_cast<std::size_t>(c.type())]);
}

/// Exact template match. Ids are scanned in ascending order, so among the
/// three rotations of an augmented triad the lowest root wins.
inline constexpr std::optional<ChordClass> classify_chord(PitchClassSet pcs) {
  for (int id = 0; id < kNumChordClasses; ++id) {
    const ChordClass c = ChordClass::from_id(id);
    if (c.pitch_classes() == pcs) return c;
  }
  return std::nullopt;
}

/// Template with the smallest symmetric difference to `pcs`; ties go to the
/// lower id. Exact matches have distance 0, so this extends classify_chord.
inline constexpr ChordClass nearest_chord(PitchClassSet pcs) {
  int best_id = 0;
  int best_dist = 13;
  for (int id = 0; id < kNumChordClasses; ++id) {
    const int d = ChordClass::from_id(id).pitch_classes().symmetric_difference_size(pcs);
    if (d < best_dist) {
      best_dist = d;
      best_id = id;
    }
  }
  return ChordClass::from_id(best_id);
}

// ---------------------------------------------------------------------------
// Circle of Fifths
// ---------------------------------------------------------------------------

/// Position of a tone on C, G, D, A, E, B, F#, C#, G#, D#, A#, F.
inline constexpr int fifths_position(Tone t) { return (t.value * 7) % 12; }

/// Circular distance on the Circle of Fifths, 0..6.
inline constexpr int fifths_distance(Tone a, Tone b) {
  const int d = ((fifths_position(a) - fifths_position(b)) % 12 + 12) % 12;
  return d <= 6 ? d : 12 - d;
}

/// Shift in [-6, +5] with smallest magnitude that maps `from` onto `to`.
inline constexpr int minimal_shift(Tone from, Tone to) {
  int d = ((to.value - from.value) % 12 + 12) % 12;  // 0..11
  return d >= 6 ? d - 12 : d;
}

}  // namespace popgen
