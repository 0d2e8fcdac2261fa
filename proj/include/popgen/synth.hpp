/**
 * @file synth.hpp
 * @brief Song generation: ancestral sampling through the four layers,
 *        on-beat melody alignment, Circle-of-Fifths chord smoothing and
 *        rendering to a multi-track MIDI document.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "popgen/midi.hpp"
#include "popgen/model.hpp"

namespace popgen {

struct ProfileSegment {
  int cluster = 0;
  int bars = 1;
};

struct GenerationConfig {
  ScaleType scale_type = ScaleType::Major;
  Tone target_root{};
  std::size_t length_steps = 400;
  std::vector<ProfileSegment> profile_schedule;  // empty = random
  double temperature = 1.0;                      // 0 = greedy
  double dp_lambda = 1.0;
  std::uint64_t seed = 0;
};

using ChordRow = std::array<double, kNumChords>;

struct GeneratedSong {
  EncodedSequences seq;
  std::vector<ChordRow> chord_probs;  // one row per half-bar
  midi::MidiDocument document;
};

/// Per-step profile ids. An explicit schedule is repeated cyclically; a
/// random one draws cluster ids uniformly from 0..9 with 2..8 bar durations.
inline Ids profile_schedule_ids(const GenerationConfig& cfg, Rng& rng) {
  Ids ids;
  ids.reserve(cfg.length_steps);
  std::size_t seg = 0;
  while (ids.size() < cfg.length_steps) {
    ProfileSegment s;
    if (cfg.profile_schedule.empty()) {
      s.cluster = static_cast<int>(uniform_int(rng, 0, kNumProfiles - 1));
      s.bars = static_cast<int>(uniform_int(rng, 2, 8));
    } else {
      s = cfg.profile_schedule[seg++ % cfg.profile_schedule.size()];
      if (s.cluster < 0 || s.cluster >= kNumProfiles || s.bars <= 0) throw GenerationError("invalid profile segment");
    }
    for (int k = 0; k < s.bars * kStepsPerBar && ids.size() < cfg.length_steps; ++k) {
      ids.push_back(static_cast<std::uint8_t>(s.cluster));
    }
  }
  return ids;
}

/// Samples from softmax(logits / temperature); temperature 0 takes the
/// argmax (lowest index on ties).
inline int sample_logits(const net::Vector& logits, double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }
  const net::Vector p = net::softmax(logits, temperature);
  return static_cast<int>(sample_index(rng, std::span<const double>(p.data(), static_cast<std::size_t>(p.size()))));
}

/// Ancestral sampling: key then press at every step, chord and drum after
/// every fourth key. Chord probability rows are kept for smoothing.
inline GeneratedSong sample_song(const HierarchicalModel& model, const GenerationConfig& cfg) {
  if (!model.key_trained(cfg.scale_type)) {
    throw GenerationError(std::string("no trained key layer for scale type ") + std::string(name_of(cfg.scale_type)));
  }
  if (cfg.length_steps == 0 || cfg.length_steps % kStepsPerBar != 0) {
    throw GenerationError("length_steps must be a positive multiple of 8");
  }
  Rng rng(cfg.seed);
  GeneratedSong g;
  EncodedSequences& s = g.seq;
  s.scale_type = cfg.scale_type;
  s.profile = profile_schedule_ids(cfg, rng);

  const net::LstmStack& key_net = model.key_stack(cfg.scale_type);
  const net::LstmStack& press_net = model.stack(Layer::Press);
  const net::LstmStack& chord_net = model.stack(Layer::Chord);
  const net::LstmStack& drum_net = model.stack(Layer::Drum);
  auto key_state = net::StackState::zeros(key_net);
  auto press_state = net::StackState::zeros(press_net);
  auto chord_state = net::StackState::zeros(chord_net);
  auto drum_state = net::StackState::zeros(drum_net);

  int prev_chord = kChordStartId;
  int prev_drum = kDrumStartId;
  for (std::size_t t = 0; t < cfg.length_steps; ++t) {
    const int key = sample_logits(net::step(key_net, key_state, assemble_key_input(s.key, t, s.profile[t])),
                                  cfg.temperature, rng);
    s.key.push_back(static_cast<std::uint8_t>(key));
    const int prev_press = t == 0 ? 0 : s.press.back();
    const int press = sample_logits(net::step(press_net, press_state, assemble_press_input(prev_press, key)),
                                    cfg.temperature, rng);
    s.press.push_back(static_cast<std::uint8_t>(press));

    if ((t + 1) % kStepsPerHalfBar == 0) {
      const std::span<const std::uint8_t> last4(s.key.data() + t + 1 - kStepsPerHalfBar, kStepsPerHalfBar);
      const net::Vector chord_logits = net::step(chord_net, chord_state, assemble_chord_input(prev_chord, last4));
      const net::Vector p = net::softmax(chord_logits);
      ChordRow row;
      std::copy(p.data(), p.data() + kNumChords, row.begin());
      g.chord_probs.push_back(row);
      prev_chord = sample_logits(chord_logits, cfg.temperature, rng);
      s.chord.push_back(static_cast<std::uint8_t>(prev_chord));

      prev_drum = sample_logits(net::step(drum_net, drum_state, assemble_drum_input(prev_drum, last4)),
                                cfg.temperature, rng);
      s.drum.push_back(static_cast<std::uint8_t>(prev_drum));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Melody alignment
// ---------------------------------------------------------------------------

namespace detail {

/// If the window starting at `w0` opens with silence, rotates the first note
/// that starts inside the window back to `w0`, moving the silence after it.
inline bool align_window(Ids& keys, std::vector<bool>& onsets, std::size_t w0, std::size_t width) {
  if (keys[w0] != kSilenceKey) return false;
  std::size_t s = w0;
  while (s < w0 + width && !onsets[s]) ++s;
  if (s == w0 + width) return false;
  std::size_t e = s + 1;
  while (e < keys.size() && keys[e] == keys[s] && !onsets[e]) ++e;
  std::rotate(keys.begin() + static_cast<long>(w0), keys.begin() + static_cast<long>(s), keys.begin() + static_cast<long>(e));
  std::rotate(onsets.begin() + static_cast<long>(w0), onsets.begin() + static_cast<long>(s), onsets.begin() + static_cast<long>(e));
  return true;
}

}  // namespace detail

/// Moves notes onto bar, half-bar and quarter-bar starts that would
/// otherwise open with silence. Passes repeat until nothing moves, so the
/// result is a fixed point. Press ids are recomputed from note boundaries.
inline std::pair<Ids, Ids> align_melody(std::span<const std::uint8_t> keys_in, std::span<const std::uint8_t> press_in) {
  if (keys_in.size() % kStepsPerBar != 0) throw GenerationError("align_melody: length must be a multiple of 8");
  Ids keys(keys_in.begin(), keys_in.end());
  std::vector<bool> onsets = decode_onsets(keys_in, press_in);
  static constexpr std::array<std::pair<std::size_t, std::size_t>, 7> kWindows = {
      {{0, 8}, {0, 4}, {4, 4}, {0, 2}, {2, 2}, {4, 2}, {6, 2}}};
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t bar = 0; bar < keys.size(); bar += kStepsPerBar) {
      for (auto [offset, width] : kWindows) moved |= detail::align_window(keys, onsets, bar + offset, width);
    }
  }
  Ids press = encode_press(keys, onsets);
  return {std::move(keys), std::move(press)};
}

// ---------------------------------------------------------------------------
// Chord smoothing
// ---------------------------------------------------------------------------

inline constexpr double kProbabilityFloor = 1e-12;

inline double chord_unary_cost(double p) { return -std::log(std::max(p, kProbabilityFloor)); }

inline double chord_pair_cost(int a, int b, double lambda) {
  return lambda * fifths_distance(ChordClass::from_id(a).root(), ChordClass::from_id(b).root());
}

/// Total cost of a chord sequence under the smoothing objective.
inline double chord_path_cost(std::span<const ChordRow> table, std::span<const std::uint8_t> ids, double lambda) {
  double cost = 0.0;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    cost += chord_unary_cost(table[t][ids[t]]);
    if (t > 0) cost += chord_pair_cost(ids[t - 1], ids[t], lambda);
  }
  return cost;
}

/// Viterbi over the 72 chord classes minimizing
/// sum -log p_t(c_t) + lambda * fifths_distance(root(c_t), root(c_t+1)).
/// Ties prefer the lower chord id.
inline Ids smooth_chords(std::span<const ChordRow> table, double lambda) {
  const std::size_t T = table.size();
  if (T == 0) return {};
  std::array<std::array<double, kNumChords>, kNumChords> pair{};
  for (int a = 0; a < kNumChords; ++a) {
    for (int b = 0; b < kNumChords; ++b) pair[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = chord_pair_cost(a, b, lambda);
  }
  std::vector<std::array<double, kNumChords>> cost(T);
  std::vector<std::array<std::uint8_t, kNumChords>> back(T);
  for (int c = 0; c < kNumChords; ++c) cost[0][static_cast<std::size_t>(c)] = chord_unary_cost(table[0][static_cast<std::size_t>(c)]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t c = 0; c < kNumChords; ++c) {
      double best = std::numeric_limits<double>::infinity();
      std::uint8_t arg = 0;
      for (std::size_t p = 0; p < kNumChords; ++p) {
        const double v = cost[t - 1][p] + pair[p][c];
        if (v < best) {
          best = v;
          arg = static_cast<std::uint8_t>(p);
        }
      }
      cost[t][c] = best + chord_unary_cost(table[t][c]);
      back[t][c] = arg;
    }
  }
  Ids ids(T);
  ids[T - 1] = static_cast<std::uint8_t>(std::min_element(cost[T - 1].begin(), cost[T - 1].end()) - cost[T - 1].begin());
  for (std::size_t t = T - 1; t > 0; --t) ids[t - 1] = back[t][ids[t]];
  return ids;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kRenderTicksPerBeat = 480;
inline constexpr std::uint32_t kTicksPerStep = kRenderTicksPerBeat / kStepsPerBeat;
inline constexpr std::uint32_t kTempo120 = 500000;
inline constexpr int kMelodyChannel = 0;
inline constexpr int kChordChannel = 1;
inline constexpr int kGrandPiano = 0;
inline constexpr int kChordRootPitch = 48;  // C3

namespace detail {

/// Sorts by tick with note-offs first at equal ticks, then closes the track.
inline midi::Track finish_track(std::vector<midi::MidiEvent> events, std::uint32_t end_tick) {
  std::stable_sort(events.begin(), events.end(), [](const midi::MidiEvent& a, const midi::MidiEvent& b) {
    auto rank = [](const midi::MidiEvent& e) {
      switch (e.kind) {
        case midi::EventKind::Tempo:
        case midi::EventKind::ProgramChange: return 0;
        case midi::EventKind::NoteOff: return 1;
        default: return 2;
      }
    };
    return a.tick != b.tick ? a.tick < b.tick : rank(a) < rank(b);
  });
  events.push_back(midi::MidiEvent::end_of_track(end_tick));
  return events;
}

}  // namespace detail

/// Four tracks: tempo, melody (channel 0), chords (channel 1, root-position
/// triads from C3), drums (channel 9). Pitched notes are shifted by the
/// smallest-magnitude interval taking C to the target root.
inline midi::MidiDocument render_song(const EncodedSequences& seq, const DrumVocabulary& vocab, Tone target_root) {
  const int shift = minimal_shift(Tone(0), target_root);
  const auto end_tick = static_cast<std::uint32_t>(seq.steps()) * kTicksPerStep;
  midi::MidiDocument doc;
  doc.ticks_per_beat = kRenderTicksPerBeat;
  doc.tracks.push_back(detail::finish_track({midi::MidiEvent::tempo(0, kTempo120)}, end_tick));

  std::vector<midi::MidiEvent> mel{midi::MidiEvent::program_change(0, kMelodyChannel, kGrandPiano)};
  const std::vector<bool> on = decode_onsets(seq.key, seq.press);
  for (std::size_t t = 0; t < seq.steps(); ++t) {
    if (!on[t]) continue;
    std::size_t e = t + 1;
    while (e < seq.steps() && seq.key[e] == seq.key[t] && !on[e]) ++e;
    const int pitch = pitch_of_key_id(seq.key[t]) + shift;
    mel.push_back(midi::MidiEvent::note_on(static_cast<std::uint32_t>(t) * kTicksPerStep, kMelodyChannel, pitch, 100));
    mel.push_back(midi::MidiEvent::note_off(static_cast<std::uint32_t>(e) * kTicksPerStep, kMelodyChannel, pitch));
  }
  doc.tracks.push_back(detail::finish_track(std::move(mel), end_tick));

  std::vector<midi::MidiEvent> chd{midi::MidiEvent::program_change(0, kChordChannel, kGrandPiano)};
  for (std::size_t h = 0; h < seq.half_bars(); ++h) {
    const ChordClass c = ChordClass::from_id(seq.chord[h]);
    const auto start = static_cast<std::uint32_t>(h * kStepsPerHalfBar) * kTicksPerStep;
    const std::uint32_t stop = start + kStepsPerHalfBar * kTicksPerStep;
    for (int iv : kTriadTemplates[static_cast<std::size_t>(c.type())]) {
      const int pitch = kChordRootPitch + c.root().value + iv + shift;
      chd.push_back(midi::MidiEvent::note_on(start, kChordChannel, pitch, 80));
      chd.push_back(midi::MidiEvent::note_off(stop, kChordChannel, pitch));
    }
  }
  doc.tracks.push_back(detail::finish_track(std::move(chd), end_tick));

  std::vector<midi::MidiEvent> drm;
  for (std::size_t h = 0; h < seq.half_bars(); ++h) {
    const DrumPattern p = vocab.pattern(seq.drum[h]);
    for (std::size_t k = 0; k < kStepsPerHalfBar; ++k) {
      const auto tick = static_cast<std::uint32_t>(h * kStepsPerHalfBar + k) * kTicksPerStep;
      for (std::uint8_t pitch : p[k]) {
        drm.push_back(midi::MidiEvent::note_on(tick, midi::kDrumChannel, pitch, 100));
        drm.push_back(midi::MidiEvent::note_off(tick + kTicksPerStep, midi::kDrumChannel, pitch));
      }
    }
  }
  doc.tracks.push_back(detail::finish_track(std::move(drm), end_tick));
  return doc;
}

/// sample -> align -> smooth -> render.
inline GeneratedSong generate_song(const HierarchicalModel& model, const GenerationConfig& cfg) {
  GeneratedSong g = sample_song(model, cfg);
  auto [keys, press] = align_melody(g.seq.key, g.seq.press);
  g.seq.key = std::move(keys);
  g.seq.press = std::move(press);
  g.seq.chord = smooth_chords(g.chord_probs, cfg.dp_lambda);
  g.document = render_song(g.seq, model.vocab, cfg.target_root);
  return g;
}

/// Sidecar text: four lines (key, press, chord, drum), space-separated ids.
inline std::string sequence_dump(const EncodedSequences& seq) {
  std::ostringstream out;
  for (const Ids* ids : {&seq.key, &seq.press, &seq.chord, &seq.drum}) {
    for (std::size_t i = 0; i < ids->size(); ++i) out << (i ? " " : "") << static_cast<int>((*ids)[i]);
    out << '\n';
  }
  return out.str();
}

inline EncodedSequences parse_sequence_dump(const std::string& text) {
  EncodedSequences seq;
  std::istringstream in(text);
  std::string line;
  for (Ids* target : {&seq.key, &seq.press, &seq.chord, &seq.drum}) {
    if (!std::getline(in, line)) throw FormatError("sequence dump needs four lines");
    std::istringstream ls(line);
    int v;
    while (ls >> v) {
      if (v < 0 || v > 255) throw FormatError("sequence dump id out of range");
      target->push_back(static_cast<std::uint8_t>(v));
    }
    if (!ls.eof()) throw FormatError("sequence dump contains a non-numeric token");
  }
  return seq;
}

}  // namespace popgen
