/**
 * @file model.hpp
 * @brief The hierarchical model: one key stack per scale type plus press,
 *        chord and drum stacks; input feature assembly; teacher-forced
 *        training; the "PGM1" model bundle.
 */
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "popgen/archive.hpp"
#include "popgen/net.hpp"

namespace popgen {

// Key input layout: prev key | key 8 back | key 16 back | 2 repeat flags |
// 5-bit time code | profile.
inline constexpr int kKeyPrevOffset = 0;
inline constexpr int kKeyBack8Offset = kNumKeys;
inline constexpr int kKeyBack16Offset = 2 * kNumKeys;
inline constexpr int kRepeatOffset = 3 * kNumKeys;
inline constexpr int kTimeCodeOffset = kRepeatOffset + 2;
inline constexpr int kTimeCodeBits = 5;
inline constexpr int kProfileOffset = kTimeCodeOffset + kTimeCodeBits;
inline constexpr int kKeyInputDim = kProfileOffset + kNumProfiles;  // 128

inline constexpr int kPressInputDim = kNumPress + kNumKeys;                       // 45
inline constexpr int kChordInputDim = kNumChords + kStepsPerHalfBar * kNumKeys;  // 220
inline constexpr int kDrumInputDim = kNumDrums + kStepsPerHalfBar * kNumKeys;    // 248

/// Previous-output ids fed to the chord/drum layers before the first half-bar.
inline constexpr int kChordStartId = 0;
inline constexpr int kDrumStartId = kDrumOovId;

namespace detail {
inline void set_one_hot(net::Vector& v, int offset, int id, int size) {
  if (id < 0 || id >= size) {
    throw EncodingError("id " + std::to_string(id) + " outside one-hot range 0.." + std::to_string(size - 1));
  }
  v(offset + id) = 1.0;
}
}  // namespace detail

/// Key-layer input at step `t`; `history` holds the keys of steps 0..t-1
/// (longer histories are fine, only indices < t are read). Steps before 0
/// read as silence.
inline net::Vector assemble_key_input(std::span<const std::uint8_t> history, std::size_t t, int profile_id) {
  auto key_at = [&](long s) -> int { return s < 0 ? kSilenceKey : history[static_cast<std::size_t>(s)]; };
  const long tt = static_cast<long>(t);
  net::Vector x = net::Vector::Zero(kKeyInputDim);
  const int prev = key_at(tt - 1);
  detail::set_one_hot(x, kKeyPrevOffset, prev, kNumKeys);
  detail::set_one_hot(x, kKeyBack8Offset, key_at(tt - kStepsPerBar), kNumKeys);
  detail::set_one_hot(x, kKeyBack16Offset, key_at(tt - 2 * kStepsPerBar), kNumKeys);
  x(kRepeatOffset) = prev == key_at(tt - 1 - kStepsPerBar) ? 1.0 : 0.0;
  x(kRepeatOffset + 1) = prev == key_at(tt - 1 - 2 * kStepsPerBar) ? 1.0 : 0.0;
  const int phase = static_cast<int>(t % 32);
  for (int b = 0; b < kTimeCodeBits; ++b) x(kTimeCodeOffset + b) = (phase >> (kTimeCodeBits - 1 - b)) & 1;
  detail::set_one_hot(x, kProfileOffset, profile_id, kNumProfiles);
  return x;
}

inline net::Vector assemble_press_input(int prev_press, int current_key) {
  net::Vector x = net::Vector::Zero(kPressInputDim);
  detail::set_one_hot(x, 0, prev_press, kNumPress);
  detail::set_one_hot(x, kNumPress, current_key, kNumKeys);
  return x;
}

/// one-hot(prev id over `classes`) followed by one-hot of four keys.
inline net::Vector assemble_context_input(int prev_id, int classes, std::span<const std::uint8_t> last4_keys) {
  if (last4_keys.size() != kStepsPerHalfBar) throw ShapeError("expected four key ids");
  net::Vector x = net::Vector::Zero(classes + kStepsPerHalfBar * kNumKeys);
  detail::set_one_hot(x, 0, prev_id, classes);
  for (int k = 0; k < kStepsPerHalfBar; ++k) detail::set_one_hot(x, classes + k * kNumKeys, last4_keys[static_cast<std::size_t>(k)], kNumKeys);
  return x;
}

inline net::Vector assemble_chord_input(int prev_chord, std::span<const std::uint8_t> last4_keys) {
  return assemble_context_input(prev_chord, kNumChords, last4_keys);
}

inline net::Vector assemble_drum_input(int prev_drum, std::span<const std::uint8_t> last4_keys) {
  return assemble_context_input(prev_drum, kNumDrums, last4_keys);
}

/// Inverse of assemble_context_input; throws if the block structure is broken.
inline std::pair<int, std::array<std::uint8_t, 4>> decode_context_input(const net::Vector& x, int classes) {
  auto block = [&](int offset, int size) {
    int hot = -1;
    for (int i = 0; i < size; ++i) {
      const double v = x(offset + i);
      if (v == 1.0) {
        if (hot >= 0) throw EncodingError("one-hot block has several ones");
        hot = i;
      } else if (v != 0.0) {
        throw EncodingError("feature vector is not {0,1}-valued");
      }
    }
    if (hot < 0) throw EncodingError("one-hot block is empty");
    return hot;
  };
  if (x.size() != classes + kStepsPerHalfBar * kNumKeys) throw ShapeError("context input has wrong size");
  std::array<std::uint8_t, 4> keys{};
  for (int k = 0; k < kStepsPerHalfBar; ++k) keys[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(block(classes + k * kNumKeys, kNumKeys));
  return {block(0, classes), keys};
}

// ---------------------------------------------------------------------------
// Training sequences (teacher forcing)
// ---------------------------------------------------------------------------

inline net::Sequence key_sequence(const EncodedSequences& e) {
  net::Sequence s;
  for (std::size_t t = 0; t < e.steps(); ++t) {
    s.inputs.push_back(assemble_key_input(e.key, t, e.profile[t]));
    s.targets.push_back(e.key[t]);
  }
  return s;
}

inline net::Sequence press_sequence(const EncodedSequences& e) {
  net::Sequence s;
  for (std::size_t t = 0; t < e.steps(); ++t) {
    s.inputs.push_back(assemble_press_input(t == 0 ? 0 : e.press[t - 1], e.key[t]));
    s.targets.push_back(e.press[t]);
  }
  return s;
}

/// Chord/drum layers step once per half-bar, conditioned on that half-bar's
/// four keys and the previous half-bar's id.
inline net::Sequence context_sequence(const EncodedSequences& e, const Ids& ids, int classes, int start_id) {
  net::Sequence s;
  for (std::size_t h = 0; h < ids.size(); ++h) {
    const std::span<const std::uint8_t> keys(e.key.data() + h * kStepsPerHalfBar, kStepsPerHalfBar);
    s.inputs.push_back(assemble_context_input(h == 0 ? start_id : ids[h - 1], classes, keys));
    s.targets.push_back(ids[h]);
  }
  return s;
}

inline net::Sequence chord_sequence(const EncodedSequences& e) {
  return context_sequence(e, e.chord, kNumChords, kChordStartId);
}
inline net::Sequence drum_sequence(const EncodedSequences& e) { return context_sequence(e, e.drum, kNumDrums, kDrumStartId); }

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ModelConfig {
  int hidden_dim = 512;
  int epochs = 10;
  double learning_rate = 2e-3;
  double lr_decay = 0.99;
  std::size_t bptt = 64;
  std::uint64_t seed = 0;
  int jobs = 1;
};

enum class Layer : int { Key1 = 0, Key2, Key3, Key4, Press, Chord, Drum };
inline constexpr int kNumLayers = 7;
inline constexpr std::array<const char*, kNumLayers> kLayerNames = {"key1", "key2", "key3", "key4",
                                                                    "press", "chord", "drum"};

inline Layer key_layer(ScaleType t) { return static_cast<Layer>(index_of(t) - 1); }

struct HierarchicalModel {
  std::array<net::LstmStack, kNumLayers> stacks;
  std::array<net::AdamState, kNumLayers> adam;
  std::array<bool, kNumLayers> trained{};
  DrumVocabulary vocab;
  ProfileModel profile;
  std::map<std::string, std::string> config_echo;

  const net::LstmStack& stack(Layer l) const { return stacks[static_cast<std::size_t>(l)]; }
  const net::LstmStack& key_stack(ScaleType t) const { return stack(key_layer(t)); }
  bool key_trained(ScaleType t) const { return trained[static_cast<std::size_t>(key_layer(t))]; }
};

inline constexpr std::array<int, kNumLayers> kLayerInputDims = {kKeyInputDim,   kKeyInputDim,   kKeyInputDim, kKeyInputDim,
                                                                kPressInputDim, kChordInputDim, kDrumInputDim};
inline constexpr std::array<int, kNumLayers> kLayerClasses = {kNumKeys, kNumKeys, kNumKeys, kNumKeys,
                                                              kNumPress, kNumChords, kNumDrums};

inline std::uint64_t layer_seed(std::uint64_t seed, int layer) { return derive_seed(seed, static_cast<std::uint64_t>(layer)); }

/// Untrained model with every stack at its seeded uniform init.
inline HierarchicalModel init_model(const ModelConfig& cfg) {
  HierarchicalModel m;
  for (int l = 0; l < kNumLayers; ++l) {
    const auto i = static_cast<std::size_t>(l);
    m.stacks[i] = net::make_stack(kLayerInputDims[i], cfg.hidden_dim, kLayerClasses[i], layer_seed(cfg.seed, 2 * l));
    m.adam[i] = net::AdamState::for_stack(m.stacks[i], cfg.learning_rate, cfg.lr_decay);
  }
  return m;
}

/// Teacher-forced sequences for one layer. Key layers only see songs of
/// their own scale type.
inline std::vector<net::Sequence> layer_sequences(std::span<const ArchiveSong> songs, Layer layer) {
  std::vector<net::Sequence> out;
  for (const ArchiveSong& s : songs) {
    const EncodedSequences& e = s.seq;
    if (e.steps() == 0) continue;
    switch (layer) {
      case Layer::Key1:
      case Layer::Key2:
      case Layer::Key3:
      case Layer::Key4:
        if (key_layer(e.scale_type) == layer) out.push_back(key_sequence(e));
        break;
      case Layer::Press: out.push_back(press_sequence(e)); break;
      case Layer::Chord:
        if (e.half_bars() > 0) out.push_back(chord_sequence(e));
        break;
      case Layer::Drum:
        if (e.half_bars() > 0) out.push_back(drum_sequence(e));
        break;
    }
  }
  return out;
}

inline double mean_loss(const net::LstmStack& s, std::span<const net::Sequence> seqs) {
  double total = 0.0;
  std::size_t steps = 0;
  for (const net::Sequence& q : seqs) {
    total += net::sequence_loss(s, q) * static_cast<double>(q.inputs.size());
    steps += q.inputs.size();
  }
  return steps ? total / static_cast<double>(steps) : 0.0;
}

struct LayerReport {
  bool trained = false;
  std::size_t sequences = 0;
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;
};

struct TrainResult {
  HierarchicalModel model;
  std::array<LayerReport, kNumLayers> reports;
  std::vector<std::string> warnings;
};

/// Trains one stack in place for cfg.epochs epochs, shuffling sequence order
/// every epoch with a layer-specific seed.
inline LayerReport train_layer(net::LstmStack& stack, net::AdamState& adam, std::vector<net::Sequence> seqs,
                               const ModelConfig& cfg, int layer) {
  LayerReport rep;
  rep.sequences = seqs.size();
  if (seqs.empty()) return rep;
  rep.initial_loss = mean_loss(stack, seqs);
  Rng rng(layer_seed(cfg.seed, 2 * layer + 1));
  const net::TrainOptions opt{cfg.bptt};
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(std::span<net::Sequence>(seqs), rng);
    rep.epoch_losses.push_back(net::train_epoch(stack, adam, seqs, opt));
  }
  rep.trained = true;
  return rep;
}

/// Trains all seven stacks independently on ground-truth conditioning.
/// Layers run on up to cfg.jobs threads; results do not depend on jobs.
inline TrainResult train_model(const CorpusArchive& corpus, const ModelConfig& cfg) {
  if (corpus.songs.empty()) throw Error("cannot train on an empty corpus");
  TrainResult res;
  res.model = init_model(cfg);
  res.model.vocab = corpus.vocab;
  res.model.profile = corpus.profile;

  auto task = [&](int l) {
    const auto i = static_cast<std::size_t>(l);
    res.reports[i] = train_layer(res.model.stacks[i], res.model.adam[i],
                                 layer_sequences(corpus.songs, static_cast<Layer>(l)), cfg, l);
  };
  const int jobs = std::max(1, cfg.jobs);
  for (int first = 0; first < kNumLayers; first += jobs) {
    std::vector<std::future<void>> running;
    for (int l = first; l < std::min(kNumLayers, first + jobs); ++l) running.push_back(std::async(std::launch::async, task, l));
    for (auto& f : running) f.get();
  }

  for (int l = 0; l < kNumLayers; ++l) {
    const auto i = static_cast<std::size_t>(l);
    res.model.trained[i] = res.reports[i].trained;
    if (!res.reports[i].trained) {
      res.warnings.push_back(std::string("layer ") + kLayerNames[i] + " has no training data; left at initialization");
    }
    net::round_to_f32(res.model.stacks[i]);
    res.model.adam[i].round_to_f32();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kBundleVersion = 1;

/// "PGM1", u16 version, u32 config count + (str16 key, str32 value) pairs,
/// 7 x u8 trained flag, drum vocabulary, profile summary (archive layout),
/// then 7 x (u64 length + PGN1 checkpoint) in layer order
/// key1..key4, press, chord, drum.
inline std::vector<std::uint8_t> save_bundle(const HierarchicalModel& m) {
  ByteWriter w;
  w.magic("PGM1");
  w.u16(kBundleVersion);
  w.u32(static_cast<std::uint32_t>(m.config_echo.size()));
  for (const auto& [k, v] : m.config_echo) {
    w.str16(k);
    w.str32(v);
  }
  for (bool t : m.trained) w.u8(t ? 1 : 0);
  write_vocabulary(w, m.vocab);
  write_profile(w, m.profile);
  for (int l = 0; l < kNumLayers; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const auto ck = net::save_checkpoint(m.stacks[i], m.adam[i], {{"layer", kLayerNames[i]}});
    w.u64(ck.size());
    w.bytes(ck);
  }
  return std::move(w).take();
}

inline HierarchicalModel load_bundle(std::span<const std::uint8_t> bytes) {
  ByteReader<CheckpointError> r(bytes, "model bundle");
  r.expect_magic("PGM1");
  if (r.u16() != kBundleVersion) r.fail("unsupported bundle version");
  HierarchicalModel m;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str16();
    m.config_echo[k] = r.str32();
  }
  for (bool& t : m.trained) t = r.u8() != 0;
  m.vocab = read_vocabulary(r);
  m.profile = read_profile(r);
  for (int l = 0; l < kNumLayers; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const std::uint64_t len = r.u64();
    if (len > bytes.size()) r.fail("checkpoint length exceeds bundle");
    net::Checkpoint ck = net::load_checkpoint(r.bytes(static_cast<std::size_t>(len)));
    if (ck.stack.input_dim() != kLayerInputDims[i] || ck.stack.num_classes() != kLayerClasses[i]) {
      r.fail(std::string("layer ") + kLayerNames[i] + " has unexpected dimensions");
    }
    m.stacks[i] = std::move(ck.stack);
    m.adam[i] = std::move(ck.adam);
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return m;
}

}  // namespace popgen
