/**
 * @file profile.hpp
 * @brief Melody profile: per-step register cluster ids from local two-bar
 *        key histograms, and full-song encoding.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "popgen/encoding.hpp"
#include "popgen/kmeans.hpp"

namespace popgen {

struct ProfileConfig {
  std::size_t clusters = kNumProfiles;
  int window_steps = 2 * kStepsPerBar;  // histogram width, centered
  int smoothing_window = 9;             // moving average over cluster ids
  int max_iterations = 50;
  std::uint64_t seed = 0;
};

/// Corpus summary of the per-song clusterings: centroid of each profile id
/// averaged over all songs, and the permutation that sorts those averages
/// by mean note.
struct ProfileModel {
  ProfileConfig config;
  std::vector<std::vector<double>> centroids;  // clusters x kNumKeys
  std::vector<int> ordering;

  friend bool operator==(const ProfileModel& a, const ProfileModel& b) {
    return a.centroids == b.centroids && a.ordering == b.ordering;
  }
};

/// Mean MIDI pitch of a key histogram; -1 when it holds only silence.
inline double mean_note(std::span<const double> hist) {
  double mass = 0.0, sum = 0.0;
  for (int k = 0; k < kSilenceKey; ++k) {
    mass += hist[static_cast<std::size_t>(k)];
    sum += hist[static_cast<std::size_t>(k)] * (kLowestPitch + k);
  }
  return mass > 0.0 ? sum / mass : -1.0;
}

/// Normalized key histogram of the window centered at every step.
inline std::vector<std::vector<double>> local_histograms(std::span<const std::uint8_t> keys, int width) {
  const int n = static_cast<int>(keys.size());
  const int half = width / 2;
  std::vector<std::vector<double>> out(keys.size(), std::vector<double>(kNumKeys, 0.0));
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(n, t + (width - half));
    for (int u = lo; u < hi; ++u) out[static_cast<std::size_t>(t)][keys[static_cast<std::size_t>(u)]] += 1.0;
    for (double& v : out[static_cast<std::size_t>(t)]) v /= static_cast<double>(hi - lo);
  }
  return out;
}

/// Centered moving average of ids, rounded to the nearest id.
inline Ids smooth_ids(std::span<const std::uint8_t> ids, int window) {
  Ids out(ids.size());
  const int n = static_cast<int>(ids.size());
  const int before = (window - 1) / 2;
  const int after = window - 1 - before;
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - before);
    const int hi = std::min(n - 1, t + after);
    double sum = 0.0;
    for (int u = lo; u <= hi; ++u) sum += ids[static_cast<std::size_t>(u)];
    out[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(std::lround(sum / (hi - lo + 1)));
  }
  return out;
}

struct SongProfile {
  Ids ids;                                     // smoothed, per step
  std::vector<std::vector<double>> centroids;  // indexed by profile id
};

/// Clusters the song's own local histograms and relabels clusters by
/// ascending mean note. Songs shorter than a bar get id 0 throughout.
inline SongProfile song_profile(std::span<const std::uint8_t> keys, const ProfileConfig& cfg) {
  SongProfile out;
  if (keys.size() < static_cast<std::size_t>(kStepsPerBar)) {
    out.ids.assign(keys.size(), 0);
    std::vector<double> global(kNumKeys, 0.0);
    for (std::uint8_t k : keys) global[k] += 1.0 / static_cast<double>(keys.size());
    out.centroids.push_back(std::move(global));
    return out;
  }
  const auto hists = local_histograms(keys, cfg.window_steps);
  const KMeansResult km = kmeans(hists, {cfg.clusters, cfg.max_iterations, cfg.seed});

  std::vector<std::size_t> order(km.centroids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return mean_note(km.centroids[a]) < mean_note(km.centroids[b]);
  });
  std::vector<std::uint8_t> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    rank[order[r]] = static_cast<std::uint8_t>(r);
    out.centroids.push_back(km.centroids[order[r]]);
  }
  Ids raw(keys.size());
  for (std::size_t t = 0; t < keys.size(); ++t) raw[t] = rank[km.labels[t]];
  out.ids = smooth_ids(raw, cfg.smoothing_window);
  return out;
}

inline Ids profile_sequence(std::span<const std::uint8_t> keys, const ProfileModel& model) {
  return song_profile(keys, model.config).ids;
}

/// Runs the per-song clustering on every song and averages the centroids
/// that share a profile id.
inline ProfileModel build_profile_model(std::span<const Song> corpus, const ProfileConfig& cfg = {}) {
  ProfileModel model;
  model.config = cfg;
  model.centroids.assign(cfg.clusters, std::vector<double>(kNumKeys, 0.0));
  std::vector<double> weight(cfg.clusters, 0.0);
  for (const Song& s : corpus) {
    const SongProfile sp = song_profile(encode_melody(s).first, cfg);
    for (std::size_t c = 0; c < sp.centroids.size(); ++c) {
      for (int k = 0; k < kNumKeys; ++k) model.centroids[c][static_cast<std::size_t>(k)] += sp.centroids[c][static_cast<std::size_t>(k)];
      weight[c] += 1.0;
    }
  }
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    if (weight[c] > 0.0) {
      for (double& v : model.centroids[c]) v /= weight[c];
    }
  }
  model.ordering.resize(cfg.clusters);
  std::iota(model.ordering.begin(), model.ordering.end(), 0);
  std::stable_sort(model.ordering.begin(), model.ordering.end(), [&](int a, int b) {
    return mean_note(model.centroids[static_cast<std::size_t>(a)]) < mean_note(model.centroids[static_cast<std::size_t>(b)]);
  });
  return model;
}

/// Full categorical encoding of a normalized song.
inline EncodedSequences encode_song(const Song& song, const DrumVocabulary& vocab, const ProfileModel& profile) {
  if (std::none_of(song.melody.begin(), song.melody.end(), [](const MelodyStep& m) { return m.pitch.has_value(); })) {
    throw EncodingError("song '" + song.source_id + "' has an empty melody");
  }
  EncodedSequences enc;
  enc.scale_type = song.scale.type;
  auto [keys, onsets] = encode_melody(song);
  enc.press = encode_press(keys, onsets);
  enc.profile = profile_sequence(keys, profile);
  enc.key = std::move(keys);
  enc.chord = encode_chords(song);
  enc.drum = encode_drums(song, vocab);
  return enc;
}

}  // namespace popgen
