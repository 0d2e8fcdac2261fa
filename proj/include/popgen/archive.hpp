/**
 * @file archive.hpp
 * @brief "PGC1" corpus archive: encoded songs plus the drum vocabulary and
 *        profile summary they were encoded with.
 *
 * Layout (little-endian):
 *   "PGC1" u16 version=1 u32 song_count
 *   per song: str16 source_id, u8 scale_type (1..4), u8 original_root,
 *             ids key, ids press, ids profile, ids chord, ids drum
 *             (ids = u32 length + that many u8)
 *   vocabulary: u32 n, per pattern 4 x (u8 hits + hits x u8 pitch) + u64 count,
 *               u64 total_half_bars, f64 top100_coverage
 *   profile: u32 clusters, u32 dim, clusters*dim f64 centroids,
 *            clusters x u32 ordering
 */
#pragma once

#include <string>
#include <vector>

#include "popgen/bytes.hpp"
#include "popgen/profile.hpp"

namespace popgen {

struct ArchiveSong {
  std::string source_id;
  Tone original_root{};
  EncodedSequences seq;

  friend bool operator==(const ArchiveSong&, const ArchiveSong&) = default;
};

struct CorpusArchive {
  std::vector<ArchiveSong> songs;
  DrumVocabulary vocab;
  ProfileModel profile;

  friend bool operator==(const CorpusArchive&, const CorpusArchive&) = default;
};

inline constexpr std::uint16_t kArchiveVersion = 1;

inline void write_vocabulary(ByteWriter& w, const DrumVocabulary& v) {
  w.u32(static_cast<std::uint32_t>(v.patterns.size()));
  for (std::size_t i = 0; i < v.patterns.size(); ++i) {
    for (const DrumHits& hits : v.patterns[i]) {
      w.u8(static_cast<std::uint8_t>(hits.size()));
      for (std::uint8_t p : hits) w.u8(p);
    }
    w.u64(v.counts[i]);
  }
  w.u64(v.total_half_bars);
  w.f64(v.top100_coverage);
}

template <typename E>
DrumVocabulary read_vocabulary(ByteReader<E>& r) {
  DrumVocabulary v;
  const std::uint32_t n = r.u32();
  if (n > DrumVocabulary::kCapacity) r.fail("drum vocabulary larger than 99 patterns");
  for (std::uint32_t i = 0; i < n; ++i) {
    DrumPattern p;
    for (DrumHits& hits : p) {
      hits.resize(r.u8());
      for (std::uint8_t& h : hits) h = r.u8();
    }
    v.patterns.push_back(std::move(p));
    v.counts.push_back(r.u64());
  }
  v.total_half_bars = r.u64();
  v.top100_coverage = r.f64();
  return v;
}

inline void write_profile(ByteWriter& w, const ProfileModel& m) {
  w.u32(static_cast<std::uint32_t>(m.centroids.size()));
  w.u32(static_cast<std::uint32_t>(kNumKeys));
  for (const auto& c : m.centroids) {
    for (double v : c) w.f64(v);
  }
  for (int o : m.ordering) w.u32(static_cast<std::uint32_t>(o));
}

template <typename E>
ProfileModel read_profile(ByteReader<E>& r) {
  ProfileModel m;
  const std::uint32_t k = r.u32();
  const std::uint32_t dim = r.u32();
  if (k > 255 || dim != static_cast<std::uint32_t>(kNumKeys)) r.fail("bad profile dimensions");
  m.config.clusters = k;
  m.centroids.assign(k, std::vector<double>(dim));
  for (auto& c : m.centroids) {
    for (double& v : c) v = r.f64();
  }
  m.ordering.resize(k);
  for (int& o : m.ordering) o = static_cast<int>(r.u32());
  return m;
}

inline std::vector<std::uint8_t> write_archive(const CorpusArchive& a) {
  ByteWriter w;
  w.magic("PGC1");
  w.u16(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(a.songs.size()));
  for (const ArchiveSong& s : a.songs) {
    w.str16(s.source_id);
    w.u8(static_cast<std::uint8_t>(index_of(s.seq.scale_type)));
    w.u8(static_cast<std::uint8_t>(s.original_root.value));
    w.ids(s.seq.key);
    w.ids(s.seq.press);
    w.ids(s.seq.profile);
    w.ids(s.seq.chord);
    w.ids(s.seq.drum);
  }
  write_vocabulary(w, a.vocab);
  write_profile(w, a.profile);
  return std::move(w).take();
}

inline CorpusArchive read_archive(std::span<const std::uint8_t> bytes) {
  ByteReader<FormatError> r(bytes, "corpus archive");
  r.expect_magic("PGC1");
  if (r.u16() != kArchiveVersion) r.fail("unsupported archive version");
  CorpusArchive a;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    ArchiveSong s;
    s.source_id = r.str16();
    const int type = r.u8();
    if (type < 1 || type > kNumScaleTypes) r.fail("scale type out of range");
    s.seq.scale_type = scale_type_from_index(type);
    s.original_root = Tone(r.u8());
    s.seq.key = r.ids();
    s.seq.press = r.ids();
    s.seq.profile = r.ids();
    s.seq.chord = r.ids();
    s.seq.drum = r.ids();
    const auto& q = s.seq;
    if (q.press.size() != q.steps() || q.profile.size() != q.steps() || q.drum.size() != q.half_bars() ||
        q.half_bars() != q.steps() / kStepsPerHalfBar) {
      r.fail("inconsistent sequence lengths");
    }
    auto bad = [](const Ids& ids, int limit) {
      return std::any_of(ids.begin(), ids.end(), [limit](std::uint8_t v) { return v >= limit; });
    };
    if (bad(q.key, kNumKeys) || bad(q.press, kNumPress) || bad(q.profile, kNumProfiles) || bad(q.chord, kNumChords) ||
        bad(q.drum, kNumDrums)) {
      r.fail("id out of range");
    }
    a.songs.push_back(std::move(s));
  }
  a.vocab = read_vocabulary(r);
  a.profile = read_profile(r);
  if (!r.at_end()) r.fail("trailing bytes");
  return a;
}

}  // namespace popgen
