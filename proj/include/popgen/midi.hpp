/**
 * @file midi.hpp
 * @brief Standard MIDI File (formats 0 and 1) reader and writer.
 *
 * Events are kept per track with absolute ticks. Only note-on, note-off,
 * tempo, program-change and end-of-track are represented; every other
 * channel, meta or sysex event is decoded far enough to be skipped.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "popgen/error.hpp"

namespace popgen::midi {

enum class EventKind : std::uint8_t { NoteOn, NoteOff, Tempo, ProgramChange, EndOfTrack };

inline constexpr int kDrumChannel = 9;
inline constexpr std::uint32_t kMaxVlq = 0x0FFFFFFF;

struct MidiEvent {
  std::uint32_t tick = 0;
  EventKind kind = EventKind::EndOfTrack;
  std::uint8_t channel = 0;
  std::uint8_t pitch = 0;     // note events; program number for ProgramChange
  std::uint8_t velocity = 0;  // note events
  std::uint32_t tempo_us_per_beat = 0;

  static MidiEvent note_on(std::uint32_t tick, int channel, int pitch, int velocity) {
    return {tick, EventKind::NoteOn, static_cast<std::uint8_t>(channel), static_cast<std::uint8_t>(pitch),
            static_cast<std::uint8_t>(velocity), 0};
  }
  static MidiEvent note_off(std::uint32_t tick, int channel, int pitch, int velocity = 0) {
    return {tick, EventKind::NoteOff, static_cast<std::uint8_t>(channel), static_cast<std::uint8_t>(pitch),
            static_cast<std::uint8_t>(velocity), 0};
  }
  static MidiEvent tempo(std::uint32_t tick, std::uint32_t us_per_beat) {
    return {tick, EventKind::Tempo, 0, 0, 0, us_per_beat};
  }
  static MidiEvent program_change(std::uint32_t tick, int channel, int program) {
    return {tick, EventKind::ProgramChange, static_cast<std::uint8_t>(channel), static_cast<std::uint8_t>(program), 0,
            0};
  }
  static MidiEvent end_of_track(std::uint32_t tick) { return {tick, EventKind::EndOfTrack, 0, 0, 0, 0}; }

  friend bool operator==(const MidiEvent&, const MidiEvent&) = default;
};

using Track = std::vector<MidiEvent>;

struct MidiDocument {
  std::uint16_t ticks_per_beat = 480;
  std::vector<Track> tracks;

  friend bool operator==(const MidiDocument&, const MidiDocument&) = default;
};

namespace detail {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes, std::size_t base = 0) : bytes_(bytes), base_(base) {}

  /// Position relative to the span.
  std::size_t offset() const { return pos_; }
  std::size_t file_offset() const { return base_ + pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8(const char* what) {
    if (pos_ >= bytes_.size()) fail(what);
    return bytes_[pos_++];
  }
  std::uint8_t peek(const char* what) const {
    if (pos_ >= bytes_.size()) fail(what);
    return bytes_[pos_];
  }
  std::uint16_t u16be(const char* what) {
    const std::uint16_t hi = u8(what);
    return static_cast<std::uint16_t>((hi << 8) | u8(what));
  }
  std::uint32_t u32be(const char* what) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | u8(what);
    return v;
  }
  std::uint32_t vlq(const char* what) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8(what);
      v = (v << 7) | (b & 0x7Fu);
      if ((b & 0x80u) == 0) return v;
    }
    throw FormatError(std::string("variable-length quantity longer than 4 bytes at byte offset ") +
                      std::to_string(file_offset()));
  }
  void skip(std::size_t n, const char* what) {
    if (n > remaining()) {
      pos_ = bytes_.size();
      fail(what);
    }
    pos_ += n;
  }

  [[noreturn]] void fail(const char* what) const {
    throw FormatError(std::string("truncated ") + what + " at byte offset " + std::to_string(file_offset()));
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t base_ = 0;
  std::size_t pos_ = 0;
};

inline void put_u16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
}

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  if (v > kMaxVlq) throw EncodingError("value " + std::to_string(v) + " exceeds variable-length quantity range");
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = static_cast<std::uint8_t>(v & 0x7F);
  while ((v >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>(0x80 | (v & 0x7F));
  while (n > 0) out.push_back(buf[--n]);
}

inline Track parse_track(std::span<const std::uint8_t> body, std::size_t base_offset) {
  Reader r(body, base_offset);
  Track track;
  std::uint32_t tick = 0;
  std::uint8_t running = 0;
  bool ended = false;
  while (!r.at_end() && !ended) {
    const std::uint32_t delta = r.vlq("delta time");
    if (static_cast<std::uint64_t>(tick) + delta > UINT32_MAX) throw FormatError("tick overflow");
    tick += delta;
    std::uint8_t status = r.peek("event status");
    if (status & 0x80u) {
      r.u8("event status");
    } else {
      if (running == 0) {
        throw FormatError("data byte without running status at byte offset " +
                          std::to_string(r.file_offset()));
      }
      status = running;
    }

    if (status == 0xFF) {
      running = 0;
      const std::uint8_t type = r.u8("meta type");
      const std::uint32_t len = r.vlq("meta length");
      if (type == 0x2F) {
        r.skip(len, "end-of-track");
        track.push_back(MidiEvent::end_of_track(tick));
        ended = true;
      } else if (type == 0x51 && len == 3) {
        std::uint32_t us = 0;
        for (int i = 0; i < 3; ++i) us = (us << 8) | r.u8("tempo");
        track.push_back(MidiEvent::tempo(tick, us));
      } else {
        r.skip(len, "meta event");
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running = 0;
      r.skip(r.vlq("sysex length"), "sysex event");
      continue;
    }
    if (status >= 0xF0) {
      throw FormatError("unexpected system message in track at byte offset " +
                        std::to_string(r.file_offset()));
    }

    running = status;
    const std::uint8_t channel = status & 0x0F;
    switch (status & 0xF0) {
      case 0x80: {
        const std::uint8_t pitch = r.u8("note-off") & 0x7F;
        const std::uint8_t vel = r.u8("note-off") & 0x7F;
        track.push_back(MidiEvent::note_off(tick, channel, pitch, vel));
        break;
      }
      case 0x90: {
        const std::uint8_t pitch = r.u8("note-on") & 0x7F;
        const std::uint8_t vel = r.u8("note-on") & 0x7F;
        track.push_back(vel == 0 ? MidiEvent::note_off(tick, channel, pitch, 0)
                                 : MidiEvent::note_on(tick, channel, pitch, vel));
        break;
      }
      case 0xC0:
        track.push_back(MidiEvent::program_change(tick, channel, r.u8("program change") & 0x7F));
        break;
      case 0xD0:
        r.skip(1, "channel pressure");
        break;
      default:  // 0xA0 aftertouch, 0xB0 control change, 0xE0 pitch bend
        r.skip(2, "channel event");
        break;
    }
  }
  if (!ended) track.push_back(MidiEvent::end_of_track(tick));
  return track;
}

}  // namespace detail

/// Decodes a format-0 or format-1 file. Note-on with velocity 0 becomes a
/// note-off; a missing end-of-track is synthesized at the last tick.
inline MidiDocument parse_midi(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  if (bytes.size() < 14) throw FormatError("malformed header chunk: file shorter than 14 bytes");
  const std::uint32_t magic = r.u32be("header");
  if (magic != 0x4D546864u) throw FormatError("malformed header chunk: missing MThd");
  const std::uint32_t header_len = r.u32be("header");
  if (header_len < 6) throw FormatError("malformed header chunk: length < 6");
  const std::uint16_t format = r.u16be("header");
  const std::uint16_t ntracks = r.u16be("header");
  const std::uint16_t division = r.u16be("header");
  r.skip(header_len - 6, "header");
  if (format > 1) throw FormatError("unsupported SMF format " + std::to_string(format));
  if (division & 0x8000u) throw FormatError("SMPTE time division is not supported");
  if (division == 0) throw FormatError("malformed header chunk: zero ticks per beat");

  MidiDocument doc;
  doc.ticks_per_beat = division;
  while (doc.tracks.size() < ntracks) {
    if (r.at_end()) {
      throw FormatError("truncated file: expected " + std::to_string(ntracks) + " tracks, found " +
                        std::to_string(doc.tracks.size()) + " at byte offset " + std::to_string(r.offset()));
    }
    const std::size_t chunk_start = r.offset();
    const std::uint32_t id = r.u32be("chunk header");
    const std::uint32_t len = r.u32be("chunk header");
    const std::size_t body = r.offset();
    if (len > r.remaining()) {
      throw FormatError("truncated track chunk at byte offset " + std::to_string(chunk_start) + ": declares " +
                        std::to_string(len) + " bytes, " + std::to_string(r.remaining()) + " available");
    }
    r.skip(len, "chunk");
    if (id != 0x4D54726Bu) continue;  // unknown chunk type
    doc.tracks.push_back(detail::parse_track(bytes.subspan(body, len), body));
  }
  return doc;
}

/// Emits a format-1 file without running status. Tracks lacking a trailing
/// end-of-track get one at their last tick.
inline std::vector<std::uint8_t> write_midi(const MidiDocument& doc) {
  if (doc.ticks_per_beat == 0 || (doc.ticks_per_beat & 0x8000u)) {
    throw EncodingError("ticks_per_beat must be in 1..32767");
  }
  if (doc.tracks.size() > 0xFFFF) throw EncodingError("too many tracks");
  std::vector<std::uint8_t> out;
  detail::put_u32be(out, 0x4D546864u);
  detail::put_u32be(out, 6);
  detail::put_u16be(out, 1);
  detail::put_u16be(out, static_cast<std::uint16_t>(doc.tracks.size()));
  detail::put_u16be(out, doc.ticks_per_beat);

  for (const Track& track : doc.tracks) {
    std::vector<std::uint8_t> body;
    std::uint32_t prev = 0;
    bool ended = false;
    for (const MidiEvent& e : track) {
      if (ended) throw EncodingError("event after end-of-track");
      if (e.tick < prev) throw EncodingError("events not sorted by tick");
      detail::put_vlq(body, e.tick - prev);
      prev = e.tick;
      if (e.channel > 15 || e.pitch > 127 || e.velocity > 127) throw EncodingError("channel/pitch/velocity out of range");
      switch (e.kind) {
        case EventKind::NoteOn:
          body.insert(body.end(), {static_cast<std::uint8_t>(0x90 | e.channel), e.pitch, e.velocity});
          break;
        case EventKind::NoteOff:
          body.insert(body.end(), {static_cast<std::uint8_t>(0x80 | e.channel), e.pitch, e.velocity});
          break;
        case EventKind::ProgramChange:
          body.insert(body.end(), {static_cast<std::uint8_t>(0xC0 | e.channel), e.pitch});
          break;
        case EventKind::Tempo:
          if (e.tempo_us_per_beat == 0 || e.tempo_us_per_beat > 0xFFFFFF) throw EncodingError("tempo out of range");
          body.insert(body.end(), {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(e.tempo_us_per_beat >> 16),
                                   static_cast<std::uint8_t>((e.tempo_us_per_beat >> 8) & 0xFF),
                                   static_cast<std::uint8_t>(e.tempo_us_per_beat & 0xFF)});
          break;
        case EventKind::EndOfTrack:
          body.insert(body.end(), {0xFF, 0x2F, 0x00});
          ended = true;
          break;
      }
    }
    if (!ended) {
      detail::put_vlq(body, 0);
      body.insert(body.end(), {0xFF, 0x2F, 0x00});
    }
    detail::put_u32be(out, 0x4D54726Bu);
    detail::put_u32be(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

/// Converts ticks to seconds using every tempo event in the document
/// (default 500000 us per beat until the first tempo event).
class TempoMap {
 public:
  explicit TempoMap(const MidiDocument& doc) : tpb_(doc.ticks_per_beat) {
    std::map<std::uint32_t, std::uint32_t> changes;
    for (const Track& t : doc.tracks) {
      for (const MidiEvent& e : t) {
        if (e.kind == EventKind::Tempo) changes[e.tick] = e.tempo_us_per_beat;
      }
    }
    segments_.push_back({0, 0.0, 500000});
    for (auto [tick, us] : changes) {
      Segment& last = segments_.back();
      const double start = last.start_seconds + seconds_in(last.us_per_beat, tick - last.start_tick);
      if (tick == last.start_tick) {
        last.us_per_beat = us;
      } else {
        segments_.push_back({tick, start, us});
      }
    }
  }

  double seconds(std::uint32_t tick) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), tick,
                               [](std::uint32_t t, const Segment& s) { return t < s.start_tick; });
    const Segment& s = *std::prev(it);
    return s.start_seconds + seconds_in(s.us_per_beat, tick - s.start_tick);
  }

 private:
  struct Segment {
    std::uint32_t start_tick;
    double start_seconds;
    std::uint32_t us_per_beat;
  };
  double seconds_in(std::uint32_t us_per_beat, std::uint32_t ticks) const {
    return static_cast<double>(ticks) * us_per_beat * 1e-6 / tpb_;
  }

  double tpb_;
  std::vector<Segment> segments_;
};

/// A sounding note recovered by pairing note-on with the next note-off.
struct NoteSpan {
  std::uint32_t start_tick;
  std::uint32_t end_tick;
  std::uint8_t channel;
  std::uint8_t pitch;
  std::uint8_t velocity;
};

/// Pairs note-on/note-off events FIFO per (channel, pitch). A note-on with
/// no matching note-off is closed at the track's end-of-track tick.
inline std::vector<NoteSpan> pair_notes(const Track& track) {
  std::vector<NoteSpan> notes;
  std::map<std::pair<int, int>, std::vector<std::size_t>> open;
  std::uint32_t last_tick = 0;
  for (const MidiEvent& e : track) {
    last_tick = std::max(last_tick, e.tick);
    if (e.kind == EventKind::NoteOn) {
      open[{e.channel, e.pitch}].push_back(notes.size());
      notes.push_back({e.tick, e.tick, e.channel, e.pitch, e.velocity});
    } else if (e.kind == EventKind::NoteOff) {
      auto it = open.find({e.channel, e.pitch});
      if (it == open.end() || it->second.empty()) continue;
      notes[it->second.front()].end_tick = e.tick;
      it->second.erase(it->second.begin());
    }
  }
  for (auto& [key, idx] : open) {
    for (std::size_t i : idx) notes[i].end_tick = last_tick;
  }
  std::stable_sort(notes.begin(), notes.end(),
                   [](const NoteSpan& a, const NoteSpan& b) { return a.start_tick < b.start_tick; });
  return notes;
}

/// True when every note-on has a later note-off on the same channel and
/// pitch, and ticks never decrease.
inline bool notes_balanced(const Track& track) {
  std::map<std::pair<int, int>, int> depth;
  std::uint32_t prev = 0;
  for (const MidiEvent& e : track) {
    if (e.tick < prev) return false;
    prev = e.tick;
    if (e.kind == EventKind::NoteOn) ++depth[{e.channel, e.pitch}];
    if (e.kind == EventKind::NoteOff) {
      int& d = depth[{e.channel, e.pitch}];
      if (d == 0) return false;
      --d;
    }
  }
  return std::all_of(depth.begin(), depth.end(), [](const auto& kv) { return kv.second == 0; });
}

}  // namespace popgen::midi
