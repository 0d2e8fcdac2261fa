// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. argv[1] is the path of the popgen CLI.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "popgen/archive.hpp"
#include "popgen/eval.hpp"
#include "popgen/model.hpp"
#include "popgen/synth.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace popgen;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

// 1 -------------------------------------------------------------------------
Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(11);
  net::LstmStack s = net::make_stack(5, 4, 6, 3);
  net::Sequence seq;
  for (int t = 0; t < 3; ++t) {
    net::Vector x(5);
    for (int i = 0; i < 5; ++i) x(i) = uniform_real(rng, -1.0, 1.0);
    seq.inputs.push_back(x);
    seq.targets.push_back(static_cast<int>(uniform_int(rng, 0, 5)));
  }
  const auto rep = net::gradient_check(s, seq);
  const double secs = seconds_since(t0);
  return {rep.max_relative_error < 1e-4 && secs < 1.0,
          "max relative error " + fmt(rep.max_relative_error) + " over " + std::to_string(rep.checked) +
              " parameters (< 1e-4), " + fmt(secs) + " s (< 1 s)"};
}

// 2 -------------------------------------------------------------------------
std::vector<EncodedSequences> five_song_corpus() {
  const ScaleType types[] = {ScaleType::Major, ScaleType::HarmonicMinor, ScaleType::MelodicMinor, ScaleType::Blues,
                             ScaleType::Major};
  std::vector<EncodedSequences> out;
  for (std::size_t i = 0; i < 5; ++i) out.push_back(testing::periodic_sequences(types[i], i, 64));
  return out;
}

Outcome overfit_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const CorpusArchive corpus = testing::archive_of(five_song_corpus());
  ModelConfig cfg;
  cfg.hidden_dim = 64;
  cfg.learning_rate = 2e-3;
  cfg.seed = 5;
  HierarchicalModel m = init_model(cfg);
  bool all = true;
  std::string detail;
  for (int l = 0; l < kNumLayers; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const auto seqs = layer_sequences(corpus.songs, static_cast<Layer>(l));
    double loss = INFINITY;
    int epoch = 0;
    while (epoch < 200 && loss >= 0.2) {
      loss = net::train_epoch(m.stacks[i], m.adam[i], seqs, {cfg.bptt});
      ++epoch;
    }
    all = all && loss < 0.2;
    detail += std::string(kLayerNames[i]) + "=" + fmt(loss) + "@" + std::to_string(epoch) + " ";
  }
  const double secs = seconds_since(t0);
  return {all && secs < 300.0, detail + "(< 0.2 within 200 epochs), " + fmt(secs) + " s (< 300 s)"};
}

// 3 -------------------------------------------------------------------------
Outcome uniform_init_loss() {
  const CorpusArchive corpus = testing::archive_of(five_song_corpus());
  ModelConfig cfg;  // default width
  cfg.seed = 9;
  const HierarchicalModel m = init_model(cfg);
  const auto key = layer_sequences(corpus.songs, Layer::Key1);
  const auto chord = layer_sequences(corpus.songs, Layer::Chord);
  const double lk = mean_loss(m.stacks[static_cast<std::size_t>(Layer::Key1)], key);
  const double lc = mean_loss(m.stacks[static_cast<std::size_t>(Layer::Chord)], chord);
  const bool ok = std::abs(lk - std::log(37.0)) <= 0.1 && std::abs(lc - std::log(72.0)) <= 0.1;
  return {ok, "key " + fmt(lk) + " vs ln 37 = " + fmt(std::log(37.0)) + ", chord " + fmt(lc) + " vs ln 72 = " +
                  fmt(std::log(72.0)) + " (tolerance 0.1)"};
}

// 4 -------------------------------------------------------------------------
Song transposed(Song s, int k) {
  for (auto& m : s.melody) {
    if (m.pitch) *m.pitch += k;
  }
  s.scale.root = s.scale.root.shifted(k);
  return s;
}

Outcome scale_detection() {
  Rng rng(4);
  int correct = 0;
  for (int id = 0; id < kNumScales; ++id) {
    const Scale scale = Scale::from_id(id);
    if (detect_scale(testing::controlled_song(scale, 95, 5, rng)) == scale) ++correct;
  }
  int equivariant = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Scale scale = Scale::from_id(static_cast<int>(uniform_int(rng, 0, kNumScales - 1)));
    const int k = static_cast<int>(uniform_int(rng, 1, 11));
    const Song s = testing::controlled_song(scale, 95, 5, rng);
    const Song t = transposed(s, k);
    const Scale a = detect_scale(s), b = detect_scale(t);
    if (b.type == a.type && b.root == a.root.shifted(k) && within_scale_ratio(s) == within_scale_ratio(t)) ++equivariant;
  }
  return {correct == 48 && equivariant == 100,
          std::to_string(correct) + "/48 detected, " + std::to_string(equivariant) + "/100 shifts equivariant"};
}

// 5 -------------------------------------------------------------------------
std::vector<ChordRow> random_table(Rng& rng, std::size_t steps, std::span<const int> permitted) {
  std::vector<ChordRow> table(steps);
  for (auto& row : table) {
    row.fill(0.0);
    double sum = 0.0;
    for (int c : permitted) sum += row[static_cast<std::size_t>(c)] = 0.05 + uniform01(rng);
    for (double& p : row) p /= sum;
  }
  return table;
}

Outcome chord_dp() {
  Rng rng(5);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> permitted;
    while (permitted.size() < 5) {
      const int c = static_cast<int>(uniform_int(rng, 0, kNumChords - 1));
      if (std::find(permitted.begin(), permitted.end(), c) == permitted.end()) permitted.push_back(c);
    }
    std::sort(permitted.begin(), permitted.end());
    const double lambda = uniform_real(rng, 0.0, 1.5);
    const auto table = random_table(rng, 4, permitted);
    // Exhaustive over the permitted chords. Swapping in any other chord adds
    // at least 27.6 - 4.7 to the unary cost and saves at most 2 * 6 * 1.5
    // on the pairwise terms, so the optimum is always permitted.
    Ids best;
    double best_cost = INFINITY;
    Ids path(4);
    for (int code = 0; code < 625; ++code) {
      int c = code;
      for (int t = 3; t >= 0; --t, c /= 5) path[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(permitted[static_cast<std::size_t>(c % 5)]);
      const double cost = chord_path_cost(table, path, lambda);
      if (cost < best_cost) best_cost = cost, best = path;
    }
    if (smooth_chords(table, lambda) == best) ++exact;
  }
  int witnessed = 0;
  std::vector<int> all(kNumChords);
  for (int c = 0; c < kNumChords; ++c) all[static_cast<std::size_t>(c)] = c;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto table = random_table(rng, static_cast<std::size_t>(uniform_int(rng, 1, 24)), all);
    const double lambda = uniform_real(rng, 0.0, 3.0);
    Ids argmax;
    for (const auto& row : table) argmax.push_back(static_cast<std::uint8_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    if (chord_path_cost(table, smooth_chords(table, lambda), lambda) <= chord_path_cost(table, argmax, lambda) + 1e-12) ++witnessed;
  }
  return {exact == 100 && witnessed == 1000, std::to_string(exact) + "/100 brute-force matches, " +
                                                 std::to_string(witnessed) + "/1000 cost <= argmax cost"};
}

// 6 -------------------------------------------------------------------------
using NoteBag = std::multiset<std::pair<int, std::size_t>>;

NoteBag notes_of(const Ids& keys, const Ids& press) {
  NoteBag bag;
  const auto on = decode_onsets(keys, press);
  for (std::size_t t = 0; t < keys.size(); ++t) {
    if (!on[t]) continue;
    std::size_t e = t + 1;
    while (e < keys.size() && keys[e] == keys[t] && !on[e]) ++e;
    bag.insert({keys[t], e - t});
  }
  return bag;
}

/// Random melody as (key, onsets); holds up to `max_hold`, 30 % silences.
std::pair<Ids, std::vector<bool>> random_melody(Rng& rng, std::size_t steps, int max_hold) {
  Ids keys;
  std::vector<bool> on;
  while (keys.size() < steps) {
    const bool silent = uniform01(rng) < 0.3;
    const auto key = static_cast<std::uint8_t>(silent ? kSilenceKey : uniform_int(rng, 0, 35));
    const auto hold = static_cast<std::size_t>(uniform_int(rng, 1, max_hold));
    for (std::size_t k = 0; k < hold && keys.size() < steps; ++k) {
      keys.push_back(key);
      on.push_back(!silent && k == 0);
    }
  }
  return {keys, on};
}

Outcome alignment() {
  const std::uint8_t S = kSilenceKey, A = 20, B = 22;
  bool cases = true;
  {
    const Ids keys = {S, S, S, A, A, A, A, A};
    const auto [k, p] = align_melody(keys, encode_press(keys, {false, false, false, true, false, false, false, false}));
    cases = cases && k == Ids{A, A, A, A, A, S, S, S} && p == Ids{0, 1, 2, 3, 4, 0, 1, 2};
  }
  {
    // Second bar opens with a continuation: left alone.
    const Ids keys = {B, B, B, B, A, A, A, A, A, A, S, S, S, S, S, S};
    std::vector<bool> on(16, false);
    on[0] = on[4] = true;
    const Ids press = encode_press(keys, on);
    const auto [k, p] = align_melody(keys, press);
    cases = cases && k == keys && p == press;
  }
  Rng rng(6);
  int idempotent = 0, preserved = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t steps = kStepsPerBar * static_cast<std::size_t>(uniform_int(rng, 1, 8));
    const auto [keys, on] = random_melody(rng, steps, 10);
    const Ids press = encode_press(keys, on);
    const auto [k1, p1] = align_melody(keys, press);
    const auto [k2, p2] = align_melody(k1, p1);
    if (k1 == k2 && p1 == p2) ++idempotent;
    if (notes_of(keys, press) == notes_of(k1, p1)) ++preserved;
  }
  return {cases && idempotent == 1000 && preserved == 1000,
          std::string("hand-built bars ") + (cases ? "ok" : "WRONG") + ", " + std::to_string(idempotent) +
              "/1000 idempotent, " + std::to_string(preserved) + "/1000 note multisets preserved"};
}

// 7 -------------------------------------------------------------------------
Outcome press_round_trip() {
  Rng rng(7);
  int ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [keys, on] = random_melody(rng, static_cast<std::size_t>(uniform_int(rng, 1, 300)), 20);
    const Ids press = encode_press(keys, on);
    bool good = decode_onsets(keys, press) == on;
    std::size_t since = 0;
    for (std::size_t t = 0; t < keys.size(); ++t) {
      since = (t == 0 || on[t] || keys[t] != keys[t - 1]) ? 0 : since + 1;
      good = good && press[t] == std::min<std::size_t>(since, kNumPress - 1);
    }
    if (good) ++ok;
  }
  return {ok == 1000, std::to_string(ok) + "/1000 melodies round-trip with saturation at id 7"};
}

// 8 -------------------------------------------------------------------------
std::size_t naive_longest_match(const Ids& query, const std::vector<Ids>& corpus) {
  std::size_t best = 0;
  for (const Ids& song : corpus) {
    std::vector<std::size_t> prev(song.size() + 1, 0), cur(song.size() + 1, 0);
    for (std::size_t i = 1; i <= query.size(); ++i) {
      for (std::size_t j = 1; j <= song.size(); ++j) {
        cur[j] = query[i - 1] == song[j - 1] ? prev[j - 1] + 1 : 0;
        best = std::max(best, cur[j]);
      }
      std::swap(prev, cur);
    }
  }
  return best;
}

Outcome novelty_oracle() {
  Rng rng(8);
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int alphabet = static_cast<int>(uniform_int(rng, 2, kNumKeys));
    std::vector<Ids> corpus(10);
    for (auto& song : corpus) {
      song.resize(static_cast<std::size_t>(uniform_int(rng, 50, 400)));
      for (auto& v : song) v = static_cast<std::uint8_t>(uniform_int(rng, 0, alphabet - 1));
    }
    Ids query(400);
    for (auto& v : query) v = static_cast<std::uint8_t>(uniform_int(rng, 0, alphabet - 1));
    if (novelty_longest_match(query, corpus).steps == naive_longest_match(query, corpus)) ++agree;
  }
  std::vector<Ids> corpus(10, Ids(400));
  for (auto& song : corpus) {
    for (auto& v : song) v = static_cast<std::uint8_t>(uniform_int(rng, 0, kNumKeys - 1));
  }
  const NoveltyResult copied = novelty_longest_match(corpus[3], corpus);
  return {agree == 100 && copied.steps == 400, std::to_string(agree) + "/100 agree with naive scan, copied input " +
                                                   std::to_string(copied.steps) + "/400 steps (" +
                                                   fmt(copied.seconds()) + " s)"};
}

// 9 -------------------------------------------------------------------------
midi::MidiDocument random_document(Rng& rng) {
  midi::MidiDocument doc;
  doc.ticks_per_beat = static_cast<std::uint16_t>(uniform_int(rng, 1, 0x7FFF));
  const int tracks = static_cast<int>(uniform_int(rng, 1, 4));
  for (int k = 0; k < tracks; ++k) {
    midi::Track tr;
    std::uint32_t tick = 0;
    const int n = static_cast<int>(uniform_int(rng, 0, 60));
    for (int i = 0; i < n; ++i) {
      tick += static_cast<std::uint32_t>(uniform_int(rng, 0, uniform01(rng) < 0.1 ? 100000 : 500));
      const int ch = static_cast<int>(uniform_int(rng, 0, 15));
      const int pitch = static_cast<int>(uniform_int(rng, 0, 127));
      switch (uniform_int(rng, 0, 3)) {
        case 0: tr.push_back(midi::MidiEvent::note_on(tick, ch, pitch, static_cast<int>(uniform_int(rng, 1, 127)))); break;
        case 1: tr.push_back(midi::MidiEvent::note_off(tick, ch, pitch, static_cast<int>(uniform_int(rng, 0, 127)))); break;
        case 2: tr.push_back(midi::MidiEvent::tempo(tick, static_cast<std::uint32_t>(uniform_int(rng, 1, 0xFFFFFF)))); break;
        default: tr.push_back(midi::MidiEvent::program_change(tick, ch, static_cast<int>(uniform_int(rng, 0, 127)))); break;
      }
    }
    tr.push_back(midi::MidiEvent::end_of_track(tick + static_cast<std::uint32_t>(uniform_int(rng, 0, 100))));
    doc.tracks.push_back(std::move(tr));
  }
  return doc;
}

Outcome midi_round_trip() {
  Rng rng(9);
  int same = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const midi::MidiDocument d = random_document(rng);
    if (midi::parse_midi(midi::write_midi(d)) == d) ++same;
  }
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.seed = 2;
  HierarchicalModel m = init_model(cfg);
  m.trained.fill(true);
  m.vocab = testing::test_vocabulary();
  int balanced = 0;
  const int songs = 20;
  for (int i = 0; i < songs; ++i) {
    GenerationConfig g;
    g.scale_type = scale_type_from_index(1 + i % 4);
    g.target_root = Tone(i % 12);
    g.length_steps = 64;
    g.seed = static_cast<std::uint64_t>(i);
    const auto doc = midi::parse_midi(midi::write_midi(generate_song(m, g).document));
    bool ok = true;
    for (const auto& tr : doc.tracks) ok = ok && midi::notes_balanced(tr);
    if (ok) ++balanced;
  }
  return {same == 200 && balanced == songs, std::to_string(same) + "/200 documents round-trip, " +
                                                std::to_string(balanced) + "/" + std::to_string(songs) +
                                                " generated songs have paired notes"};
}

// 10 ------------------------------------------------------------------------
int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome end_to_end(const std::string& cli) {
  const fs::path root = fs::temp_directory_path() / ("popgen_e2e_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const fs::path midi_dir = root / "midi";
  fs::create_directories(midi_dir);
  const ScaleType types[] = {ScaleType::Major, ScaleType::HarmonicMinor, ScaleType::MelodicMinor, ScaleType::Blues};
  for (std::size_t i = 0; i < 6; ++i) {
    write_file((midi_dir / ("song" + std::to_string(i) + ".mid")).string(),
               testing::beat_grid_midi(i, types[i % 4], Tone(static_cast<int>(i * 5 % 12)), 16));
  }
  const std::vector<std::uint8_t> junk = {'M', 'T', 'h', 'd', 0, 0};
  write_file((midi_dir / "corrupt.mid").string(), junk);

  std::vector<std::vector<std::uint8_t>> outputs;
  bool ran = true;
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = root / ("run" + std::to_string(r));
    fs::create_directories(dir);
    const std::string q = "'" + cli + "' --seed 7 ";
    ran = ran && run(q + "ingest '" + midi_dir.string() + "' '" + (dir / "corpus.pgc").string() + "'") == 0;
    ran = ran && run(q + "--epochs 1 --hidden-dim 24 train '" + (dir / "corpus.pgc").string() + "' '" +
                     (dir / "model.pgm").string() + "'") == 0;
    ran = ran && run(q + "generate '" + (dir / "model.pgm").string() + "' '" + (dir / "out.mid").string() +
                     "' --seconds 16 --scale-type 2 --root D") == 0;
    outputs.push_back(ran ? read_file((dir / "out.mid").string()) : std::vector<std::uint8_t>{});
  }
  const bool same = ran && !outputs[0].empty() && outputs[0] == outputs[1];
  std::size_t songs = 0;
  if (ran) songs = read_archive(read_file((root / "run0" / "corpus.pgc").string())).songs.size();
  fs::remove_all(root);
  return {same && songs == 6, std::string("commands ") + (ran ? "succeeded" : "FAILED") + ", " +
                                  std::to_string(songs) + "/6 songs ingested, .mid " + std::to_string(outputs[0].size()) +
                                  " bytes, runs " + (same ? "identical" : "DIFFER")};
}

// 11 ------------------------------------------------------------------------
Outcome qualitative_statistics() {
  Rng rng(11);
  std::vector<Song> corpus;
  for (int i = 0; i < 80; ++i) {
    const Scale scale{scale_type_from_index(1 + i % 4), Tone(static_cast<int>(uniform_int(rng, 0, 11)))};
    corpus.push_back(testing::controlled_song(scale, 36, 4, rng));  // 90 % inliers
  }
  const WithinScaleReport rep = within_scale_histogram(corpus);
  bool peaks = true;
  std::string detail;
  for (int ti = 0; ti < kNumScaleTypes; ++ti) {
    const auto& h = rep.histograms[static_cast<std::size_t>(ti)];
    const auto bin = std::max_element(h.begin(), h.end()) - h.begin();
    peaks = peaks && bin == 18;
    detail += std::string(name_of(scale_type_from_index(ti + 1))) + " peak " + fmt(static_cast<double>(bin) / kRatioBins) + ", ";
  }
  const auto mats = melody_chord_cooccurrence(corpus);
  bool dominant = true;
  for (const auto& m : mats) {
    std::uint64_t total = 0;
    for (int i = 0; i < 12; ++i) {
      std::uint64_t off = 0;
      for (int j = 0; j < 12; ++j) {
        if (j != i) off += m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        total += m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      const auto diag = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
      dominant = dominant && (diag + off == 0 || diag > off);
    }
    dominant = dominant && total > 0;
  }
  return {peaks && dominant, detail + "co-occurrence " + (dominant ? "diagonally dominant" : "NOT dominant")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-popgen-cli>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"overfit sanity", overfit_sanity},
      {"uniform-init loss", uniform_init_loss},
      {"scale detection", scale_detection},
      {"chord DP optimality", chord_dp},
      {"melody alignment", alignment},
      {"press encoding round-trip", press_round_trip},
      {"novelty oracle", novelty_oracle},
      {"MIDI round-trip", midi_round_trip},
      {"end-to-end determinism", [&] { return end_to_end(cli); }},
      {"within-scale and co-occurrence statistics", qualitative_statistics},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << ": " << o.detail << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
