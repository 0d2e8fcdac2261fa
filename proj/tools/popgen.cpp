// popgen: ingest MIDI corpora, train the layered model, generate songs and
// run corpus analyses.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 internal error. Every failure
// prints exactly one "popgen: ..." line on stderr.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "popgen/archive.hpp"
#include "popgen/config.hpp"
#include "popgen/eval.hpp"
#include "popgen/midi.hpp"
#include "popgen/model.hpp"
#include "popgen/synth.hpp"

namespace fs = std::filesystem;
using namespace popgen;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, int jobs, Fn fn) {
  std::vector<T> out(n);
  const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
  for (std::size_t first = 0; first < n; first += width) {
    std::vector<std::future<void>> running;
    for (std::size_t i = first; i < std::min(n, first + width); ++i) {
      running.push_back(std::async(std::launch::async, [&, i] { out[i] = fn(i); }));
    }
    for (auto& f : running) f.get();
  }
  return out;
}

std::string read_text(const std::string& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool is_midi_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".mid" || ext == ".midi";
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct FileOutcome {
  std::string name;
  std::optional<IngestResult> result;
  std::string reason;
};

void cmd_ingest(const Settings& s, const std::string& dir, const std::string& out, std::string report_path) {
  if (!fs::is_directory(dir)) throw UsageError("'" + dir + "' is not a directory");
  if (report_path.empty()) report_path = out + ".report.tsv";

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_midi_path(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  auto outcomes = parallel_map<FileOutcome>(files.size(), s.jobs, [&](std::size_t i) {
    FileOutcome o{files[i].filename().string(), std::nullopt, ""};
    try {
      const auto bytes = read_file(files[i].string());
      o.result = ingest_document(midi::parse_midi(bytes), o.name, s.categorize);
    } catch (const Error& e) {
      o.reason = e.what();
    }
    return o;
  });

  std::vector<Song> songs;
  for (const auto& o : outcomes) {
    if (o.result) songs.push_back(o.result->song);
  }
  CorpusArchive archive;
  archive.vocab = build_drum_vocabulary(songs);
  archive.profile = build_profile_model(songs, s.profile_config());

  std::ostringstream report;
  report << "file\tstatus\tscale\tinlier_ratio\tparts\tchord_parts\tdrum_parts\treason\n";
  std::size_t kept = 0, skipped = 0;
  for (auto& o : outcomes) {
    if (o.result) {
      try {
        const Song& song = o.result->song;
        archive.songs.push_back({song.source_id, song.original_root, encode_song(song, archive.vocab, archive.profile)});
      } catch (const Error& e) {
        o.reason = e.what();
        o.result.reset();
      }
    }
    if (!o.result) {
      ++skipped;
      report << o.name << "\tskipped\t\t\t\t\t\t" << o.reason << '\n';
      continue;
    }
    ++kept;
    const auto& r = *o.result;
    const auto& roles = r.categorization.roles;
    const Scale original{r.song.scale.type, r.song.original_root};
    report << o.name << "\tok\t" << to_string(original) << '\t' << r.inlier_ratio << '\t' << roles.size() << '\t'
           << std::count(roles.begin(), roles.end(), TrackRole::Chord) << '\t'
           << std::count(roles.begin(), roles.end(), TrackRole::Drum) << "\t\n";
  }
  write_file(out, write_archive(archive));
  write_text(report_path, report.str());
  std::cout << "ingested " << kept << " songs, skipped " << skipped << " files; drum top-100 coverage "
            << archive.vocab.top100_coverage << '\n';
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void cmd_train(const Settings& s, const std::string& archive_path, const std::string& out, std::string loss_path) {
  if (loss_path.empty()) loss_path = out + ".loss.csv";
  const CorpusArchive archive = read_archive(read_file(archive_path));
  if (archive.songs.empty()) throw UsageError("archive '" + archive_path + "' holds no songs");

  TrainResult res = train_model(archive, s.model_config());
  res.model.config_echo = settings_map(s);
  for (const auto& w : res.warnings) std::cerr << "popgen: warning: " << w << '\n';

  std::ostringstream csv;
  csv << "layer,epoch,loss\n";
  for (int l = 0; l < kNumLayers; ++l) {
    const auto& rep = res.reports[static_cast<std::size_t>(l)];
    for (std::size_t e = 0; e < rep.epoch_losses.size(); ++e) {
      csv << kLayerNames[static_cast<std::size_t>(l)] << ',' << e + 1 << ',' << rep.epoch_losses[e] << '\n';
    }
  }
  write_file(out, save_bundle(res.model));
  write_text(loss_path, csv.str());
  std::cout << "trained " << archive.songs.size() << " songs for " << s.model.epochs << " epochs\n";
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

ScaleType parse_scale_type(const std::string& text) {
  for (int i = 1; i <= kNumScaleTypes; ++i) {
    const ScaleType t = scale_type_from_index(i);
    if (text == std::to_string(i) || text == name_of(t)) return t;
  }
  throw UsageError("unknown scale type '" + text + "'");
}

std::vector<ProfileSegment> parse_profile(const std::string& text) {
  std::vector<ProfileSegment> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    ProfileSegment seg;
    char colon = 0;
    std::istringstream is(item);
    if (!(is >> seg.cluster >> colon >> seg.bars) || colon != ':' || !(is >> std::ws).eof() || seg.cluster < 0 ||
        seg.cluster >= kNumProfiles || seg.bars < 1) {
      throw UsageError("bad profile segment '" + item + "', expected cluster:bars");
    }
    out.push_back(seg);
  }
  return out;
}

/// Rounds up to whole bars; bars are 1 s at the fixed grid.
std::size_t steps_for_seconds(double seconds) {
  const double bars = std::ceil(seconds / (kStepSeconds * kStepsPerBar) - 1e-9);
  const auto steps = static_cast<std::size_t>(std::max(1.0, bars)) * kStepsPerBar;
  if (std::abs(static_cast<double>(steps) * kStepSeconds - seconds) > 1e-9) {
    std::cerr << "popgen: notice: " << seconds << " s is not a whole number of bars; generating "
              << static_cast<double>(steps) * kStepSeconds << " s\n";
  }
  return steps;
}

/// A random scale type is drawn among those the model has a trained key layer for.
GenerationConfig generation_config(const Settings& s, const HierarchicalModel& model, std::uint64_t seed,
                                   const std::vector<ProfileSegment>& profile) {
  Rng pick(derive_seed(seed, 0x5ca1e));
  GenerationConfig g;
  if (s.scale_type == 0) {
    std::vector<ScaleType> trained;
    for (int i = 1; i <= kNumScaleTypes; ++i) {
      if (model.key_trained(scale_type_from_index(i))) trained.push_back(scale_type_from_index(i));
    }
    if (trained.empty()) throw GenerationError("model has no trained key layer");
    g.scale_type = trained[static_cast<std::size_t>(uniform_int(pick, 0, static_cast<std::int64_t>(trained.size()) - 1))];
  } else {
    g.scale_type = scale_type_from_index(s.scale_type);
  }
  g.target_root = s.root == "random" ? Tone(static_cast<int>(uniform_int(pick, 0, 11))) : *parse_tone(s.root);
  g.length_steps = steps_for_seconds(s.seconds);
  g.profile_schedule = profile;
  g.temperature = s.temperature;
  g.dp_lambda = s.dp_lambda;
  g.seed = seed;
  return g;
}

void cmd_generate(const Settings& s, const std::string& model_path, const std::string& out, std::string sidecar,
                  const std::string& profile_text) {
  if (sidecar.empty()) sidecar = out + ".seq.txt";
  const auto profile = profile_text.empty() ? std::vector<ProfileSegment>{} : parse_profile(profile_text);
  const HierarchicalModel model = load_bundle(read_file(model_path));
  const GenerationConfig g = generation_config(s, model, s.seed, profile);
  const GeneratedSong song = generate_song(model, g);
  write_file(out, midi::write_midi(song.document));
  write_text(sidecar, sequence_dump(song.seq));
  std::cout << "generated " << g.length_steps << " steps in " << to_string(Scale{g.scale_type, g.target_root}) << '\n';
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

void cmd_eval(const Settings& s, const std::string& archive_path, const std::string& out_dir,
              const std::vector<std::string>& sequence_files, const std::string& model_path, int count) {
  const CorpusArchive archive = read_archive(read_file(archive_path));
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  std::vector<Song> songs;
  std::vector<Ids> corpus_keys;
  for (const auto& a : archive.songs) {
    songs.push_back(decode_song(a.seq, archive.vocab));
    corpus_keys.push_back(a.seq.key);
  }
  {
    std::ofstream f(dir / "within_scale.tsv");
    write_within_scale_tsv(f, within_scale_histogram(songs));
    std::ofstream g(dir / "cooccurrence.tsv");
    write_cooccurrence_tsv(g, melody_chord_cooccurrence(songs));
    if (!f || !g) throw Error("cannot write reports into '" + out_dir + "'");
  }

  std::vector<std::pair<std::string, Ids>> queries;
  for (const auto& path : sequence_files) queries.emplace_back(path, parse_sequence_dump(read_text(path)).key);
  if (!model_path.empty()) {
    if (count < 1) throw UsageError("--count must be >= 1");
    const HierarchicalModel model = load_bundle(read_file(model_path));
    auto keys = parallel_map<Ids>(static_cast<std::size_t>(count), s.jobs, [&](std::size_t i) {
      return generate_song(model, generation_config(s, model, derive_seed(s.seed, i), {})).seq.key;
    });
    for (std::size_t i = 0; i < keys.size(); ++i) queries.emplace_back("generated:" + std::to_string(i), std::move(keys[i]));
  }

  std::cout << "drum top-100 coverage " << archive.vocab.top100_coverage << '\n';
  if (queries.empty()) return;
  if (corpus_keys.empty()) throw UsageError("novelty needs a non-empty archive");
  const SuffixAutomaton automaton(corpus_keys);
  const auto matches = parallel_map<std::size_t>(queries.size(), s.jobs,
                                                 [&](std::size_t i) { return automaton.longest_match(queries[i].second); });
  std::ofstream f(dir / "novelty.tsv");
  f << "sequence\tsteps\tmatch_steps\tmatch_seconds\n";
  double total = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const NoveltyResult r{matches[i]};
    f << queries[i].first << '\t' << queries[i].second.size() << '\t' << r.steps << '\t' << r.seconds() << '\n';
    total += r.seconds();
  }
  if (!f) throw Error("cannot write novelty report into '" + out_dir + "'");
  std::cout << "mean longest match " << total / static_cast<double>(queries.size()) << " s over " << queries.size()
            << " sequences\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered recurrent pop music generator"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  std::string config_path;
  bool dump_config = false;
  std::optional<int> jobs, epochs, hidden_dim;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "flat key = value settings file")->check(CLI::ExistingFile);
  app.add_flag("--dump-config", dump_config, "print the effective settings and exit");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "seed for all randomness");
  app.add_option("--epochs", epochs, "training epochs")->check(CLI::NonNegativeNumber);
  app.add_option("--hidden-dim", hidden_dim, "LSTM hidden units")->check(CLI::PositiveNumber);

  std::string ingest_dir, ingest_out, ingest_report;
  auto* ingest = app.add_subcommand("ingest", "build a corpus archive from a directory of MIDI files");
  ingest->add_option("midi_dir", ingest_dir)->required();
  ingest->add_option("archive", ingest_out)->required();
  ingest->add_option("--report", ingest_report, "report TSV (default <archive>.report.tsv)");

  std::string train_in, train_out, train_loss;
  auto* train = app.add_subcommand("train", "train a model bundle from a corpus archive");
  train->add_option("archive", train_in)->required();
  train->add_option("model", train_out)->required();
  train->add_option("--loss-csv", train_loss, "loss curve CSV (default <model>.loss.csv)");

  std::string gen_model, gen_out, gen_sidecar, gen_profile, gen_scale, gen_root;
  std::optional<double> gen_seconds, gen_lambda, gen_temperature;
  auto* generate = app.add_subcommand("generate", "sample a song from a model bundle");
  generate->add_option("model", gen_model)->required();
  generate->add_option("out", gen_out)->required();
  generate->add_option("--sidecar", gen_sidecar, "sequence dump (default <out>.seq.txt)");
  generate->add_option("--scale-type", gen_scale, "1..4 or major, harmonic-minor, melodic-minor, blues");
  generate->add_option("--root", gen_root, "target root tone, or 'random'");
  generate->add_option("--seconds", gen_seconds, "length, rounded up to whole bars");
  generate->add_option("--lambda", gen_lambda, "chord smoothing weight");
  generate->add_option("--temperature", gen_temperature, "sampling temperature, 0 = greedy");
  generate->add_option("--profile", gen_profile, "cluster:bars,... schedule (default random)");

  std::string eval_archive, eval_out = "eval", eval_model;
  std::vector<std::string> eval_sequences;
  int eval_count = 100;
  auto* eval = app.add_subcommand("eval", "write within-scale, co-occurrence and novelty reports");
  eval->add_option("archive", eval_archive)->required();
  eval->add_option("--out-dir", eval_out, "report directory");
  eval->add_option("--sequences", eval_sequences, "sequence dumps to score for novelty");
  eval->add_option("--model", eval_model, "model bundle to sample novelty queries from");
  eval->add_option("--count", eval_count, "number of sampled queries");
  eval->add_option("--seconds", gen_seconds, "length of sampled queries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "popgen: " << e.what() << '\n';
    return 1;
  }

  try {
    Settings s = config_path.empty() ? Settings{} : parse_settings(read_text(config_path));
    if (jobs) s.jobs = *jobs;
    if (seed) s.seed = *seed;
    if (epochs) s.model.epochs = *epochs;
    if (hidden_dim) s.model.hidden_dim = *hidden_dim;
    if (!gen_scale.empty()) s.scale_type = index_of(parse_scale_type(gen_scale));
    if (!gen_root.empty()) s.root = gen_root;
    if (gen_seconds) s.seconds = *gen_seconds;
    if (gen_lambda) s.dp_lambda = *gen_lambda;
    if (gen_temperature) s.temperature = *gen_temperature;
    validate(s);

    if (dump_config) {
      std::cout << dump_settings(s);
      return 0;
    }
    if (*ingest) {
      cmd_ingest(s, ingest_dir, ingest_out, ingest_report);
    } else if (*train) {
      cmd_train(s, train_in, train_out, train_loss);
    } else if (*generate) {
      cmd_generate(s, gen_model, gen_out, gen_sidecar, gen_profile);
    } else if (*eval) {
      cmd_eval(s, eval_archive, eval_out, eval_sequences, eval_model, eval_count);
    } else {
      std::cerr << "popgen: no command given; see --help\n";
      return 1;
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "popgen: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "popgen: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "popgen: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "popgen: internal error: " << e.what() << '\n';
    return 3;
  }
}
