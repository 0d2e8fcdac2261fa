#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "popgen/archive.hpp"
#include "popgen/bytes.hpp"
#include "support.hpp"

using namespace popgen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("popgen_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_ / "midi");
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome invoke(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" POPGEN_CLI "' " + args + " >'" + out.string() + "' 2>'" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  void add_song(const std::string& name, std::size_t variant, ScaleType type, Tone root) const {
    const auto bytes = popgen::testing::beat_grid_midi(variant, type, root, 8);
    write_file((dir_ / "midi" / name).string(), bytes);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(invoke("--help").code, 0);
  const Outcome none = invoke("");
  EXPECT_EQ(none.code, 1);
  EXPECT_NE(none.err.find("popgen:"), std::string::npos);
  EXPECT_EQ(invoke("--bogus ingest midi a.pgc").code, 1);
  EXPECT_EQ(invoke("ingest").code, 1);
  EXPECT_EQ(invoke("ingest no_such_dir a.pgc").code, 1);
  EXPECT_EQ(invoke("--config missing.cfg --dump-config").code, 1);
  std::ofstream(dir_ / "bad.cfg") << "epochs = many\n";
  const Outcome bad = invoke("--config bad.cfg --dump-config");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("epochs"), std::string::npos);
  EXPECT_EQ(std::count(bad.err.begin(), bad.err.end(), '\n'), 1);
}

TEST_F(Cli, DataErrorsExitTwo) {
  std::ofstream(dir_ / "junk.pgc") << "not an archive";
  const Outcome r = invoke("train junk.pgc m.pgm");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("popgen:"), std::string::npos);
  EXPECT_EQ(invoke("generate junk.pgc out.mid").code, 2);
}

TEST_F(Cli, DumpConfigAppliesFileThenFlags) {
  std::ofstream(dir_ / "a.cfg") << "# comment\nepochs = 4\nhidden_dim = 64\nroot = Eb\n";
  const Outcome r = invoke("--config a.cfg --epochs 2 --dump-config");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epochs = 2\n"), std::string::npos);
  EXPECT_NE(r.out.find("hidden_dim = 64\n"), std::string::npos);
  EXPECT_NE(r.out.find("root = Eb\n"), std::string::npos);
  // The dump is itself a valid config file.
  std::ofstream(dir_ / "b.cfg") << r.out;
  EXPECT_EQ(invoke("--config b.cfg --dump-config").out, r.out);
}

TEST_F(Cli, EmptyDirectoryGivesEmptyArchive) {
  const Outcome r = invoke("ingest midi a.pgc");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ingested 0 songs, skipped 0 files"), std::string::npos);
  EXPECT_TRUE(read_archive(read_file((dir_ / "a.pgc").string())).songs.empty());
  const Outcome t = invoke("train a.pgc m.pgm");
  EXPECT_EQ(t.code, 1);
}

TEST_F(Cli, SkipsCorruptFilesAndReportsThem) {
  add_song("good.mid", 0, ScaleType::Major, Tone(2));
  std::ofstream(dir_ / "midi" / "broken.mid") << "MThd garbage";
  std::ofstream(dir_ / "midi" / "notes.txt") << "ignored";
  const Outcome r = invoke("ingest midi a.pgc");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ingested 1 songs, skipped 1 files"), std::string::npos);
  const std::string report = slurp(dir_ / "a.pgc.report.tsv");
  EXPECT_NE(report.find("broken.mid\tskipped"), std::string::npos);
  EXPECT_NE(report.find("good.mid\tok\tD major"), std::string::npos) << report;
  const CorpusArchive a = read_archive(read_file((dir_ / "a.pgc").string()));
  ASSERT_EQ(a.songs.size(), 1u);
  EXPECT_EQ(a.songs[0].original_root, Tone(2));
  EXPECT_EQ(a.songs[0].seq.steps(), 64u);
}

TEST_F(Cli, TrainGenerateEvalPipeline) {
  add_song("a.mid", 0, ScaleType::Major, Tone(0));
  add_song("b.mid", 1, ScaleType::Blues, Tone(5));
  ASSERT_EQ(invoke("ingest midi a.pgc").code, 0);

  const Outcome t = invoke("--seed 3 train a.pgc m.pgm --epochs 1 --hidden-dim 8");
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("for 1 epochs"), std::string::npos);
  EXPECT_NE(t.err.find("warning: layer key2"), std::string::npos);
  const std::string csv = slurp(dir_ / "m.pgm.loss.csv");
  EXPECT_EQ(csv.rfind("layer,epoch,loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 5);

  const Outcome g = invoke("--seed 4 generate m.pgm out.mid --seconds 50 --scale-type blues --root G");
  ASSERT_EQ(g.code, 0) << g.err;
  const EncodedSequences seq = parse_sequence_dump(slurp(dir_ / "out.mid.seq.txt"));
  EXPECT_EQ(seq.steps(), 400u);
  EXPECT_EQ(seq.half_bars(), 100u);
  const auto doc = midi::parse_midi(read_file((dir_ / "out.mid").string()));
  EXPECT_EQ(doc.tracks.size(), 4u);

  const Outcome g2 = invoke("generate m.pgm out2.mid --seed 4 --seconds 50 --scale-type 4 --root G");
  ASSERT_EQ(g2.code, 0) << g2.err;
  EXPECT_EQ(slurp(dir_ / "out2.mid"), slurp(dir_ / "out.mid"));

  const Outcome odd = invoke("generate m.pgm out3.mid --seconds 3.5 --scale-type 1");
  ASSERT_EQ(odd.code, 0) << odd.err;
  EXPECT_NE(odd.err.find("notice"), std::string::npos);
  EXPECT_EQ(parse_sequence_dump(slurp(dir_ / "out3.mid.seq.txt")).steps(), 32u);

  EXPECT_EQ(invoke("generate m.pgm x.mid --scale-type 2").code, 2);  // no harmonic-minor songs
  EXPECT_EQ(invoke("generate m.pgm x.mid --scale-type 9").code, 1);
  EXPECT_EQ(invoke("generate m.pgm x.mid --profile 3-2").code, 1);
  EXPECT_EQ(invoke("generate m.pgm x.mid --scale-type 1 --profile 3:2,9:1 --temperature 0").code, 0);

  const Outcome e = invoke("eval a.pgc --out-dir rep --sequences out.mid.seq.txt --model m.pgm --count 3 --seconds 8");
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string within = slurp(dir_ / "rep" / "within_scale.tsv");
  EXPECT_EQ(std::count(within.begin(), within.end(), '\n'), 81);
  const std::string cooc = slurp(dir_ / "rep" / "cooccurrence.tsv");
  EXPECT_EQ(std::count(cooc.begin(), cooc.end(), '\n'), 49);
  const std::string novelty = slurp(dir_ / "rep" / "novelty.tsv");
  EXPECT_EQ(std::count(novelty.begin(), novelty.end(), '\n'), 1 + 1 + 3);
  EXPECT_NE(e.out.find("mean longest match"), std::string::npos);
}
