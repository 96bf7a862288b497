#include <gtest/gtest.h>

#include <cstdlib>
#include <string>

#include <json.hpp>

#include "test_util.hpp"

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SPLICEQUANT_BIN) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kDemo = SPLICEQUANT_DEMO;

}  // namespace

TEST(Cli, CountPathsOnToyFragments) {
  testutil::TempDir tmp;
  const auto out = tmp.file("counts.tsv");
  ASSERT_EQ(run("count-paths --annotation " + kDemo + "/toy_annotation.tsv --fragments " + kDemo +
                "/toy_fragments.tsv --out " + out),
            0);
  EXPECT_EQ(testutil::slurp(out), "island_id\tpath\tcount\ntoy\t{1}|{1}\t1\ntoy\t{1}|{2}\t1\ntoy\t{1,2}|{3}\t1\n");
  auto man = nlohmann::json::parse(testutil::slurp(out + ".manifest.json"));
  EXPECT_EQ(man["subcommand"], "count-paths");
  EXPECT_EQ(man["inputs"]["fragments"]["sha256"].get<std::string>().size(), 64u);
}

TEST(Cli, EmptyFragmentsGiveEmptyCounts) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("f.tsv"), "fragment_id\tchrom\tleft_blocks\tright_blocks\n");
  ASSERT_EQ(run("count-paths --annotation " + kDemo + "/toy_annotation.tsv --fragments " + tmp.file("f.tsv") +
                " --out " + tmp.file("c.tsv")),
            0);
  EXPECT_EQ(testutil::slurp(tmp.file("c.tsv")), "island_id\tpath\tcount\n");
}

TEST(Cli, OffExonFragmentGoesToUnmappedReport) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("f.tsv"),
                 "fragment_id\tchrom\tleft_blocks\tright_blocks\nin\tchr1\t110-184\t200-274\n"
                 "off\tchr1\t5000-5074\t5100-5174\n");
  ASSERT_EQ(run("count-paths --annotation " + kDemo + "/toy_annotation.tsv --fragments " + tmp.file("f.tsv") +
                " --out " + tmp.file("c.tsv")),
            0);
  EXPECT_EQ(testutil::slurp(tmp.file("c.tsv.unmapped.tsv")), "fragment_id\treason\noff\tno-exon\n");
}

TEST(Cli, MalformedInputExitsTwo) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("f.tsv"), "fragment_id\tchrom\tleft_blocks\tright_blocks\nbad\tchr1\tx-y\t1-2\n");
  EXPECT_EQ(run("count-paths --annotation " + kDemo + "/toy_annotation.tsv --fragments " + tmp.file("f.tsv") +
                " --out " + tmp.file("c.tsv")),
            2);
  EXPECT_EQ(run("count-paths --annotation /nonexistent --fragments " + tmp.file("f.tsv") + " --out x"), 2);
  EXPECT_EQ(run("quantify --bogus"), 2);
}

TEST(Cli, FitDistWithoutSingleVariantGenesExitsThree) {
  EXPECT_EQ(run("fit-dist --annotation " + kDemo + "/toy_annotation.tsv --fragments " + kDemo +
                "/toy_fragments.tsv --out-length /tmp/sq_unused_l.tsv --out-start /tmp/sq_unused_s.tsv"),
            3);
}

TEST(Cli, QuantifyMixedReadLengthsIsAnError) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("l.tsv"), "length\tprob\n200\t1\n");
  testutil::spit(tmp.file("s.tsv"), "z\tcdf\n0.25\t0.25\n0.5\t0.5\n0.75\t0.75\n1\t1\n");
  // frag1 of the fixture has a 76 bp left read and 75 bp right read.
  EXPECT_EQ(run("quantify --annotation " + kDemo + "/toy_annotation.tsv --input " + kDemo +
                "/toy_fragments.tsv --length-dist " + tmp.file("l.tsv") + " --start-dist " + tmp.file("s.tsv") +
                " --out " + tmp.file("q.tsv")),
            2);
  EXPECT_EQ(run("quantify --annotation " + kDemo + "/toy_annotation.tsv --input " + kDemo +
                "/toy_fragments.tsv --read-length 75 --length-dist " + tmp.file("l.tsv") + " --start-dist " +
                tmp.file("s.tsv") + " --out " + tmp.file("q.tsv")),
            0);
}

TEST(Cli, QuantifySingleVariantAnnotationGivesOne) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("a.tsv"),
                 "gene_id\ttranscript_id\tchrom\tstrand\texon_start\texon_end\n"
                 "a\ta.1\tchr1\t+\t100\t2000\nb\tb.1\tchr1\t-\t5000\t7000\n");
  testutil::spit(tmp.file("c.tsv"), "island_id\tpath\tcount\na\t{1}|{1}\t10\n");
  testutil::spit(tmp.file("l.tsv"), "length\tprob\n200\t0.5\n250\t0.5\n");
  testutil::spit(tmp.file("s.tsv"), "z\tcdf\n0.5\t0.5\n1\t1\n");
  ASSERT_EQ(run("quantify --annotation " + tmp.file("a.tsv") + " --input " + tmp.file("c.tsv") +
                " --read-length 75 --length-dist " + tmp.file("l.tsv") + " --start-dist " + tmp.file("s.tsv") +
                " --out " + tmp.file("q.tsv")),
            0);
  const auto q = testutil::slurp(tmp.file("q.tsv"));
  EXPECT_NE(q.find("a\ta.1\t1\t0\t1\t1\t"), std::string::npos) << q;
  EXPECT_NE(q.find("b\tb.1\t1\t0\t1\t1\t"), std::string::npos) << q;
}

TEST(Cli, QuantifyFailsWhenMostIslandsFail) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("c.tsv"), "island_id\tpath\tcount\ntoy\t{1}|{1}\t10\n");
  testutil::spit(tmp.file("l.tsv"), "length\tprob\n5000\t1\n");
  testutil::spit(tmp.file("s.tsv"), "z\tcdf\n1\t1\n");
  EXPECT_EQ(run("quantify --annotation " + kDemo + "/toy_annotation.tsv --input " + tmp.file("c.tsv") +
                " --read-length 75 --length-dist " + tmp.file("l.tsv") + " --start-dist " + tmp.file("s.tsv") +
                " --out " + tmp.file("q.tsv")),
            4);
  EXPECT_NE(testutil::slurp(tmp.file("q.tsv")).find("NA"), std::string::npos);
}

TEST(Cli, PriorQOneIsMaximumLikelihood) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("c.tsv"),
                 "island_id\tpath\tcount\ntoy\t{1}|{1}\t50\ntoy\t{1,2}|{3}\t5\ntoy\t{1}|{2}\t9\ntoy\t{1}|{3}\t20\n");
  testutil::spit(tmp.file("l.tsv"), "length\tprob\n200\t1\n");
  testutil::spit(tmp.file("s.tsv"), "z\tcdf\n0.25\t0.25\n0.5\t0.5\n0.75\t0.75\n1\t1\n");
  ASSERT_EQ(run("quantify --annotation " + kDemo + "/toy_annotation.tsv --input " + tmp.file("c.tsv") +
                " --read-length 75 --prior-q 1 --precision 12 --length-dist " + tmp.file("l.tsv") + " --start-dist " +
                tmp.file("s.tsv") + " --out " + tmp.file("q.tsv") + " --mcmc 2000 --burnin 200 --samples-out " +
                tmp.file("draws.tsv") + " --dump-probs " + tmp.file("p.tsv")),
            0);
  EXPECT_NE(testutil::slurp(tmp.file("q.tsv")).find("toy\tV1\t"), std::string::npos);
  EXPECT_NE(testutil::slurp(tmp.file("draws.tsv")).find("toy\tV3\t1800\t"), std::string::npos);
  EXPECT_NE(testutil::slurp(tmp.file("p.tsv")).find("toy\t{1,2}|{3}\tV1\t"), std::string::npos);
}

TEST(Cli, SimulateInvalidConfigExitsTwo) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("c.cfg"), "n_frags = 10\nnot_a_key = 3\n");
  EXPECT_EQ(run("simulate --config " + tmp.file("c.cfg") + " --out " + tmp.file("r.tsv")), 2);
}

TEST(Cli, SimulateIsDeterministic) {
  testutil::TempDir tmp;
  testutil::spit(tmp.file("c.cfg"), "seed = 5\nrandom_islands = 4\nn_frags = 200\nn_replicates = 2\n");
  ASSERT_EQ(run("simulate --config " + tmp.file("c.cfg") + " --out " + tmp.file("r1.tsv") + " --threads 2"), 0);
  ASSERT_EQ(run("simulate --config " + tmp.file("c.cfg") + " --out " + tmp.file("r2.tsv") + " --threads 1"), 0);
  EXPECT_EQ(testutil::slurp(tmp.file("r1.tsv")), testutil::slurp(tmp.file("r2.tsv")));
  EXPECT_NE(testutil::slurp(tmp.file("r1.tsv")).find("# ci_coverage"), std::string::npos);
}
