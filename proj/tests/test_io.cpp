#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "vif/harness.hpp"
#include "vif/io.hpp"

using namespace vif;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vif_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Csv, FormatDoubleRoundTrips) {
  for (double x : {0.1, -1e-300, 123456789.125, 1.0 / 3.0}) EXPECT_EQ(io::parse_double(io::format_double(x), "t"), x);
}

TEST(Csv, ParseErrorsNameTheLocation) {
  try {
    io::parse_double("1.5x", "file.csv:3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DataError);
    EXPECT_NE(std::string(e.what()).find("file.csv:3"), std::string::npos);
  }
}

TEST(Survival, RoundTrip) {
  Vector ts(2);
  ts << 0.5, -0.5;
  const auto d = synth_survival(20, 2, ts, 0.3, 1);
  const auto p = scratch("surv.csv");
  io::write_survival_csv(p.string(), d);
  const auto r = io::read_survival_csv(p.string());
  EXPECT_EQ(r.x, d.x);
  EXPECT_EQ(r.y, d.y);
  EXPECT_EQ(r.delta, d.delta);
}

TEST(Survival, RejectsBadDelta) {
  const auto p = scratch("bad_surv.csv");
  write_text(p, "y,delta,x1\n1.0,2,0.5\n");
  try {
    io::read_survival_csv(p.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DataError);
  }
}

TEST(EdgeList, RoundTripKeepsIsolatedNodes) {
  const Graph g(5, {{0, 1}, {1, 2}});
  const auto p = scratch("g.txt");
  io::write_edge_list(p.string(), g);
  const Graph r = io::read_edge_list(p.string());
  EXPECT_EQ(r.size(), 5u);
  EXPECT_EQ(r.edges(), g.edges());
}

TEST(Ranking, RoundTrip) {
  const auto sr = synth_ranking(6, 8, 3, 2, 4);
  const auto q = scratch("q.csv"), l = scratch("l.csv");
  io::write_ranking_csv(q.string(), l.string(), sr.data);
  const auto r = io::read_ranking_csv(q.string(), l.string(), 8);
  EXPECT_EQ(r.x, sr.data.x);
  EXPECT_EQ(r.lists, sr.data.lists);
}

TEST(Scores, InfluencesRoundTripWithBlankLoo) {
  const std::vector<InfluenceRecord> recs{{0, 1, 0.5, std::nullopt}, {2, 3, -1.25, 0.75}};
  const auto p = scratch("inf.csv");
  io::write_influences_csv(p.string(), recs);
  const auto r = io::read_scores_csv(p.string());
  ASSERT_EQ(r.size(), 2u);
  EXPECT_FALSE(r[0].loo_score.has_value());
  EXPECT_EQ(r[1].object_id, 2u);
  EXPECT_EQ(*r[1].loo_score, 0.75);
}

TEST(Scores, RejectsUnknownHeader) {
  const auto p = scratch("what.csv");
  write_text(p, "a,b\n1,2\n");
  EXPECT_THROW(io::read_scores_csv(p.string()), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ParamLayout l;
  l.add("emb", 3).add("out", 2);
  Vector t(5);
  t << 1.0 / 3.0, -0.0, 1e-310, 2.5, -7.125;
  const auto p = scratch("ck.bin");
  io::write_checkpoint(p.string(), ParamVector(t, l), {{"config_hash", "abc"}});
  const auto ck = io::read_checkpoint(p.string());
  EXPECT_EQ(ck.params.layout, l);
  for (Eigen::Index j = 0; j < 5; ++j)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(ck.params.theta[j]), std::bit_cast<std::uint64_t>(t[j]));
  EXPECT_EQ(ck.header.at("config_hash"), "abc");
}

TEST(Checkpoint, TruncationIsDetected) {
  const auto p = scratch("ck2.bin");
  io::write_checkpoint(p.string(), ParamVector(Vector::Ones(4), ParamLayout(4)), {});
  fs::resize_file(p, fs::file_size(p) - 3);
  try {
    io::read_checkpoint(p.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DataError);
  }
}

TEST(Checkpoint, WrongMagicIsDetected) {
  const auto p = scratch("notck.bin");
  write_text(p, "hello world, definitely not a checkpoint");
  EXPECT_THROW(io::read_checkpoint(p.string()), Error);
}
