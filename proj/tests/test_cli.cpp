#include "geocloud/cli.hpp"

#include <fstream>

#include "geocloud/io.hpp"
#include "geocloud/wpfc.hpp"
#include "test_util.hpp"

using namespace geocloud;
using namespace geocloud::test;

TEST(Cli, SynthThenWpfc) {
  const auto dir = temp_dir("cli_wpfc");
  const std::string d = dir.string();
  ASSERT_EQ(run_cli({"synth", "--M", "10", "--N", "7", "--out", d, "--no-images"}), 0);
  ASSERT_EQ(run_cli({"wpfc", "--in", d + "/corr.json", "--out", d + "/g.json", "--report",
                     d + "/r.json"}),
            0);
  const auto corr = load_correspondences(dir / "corr.json");
  EXPECT_LE(objective(load_group(dir / "g.json"), corr), 1e-10);
  EXPECT_TRUE(std::filesystem::exists(dir / "r.json"));
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({"wpfc", "--bogus"}), 2);
  EXPECT_EQ(run_cli(std::vector<std::string>{}), 2);
  EXPECT_EQ(run_cli({"refine", "--in", "/nonexistent.ply", "--out", "x.ply"}), 2);
  EXPECT_EQ(run_cli({"--help"}), 0);
}

TEST(Cli, MissingInputIsRuntimeError) {
  const auto dir = temp_dir("cli_bad");
  const auto p = dir / "bad.json";
  std::ofstream(p) << "{\"M\": 3";
  EXPECT_EQ(run_cli({"wpfc", "--in", p.string(), "--out", (dir / "g.json").string()}), 1);
}

TEST(Cli, RefineSatisfiesProperties) {
  const auto dir = temp_dir("cli_refine");
  PointCloud pc;
  for (int i = 0; i < 300; ++i) {
    CloudPoint p;
    p.position = random_point(1.0);
    p.e_d = uniform(0, 20);
    p.e_i = 7;
    pc.push_back(p);
  }
  export_ply(pc, dir / "in.ply");
  ASSERT_EQ(run_cli({"refine", "--in", (dir / "in.ply").string(), "--out",
                     (dir / "out.ply").string(), "--delta", "0.25"}),
            0);
  EXPECT_EQ(refine_property_violation(pc, import_ply(dir / "out.ply"), 0.25), "");
  ASSERT_EQ(run_cli({"refine", "--in", (dir / "in.ply").string(), "--out",
                     (dir / "eps.ply").string(), "--epsilon", "5"}),
            0);
  for (const auto& p : import_ply(dir / "eps.ply")) EXPECT_LE(p.e_d, 5.0);
}
