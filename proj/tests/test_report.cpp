#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "fixtures.hpp"
#include "intraday/report.hpp"
#include "intraday/synth.hpp"

using namespace intraday;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an intraday::Error";
  return ErrorKind::Io;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  for (std::string f; std::getline(is, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// one synthetic panel on disk, shared by the whole suite
class Bundle : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fixtures::TempDir("report");
    GeneratorSpec spec;
    spec.n_companies = 6;
    spec.n_days = 30;
    spec.n_semesters = 4;
    spec.seed = 11;
    for (int s : {3, 4}) {
      SemesterOverride o;
      o.semester = s;
      o.alpha = 0.37;
      spec.overrides.push_back(o);
    }
    auto syn = generate_panel(spec);
    std::ofstream os(data(), std::ios::binary);
    write_canonical_csv(syn.panel, os);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path data() { return dir_->path() / "panel.csv"; }
  static fs::path root() { return dir_->path(); }

  static PipelineConfig config() {
    PipelineConfig cfg;
    cfg.inputs = {data()};
    cfg.regime_boundary = 3;
    return cfg;
  }

  static fixtures::TempDir* dir_;
};

fixtures::TempDir* Bundle::dir_ = nullptr;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(INTRADAY_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesAndResolvesRelativePaths) {
  fixtures::TempDir dir("cfg");
  fixtures::write_text(dir.path() / "cfg.json", R"({
    "inputs": ["data", "/abs/file.csv"],
    "output_dir": "out",
    "regime_boundary": 4,
    "confidence": 0.99,
    "tails": "one",
    "windows": {"opening": [2, 50], "opening_time_offset": 1.0},
    "exclusions": {"3": ["AAA", "BBB"]},
    "kurtosis_tail": {"t_min": 90, "excluded_semesters": [2]},
    "kurtosis_reading": "literal",
    "return_convention": "open-denominator",
    "jobs": 3
  })");
  const auto c = load_config(dir.path() / "cfg.json");
  ASSERT_EQ(c.inputs.size(), 2u);
  EXPECT_EQ(c.inputs[0], dir.path() / "data");
  EXPECT_EQ(c.inputs[1], fs::path("/abs/file.csv"));
  EXPECT_EQ(c.output_dir, dir.path() / "out");
  EXPECT_EQ(c.regime_boundary, 4);
  EXPECT_DOUBLE_EQ(c.confidence, 0.99);
  EXPECT_EQ(c.tails, Tails::One);
  EXPECT_EQ(c.windows.opening.lo, 2);
  EXPECT_EQ(c.windows.opening.hi, 50);
  EXPECT_DOUBLE_EQ(c.windows.opening_time_offset, 1.0);
  EXPECT_EQ(c.exclusions.at(3), (std::set<std::string>{"AAA", "BBB"}));
  EXPECT_EQ(c.tail_t_min, 90);
  EXPECT_EQ(c.tail_excluded, std::set<int>{2});
  EXPECT_EQ(c.cumulants.kurtosis_reading, KurtosisReading::Literal);
  EXPECT_EQ(c.metrics.return_convention, ReturnConvention::OpenDenominator);
  EXPECT_EQ(c.jobs, 3u);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"confidence": 1.0})")); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"confidence": 0})")); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"min_day_coverage": 1.5})")); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"windows": {"opening": [10, 5]}})")); }),
            ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"return_convention": "log"})")); }),
            ErrorKind::InvalidArgument);
  fixtures::TempDir dir("badcfg");
  fixtures::write_text(dir.path() / "cfg.json", "{ not json");
  EXPECT_EQ(kind_of([&] { load_config(dir.path() / "cfg.json"); }), ErrorKind::InvalidArgument);
}

TEST(Config, HashIgnoresJobsAndOutputDir) {
  PipelineConfig a, b;
  b.jobs = 8;
  b.output_dir = "/elsewhere";
  EXPECT_EQ(canonical_json(a).dump(), canonical_json(b).dump());
  b.confidence = 0.9;
  EXPECT_NE(canonical_json(a).dump(), canonical_json(b).dump());
}

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(Bundle, ByteIdenticalAcrossRunsAndJobs) {
  auto cfg = config();
  const auto a = run_pipeline(cfg);
  const auto b = run_pipeline(cfg);
  cfg.jobs = 8;
  const auto c = run_pipeline(cfg);
  EXPECT_EQ(a.files, b.files);
  EXPECT_EQ(a.files, c.files);

  fixtures::TempDir out("bundle");
  write_bundle(a, out.path() / "x");
  write_bundle(c, out.path() / "y");
  for (const auto& [rel, content] : a.files) {
    EXPECT_EQ(slurp(out.path() / "x" / rel), content) << rel;
    EXPECT_EQ(slurp(out.path() / "y" / rel), content) << rel;
  }
}

TEST_F(Bundle, ManifestListsEveryFileWithItsDigest) {
  const auto b = run_pipeline(config());
  const auto m = json::parse(b.files.at("manifest.json"));
  EXPECT_EQ(m["config_hash"], sha256_hex(canonical_json(config()).dump()));
  std::set<std::string> listed;
  for (const auto& e : m["files"]) {
    const auto path = e["path"].get<std::string>();
    listed.insert(path);
    ASSERT_TRUE(b.files.count(path)) << path;
    EXPECT_EQ(e["sha256"], sha256_hex(b.files.at(path)));
    EXPECT_EQ(e["bytes"], b.files.at(path).size());
  }
  for (const auto& [path, content] : b.files) {
    if (path != "manifest.json") {
      EXPECT_TRUE(listed.count(path)) << path;
    }
  }
  for (const auto& id : figure_ids()) EXPECT_TRUE(listed.count("figures/" + id + ".csv")) << id;
  for (const char* f : {"validation.json", "fits.csv", "fits.json", "metrics.csv", "variance_ratio.csv",
                        "kurtosis_tail.json", "tests.json"})
    EXPECT_TRUE(listed.count(f)) << f;
  EXPECT_EQ(m["semesters"], (std::vector<int>{1, 2, 3, 4}));
}

TEST_F(Bundle, RegimeTestsSeparateThePlantedExponents) {
  const auto b = run_pipeline(config());
  EXPECT_EQ(b.test_groups[0], (std::vector<int>{1, 2}));
  EXPECT_EQ(b.test_groups[1], (std::vector<int>{3, 4}));
  ASSERT_TRUE(b.welch);
  EXPECT_LT(b.welch->statistic, 0.0);
  auto alpha = [&](int s) { return b.per_semester.at(s).fits.at("opening").coefficient("exponent"); };
  EXPECT_GT(std::min(alpha(3), alpha(4)), std::max(alpha(1), alpha(2)));
}

TEST_F(Bundle, NormalizedFiguresStartAtOne) {
  auto b = run_pipeline(config());
  for (const char* fig : {"fig4", "fig5"}) {
    const auto lines = csv_lines(b.files.at(std::string("figures/") + fig + ".csv"));
    ASSERT_GE(lines.size(), 5u);
    const auto first = split(lines[1]);
    EXPECT_EQ(first[0], std::to_string(b.normalizers.at(fig)));
    EXPECT_DOUBLE_EQ(std::fabs(std::stod(first[2])), 1.0);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split(lines[i]);
      EXPECT_EQ(std::stod(f[1]) < 0, std::stod(f[2]) < 0) << lines[i];
    }
  }
  const auto m = json::parse(b.files.at("manifest.json"));
  EXPECT_EQ(m["normalizers"]["fig4"], 1);
}

TEST_F(Bundle, OpeningExponentFigureHasOneRowPerSemester) {
  auto b = run_pipeline(config());
  const auto lines = csv_lines(b.files.at("figures/fig2.csv"));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "semester,alpha,alpha_se,r,branch,branch_mean");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i]);
    EXPECT_EQ(std::stoi(f[0]), static_cast<int>(i));
    EXPECT_EQ(f[4], i < 3 ? "before" : "after");
    EXPECT_DOUBLE_EQ(std::stod(f[1]), b.per_semester.at(static_cast<int>(i)).fits.at("opening").coefficient("exponent"));
  }
}

TEST_F(Bundle, KurtosisTailRespectsExcludedSemesters) {
  auto cfg = config();
  cfg.tail_excluded = {2};
  auto b = run_pipeline(cfg);
  ASSERT_TRUE(b.tail);
  EXPECT_EQ(b.tail->averaged_semesters, (std::vector<int>{1, 3, 4}));
  const auto lines = csv_lines(b.files.at("figures/fig15.csv"));
  ASSERT_EQ(lines.size(), 5u);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i]);
    EXPECT_EQ(f[2], f[0] == "2" ? "1" : "0") << lines[i];
  }
  // the averaged curve ignores semester 2
  auto without = config();
  without.tail_excluded = {};
  auto all = run_pipeline(without);
  EXPECT_NE(b.files.at("figures/fig16.csv"), all.files.at("figures/fig16.csv"));
}

TEST_F(Bundle, ExclusionsReachTheBundle) {
  auto cfg = config();
  cfg.exclusions[2] = {synthetic_ticker(0), synthetic_ticker(1)};
  auto b = run_pipeline(cfg);
  for (const auto& r : b.per_ticker) EXPECT_FALSE(r.semester == 2 && (r.ticker == synthetic_ticker(0) || r.ticker == synthetic_ticker(1)));
  EXPECT_EQ(b.per_semester.at(2).companies, 4u);
  EXPECT_EQ(b.per_semester.at(1).companies, 6u);
  EXPECT_EQ(b.per_semester.at(2).tilde->contributing_count[100], 4u);
}

TEST_F(Bundle, PartialFailureKeepsTheRest) {
  auto cfg = config();
  for (int i = 0; i < 6; ++i) cfg.exclusions[4].insert(synthetic_ticker(i));
  auto b = run_pipeline(cfg);
  EXPECT_FALSE(b.failures.empty());
  EXPECT_FALSE(b.files.count("profiles/tilde_s04.csv"));
  EXPECT_TRUE(b.files.count("profiles/tilde_s03.csv"));
  EXPECT_TRUE(b.files.count("manifest.json"));
  const auto m = json::parse(b.files.at("manifest.json"));
  EXPECT_EQ(m["failures"].size(), b.failures.size());
}

TEST_F(Bundle, UnknownFigure) {
  auto b = run_pipeline(config());
  EXPECT_EQ(kind_of([&] { emit_figure_series(b, "fig17"); }), ErrorKind::UnknownFigure);
  EXPECT_EQ(kind_of([&] { emit_figure_series(b, ""); }), ErrorKind::UnknownFigure);
  EXPECT_EQ(emit_figure_series(b, "fig1"), b.files.at("figures/fig1.csv"));
}

TEST(Pipeline, EmptyDirectoryWritesNothing) {
  fixtures::TempDir dir("empty");
  fs::create_directories(dir.path() / "in");
  PipelineConfig cfg;
  cfg.inputs = {dir.path() / "in"};
  const auto out = dir.path() / "out";
  EXPECT_EQ(kind_of([&] { write_bundle(run_pipeline(cfg), out); }), ErrorKind::NoData);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Bundle, CliExitCodes) {
  fixtures::TempDir dir("cli");
  const auto out = dir.path() / "bundle";
  EXPECT_EQ(run_cli("--out " + out.string() + " report " + data().string()), 0);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  EXPECT_EQ(run_cli("no-such-command"), 1);
  EXPECT_EQ(run_cli("--jobs 0 report " + data().string()), 1);
  fs::create_directories(dir.path() / "empty");
  EXPECT_EQ(run_cli("--out " + (dir.path() / "e").string() + " report " + (dir.path() / "empty").string()), 2);
  EXPECT_FALSE(fs::exists(dir.path() / "e"));
  EXPECT_EQ(run_cli("figure fig99 " + data().string()), 2);
  EXPECT_EQ(run_cli("tests 1 2,3"), 3);
  EXPECT_EQ(run_cli("tests 1,2,3,4,5 6,7,8,9,10"), 0);
}

TEST_F(Bundle, CliReportMatchesLibrary) {
  fixtures::TempDir dir("cli_lib");
  const auto out = dir.path() / "bundle";
  ASSERT_EQ(run_cli("--jobs 2 --out " + out.string() + " report " + data().string()), 0);
  auto cfg = config();
  cfg.regime_boundary = 10;
  const auto b = run_pipeline(cfg);
  for (const auto& [rel, content] : b.files) {
    if (rel.rfind("profiles/", 0) == 0 || rel == "fits.csv" || rel == "metrics.csv") {
      EXPECT_EQ(slurp(out / rel), content) << rel;
    }
  }
}
