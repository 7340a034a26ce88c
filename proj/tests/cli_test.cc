#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctrkit/optim.h"
#include "ctrkit_cli/commands.h"
#include "ctrkit_cli/config.h"

namespace ctrkit::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("ctrkit_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string run(const std::string& command, const Config& c, const fs::path& out) {
    std::ostringstream log;
    run_command(command, c, out, log);
    return log.str();
  }

  // Synthetic data plus its map, written by `synth` without training.
  Config synthetic_setup() {
    Config c;
    c.set("synth_fields", "4");
    c.set("synth_categories", "24");
    c.set("synth_train", "600");
    c.set("synth_valid", "200");
    c.set("synth_poly2", "false");
    run("synth", c, dir_ / "data");
    Config t;
    t.set("map", (dir_ / "data" / "synth_map.txt").string());
    t.set("train", (dir_ / "data" / "synth_train.txt").string());
    t.set("valid", (dir_ / "data" / "synth_train.txt").string());
    t.set("k", "3");
    t.set("bs", "50");
    t.set("epochs", "2");
    t.set("lr", "0.01");
    return t;
  }

  fs::path dir_;
};

TEST(Config, ParseAndOverride) {
  Config c;
  std::istringstream in("# comment\nmodel = pin  # trailing\nnet = 3x128\n\nsub_net = [40,5]\n");
  c.parse(in, "run.cfg");
  EXPECT_EQ(c.text("model"), "pin");
  EXPECT_EQ(c.sizes("net"), (std::vector<std::size_t>{128, 128, 128}));
  EXPECT_EQ(c.sizes("sub_net"), (std::vector<std::size_t>{40, 5}));
  c.apply_override("lr=0.05");
  EXPECT_EQ(c.number("lr"), 0.05);
  EXPECT_TRUE(c.flag("sparse"));
  EXPECT_EQ(c.seed(), 1u);
  const ModelSpec spec = model_spec(c);
  EXPECT_EQ(spec.family, Family::kPin);
  EXPECT_EQ(spec.subnet_hidden, 40u);
  EXPECT_EQ(spec.subnet_out, 5u);
}

TEST(Config, UnknownKeysAndBadValuesAreNamed) {
  Config c;
  std::istringstream in("model = fm\nlearning_rate = 0.1\n");
  try {
    c.parse(in, "run.cfg");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
    EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
  }
  EXPECT_THROW(c.apply_override("bogus=1"), Error);
  EXPECT_THROW(c.apply_override("lr"), Error);
  c.set("lr", "fast");
  try {
    c.number("lr");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("lr"), std::string::npos);
  }
}

TEST(Config, HyperparameterKeysExist) {
  const Config c;
  for (const char* key : {"bs", "opt", "lr", "l2", "l2_a", "t", "h", "k", "net", "act", "ln",
                          "drop", "sub_net", "kernel", "eps", "beta1", "beta2", "epochs", "seed",
                          "adaptive", "adaptive_c", "adaptive_max", "init", "init_c"}) {
    EXPECT_TRUE(c.has(key)) << key;
  }
  EXPECT_EQ(optimizer_config(c).kind, OptimizerKind::kAdam);
  EXPECT_EQ(train_config(c).batch_size, 2000u);
}

TEST_F(CliTest, MapAndEncodeFromRawCsv) {
  write(dir_ / "raw.csv",
        "label,WEEKDAY,GENDER,CITY\n1,Tuesday,Male,London\n0,Monday,Female,New York\n"
        "1,Tuesday,Female,Hong Kong\n0,Tuesday,Male,Tokyo\n");
  Config c;
  c.set("raw", (dir_ / "raw.csv").string());
  c.set("min_count", "0");
  run("make-map", c, dir_);
  c.set("map", (dir_ / "map.txt").string());
  run("encode", c, dir_);
  const std::string encoded = slurp(dir_ / "encoded.txt");
  EXPECT_EQ(encoded.substr(0, encoded.find('\n')), "1 0:1 1:1 2:1");
  write(dir_ / "bad.csv", "label,WEEKDAY,GENDER\n1,Tuesday,Male\n");
  c.set("raw", (dir_ / "bad.csv").string());
  try {
    run("encode", c, dir_);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("CITY"), std::string::npos) << e.what();
  }
}

TEST_F(CliTest, TrainThenEvaluateAgreesWithLog) {
  Config t = synthetic_setup();
  t.set("model", "fm");
  run("train", t, dir_ / "run");
  const std::string log = slurp(dir_ / "run" / "train_log.csv");
  EXPECT_EQ(log.rfind("# seed=1\nstep,mean_logit_grad,train_loss,eval_auc,eval_logloss\n", 0), 0u);
  // Last line holds the evaluation of the returned parameters.
  std::string last = log.substr(0, log.size() - 1);
  last = last.substr(last.rfind('\n') + 1);
  std::vector<std::string> cells;
  std::stringstream row(last);
  for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 5u) << last;

  Config e = t;
  e.set("checkpoint", (dir_ / "run" / "checkpoint.txt").string());
  e.set("data", t.text("train"));
  const std::string out = run("evaluate", e, dir_ / "eval");
  EXPECT_NE(out.find("auc=" + cells[3] + " logloss=" + cells[4]), std::string::npos)
      << out << " vs " << last;
  EXPECT_EQ(slurp(dir_ / "run" / "checkpoint.txt").rfind("CKPT v1 model=fm n=4 seed=1", 0), 0u);

  e.set("model", "ffm");
  EXPECT_THROW(run("evaluate", e, dir_ / "eval"), Error);
}

TEST_F(CliTest, TrainingIsByteIdentical) {
  Config t = synthetic_setup();
  t.set("model", "deepfm");
  t.set("net", "8,4");
  t.set("drop", "0.2");
  run("train", t, dir_ / "a");
  run("train", t, dir_ / "b");
  EXPECT_EQ(slurp(dir_ / "a" / "checkpoint.txt"), slurp(dir_ / "b" / "checkpoint.txt"));
  EXPECT_EQ(slurp(dir_ / "a" / "train_log.csv"), slurp(dir_ / "b" / "train_log.csv"));
  t.set("seed", "2");
  run("train", t, dir_ / "c");
  EXPECT_NE(slurp(dir_ / "a" / "checkpoint.txt"), slurp(dir_ / "c" / "checkpoint.txt"));
}

TEST_F(CliTest, PretrainAndHeatmap) {
  Config t = synthetic_setup();
  t.set("model", "fm");
  t.set("epochs", "1");
  run("train", t, dir_ / "fm");
  t.set("checkpoint", (dir_ / "fm" / "checkpoint.txt").string());
  run("heatmap", t, dir_ / "fm");
  const std::string csv = slurp(dir_ / "fm" / "heatmap.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "f0,f1,f2,f3");
  EXPECT_EQ(slurp(dir_ / "fm" / "heatmap.pgm").substr(0, 7), "P5\n4 4\n");
  EXPECT_EQ(slurp(dir_ / "fm" / "heatmap_range.txt").rfind("model=fm\n", 0), 0u);

  Config p = t;
  p.set("model", "fnn");
  p.set("net", "4");
  p.set("pretrain", (dir_ / "fm" / "checkpoint.txt").string());
  p.set("epochs", "1");
  EXPECT_NO_THROW(run("train", p, dir_ / "fnn"));
  p.set("k", "5");
  EXPECT_THROW(run("train", p, dir_ / "fnn5"), Error);
}

TEST_F(CliTest, DiagAdamMatchesClosedForm) {
  Config c;
  run("diag-adam", c, dir_);
  std::ifstream in(dir_ / "gstar.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# seed=1", 0), 0u);
  std::getline(in, line);
  EXPECT_EQ(line, "t,eps,gstar");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    double t, eps, g;
    char comma;
    std::istringstream row(line);
    row >> t >> comma >> eps >> comma >> g;
    EXPECT_EQ(g, gstar(eps, 0.999, t)) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 6u * 7u);
  const std::string tail = slurp(dir_ / "long_tail.csv");
  EXPECT_NE(tail.find("t,g_t,T,g_prime\n"), std::string::npos);
  const std::string first = slurp(dir_ / "gstar.csv");
  run("diag-adam", c, dir_);
  EXPECT_EQ(slurp(dir_ / "gstar.csv"), first);
}

TEST_F(CliTest, DiagDropoutWritesTable) {
  Config c;
  c.set("dropout_trials", "5");
  c.set("dropout_batch_sizes", "100,1000");
  run("diag-dropout", c, dir_);
  const std::string csv = slurp(dir_ / "dropout_bias.csv");
  EXPECT_EQ(csv.rfind("# seed=1\nbatch_size,rate,mean_kl\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST_F(CliTest, GradCheckPin) {
  Config c;
  c.set("model", "pin");
  c.set("k", "2");
  c.set("net", "4,3");
  c.set("sub_net", "4,2");
  const std::string out = run("grad-check", c, dir_);
  EXPECT_NE(out.find("model=pin"), std::string::npos);
  EXPECT_NE(out.find("passed=true"), std::string::npos) << out;
}

TEST_F(CliTest, SynthIsIdempotent) {
  Config c;
  c.set("synth_fields", "3");
  c.set("synth_categories", "12");
  c.set("synth_train", "300");
  c.set("synth_valid", "100");
  c.set("synth_dnn", "2x8");
  c.set("bs", "50");
  c.set("eval_every", "3");
  run("synth", c, dir_ / "a");
  run("synth", c, dir_ / "b");
  for (const char* f : {"synth_map.txt", "synth_train.txt", "synth_valid.txt", "curve_dnn-8x8.csv",
                        "curve_poly2.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(CliTest, BinaryReportsErrors) {
  const char* tool = std::getenv("CTRKIT_TOOL");
  if (!tool) GTEST_SKIP() << "CTRKIT_TOOL not set";
  const std::string base = std::string(tool) + " ";
  const fs::path err = dir_ / "err.txt";
  const auto status = [&](const std::string& args) {
    return std::system((base + args + " 2>" + err.string() + " >/dev/null").c_str());
  };
  EXPECT_EQ(status("diag-adam --out " + dir_.string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "gstar.csv"));
  EXPECT_NE(status("diag-adam --set nope=1 --out " + dir_.string()), 0);
  EXPECT_NE(slurp(err).find("nope"), std::string::npos);
  EXPECT_NE(status("train --set model=fm --out " + dir_.string()), 0);
  EXPECT_NE(slurp(err).find("train"), std::string::npos);
  EXPECT_NE(status("explode"), 0);
  write(dir_ / "run.cfg", "model = pin\nk = 2\nnet = 4\nsub_net = 3,2\n");
  EXPECT_EQ(status("grad-check --config " + (dir_ / "run.cfg").string() + " --out " + dir_.string()), 0);
  EXPECT_NE(slurp(dir_ / "grad_check.txt").find("passed=true"), std::string::npos);
}

}  // namespace
}  // namespace ctrkit::cli
