#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "reffakd/cli.hpp"
#include "reffakd/model_zoo.hpp"
#include "reffakd/profiler.hpp"
#include "reffakd/softlabel.hpp"
#include "support.hpp"

using namespace reffakd;
using testutil::TempDir;
using testutil::slurp;
using testutil::spew;

namespace {

const LayerCost* find_layer(const ResourceReport& r, const std::string& needle) {
  for (const auto& l : r.layers)
    if (l.name.find(needle) != std::string::npos) return &l;
  return nullptr;
}

/// Runs dispatch with stdout/stderr captured and the run root pointed at a
/// scratch directory.
struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run_cli(const std::vector<std::string>& args, const std::string& run_dir) {
  ::setenv("REFFAKD_RUN_DIR", run_dir.c_str(), 1);
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  CliRun r;
  try {
    r.code = dispatch(args);
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> list_dir(const std::string& root) {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(root))
    names.push_back(e.path().filename().string());
  return names;
}

}  // namespace

TEST_SUITE("profiler") {

TEST_CASE("single conv layer cost") {
  ModelSpec spec;
  spec.name = "one_conv";
  spec.in_channels = 3;
  spec.in_height = 32;
  spec.in_width = 32;
  LayerDef conv;
  conv.kind = LayerKind::kConv2d;
  conv.in_ch = 3;
  conv.out_ch = 12;
  conv.kernel = 4;
  conv.stride = 2;
  conv.pad = 1;
  spec.layers = {conv};
  auto r = profile(spec);
  CHECK(r.params == 588);
  CHECK(r.macs == 147456);
  CHECK(r.flops == 294912);
  CHECK(r.memory_bytes == 588 * 4);
}

TEST_CASE("lenet5 parameter breakdown") {
  auto r = profile(build_lenet5(10, 1, 28, 28));
  CHECK(r.params == 51902);
  std::vector<int64_t> conv_linear_params;
  for (const auto& l : r.layers)
    if (l.params > 0) conv_linear_params.push_back(l.params);
  CHECK(conv_linear_params == std::vector<int64_t>{156, 2416, 48120, 1210});
}

TEST_CASE("cae totals have a closed form") {
  auto r = profile(build_cae(3, 32, 32));
  CHECK(r.params == 47355);
  CHECK(r.memory_bytes == 47355 * 4);
}

TEST_CASE("structural identities hold on every zoo model") {
  for (const auto& spec :
       {build_cae(3, 32, 32), build_lenet5(10, 1, 28, 28), build_resnet(18, 100, 3, 32, 32),
        build_resnet(50, 100, 3, 32, 32)}) {
    auto r = profile(spec);
    CHECK(r.flops == 2 * r.macs);
    CHECK(r.memory_bytes == r.params * 4);
    int64_t f = 0, m = 0, p = 0, b = 0;
    for (const auto& l : r.layers) {
      CHECK(l.flops == 2 * l.macs);
      f += l.flops;
      m += l.macs;
      p += l.params;
      b += l.memory_bytes;
    }
    CHECK(f == r.flops);
    CHECK(m == r.macs);
    CHECK(p == r.params);
    CHECK(b == r.memory_bytes);
  }
}

TEST_CASE("doubling spatial extent quadruples conv macs, params unchanged") {
  auto small = profile(build_cae(3, 32, 32));
  auto big = profile_at(build_cae(3, 32, 32), 3, 64, 64);
  CHECK(big.params == small.params);
  REQUIRE(big.layers.size() == small.layers.size());
  for (size_t i = 0; i < small.layers.size(); ++i) {
    if (small.layers[i].macs == 0) continue;
    CHECK(big.layers[i].macs == 4 * small.layers[i].macs);
  }
  CHECK(big.macs == 4 * small.macs);
}

TEST_CASE("profile_at rejects geometry the layers cannot take") {
  try {
    profile_at(build_cae(3, 32, 32), 3, 2, 2);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
}

TEST_CASE("csv and table carry one row per layer plus a total") {
  auto r = profile(build_lenet5(10, 1, 28, 28));
  const std::string csv = report_csv(r);
  CHECK(csv.find("layer,flops,macs,params,memory_bytes\n") == 0);
  CHECK(csv.find("total,") != std::string::npos);
  size_t rows = 0;
  for (char ch : csv)
    if (ch == '\n') ++rows;
  CHECK(rows == r.layers.size() + 2);  // header + layers + total

  const std::string table = format_report(r);
  CHECK(table.find("total") != std::string::npos);
  CHECK(find_layer(r, "conv2d") != nullptr);
}

TEST_CASE("compare_reports of a model with itself is all ones") {
  auto r = profile(build_lenet5(10, 1, 28, 28));
  const std::string cmp = compare_reports(r, r);
  CHECK(cmp == "flops: 1x\nmacs: 1x\nparams: 1x\nmemory_bytes: 1x\n");
  ResourceReport zero;
  CHECK_THROWS_AS(compare_reports(r, zero), std::invalid_argument);
}

TEST_CASE("resnet50 dwarfs the autoencoder") {
  auto cae = profile(build_cae(3, 32, 32));
  auto r50 = profile(build_resnet(50, 100, 3, 32, 32));
  const double param_ratio = static_cast<double>(r50.params) / static_cast<double>(cae.params);
  CHECK(param_ratio > 400.0);
  CHECK(param_ratio < 600.0);
  const double flop_ratio = static_cast<double>(r50.flops) / static_cast<double>(cae.flops);
  CHECK(flop_ratio > 150.0);
  CHECK(flop_ratio < 800.0);
}

}  // TEST_SUITE("profiler")

TEST_SUITE("cli") {

TEST_CASE("profile subcommand prints the table and writes csv") {
  TempDir tmp("cli_prof");
  auto r = run_cli({"profile", "--model", "lenet5", "--input", "1x28x28", "--classes", "10",
                    "--csv", tmp.file("p.csv")},
                   tmp.file("runs"));
  CHECK(r.code == 0);
  CHECK(r.out.find("51902") != std::string::npos);
  const std::string csv = slurp(tmp.file("p.csv"));
  CHECK(csv.find("layer,flops,macs,params,memory_bytes\n") == 0);
}

TEST_CASE("profile round-trips an emitted spec file") {
  TempDir tmp("cli_spec");
  auto r = run_cli({"profile", "--model", "cae", "--input", "3x32x32", "--emit_spec",
                    tmp.file("cae.spec")},
                   tmp.file("runs"));
  CHECK(r.code == 0);
  auto r2 = run_cli({"profile", "--spec", tmp.file("cae.spec")}, tmp.file("runs"));
  CHECK(r2.code == 0);
  CHECK(r2.out == r.out);
}

TEST_CASE("compare subcommand prints ratio lines") {
  TempDir tmp("cli_cmp");
  auto r = run_cli({"compare", "--a_model", "resnet50", "--b_model", "cae", "--a_input",
                    "3x32x32", "--b_input", "3x32x32"},
                   tmp.file("runs"));
  CHECK(r.code == 0);
  CHECK(r.out.find("params: ") != std::string::npos);
  CHECK(r.out.find("x\n") != std::string::npos);
}

TEST_CASE("missing required flags exit 1 and name the flag") {
  TempDir tmp("cli_req");
  auto r = run_cli({"gen-softlabels", "--dataset", "synth"}, tmp.file("runs"));
  CHECK(r.code == 1);
  CHECK(r.err.find("--checkpoint") != std::string::npos);
}

TEST_CASE("unknown subcommands, flags and config keys exit 1") {
  TempDir tmp("cli_unknown");
  auto r = run_cli({"frobnicate"}, tmp.file("runs"));
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown subcommand 'frobnicate'") != std::string::npos);

  r = run_cli({"profile", "--model", "cae", "--wibble", "3"}, tmp.file("runs"));
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown option 'wibble'") != std::string::npos);

  spew(tmp.file("bad.cfg"), "model = cae\nwobble = 1\n");
  r = run_cli({"profile", "--config", tmp.file("bad.cfg")}, tmp.file("runs"));
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown option 'wobble'") != std::string::npos);

  r = run_cli({}, tmp.file("runs"));
  CHECK(r.code == 1);
  CHECK(r.err.find("usage:") != std::string::npos);
}

TEST_CASE("runtime failures exit 2") {
  TempDir tmp("cli_rt");
  auto r = run_cli({"train-cae", "--dataset", "idx", "--images", tmp.file("absent_img"),
                    "--labels", tmp.file("absent_lab"), "--epochs", "1"},
                   tmp.file("runs"));
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("train-cae produces a run dir with checkpoint, metrics and config echo") {
  TempDir tmp("cli_cae");
  const std::vector<std::string> args{"train-cae", "--dataset", "synth", "--per_class", "2",
                                      "--data_seed", "3", "--epochs", "1", "--batch_size", "10",
                                      "--lr", "0.01", "--seed", "1"};
  auto r = run_cli(args, tmp.file("runs"));
  REQUIRE(r.code == 0);
  auto dirs = list_dir(tmp.file("runs"));
  REQUIRE(dirs.size() == 1);
  const std::string dir = tmp.file("runs") + "/" + dirs[0];
  CHECK(std::filesystem::exists(dir + "/cae.ckpt"));
  CHECK(std::filesystem::exists(dir + "/config.txt"));
  CHECK(std::filesystem::exists(dir + "/cae_T5_a0.8_s1.csv"));
  CHECK(r.out.find("run dir:") != std::string::npos);

  // The same argv maps to the same run dir with identical artifacts.
  const std::string cfg_bytes = slurp(dir + "/config.txt");
  const std::string metrics_bytes = slurp(dir + "/cae_T5_a0.8_s1.csv");
  const std::string ckpt_bytes = slurp(dir + "/cae.ckpt");
  auto r2 = run_cli(args, tmp.file("runs"));
  REQUIRE(r2.code == 0);
  CHECK(list_dir(tmp.file("runs")).size() == 1);
  CHECK(slurp(dir + "/config.txt") == cfg_bytes);
  CHECK(slurp(dir + "/cae_T5_a0.8_s1.csv") == metrics_bytes);
  CHECK(slurp(dir + "/cae.ckpt") == ckpt_bytes);

  // The echoed config reproduces the run when fed back through --config.
  auto r3 = run_cli({"train-cae", "--config", dir + "/config.txt"}, tmp.file("runs"));
  REQUIRE(r3.code == 0);
  CHECK(list_dir(tmp.file("runs")).size() == 1);
  CHECK(slurp(dir + "/cae.ckpt") == ckpt_bytes);
}

TEST_CASE("train-student runs reffakd from a table file") {
  TempDir tmp("cli_student");
  SoftLabelTable table;
  table.c = 10;
  table.rows.assign(100, 0.05);
  for (int i = 0; i < 10; ++i) table.rows[static_cast<size_t>(i) * 10 + i] = 0.55;
  table.provenance = {"synth", "none", 2, 0.0, 1};
  save_soft_label_table(table, tmp.file("table.txt"));

  auto r = run_cli({"train-student", "--mode", "reffakd", "--table", tmp.file("table.txt"),
                    "--dataset", "synth", "--per_class", "2", "--test_per_class", "1",
                    "--epochs", "1", "--batch_size", "10", "--lr", "0.01", "--augment", "0",
                    "--T", "4", "--alpha", "0.6", "--seed", "2"},
                   tmp.file("runs"));
  REQUIRE(r.code == 0);
  auto dirs = list_dir(tmp.file("runs"));
  REQUIRE(dirs.size() == 1);
  const std::string dir = tmp.file("runs") + "/" + dirs[0];
  CHECK(std::filesystem::exists(dir + "/reffakd_T4_a0.6_s2.csv"));
  CHECK(r.out.find("best top-1:") != std::string::npos);

  auto bad = run_cli({"train-student", "--mode", "reffakd", "--dataset", "synth",
                      "--per_class", "2", "--epochs", "1"},
                     tmp.file("runs"));
  CHECK(bad.code == 1);
  CHECK(bad.err.find("--table") != std::string::npos);

  auto cae_mode = run_cli({"train-student", "--mode", "cae", "--dataset", "synth"},
                          tmp.file("runs"));
  CHECK(cae_mode.code == 1);
}

TEST_CASE("grid writes per-cell metrics and a summary") {
  TempDir tmp("cli_grid");
  SoftLabelTable table;
  table.c = 10;
  table.rows.assign(100, 0.05);
  for (int i = 0; i < 10; ++i) table.rows[static_cast<size_t>(i) * 10 + i] = 0.55;
  table.provenance = {"synth", "none", 2, 0.0, 1};
  save_soft_label_table(table, tmp.file("table.txt"));

  auto r = run_cli({"grid", "--mode", "reffakd", "--table", tmp.file("table.txt"), "--dataset",
                    "synth", "--per_class", "2", "--test_per_class", "1", "--epochs", "1",
                    "--batch_size", "10", "--lr", "0.01", "--augment", "0", "--T_list", "1,4",
                    "--alpha_list", "0.5", "--seed", "2"},
                   tmp.file("runs"));
  REQUIRE(r.code == 0);
  auto dirs = list_dir(tmp.file("runs"));
  REQUIRE(dirs.size() == 1);
  const std::string dir = tmp.file("runs") + "/" + dirs[0];
  CHECK(std::filesystem::exists(dir + "/summary.csv"));
  CHECK(std::filesystem::exists(dir + "/reffakd_T1_a0.5_s2.csv"));
  CHECK(std::filesystem::exists(dir + "/reffakd_T4_a0.5_s2.csv"));
  const std::string summary = slurp(dir + "/summary.csv");
  CHECK(summary.find("temperature,alpha,accuracy,mode\n") == 0);
}

}  // TEST_SUITE("cli")
