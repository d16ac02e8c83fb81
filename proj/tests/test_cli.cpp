/*
 * Copyright (c) 2026 The rowmix Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rowmix/cli.hpp"
#include "rowmix/model_file.hpp"
#include "rowmix/report.hpp"

using namespace rowmix;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
  json error() const { return json::parse(err); }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rowmix_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
  const fs::path p = dir / name;
  io::write_file_atomic(p, doc.dump(2));
  return p;
}

json smoke_config() {
  return json::parse(io::read_file(fs::path(ROWMIX_CONFIG_DIR) / "smoke.json"));
}

std::set<fs::path> listing(const fs::path& dir) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) out.insert(e.path());
  return out;
}

}  // namespace

TEST_CASE("train smoke run") {
  const auto dir = scratch("train");
  const auto cfg = write_config(dir, "smoke.json", smoke_config());
  const auto before = listing(dir);
  const auto r = run({"train", "--config", cfg.string(), "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("60:35:5") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "checkpoint.rmx"));
  CHECK(fs::exists(dir / "out" / "report.txt"));

  // nothing but the output directory appeared
  auto after = listing(dir);
  for (const auto& p : before) after.erase(p);
  for (const auto& p : after) CHECK(p.string().rfind((dir / "out").string(), 0) == 0);

  const auto rep = report::Report::from_jsonl(io::read_file(dir / "out" / "report.jsonl"));
  CHECK(rep.meta()["command"] == "train");
  const auto counts = rep.of_type("layer_counts");
  REQUIRE(counts.size() == 2);
  const std::size_t rows[] = {20, 4};
  for (std::size_t l = 0; l < 2; ++l) {
    const auto expect = assign::apportion_counts({60, 35, 5}, rows[l]);
    CHECK(counts[l]["pot4"] == expect.pot4);
    CHECK(counts[l]["fixed4"] == expect.fixed4);
    CHECK(counts[l]["fixed8"] == expect.fixed8);
  }
  CHECK(rep.of_type("assignment").size() == 24);
  const auto model = io::load_model(dir / "out" / "checkpoint.rmx");
  CHECK(model.model.fully_assigned());
  CHECK(model.quantized.has_value());
  fs::remove_all(dir);
}

TEST_CASE("train is deterministic and idempotent") {
  const auto dir = scratch("det");
  const auto cfg = write_config(dir, "smoke.json", smoke_config());
  for (const char* o : {"a", "b"})
    REQUIRE(run({"train", "--config", cfg.string(), "--out", (dir / o).string()}).code == 0);
  for (const char* f : {"checkpoint.rmx", "report.jsonl", "report.txt"})
    CHECK(io::read_file(dir / "a" / f) == io::read_file(dir / "b" / f));
  // rerunning into the same directory rewrites the same bytes
  const auto first = io::read_file(dir / "a" / "checkpoint.rmx");
  REQUIRE(run({"train", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
  CHECK(io::read_file(dir / "a" / "checkpoint.rmx") == first);
  // a different seed gives a different model
  REQUIRE(run({"train", "--config", cfg.string(), "--seed", "9", "--out", (dir / "c").string()}).code == 0);
  CHECK(io::read_file(dir / "c" / "checkpoint.rmx") != first);
  fs::remove_all(dir);
}

TEST_CASE("errors map to exit codes and records") {
  const auto dir = scratch("errors");
  auto doc = smoke_config();
  doc["dataset"] = {{"kind", "idx"},
                    {"train_images", "missing-images"},
                    {"train_labels", "missing-labels"},
                    {"test_images", "missing-images"},
                    {"test_labels", "missing-labels"}};
  const auto missing = write_config(dir, "missing.json", doc);
  auto r = run({"train", "--config", missing.string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.error()["type"] == "error");
  CHECK(r.error()["kind"] == "io");

  const auto cfg = write_config(dir, "smoke.json", smoke_config());
  r = run({"train", "--config", cfg.string(), "--ratio", "60:35:6", "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.error()["kind"] == "config");

  auto unknown = smoke_config();
  unknown["colour"] = "blue";
  r = run({"train", "--config", write_config(dir, "unknown.json", unknown).string()});
  CHECK(r.code == 2);
  CHECK(r.error()["kind"] == "config");

  auto diverge = smoke_config();
  diverge["train"]["learning_rate"] = 1e38;
  r = run({"train", "--config", write_config(dir, "diverge.json", diverge).string(), "--out",
           (dir / "d").string()});
  CHECK(r.code == 3);
  CHECK(r.error()["kind"] == "training-failure");
  CHECK_FALSE(fs::exists(dir / "d" / "checkpoint.rmx"));

  r = run({"fly"});
  CHECK(r.code == 2);
  CHECK(r.error()["kind"] == "usage");
  r = run({"train", "--bogus"});
  CHECK(r.code == 2);

  r = run({"sweep", "--profile", (dir / "nope.json").string(), "--out", (dir / "s").string()});
  CHECK(r.code == 2);
  io::write_file_atomic(dir / "bad_profile.json", R"({"lut_lanes": -4})");
  r = run({"sweep", "--profile", (dir / "bad_profile.json").string(), "--out", (dir / "s").string()});
  CHECK(r.code == 2);
  CHECK(r.error()["kind"] == "config");
  fs::remove_all(dir);
}

TEST_CASE("quantize and eval") {
  const auto dir = scratch("qe");
  auto doc = smoke_config();
  doc["train"]["quantize"] = false;
  const auto float_cfg = write_config(dir, "float.json", doc);
  REQUIRE(run({"train", "--config", float_cfg.string(), "--out", (dir / "f").string()}).code == 0);
  const auto ckpt = (dir / "f" / "checkpoint.rmx").string();
  CHECK_FALSE(io::load_model(ckpt).quantized.has_value());

  SUBCASE("bit-exact on a float model is a state error") {
    // strip the assignments so the model is plainly unquantized
    auto f = io::load_model(ckpt);
    for (auto& l : f.model.layers()) l.assignment.reset();
    io::save_model(f, dir / "plain.rmx");
    const auto r = run({"eval", "--config", float_cfg.string(), "--checkpoint",
                        (dir / "plain.rmx").string(), "--engine", "bit-exact", "--out",
                        (dir / "e").string()});
    CHECK(r.code == 2);
    CHECK(r.error()["kind"] == "state");
    const auto q = run({"eval", "--config", float_cfg.string(), "--checkpoint",
                        (dir / "plain.rmx").string(), "--out", (dir / "e").string()});
    CHECK(q.code == 0);
  }

  REQUIRE(run({"quantize", "--config", float_cfg.string(), "--checkpoint", ckpt, "--out",
               (dir / "q").string()})
              .code == 0);
  const auto qfile = (dir / "q" / "quantized.rmx").string();
  CHECK(io::load_model(qfile).quantized.has_value());
  for (const char* engine : {"bit-exact", "qat-sim"}) {
    const auto r = run({"eval", "--config", float_cfg.string(), "--checkpoint", qfile, "--engine",
                        engine, "--out", (dir / engine).string()});
    REQUIRE(r.code == 0);
  }
  const auto bit = report::Report::from_jsonl(io::read_file(dir / "bit-exact" / "report.jsonl"));
  const auto sim = report::Report::from_jsonl(io::read_file(dir / "qat-sim" / "report.jsonl"));
  const auto ops = bit.of_type("ops");
  REQUIRE(ops.size() == 2);
  CHECK(ops[0]["shifts"].get<std::uint64_t>() > 0);
  CHECK(ops[0]["multiplies"].get<std::uint64_t>() > 0);
  CHECK(std::fabs(bit.of_type("metric")[0]["value"].get<double>() -
                  sim.of_type("metric")[0]["value"].get<double>()) <= 0.01);

  auto r = run({"quantize", "--config", float_cfg.string(), "--checkpoint", ckpt, "--ratio",
                "50:40:20", "--out", (dir / "q2").string()});
  CHECK(r.code == 2);
  CHECK(r.error()["kind"] == "config");
  r = run({"eval", "--config", float_cfg.string(), "--checkpoint", qfile, "--engine", "fpga",
           "--out", (dir / "x").string()});
  CHECK(r.code == 2);

  auto empty = doc;
  empty["dataset"]["test_samples"] = 0;
  r = run({"eval", "--config", write_config(dir, "empty.json", empty).string(), "--checkpoint",
           qfile, "--out", (dir / "x").string()});
  CHECK(r.code == 3);
  CHECK(r.error()["kind"] == "domain");
  fs::remove_all(dir);
}

TEST_CASE("calibrate, sweep, report") {
  const auto dir = scratch("hw");
  const auto cal_cfg = fs::path(ROWMIX_CONFIG_DIR) / "calibrate_xc7z045.json";
  auto r = run({"calibrate", "--config", cal_cfg.string(), "--out", (dir / "cal").string()});
  REQUIRE(r.code == 0);
  const auto profile = (dir / "cal" / "profile.json").string();
  REQUIRE(fs::exists(profile));

  r = run({"sweep", "--profile", profile, "--out", (dir / "sw").string()});
  REQUIRE(r.code == 0);
  const auto rep = report::Report::from_jsonl(io::read_file(dir / "sw" / "report.jsonl"));
  CHECK(rep.of_type("sweep_point").size() == 20);

  auto two = json::object();
  two["profile"] = json::parse(io::read_file(profile));
  two["fixed8"] = 0;
  two["step"] = 100;
  r = run({"sweep", "--config", write_config(dir, "two.json", two).string(), "--out",
           (dir / "two").string()});
  REQUIRE(r.code == 0);
  CHECK(report::Report::from_jsonl(io::read_file(dir / "two" / "report.jsonl"))
            .of_type("sweep_point")
            .size() == 2);

  r = run({"report", "--report", (dir / "sw" / "report.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(r.out == io::read_file(dir / "sw" / "report.txt"));
  r = run({"sweep", "--out", (dir / "np").string()});
  CHECK(r.code == 2);
  fs::remove_all(dir);
}

TEST_CASE("the binary reports errors as JSON on stderr") {
  const auto dir = scratch("bin");
  const std::string cmd = std::string(ROWMIX_CLI) + " eval --checkpoint " +
                          (dir / "none.rmx").string() + " --out " + (dir / "o").string() +
                          " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  const auto err = json::parse(io::read_file(dir / "err.txt"));
  CHECK(err["kind"] == "io");
  fs::remove_all(dir);
}
