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

#include "rowmix/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "rowmix/config.hpp"
#include "rowmix/engine.hpp"
#include "rowmix/errors.hpp"
#include "rowmix/hw.hpp"
#include "rowmix/model_file.hpp"
#include "rowmix/report.hpp"
#include "rowmix/train.hpp"

namespace rowmix::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string ratio;
  std::string engine;
  std::string out;
  std::string profile;
  std::string checkpoint;
  std::string report;
};

config::RunConfig resolve_config(const Flags& f) {
  config::RunConfig c = f.config.empty() ? config::parse_run_config(json::object())
                                         : config::load_run_config(f.config);
  if (f.seed) {
    c.seed = *f.seed;
    c.train.seed = *f.seed;
    c.canonical["seed"] = *f.seed;
  }
  if (!f.ratio.empty()) {
    c.ratio = assign::SchemeRatio::parse(f.ratio);
    c.canonical["ratio"] = c.ratio.to_string();
  }
  if (!f.engine.empty()) c.engine = f.engine;
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.profile.empty()) {
    c.profile_path = f.profile;
    c.profile.reset();
  }
  if (!f.checkpoint.empty()) c.checkpoint = f.checkpoint;
  if (!f.report.empty()) c.report = f.report;
  return c;
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_report(const report::Report& r, const fs::path& dir, std::ostream& out) {
  io::write_file_atomic(dir / "report.jsonl", r.to_jsonl());
  const std::string summary = r.summary();
  io::write_file_atomic(dir / "report.txt", summary);
  out << summary;
}

json counts_json(std::size_t layer, const assign::SchemeCounts& c) {
  return {{"type", "layer_counts"}, {"layer", layer}, {"pot4", c.pot4}, {"fixed4", c.fixed4},
          {"fixed8", c.fixed8}};
}

void add_assignment_records(report::Report& r, const nn::Model& model,
                            const std::vector<assign::FilterSensitivity>& ranked) {
  const auto q = model.quantizable_layers();
  for (std::size_t l = 0; l < q.size(); ++l) {
    const auto& a = *model.layers()[q[l]].assignment;
    r.add(counts_json(l, a.counts()));
  }
  for (const auto& s : ranked) {
    const auto f = model.layers()[q[s.layer]].assignment->rows[s.row];
    r.add({{"type", "assignment"}, {"layer", s.layer}, {"row", s.row},
           {"lambda_max", s.lambda_max}, {"variance", s.variance},
           {"scheme", quant::to_string(f.scheme)}, {"bits", f.bits}});
  }
}

nn::Mode eval_mode(const nn::Model& m) {
  return m.fully_assigned() ? nn::Mode::Qat : nn::Mode::Float;
}

int cmd_train(const config::RunConfig& c, std::ostream& out) {
  prepare_out(c.out_dir);
  const auto splits = config::load_datasets(c);
  nn::Model model = config::build_model(c, splits.train.sample_shape());
  model.init(c.seed);
  auto result = train::qat_train(std::move(model), splits.train, c.ratio, c.train);
  const nn::Mode mode = c.train.quantize ? nn::Mode::Qat : nn::Mode::Float;

  io::ModelFile file{result.model, std::nullopt};
  if (c.train.quantize) file.quantized = engine::quantize_model(result.model);
  io::save_model(file, c.out_dir / "checkpoint.rmx");

  report::Report r("train", config::config_hash(c.canonical), c.seed);
  r.add({{"type", "run"}, {"ratio", c.ratio.to_string()}, {"epochs", c.train.epochs},
         {"quantize", c.train.quantize}});
  const auto logits = train::predict(result.model, splits.test.inputs, mode);
  r.metric("top1", train::topk_accuracy(logits, splits.test.labels, 1));
  r.metric("top5", train::topk_accuracy(logits, splits.test.labels,
                                        std::min<std::size_t>(5, splits.test.classes)));
  r.metric("train_top1", train::evaluate(result.model, splits.train, mode));
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    r.add({{"type", "epoch"}, {"epoch", e}, {"loss", result.epoch_loss[e]}});
  add_assignment_records(r, result.model, result.sensitivities);
  write_report(r, c.out_dir, out);
  return kOk;
}

int cmd_quantize(const config::RunConfig& c, std::ostream& out) {
  if (c.checkpoint.empty()) throw ConfigError("quantize needs a checkpoint");
  prepare_out(c.out_dir);
  auto file = io::load_model(c.checkpoint);
  const auto splits = config::load_datasets(c);
  nn::Model model = std::move(file.model);
  assign::RankOptions rank;
  rank.power = c.train.power;
  const auto ranked =
      train::assign_model(model, splits.train.head(c.train.calibration_size), c.ratio, rank);
  io::ModelFile q{model, engine::quantize_model(model)};
  io::save_model(q, c.out_dir / "quantized.rmx");

  report::Report r("quantize", config::config_hash(c.canonical), c.seed);
  r.add({{"type", "run"}, {"ratio", c.ratio.to_string()}});
  r.metric("top1", train::evaluate(model, splits.test, nn::Mode::Qat));
  add_assignment_records(r, model, ranked);
  write_report(r, c.out_dir, out);
  return kOk;
}

int cmd_eval(const config::RunConfig& c, std::ostream& out) {
  if (c.checkpoint.empty()) throw ConfigError("eval needs a model file");
  if (c.engine != "qat-sim" && c.engine != "bit-exact")
    throw ConfigError("engine must be 'qat-sim' or 'bit-exact'");
  prepare_out(c.out_dir);
  const auto file = io::load_model(c.checkpoint);
  const auto splits = config::load_datasets(c);
  if (splits.test.size() == 0) throw DomainError("evaluation set is empty");

  report::Report r("eval", config::config_hash(c.canonical), c.seed);
  Tensor logits;
  if (c.engine == "qat-sim") {
    logits = train::predict(file.model, splits.test.inputs, eval_mode(file.model));
  } else {
    if (!file.model.fully_assigned())
      throw StateError("bit-exact engine needs a quantized model (no row assignment found)");
    const auto qm = file.quantized ? *file.quantized : engine::quantize_model(file.model);
    std::vector<engine::OpCounts> counts;
    logits = engine::infer(qm, splits.test.inputs, nullptr, &counts);
    for (std::size_t l = 0; l < counts.size(); ++l)
      r.add({{"type", "ops"}, {"layer", l}, {"shifts", counts[l].shifts}, {"adds", counts[l].adds},
             {"multiplies", counts[l].multiplies}});
  }
  r.add({{"type", "run"}, {"engine", c.engine}, {"samples", splits.test.size()}});
  r.metric("top1", train::topk_accuracy(logits, splits.test.labels, 1));
  r.metric("top5", train::topk_accuracy(logits, splits.test.labels,
                                        std::min<std::size_t>(5, splits.test.classes)));
  const auto q = file.model.quantizable_layers();
  for (std::size_t l = 0; l < q.size(); ++l)
    if (file.model.layers()[q[l]].assignment)
      r.add(counts_json(l, file.model.layers()[q[l]].assignment->counts()));
  write_report(r, c.out_dir, out);
  return kOk;
}

hw::HwProfile resolve_profile(const config::RunConfig& c) {
  if (c.profile_path) return config::load_profile(*c.profile_path);
  if (c.profile) return *c.profile;
  throw ConfigError("no hardware profile given (--profile or 'profile' in the config)");
}

std::vector<hw::LayerShape> resolve_shapes(const config::RunConfig& c) {
  if (c.shapes == "resnet18") return hw::resnet18_shapes();
  if (c.shapes == "checkpoint") {
    if (c.checkpoint.empty()) throw ConfigError("shapes 'checkpoint' needs a checkpoint");
    return hw::model_shapes(io::load_model(c.checkpoint).model);
  }
  throw ConfigError("shapes must be 'resnet18' or 'checkpoint'");
}

json sweep_json(const hw::SweepPoint& p) {
  return {{"type", "sweep_point"}, {"ratio", p.ratio.to_string()},
          {"throughput_gops", p.throughput_gops}, {"latency_ms", p.latency_s * 1e3}};
}

int cmd_sweep(const config::RunConfig& c, std::ostream& out) {
  const auto profile = resolve_profile(c);
  const auto shapes = resolve_shapes(c);
  prepare_out(c.out_dir);
  const auto sweep = hw::optimal_ratio(profile, shapes, c.fixed8, c.step);
  report::Report r("sweep", config::config_hash(c.canonical), c.seed);
  r.add({{"type", "run"}, {"ratio", sweep.best.to_string()}, {"profile", profile.name}});
  for (const auto& p : sweep.grid) {
    r.add(sweep_json(p));
    if (p.ratio == sweep.best) {
      r.metric("throughput_gops", p.throughput_gops);
      r.metric("latency_ms", p.latency_s * 1e3);
    }
  }
  write_report(r, c.out_dir, out);
  return kOk;
}

int cmd_calibrate(const config::RunConfig& c, std::ostream& out) {
  if (c.anchors.empty()) throw ConfigError("calibrate needs 'anchors' in the config");
  const auto shapes = resolve_shapes(c);
  prepare_out(c.out_dir);
  const auto cal = hw::calibrate(c.anchors, shapes, c.anchor_base, {c.fit_shape});
  io::write_file_atomic(c.out_dir / "profile.json", config::profile_to_json(cal.profile).dump(2) + "\n");

  report::Report r("calibrate", config::config_hash(c.canonical), c.seed);
  r.add({{"type", "profile"}, {"profile", config::profile_to_json(cal.profile)},
         {"overhead_fixed", cal.overhead_fixed}});
  r.metric("rms_residual_ms", cal.rms_residual_s * 1e3);
  for (std::size_t i = 0; i < c.anchors.size(); ++i) {
    const auto& a = c.anchors[i];
    r.add({{"type", "anchor_fit"}, {"label", a.label}, {"ratio", a.deployment.ratio.to_string()},
           {"first_last_fixed8", a.deployment.first_last_fixed8},
           {"measured_ms", a.latency_s * 1e3}, {"predicted_ms", (a.latency_s + cal.residual_s[i]) * 1e3}});
  }
  write_report(r, c.out_dir, out);
  return kOk;
}

int cmd_report(const config::RunConfig& c, std::ostream& out) {
  if (c.report.empty()) throw ConfigError("report needs a report path (--report)");
  const auto r = report::Report::from_jsonl(io::read_file(c.report));
  out << r.summary();
  return kOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const TrainingFailure*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const ContractViolation*>(&e))
    return kNumeric;
  return kConfigOrIo;
}

void error_record(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"type", "error"}, {"kind", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Intra-layer mixed-scheme quantization toolkit", "rowmix"};
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--seed", seed, "override the seed")->each([&](const std::string&) { flags.seed = seed; });
    sub->add_option("--ratio", flags.ratio, "PoT-4:Fixed-4:Fixed-8 percentages, e.g. 60:35:5");
    sub->add_option("--engine", flags.engine, "qat-sim or bit-exact");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--profile", flags.profile, "hardware profile JSON");
    sub->add_option("--checkpoint", flags.checkpoint, "model file");
    sub->add_option("--report", flags.report, "report.jsonl to render");
  };
  const std::vector<std::pair<std::string, int (*)(const config::RunConfig&, std::ostream&)>> commands{
      {"train", cmd_train},   {"quantize", cmd_quantize},   {"eval", cmd_eval},
      {"sweep", cmd_sweep},   {"calibrate", cmd_calibrate}, {"report", cmd_report}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, _] : commands) {
    auto* sub = app.add_subcommand(name);
    add_common(sub);
    subs.push_back(sub);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    error_record(err, "usage", e.what());
    return kConfigOrIo;
  }

  try {
    const auto c = resolve_config(flags);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return commands[i].second(c, out);
  } catch (const Error& e) {
    error_record(err, e.kind(), e.what());
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    error_record(err, "config", e.what());
    return kConfigOrIo;
  } catch (const std::filesystem::filesystem_error& e) {
    error_record(err, "io", e.what());
    return kConfigOrIo;
  }
  return kConfigOrIo;
}

}  // namespace rowmix::cli
