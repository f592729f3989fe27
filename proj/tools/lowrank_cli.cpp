// Copyright 2026 The lowrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lowrank/error.hpp"
#include "lowrank/io.hpp"
#include "lowrank/pipeline.hpp"

namespace {

using lowrank::PipelineConfig;

struct Overrides {
  std::string config_file;
  std::optional<std::string> out, corpus, metric, form, scorer, prompt;
  std::optional<double> rate, materialize_rate, damping;
  std::optional<bool> whitening;
  std::optional<std::size_t> floor, steps, calib_windows, calib_len, search_prompts, eval_prompts, prompt_bytes,
      gen_len, bench_runs;
  std::optional<std::uint64_t> seed, data_seed;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_file, "JSON run config (flags take precedence)")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "Artifact directory");
  sub->add_option("--corpus", o.corpus, "Corpus text file");
  sub->add_option("--metric", o.metric, "fisher | weight_only | grad_only");
  sub->add_option("--rate", o.rate, "Target compression rate in (0, 1)");
  sub->add_option("--materialize-rate", o.materialize_rate, "Rate of the stored factors (progressive forms)");
  sub->add_option("--floor", o.floor, "Minimum rank per projection");
  sub->add_option("--whitening", o.whitening, "Whiten before factorizing (true/false)");
  sub->add_option("--damping", o.damping, "Whitening damping ratio");
  sub->add_option("--form", o.form, "decreased | static | increased");
  sub->add_option("--scorer", o.scorer, "rouge_l | calibration_loss");
  sub->add_option("--steps", o.steps, "Training steps");
  sub->add_option("--seed", o.seed, "Model initialization seed");
  sub->add_option("--data-seed", o.data_seed, "Training batch seed");
  sub->add_option("--calib-windows", o.calib_windows, "Calibration windows");
  sub->add_option("--calib-len", o.calib_len, "Tokens per calibration window");
  sub->add_option("--search-prompts", o.search_prompts, "Prompts scored by schedule-search");
  sub->add_option("--eval-prompts", o.eval_prompts, "Prompts used by generate and eval");
  sub->add_option("--prompt-bytes", o.prompt_bytes, "Prompt length in bytes");
  sub->add_option("--gen-len", o.gen_len, "Generated tokens per prompt");
  sub->add_option("--bench-runs", o.bench_runs, "Timed benchmark runs (>= 5)");
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c;
  if (!o.config_file.empty()) {
    try {
      c = nlohmann::json::parse(lowrank::io::read_file(o.config_file)).get<PipelineConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw lowrank::ValidationError(o.config_file + ": " + e.what());
    }
  }
  if (o.out) c.out_dir = *o.out;
  if (o.corpus) c.corpus = *o.corpus;
  if (o.metric) c.metric = lowrank::parse_metric(*o.metric);
  if (o.form) c.form = lowrank::parse_form(*o.form);
  if (o.scorer) c.scorer = lowrank::parse_scorer(*o.scorer);
  if (o.rate) c.rate = *o.rate;
  if (o.materialize_rate) c.materialize_rate = *o.materialize_rate;
  if (o.damping) c.damping = *o.damping;
  if (o.whitening) c.whitening = *o.whitening;
  if (o.floor) c.floor = *o.floor;
  if (o.steps) c.train.steps = *o.steps;
  if (o.seed) c.model.seed = *o.seed;
  if (o.data_seed) c.train.data_seed = *o.data_seed;
  if (o.calib_windows) c.calib_windows = *o.calib_windows;
  if (o.calib_len) c.calib_len = *o.calib_len;
  if (o.search_prompts) c.search_prompts = *o.search_prompts;
  if (o.eval_prompts) c.eval_prompts = *o.eval_prompts;
  if (o.prompt_bytes) c.prompt_bytes = *o.prompt_bytes;
  if (o.gen_len) c.gen_len = *o.gen_len;
  if (o.bench_runs) c.bench_runs = *o.bench_runs;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank compression of a tiny byte-level language model"};
  app.require_subcommand(1);
  Overrides o;
  const std::map<std::string, std::string> subcommands = {
      {"train", "Train the dense model"},
      {"calibrate", "Gradients over the calibration windows"},
      {"allocate", "Importance scores and per-projection ranks"},
      {"compress", "Factorize every projection at its allocated rank"},
      {"schedule-search", "Pick the per-token rank schedule"},
      {"generate", "Greedy generation under the schedule"},
      {"eval", "Perplexity, ROUGE-L, rate and throughput report"},
      {"bench", "Throughput and allocation search-time benchmarks"},
      {"ablate", "Whitening / +allocation / +progressive decoding comparison"},
  };
  bool print_config = false;
  for (const auto& [name, help] : subcommands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
    if (name == "generate") sub->add_option("--prompt", o.prompt, "Generate for this text instead of eval prompts");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  auto log = [](const std::string& s) { std::cerr << s << (s.empty() || s.back() != '\n' ? "\n" : ""); };
  try {
    const PipelineConfig c = resolve(o);
    if (print_config) {
      std::cout << nlohmann::json(c).dump(2) << "\n";
      return 0;
    }
    namespace p = lowrank::pipeline;
    nlohmann::json out;
    if (name == "train") out = p::train(c, log);
    else if (name == "calibrate") out = p::calibrate(c, log);
    else if (name == "allocate") out = p::allocate(c, log);
    else if (name == "compress") out = p::compress(c, log);
    else if (name == "schedule-search") out = p::schedule_search(c, log);
    else if (name == "generate") out = p::generate(c, o.prompt, log);
    else if (name == "eval") out = p::eval(c, log);
    else if (name == "bench") out = p::bench(c, log);
    else if (name == "ablate") out = p::ablate(c, log);
    out["config_hash"] = c.hash();
    std::cout << out.dump() << "\n";
    return 0;
  } catch (const lowrank::ValidationError& e) {
    std::cerr << "lowrank " << name << ": " << e.what() << "\n";
    return 2;
  } catch (const lowrank::NumericalError& e) {
    std::cerr << "lowrank " << name << ": numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "lowrank " << name << ": " << e.what() << "\n";
    return 1;
  }
}
