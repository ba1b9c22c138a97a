// Command-line front end: decode, generate, eval, sweep, validate-trace.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "have/error.hpp"
#include "have/fusion.hpp"
#include "have/harness/eval.hpp"
#include "have/harness/generate.hpp"
#include "have/harness/planted.hpp"
#include "have/kv_config.hpp"
#include "have/sink_policy.hpp"
#include "have/toy_transformer.hpp"
#include "have/trace_io.hpp"
#include "json.hpp"

namespace {

using namespace have;
using nlohmann::json;

struct PolicyFlags {
  std::string policy = "have";
  double alpha = FusionConfig::kDefaultAlpha;
  std::uint32_t top_rank = FusionConfig::kDefaultTopRank;
  bool no_hag = false;
  bool no_vc = false;
  std::string estimator;

  void attach(CLI::App& cmd) {
    cmd.add_option("--policy", policy, "have or greedy")->check(CLI::IsMember({"have", "greedy"}));
    cmd.add_option("--alpha", alpha, "fusion scale");
    cmd.add_option("--top-rank", top_rank, "size of the Top-R support");
    cmd.add_flag("--no-hag", no_hag, "uniform head weights");
    cmd.add_flag("--no-vc", no_vc, "skip value calibration");
    cmd.add_option("--estimator", estimator, "linear sink-mask estimator file");
  }

  Policy build() const {
    if (policy == "greedy") return Policy::greedy();
    if (!(alpha >= 0.0)) throw DomainError("--alpha must be non-negative");
    if (top_rank == 0) throw DomainError("--top-rank must be at least 1");
    DecodeConfig cfg;
    cfg.fusion.alpha = alpha;
    cfg.fusion.top_rank = top_rank;
    cfg.ablations = {no_hag, no_vc};
    if (!estimator.empty()) cfg.calibration.estimator = EstimatorSpec::load(estimator);
    return Policy::have(cfg);
  }
};

// Writes to the named file, or stdout when empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw InputError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<TokenId> parse_ids(const std::string& text) {
  std::vector<TokenId> ids;
  for (const auto& word : split_list(text)) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(word, &used);
      if (used != word.size() || v > 0xffffffffUL) throw std::out_of_range(word);
      ids.push_back(static_cast<TokenId>(v));
    } catch (const std::logic_error&) {
      throw InputError("not a token id: '" + word + "'");
    }
  }
  return ids;
}

json step_record(const FusedDistribution& d, const StepSnapshot& s) {
  json evidence = json::object();
  for (const auto& [id, m] : d.evidence.vocab_scores) evidence[std::to_string(id)] = m;
  return {{"type", "step"},          {"step", s.step},
          {"chosen", d.chosen},      {"greedy", argmax(d.p)},
          {"h_norm", d.h_norm},      {"fallback", d.fallback_used()},
          {"support", d.support},    {"evidence", evidence},
          {"s_chosen", d.s_hat[d.chosen]}};
}

json generation_summary(const harness::Generation& gen, const TraceHeader& header) {
  std::size_t fallbacks = 0;
  for (const auto& st : gen.steps) fallbacks += st.fallback_used() ? 1 : 0;
  return {{"type", "summary"},
          {"tokens", gen.tokens},
          {"text", harness::render_generation(gen, header)},
          {"stopped", gen.stopped},
          {"steps", gen.steps.size()},
          {"fallback_rate", gen.steps.empty() ? 0.0
                                              : static_cast<double>(fallbacks) /
                                                    static_cast<double>(gen.steps.size())}};
}

void write_generation(const harness::Generation& gen, const TraceHeader& header, std::ostream& out) {
  for (std::size_t t = 0; t < gen.steps.size(); ++t) {
    out << step_record(gen.steps[t], gen.snapshots[t]).dump() << '\n';
  }
  out << generation_summary(gen, header).dump() << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"HAVE decoding: head-adaptive gating and value calibration"};
  app.require_subcommand(1);

  // decode
  auto* decode = app.add_subcommand("decode", "replay a trace under a decoding policy");
  std::string trace_path;
  std::string out_path;
  std::optional<std::uint32_t> max_len;
  std::optional<std::uint32_t> stop_token;
  PolicyFlags decode_flags;
  decode->add_option("--trace", trace_path, "trace file")->required();
  decode_flags.attach(*decode);
  decode->add_option("--max-len", max_len, "decisions to make (default: every step)");
  decode->add_option("--stop-token", stop_token, "stop after emitting this id");
  decode->add_option("--out", out_path, "report file (default stdout)");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "run the toy model live");
  std::string model_config;
  std::optional<std::uint64_t> seed;
  std::string prompt_ids = "0";
  std::uint32_t steps = harness::StopRule::kDefaultMaxLen;
  std::string trace_out;
  std::string gen_out;
  std::optional<std::uint32_t> gen_stop;
  PolicyFlags gen_flags;
  gen_cmd->add_option("--model-config", model_config, "toy model config file");
  gen_cmd->add_option("--seed", seed, "weight seed (overrides the config)");
  gen_cmd->add_option("--prompt-ids", prompt_ids, "comma-separated prompt token ids");
  gen_flags.attach(*gen_cmd);
  gen_cmd->add_option("--steps", steps, "maximum tokens to generate");
  gen_cmd->add_option("--stop-token", gen_stop, "stop after emitting this id");
  gen_cmd->add_option("--trace-out", trace_out, "record the decision snapshots here");
  gen_cmd->add_option("--out", gen_out, "report file (default stdout)");

  // eval
  auto* eval = app.add_subcommand("eval", "EM/F1 over a dataset for every grid configuration");
  std::string dataset;
  std::string grid_path;
  std::string eval_out;
  std::string series_out;
  eval->add_option("--dataset", dataset, "JSON-lines dataset")->required();
  eval->add_option("--grid", grid_path, "grid config file");
  eval->add_option("--out", eval_out, "report file (default stdout)");
  eval->add_option("--series", series_out, "prefix for <prefix>.alpha.txt / <prefix>.rank.txt");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "gold-selection rate or EM along alpha or Top-R");
  std::string axis_name;
  std::vector<double> values;
  std::string sweep_dataset;
  std::string sweep_grid;
  std::string sweep_out;
  harness::PlantedParams planted;
  sweep->add_option("--axis", axis_name, "alpha or rank")->required()->check(CLI::IsMember({"alpha", "rank"}));
  sweep->add_option("--values", values, "axis values")->delimiter(',');
  sweep->add_option("--dataset", sweep_dataset, "sweep EM on a dataset instead of the planted suite");
  sweep->add_option("--grid", sweep_grid, "base grid for --dataset");
  sweep->add_option("--instances", planted.instances, "planted suite size");
  sweep->add_option("--seed", planted.seed, "planted suite seed");
  sweep->add_option("--out", sweep_out, "series file (default stdout)");

  // validate-trace
  auto* validate = app.add_subcommand("validate-trace", "check every snapshot invariant of a trace");
  std::string validate_path;
  validate->add_option("--trace", validate_path, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*decode) {
    const TraceFile trace = read_trace_file(trace_path);
    if (trace.steps.empty()) throw InputError("trace has no steps");
    if (auto w = sink_policy_mismatch(trace.header, SinkPolicy{})) std::cerr << "warning: " << *w << '\n';
    const harness::StopRule stop{max_len.value_or(static_cast<std::uint32_t>(trace.steps.size())),
                                 stop_token};
    const harness::Generation gen = harness::generate(trace, decode_flags.build(), stop);
    Output out(out_path);
    write_generation(gen, trace.header, out.stream());
    return 0;
  }

  if (*gen_cmd) {
    toy::ToyConfig cfg = model_config.empty() ? toy::ToyConfig{} : toy::ToyConfig::load(model_config);
    if (seed) cfg.seed = *seed;
    const toy::Model model(cfg);
    const std::vector<TokenId> prompt = parse_ids(prompt_ids);
    TraceFile record;
    const harness::Generation gen =
        harness::generate(model, prompt, gen_flags.build(), harness::StopRule{steps, gen_stop},
                          trace_out.empty() ? nullptr : &record);
    if (!trace_out.empty()) write_trace_file(record, trace_out);
    Output out(gen_out);
    write_generation(gen, model.trace_header(), out.stream());
    return 0;
  }

  if (*eval) {
    const harness::Dataset data = harness::Dataset::load(dataset);
    for (const auto& e : data.errors) std::cerr << "warning: skipped dataset " << e << '\n';
    const harness::EvalGrid grid = grid_path.empty() ? harness::EvalGrid{} : harness::EvalGrid::load(grid_path);
    const harness::EvalReport report = harness::run_eval(data, grid);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    Output out(eval_out);
    harness::write_report(report, out.stream());
    if (!series_out.empty()) {
      for (auto axis : {harness::SweepAxis::kAlpha, harness::SweepAxis::kRank}) {
        Output series(series_out + "." + harness::to_string(axis) + ".txt");
        harness::write_series(report, axis, series.stream());
      }
    }
    return 0;
  }

  if (*sweep) {
    const harness::SweepAxis axis = harness::parse_axis(axis_name);
    if (values.empty()) {
      values = axis == harness::SweepAxis::kAlpha ? std::vector<double>{0, 0.25, 0.5, 1, 2, 4}
                                                  : std::vector<double>{1, 2, 5, 10, 20, 50};
    }
    Output out(sweep_out);
    if (sweep_dataset.empty()) {
      const auto suite = harness::make_planted_suite(planted);
      for (const auto& [x, y] : harness::planted_sweep(suite, DecodeConfig{}, axis, values)) {
        out.stream() << x << ' ' << y << '\n';
      }
      return 0;
    }
    harness::EvalGrid grid = sweep_grid.empty() ? harness::EvalGrid{} : harness::EvalGrid::load(sweep_grid);
    grid.greedy = false;
    grid.ablations.clear();
    grid.alphas.clear();
    grid.ranks.clear();
    for (double v : values) {
      if (axis == harness::SweepAxis::kAlpha) {
        if (!(v >= 0.0)) throw DomainError("alpha values must be non-negative");
        grid.alphas.push_back(v);
      } else {
        if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::uint32_t>(v))) {
          throw DomainError("rank values must be positive integers");
        }
        grid.ranks.push_back(static_cast<std::uint32_t>(v));
      }
    }
    const harness::EvalReport report = harness::run_eval(harness::Dataset::load(sweep_dataset), grid);
    harness::write_series(report, axis, out.stream());
    return 0;
  }

  if (*validate) {
    const TraceFile trace = read_trace_file(validate_path);
    const ValidationReport report = validate_trace(trace);
    for (const Violation& v : report.violations) {
      std::cout << to_string(v.kind) << ": " << v.message << '\n';
    }
    std::cout << trace.steps.size() << " steps, " << report.violations.size() << " violations\n";
    return report.ok() ? 0 : 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const have::InvariantViolation& e) {
    std::cerr << "internal invariant violated: " << e.what() << '\n';
    return 2;
  } catch (const have::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
