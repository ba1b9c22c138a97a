#include "have/harness/eval.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "have/error.hpp"
#include "have/harness/generate.hpp"
#include "have/harness/metrics.hpp"
#include "have/kv_config.hpp"
#include "have/trace_io.hpp"
#include "json.hpp"

namespace have::harness {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

QAInstance parse_instance(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw InputError("record is not an object");
  QAInstance inst;
  inst.id = j.at("id").get<std::string>();
  const json& answers = j.at("answers");
  if (answers.is_string()) {
    inst.answers.push_back(answers.get<std::string>());
  } else {
    inst.answers = answers.get<std::vector<std::string>>();
  }
  if (inst.answers.empty()) throw InputError("'answers' is empty");
  if (j.contains("context")) inst.context = j.at("context").get<std::string>();
  if (j.contains("question")) inst.question = j.at("question").get<std::string>();
  if (j.contains("prompt_ids")) inst.prompt_ids = j.at("prompt_ids").get<std::vector<TokenId>>();
  if (j.contains("trace")) inst.trace = resolve(base, j.at("trace").get<std::string>());
  const bool live = !inst.prompt_ids.empty() || !inst.context.empty() || !inst.question.empty();
  if (inst.trace.has_value() == live) {
    throw InputError("need either a trace or a live prompt (prompt_ids or context/question text)");
  }
  if (j.contains("max_len")) {
    inst.max_len = j.at("max_len").get<std::uint32_t>();
    if (*inst.max_len == 0) throw InputError("'max_len' must be at least 1");
  }
  return inst;
}

Policy make_policy(const EvalGrid& grid, bool no_hag, bool no_vc) {
  DecodeConfig cfg;
  cfg.fusion.alpha = grid.alpha;
  cfg.fusion.top_rank = grid.top_rank;
  cfg.calibration.estimator = grid.estimator;
  cfg.ablations = {no_hag, no_vc};
  return Policy::have(cfg);
}

std::set<std::string> gold_words(const QAInstance& inst) {
  std::set<std::string> words;
  for (const auto& a : inst.answers) {
    for (auto& w : answer_tokens(a)) words.insert(std::move(w));
  }
  return words;
}

double gold_mass(const FusedDistribution& step, const StepSnapshot& snapshot,
                 const std::set<std::string>& words) {
  std::map<TokenId, std::string> surfaces;
  for (const ContextToken& tok : snapshot.context) surfaces.try_emplace(tok.token_id, tok.surface);
  double mass = 0.0;
  for (const auto& [id, m] : step.evidence.vocab_scores) {
    const auto it = surfaces.find(id);
    if (it == surfaces.end()) continue;
    const std::string norm = normalize_answer(it->second);
    if (!norm.empty() && words.contains(norm)) mass += m;
  }
  return mass;
}

std::vector<LengthBin> make_bins(const std::vector<std::uint32_t>& edges) {
  std::vector<LengthBin> bins;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    LengthBin b;
    b.lo = edges[i];
    if (i + 1 < edges.size()) b.hi = edges[i + 1];
    bins.push_back(b);
  }
  return bins;
}

double percent(double sum, std::size_t n) { return n == 0 ? 0.0 : 100.0 * sum / static_cast<double>(n); }

ConfigResult run_config(const Dataset& data, const EvalGrid& grid, const EvalConfig& cfg,
                        const std::optional<toy::Model>& model, const std::vector<TraceFile>& traces,
                        const std::vector<std::vector<TokenId>>& prompts) {
  ConfigResult out;
  out.name = cfg.name;
  out.axis = cfg.axis;
  out.axis_value = cfg.axis_value;
  out.bins = make_bins(grid.length_bins);
  std::vector<double> bin_em(out.bins.size(), 0.0);
  std::vector<double> bin_f1(out.bins.size(), 0.0);

  double em_sum = 0.0;
  double f1_sum = 0.0;
  std::size_t fallbacks = 0;
  double h_sum = 0.0;
  double gold_sum = 0.0;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const QAInstance& inst = data.instances[i];
    const StopRule stop{inst.max_len.value_or(grid.max_len), grid.stop_token};
    const Generation gen = inst.trace ? generate(traces[i], cfg.policy, stop)
                                      : generate(*model, prompts[i], cfg.policy, stop);

    InstanceResult r;
    r.id = inst.id;
    r.tokens = gen.tokens;
    r.prediction = render_generation(gen, inst.trace ? traces[i].header : model->trace_header());
    r.em = exact_match(r.prediction, inst.answers);
    r.f1 = token_f1(r.prediction, inst.answers);
    r.context_length = gen.snapshots.front().context_size();
    em_sum += r.em;
    f1_sum += r.f1;

    const auto words = gold_words(inst);
    for (std::size_t t = 0; t < gen.steps.size(); ++t) {
      if (gen.steps[t].fallback_used()) ++fallbacks;
      h_sum += gen.steps[t].h_norm;
      gold_sum += gold_mass(gen.steps[t], gen.snapshots[t], words);
    }
    out.steps += gen.steps.size();

    for (std::size_t b = 0; b < out.bins.size(); ++b) {
      const LengthBin& bin = out.bins[b];
      if (r.context_length >= bin.lo && (!bin.hi || r.context_length < *bin.hi)) {
        ++out.bins[b].count;
        bin_em[b] += r.em;
        bin_f1[b] += r.f1;
      }
    }
    out.instances.push_back(std::move(r));
  }

  const std::size_t n = data.instances.size();
  out.em = percent(em_sum, n);
  out.f1 = percent(f1_sum, n);
  if (out.steps > 0) {
    const auto steps = static_cast<double>(out.steps);
    out.fallback_rate = static_cast<double>(fallbacks) / steps;
    out.mean_h_norm = h_sum / steps;
    out.gold_evidence_mass = gold_sum / steps;
  }
  for (std::size_t b = 0; b < out.bins.size(); ++b) {
    out.bins[b].em = percent(bin_em[b], out.bins[b].count);
    out.bins[b].f1 = percent(bin_f1[b], out.bins[b].count);
  }
  return out;
}

}  // namespace

Dataset Dataset::parse(std::istream& in, const std::filesystem::path& base_dir) {
  Dataset data;
  std::set<std::string> ids;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      QAInstance inst = parse_instance(json::parse(line), base_dir);
      if (!ids.insert(inst.id).second) throw InputError("duplicate id '" + inst.id + "'");
      data.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      data.errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      data.errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (data.instances.empty()) {
    std::string msg = "dataset has no valid instances";
    if (!data.errors.empty()) msg += " (" + data.errors.front() + ")";
    throw InputError(msg);
  }
  return data;
}

Dataset Dataset::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse(in, path.parent_path());
}

const char* to_string(SweepAxis axis) noexcept {
  switch (axis) {
    case SweepAxis::kNone: return "none";
    case SweepAxis::kAlpha: return "alpha";
    case SweepAxis::kRank: return "rank";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& text) {
  if (text == "alpha") return SweepAxis::kAlpha;
  if (text == "rank") return SweepAxis::kRank;
  throw InputError("unknown sweep axis '" + text + "' (expected alpha or rank)");
}

EvalGrid EvalGrid::parse(std::istream& in, const std::filesystem::path& base_dir) {
  const KeyValueFile kv = KeyValueFile::parse(in, "grid");
  static const std::set<std::string> known{"alpha",        "top_rank",  "greedy",     "ablations",
                                           "alphas",       "ranks",     "max_len",    "stop_token",
                                           "model_config", "seed",      "estimator",  "length_bins"};
  for (const auto& key : kv.keys()) {
    if (!known.contains(key)) throw InputError("grid: unknown key '" + key + "'");
  }

  EvalGrid g;
  g.alpha = kv.get_double("alpha", g.alpha);
  if (!(g.alpha >= 0.0)) throw DomainError("grid: alpha must be non-negative");
  g.top_rank = static_cast<std::uint32_t>(kv.get_uint("top_rank", g.top_rank));
  if (g.top_rank == 0) throw DomainError("grid: top_rank must be at least 1");
  g.greedy = kv.get_bool("greedy", g.greedy);
  if (kv.has("ablations")) g.ablations = kv.get_words("ablations");
  for (const auto& a : g.ablations) {
    if (a != "full" && a != "no_hag" && a != "no_vc" && a != "no_both") {
      throw InputError("grid: unknown ablation '" + a + "'");
    }
  }
  g.alphas = kv.get_doubles("alphas");
  for (double a : g.alphas) {
    if (!(a >= 0.0)) throw DomainError("grid: alphas must be non-negative");
  }
  for (auto r : kv.get_uints("ranks")) {
    if (r == 0) throw DomainError("grid: ranks must be at least 1");
    g.ranks.push_back(static_cast<std::uint32_t>(r));
  }
  g.max_len = static_cast<std::uint32_t>(kv.get_uint("max_len", g.max_len));
  if (g.max_len == 0) throw DomainError("grid: max_len must be at least 1");
  if (kv.has("stop_token")) g.stop_token = static_cast<TokenId>(kv.get_uint("stop_token", 0));
  if (kv.has("model_config")) g.model = toy::ToyConfig::load(resolve(base_dir, kv.get_string("model_config", "")));
  g.model.seed = kv.get_uint("seed", g.model.seed);
  if (kv.has("estimator")) g.estimator = EstimatorSpec::load(resolve(base_dir, kv.get_string("estimator", "")));
  if (kv.has("length_bins")) {
    g.length_bins.clear();
    for (auto e : kv.get_uints("length_bins")) g.length_bins.push_back(static_cast<std::uint32_t>(e));
    if (!std::is_sorted(g.length_bins.begin(), g.length_bins.end()) ||
        std::adjacent_find(g.length_bins.begin(), g.length_bins.end()) != g.length_bins.end()) {
      throw InputError("grid: length_bins must be strictly increasing");
    }
  }
  return g;
}

EvalGrid EvalGrid::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse(in, path.parent_path());
}

std::vector<EvalConfig> expand_grid(const EvalGrid& grid) {
  std::vector<EvalConfig> rows;
  if (grid.greedy) rows.push_back({"greedy", Policy::greedy()});
  for (const auto& a : grid.ablations) {
    const bool no_hag = a == "no_hag" || a == "no_both";
    const bool no_vc = a == "no_vc" || a == "no_both";
    rows.push_back({a == "full" ? "have" : "have_" + a, make_policy(grid, no_hag, no_vc)});
  }
  for (double alpha : grid.alphas) {
    Policy p = make_policy(grid, false, false);
    p.config.fusion.alpha = alpha;
    std::ostringstream name;
    name << "have_alpha_" << alpha;
    rows.push_back({name.str(), p, SweepAxis::kAlpha, alpha});
  }
  for (std::uint32_t r : grid.ranks) {
    Policy p = make_policy(grid, false, false);
    p.config.fusion.top_rank = r;
    rows.push_back({"have_rank_" + std::to_string(r), p, SweepAxis::kRank, static_cast<double>(r)});
  }
  if (rows.empty()) throw InputError("grid expands to no configurations");
  return rows;
}

EvalReport run_eval(const Dataset& data, const EvalGrid& grid) {
  const auto rows = expand_grid(grid);

  std::optional<toy::Model> model;
  std::vector<TraceFile> traces(data.instances.size());
  std::vector<std::vector<TokenId>> prompts(data.instances.size());
  EvalReport report;
  report.dataset_errors = data.errors;
  const SinkPolicy replay_policy;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const QAInstance& inst = data.instances[i];
    if (inst.trace) {
      traces[i] = read_trace_file(*inst.trace);
      if (auto w = sink_policy_mismatch(traces[i].header, replay_policy)) {
        report.warnings.push_back(inst.id + ": " + *w);
      }
      continue;
    }
    if (!model) model.emplace(grid.model);
    prompts[i] = inst.prompt_ids;
    if (prompts[i].empty()) {
      prompts[i].push_back(toy::ToyVocab::kBos);
      for (const std::string* text : {&inst.context, &inst.question}) {
        const auto ids = model->vocab().encode(*text);
        prompts[i].insert(prompts[i].end(), ids.begin(), ids.end());
      }
    }
  }

  for (const EvalConfig& row : rows) {
    report.configs.push_back(run_config(data, grid, row, model, traces, prompts));
  }
  return report;
}

void write_report(const EvalReport& report, std::ostream& out) {
  for (const std::string& e : report.dataset_errors) {
    out << json{{"type", "dataset_error"}, {"message", e}}.dump() << '\n';
  }
  for (const std::string& w : report.warnings) {
    out << json{{"type", "warning"}, {"message", w}}.dump() << '\n';
  }
  for (const ConfigResult& c : report.configs) {
    json bins = json::array();
    for (const LengthBin& b : c.bins) {
      bins.push_back({{"lo", b.lo},
                      {"hi", b.hi ? json(*b.hi) : json(nullptr)},
                      {"count", b.count},
                      {"em", b.em},
                      {"f1", b.f1}});
    }
    json row{{"type", "config"},
             {"config", c.name},
             {"axis", to_string(c.axis)},
             {"axis_value", c.axis_value},
             {"instances", c.instances.size()},
             {"em", c.em},
             {"f1", c.f1},
             {"steps", c.steps},
             {"fallback_rate", c.fallback_rate},
             {"mean_h_norm", c.mean_h_norm},
             {"gold_evidence_mass", c.gold_evidence_mass},
             {"length_bins", bins}};
    out << row.dump() << '\n';
    for (const InstanceResult& r : c.instances) {
      json rec{{"type", "instance"},       {"config", c.name}, {"id", r.id},
               {"prediction", r.prediction}, {"tokens", r.tokens}, {"em", r.em},
               {"f1", r.f1},               {"context_length", r.context_length}};
      out << rec.dump() << '\n';
    }
  }
}

void write_series(const EvalReport& report, SweepAxis axis, std::ostream& out) {
  for (const ConfigResult& c : report.configs) {
    if (c.axis == axis) out << c.axis_value << ' ' << c.em << '\n';
  }
}

std::vector<std::pair<double, double>> planted_sweep(std::span<const PlantedInstance> suite,
                                                     const DecodeConfig& base, SweepAxis axis,
                                                     std::span<const double> values) {
  if (axis == SweepAxis::kNone) throw InputError("planted_sweep: no axis");
  std::vector<std::pair<double, double>> series;
  for (double v : values) {
    DecodeConfig cfg = base;
    if (axis == SweepAxis::kAlpha) {
      if (!(v >= 0.0)) throw DomainError("alpha must be non-negative");
      cfg.fusion.alpha = v;
    } else {
      if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::uint32_t>(v))) {
        throw DomainError("rank values must be positive integers");
      }
      cfg.fusion.top_rank = static_cast<std::uint32_t>(v);
    }
    series.emplace_back(v, gold_selection_rate(suite, Policy::have(cfg)));
  }
  return series;
}

}  // namespace have::harness
