#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "have/error.hpp"
#include "have/harness/eval.hpp"
#include "have/harness/generate.hpp"
#include "have/harness/metrics.hpp"
#include "have/harness/planted.hpp"
#include "have/trace_io.hpp"
#include "json.hpp"
#include "support/fixtures.hpp"

using namespace have;
using namespace have::harness;
using have::testing::token;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("have_harness_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Single-step trace whose logits put all mass on " Paris".
TraceFile sure_trace() {
  std::vector<float> logits(8, 0.0F);
  logits[5] = 1000.0F;
  StepSnapshot s = have::testing::single_layer(
      {token(0, 0, "<s>", true), token(1, 5, " Paris"), token(2, 6, " London")}, {0.1F, 0.2F, 0.7F},
      {1.0F, 1.0F, 1.0F}, logits, 2);
  TraceFile t;
  t.header = header_for(s, "test");
  t.steps = {s};
  return t;
}

EvalGrid full_grid() {
  EvalGrid g;
  g.alphas = {0, 0.25, 0.5, 1, 2, 4};
  g.ranks = {1, 2, 5, 10, 20, 50};
  return g;
}

std::vector<StepSnapshot> repeated(const StepSnapshot& s, std::size_t n) {
  std::vector<StepSnapshot> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(s);
    out.back().step = i;
  }
  return out;
}

}  // namespace

TEST_CASE("exact match examples") {
  const std::vector<std::string> paris_dot{"paris."};
  const std::vector<std::string> paris{"Paris"};
  CHECK(exact_match("Paris", paris_dot) == 1);
  CHECK(exact_match("the Paris", paris) == 1);
  CHECK(exact_match("London", paris) == 0);
  CHECK(exact_match("  An  apple! ", std::vector<std::string>{"apple"}) == 1);
  CHECK(normalize_answer("The  Quick, Brown fox.") == "quick brown fox");
}

TEST_CASE("token f1 examples") {
  const std::vector<std::string> cat{"cat"};
  CHECK(token_f1("the cat", cat) == 1.0);
  CHECK(token_f1("black cat", cat) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(token_f1("dog", cat) == 0.0);
  CHECK(token_f1("", std::vector<std::string>{""}) == 1.0);
  CHECK(token_f1("", cat) == 0.0);
  CHECK(token_f1("the", cat) == 0.0);
  CHECK(token_f1("cat cat", std::vector<std::string>{"cat", "cat cat dog"}) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("alpha 0 generation matches greedy") {
  toy::ToyConfig c;
  c.seed = 5;
  c.window = 6;
  const toy::Model model(c);
  const std::vector<TokenId> prompt{0, 8, 9, 10};
  DecodeConfig zero;
  zero.fusion.alpha = 0.0;
  const auto g = generate(model, prompt, Policy::greedy(), {10, std::nullopt});
  const auto h = generate(model, prompt, Policy::have(zero), {10, std::nullopt});
  CHECK(g.tokens == h.tokens);
  CHECK(g.tokens.size() == 10);
}

TEST_CASE("replay matches the recorded live run") {
  toy::ToyConfig c;
  c.seed = 3;
  const toy::Model model(c);
  const std::vector<TokenId> prompt{0, 4, 5};
  TraceFile trace;
  const auto live = generate(model, prompt, Policy::have(), {8, std::nullopt}, &trace);
  const auto bytes = encode_trace(trace);
  const auto replay = generate(decode_trace(bytes), Policy::have(), {8, std::nullopt});
  CHECK(replay.tokens == live.tokens);
  for (std::size_t t = 0; t < live.steps.size(); ++t) CHECK(replay.steps[t].s == live.steps[t].s);
}

TEST_CASE("max_len 1 emits one step") {
  const toy::Model model(toy::ToyConfig{});
  const std::vector<TokenId> prompt{0};
  const auto g = generate(model, prompt, Policy::have(), {1, std::nullopt});
  CHECK(g.tokens.size() == 1);
  CHECK(g.steps.size() == 1);
  CHECK_FALSE(g.stopped);
}

TEST_CASE("generation preconditions") {
  const toy::Model model(toy::ToyConfig{});
  const std::vector<TokenId> prompt{0};
  CHECK_THROWS_AS(generate(model, std::vector<TokenId>{}, Policy::greedy(), {}), InputError);
  CHECK_THROWS_AS(generate(model, prompt, Policy::greedy(), {0, std::nullopt}), InputError);
  const TraceFile t = sure_trace();
  CHECK_THROWS_AS(generate(t, Policy::greedy(), {2, std::nullopt}), TraceExhaustedError);
  CHECK_THROWS_AS(generate(t, Policy::greedy(), {0, std::nullopt}), InputError);
}

TEST_CASE("stop token ends generation early") {
  TraceFile t = sure_trace();
  t.steps = repeated(t.steps[0], 4);
  const auto g = generate(t, Policy::greedy(), {10, TokenId{5}});
  CHECK(g.tokens == std::vector<TokenId>{5});
  CHECK(g.stopped);
}

TEST_CASE("rendering") {
  const TraceFile t = sure_trace();
  const std::vector<TokenId> ids{0, 5, 6, 7};
  CHECK(render_tokens(ids, t.steps) == "Paris London[7]");
  StepSnapshot glyphs = t.steps[0];
  glyphs.context[1].surface = "\xE2\x96\x81Paris";
  CHECK(render_tokens(std::vector<TokenId>{5}, std::vector<StepSnapshot>{glyphs}) == "Paris");
}

TEST_CASE("greedy-correct dataset scores 100 everywhere") {
  const auto dir = scratch("ceiling");
  write_trace_file(sure_trace(), dir / "q.trace");
  std::istringstream in(R"({"id": "q1", "answers": ["Paris"], "trace": "q.trace", "max_len": 1})");
  const Dataset data = Dataset::parse(in, dir);
  const EvalReport report = run_eval(data, full_grid());
  CHECK(report.configs.size() == 1 + 4 + 6 + 6);
  for (const auto& c : report.configs) {
    CHECK(c.em == 100.0);
    CHECK(c.f1 == 100.0);
    CHECK(c.instances.at(0).prediction == "Paris");
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("planted dataset: HAVE at least matches greedy") {
  const auto dir = scratch("planted");
  PlantedParams params;
  params.instances = 40;
  const auto suite = make_planted_suite(params);
  write_planted_dataset(suite, params, dir);
  const Dataset data = Dataset::load(dir / "dataset.jsonl");
  CHECK(data.instances.size() == 40);
  const EvalReport report = run_eval(data, EvalGrid{});
  REQUIRE(report.configs.size() == 5);
  CHECK(report.configs[0].name == "greedy");
  CHECK(report.configs[1].name == "have");
  CHECK(report.configs[1].em >= report.configs[0].em);
  CHECK(report.configs[1].em >= 90.0);
  CHECK(report.configs[1].gold_evidence_mass > report.configs[0].gold_evidence_mass);
  for (const auto& c : report.configs) {
    CHECK(c.em >= 0.0);
    CHECK(c.em <= c.f1 + 1e-12);
    CHECK(c.f1 <= 100.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty grid is an error") {
  EvalGrid g;
  g.greedy = false;
  g.ablations.clear();
  CHECK_THROWS_AS(expand_grid(g), InputError);
}

TEST_CASE("grid expansion and naming") {
  const auto rows = expand_grid(full_grid());
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.name);
  CHECK(names[0] == "greedy");
  CHECK(names[1] == "have");
  CHECK(names[2] == "have_no_hag");
  CHECK(names[3] == "have_no_vc");
  CHECK(names[4] == "have_no_both");
  CHECK(names[5] == "have_alpha_0");
  CHECK(names[6] == "have_alpha_0.25");
  CHECK(names.back() == "have_rank_50");
  CHECK(rows[4].policy.config.ablations == Ablations{true, true});
  CHECK(rows[5].axis == SweepAxis::kAlpha);
  CHECK(rows.back().policy.config.fusion.top_rank == 50);
}

TEST_CASE("grid parsing") {
  std::istringstream in("alpha = 2\ntop_rank = 5\ngreedy = false\nablations = full no_vc\n"
                        "alphas = 0, 1\nranks = 3 4\nmax_len = 2\nstop_token = 1\nseed = 9\nlength_bins = 0 10\n");
  const EvalGrid g = EvalGrid::parse(in);
  CHECK(g.alpha == 2.0);
  CHECK(g.top_rank == 5);
  CHECK_FALSE(g.greedy);
  CHECK(g.ablations == std::vector<std::string>{"full", "no_vc"});
  CHECK(g.alphas == std::vector<double>{0, 1});
  CHECK(g.ranks == std::vector<std::uint32_t>{3, 4});
  CHECK(g.max_len == 2);
  CHECK(g.stop_token == std::optional<TokenId>(1));
  CHECK(g.model.seed == 9);
  CHECK(g.length_bins == std::vector<std::uint32_t>{0, 10});

  std::istringstream unknown("colour = red\n");
  CHECK_THROWS_AS(EvalGrid::parse(unknown), InputError);
  std::istringstream bad_ablation("ablations = no_everything\n");
  CHECK_THROWS_AS(EvalGrid::parse(bad_ablation), InputError);
  std::istringstream bad_rank("ranks = 0\n");
  CHECK_THROWS_AS(EvalGrid::parse(bad_rank), DomainError);
  std::istringstream bad_bins("length_bins = 5 5\n");
  CHECK_THROWS_AS(EvalGrid::parse(bad_bins), InputError);
  CHECK(parse_axis("alpha") == SweepAxis::kAlpha);
  CHECK(parse_axis("rank") == SweepAxis::kRank);
  CHECK_THROWS_AS(parse_axis("beta"), InputError);
}

TEST_CASE("malformed dataset lines are reported and skipped") {
  std::istringstream in("{\"id\": \"a\", \"answers\": [\"w9\"], \"prompt_ids\": [0, 9]}\n"
                        "not json\n"
                        "\n"
                        "{\"id\": \"b\", \"answers\": []}\n"
                        "{\"id\": \"c\", \"answers\": \"w4\", \"context\": \"w4 w5\", \"question\": \"w6\"}\n"
                        "{\"id\": \"a\", \"answers\": [\"x\"], \"prompt_ids\": [0]}\n"
                        "{\"id\": \"d\", \"answers\": [\"x\"]}\n");
  const Dataset data = Dataset::parse(in);
  REQUIRE(data.instances.size() == 2);
  CHECK(data.instances[0].id == "a");
  CHECK(data.instances[1].answers == std::vector<std::string>{"w4"});
  REQUIRE(data.errors.size() == 4);
  CHECK(data.errors[0].rfind("line 2:", 0) == 0);
  CHECK(data.errors[1].rfind("line 4:", 0) == 0);
  CHECK(data.errors[2].rfind("line 6:", 0) == 0);
  CHECK(data.errors[3].rfind("line 7:", 0) == 0);

  const EvalReport report = run_eval(data, EvalGrid{});
  CHECK(report.dataset_errors.size() == 4);
  std::ostringstream out;
  write_report(report, out);
  std::istringstream lines(out.str());
  std::string first;
  std::getline(lines, first);
  CHECK(nlohmann::json::parse(first).at("type") == "dataset_error");

  std::istringstream nothing("garbage\n");
  CHECK_THROWS_AS(Dataset::parse(nothing), InputError);
}

TEST_CASE("reports are deterministic and carry length bins") {
  std::istringstream in("{\"id\": \"a\", \"answers\": [\"w9\"], \"prompt_ids\": [0, 9, 9, 12]}\n"
                        "{\"id\": \"b\", \"answers\": [\"w4\"], \"context\": \"w4 w5 w4\", \"question\": \"w6\"}\n");
  const Dataset data = Dataset::parse(in);
  EvalGrid grid = full_grid();
  grid.length_bins = {0, 3, 6};
  std::ostringstream a, b, series;
  write_report(run_eval(data, grid), a);
  write_report(run_eval(data, grid), b);
  CHECK(a.str() == b.str());

  const EvalReport report = run_eval(data, grid);
  for (const auto& c : report.configs) {
    REQUIRE(c.bins.size() == 3);
    CHECK(c.bins[0].count + c.bins[1].count + c.bins[2].count == 2);
    CHECK_FALSE(c.bins[2].hi.has_value());
    CHECK(c.steps == 16);
  }
  write_series(report, SweepAxis::kAlpha, series);
  std::istringstream rows(series.str());
  double x = 0.0, em = 0.0;
  std::size_t count = 0;
  while (rows >> x >> em) ++count;
  CHECK(count == 6);

  std::size_t configs = 0;
  std::istringstream lines(a.str());
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "config") ++configs;
  }
  CHECK(configs == report.configs.size());
}

TEST_CASE("sink policy mismatch is a warning") {
  const auto dir = scratch("policy");
  TraceFile t = sure_trace();
  t.header.sink_policy_id = 7;
  write_trace_file(t, dir / "q.trace");
  std::istringstream in(R"({"id": "q1", "answers": ["Paris"], "trace": "q.trace", "max_len": 1})");
  const EvalReport report = run_eval(Dataset::parse(in, dir), EvalGrid{});
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].find("q1") == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("planted suite construction") {
  PlantedParams p;
  p.instances = 30;
  const auto a = make_planted_suite(p);
  const auto b = make_planted_suite(p);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bitwise_equal(a[i].snapshot, b[i].snapshot));
    CHECK(validate_snapshot(a[i].snapshot, planted_header(p)).ok());
    CHECK(a[i].candidates.size() == 10);
  }
  PlantedParams bad = p;
  bad.num_kv_heads = 3;
  CHECK_THROWS_AS(make_planted_suite(bad), InputError);
  CHECK_THROWS_AS(gold_selection_rate({}, Policy::greedy()), InputError);
  const std::vector<double> ranks{0.5};
  CHECK_THROWS_AS(planted_sweep(a, {}, SweepAxis::kRank, ranks), DomainError);
}
