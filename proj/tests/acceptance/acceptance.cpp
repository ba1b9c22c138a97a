// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "have/fusion.hpp"
#include "have/harness/eval.hpp"
#include "have/harness/generate.hpp"
#include "have/harness/planted.hpp"
#include "have/toy_transformer.hpp"
#include "have/trace_io.hpp"
#include "have/value_calibration.hpp"
#include "support/generators.hpp"
#include "support/reference.hpp"

using namespace have;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

Outcome invariant_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  have::testing::Rng rng(2024);
  constexpr int kSnapshots = 1000;
  for (int i = 0; i < kSnapshots && o.pass; ++i) {
    const StepSnapshot s = have::testing::random_snapshot(rng);
    DecodeConfig cfg;
    cfg.fusion.alpha = rng.uniform(0.0, 4.0);
    cfg.fusion.top_rank = rng.between(1, 70);
    const auto d = decode_step(s, cfg);
    const std::string at = " (snapshot " + std::to_string(i) + ")";

    for (std::size_t v = 0; v < d.p.size(); ++v) {
      if (!std::binary_search(d.support.begin(), d.support.end(), static_cast<TokenId>(v))) {
        o.require(std::bit_cast<std::uint64_t>(d.s[v]) == std::bit_cast<std::uint64_t>(d.p[v]),
                  "S differs from P outside R_t" + at);
      }
    }
    double w_total = 0.0;
    for (double w : d.head_weights.weights.values) {
      o.require(w > 0.0, "non-positive head weight" + at);
      w_total += w;
    }
    o.require(std::abs(w_total - 1.0) <= 1e-9, "head weights do not sum to 1" + at);

    const auto mask = sink_mask(s.context, cfg.calibration.sink_policy);
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (!mask[j]) o.require(d.evidence.ctx_scores[j] == 0.0, "evidence on a sink position" + at);
    }
    double mass = 0.0;
    for (const auto& [id, m] : d.evidence.vocab_scores) mass += m;
    o.require(d.evidence.empty() || std::abs(mass - 1.0) <= 1e-6, "U_t mass is not 1" + at);
    o.require(d.h_norm >= 0.0 && d.h_norm <= 1.0, "H_norm outside [0, 1]" + at);

    StepSnapshot flat = s;
    std::fill(flat.logits.begin(), flat.logits.end(), 0.5F);
    o.require(std::abs(decode_step(flat, cfg).h_norm - 1.0) <= 1e-12, "uniform P does not give H_norm 1" + at);
    StepSnapshot hot = flat;
    hot.logits[0] = 2000.0F;
    const auto h = decode_step(hot, cfg);
    o.require(h.h_norm == 0.0 && h.s == h.p, "one-hot P is not left unchanged" + at);

    DecodeConfig zero = cfg;
    zero.fusion.alpha = 0.0;
    const auto z = decode_step(s, zero);
    const auto g = greedy_step(s);
    o.require(z.chosen == g.chosen && z.s == g.p, "alpha = 0 differs from greedy" + at);
  }
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "took " + fmt(secs) + " s");
  if (o.pass) o.detail = std::to_string(kSnapshots) + " snapshots in " + fmt(secs, 2) + " s";
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  have::testing::Rng rng(4048);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const StepSnapshot s = have::testing::random_snapshot(rng);
    have::testing::ReferenceConfig rc;
    rc.alpha = rng.uniform(0.0, 4.0);
    rc.top_rank = rng.between(1, 70);
    DecodeConfig cfg;
    cfg.fusion.alpha = rc.alpha;
    cfg.fusion.top_rank = rc.top_rank;
    const auto ref = have::testing::reference_decode(s, rc);
    const auto got = decode_step(s, cfg);
    for (std::size_t v = 0; v < ref.s.size(); ++v) worst = std::max(worst, std::abs(got.s[v] - ref.s[v]));
    for (std::size_t v = 0; v < ref.s.size(); ++v) {
      const auto id = static_cast<TokenId>(v);
      const auto a = got.evidence.vocab_scores.find(id);
      const auto b = ref.u.find(id);
      const double ua = a == got.evidence.vocab_scores.end() ? 0.0 : a->second;
      const double ub = b == ref.u.end() ? 0.0 : b->second;
      worst = std::max(worst, std::abs(ua - ub));
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst <= 1e-9, "max abs difference " + std::to_string(worst));
  o.require(secs < 60.0, "took " + fmt(secs) + " s");
  if (o.pass) {
    std::ostringstream os;
    os << "1000 snapshots, max |diff| " << worst << ", " << fmt(secs, 2) << " s";
    o.detail = os.str();
  }
  return o;
}

// Greedy's expected rate is 1 / |R_t| = 0.1. The binomial standard deviation
// over 200 instances is about 0.021; the pinned tolerance is 0.05.
constexpr double kGreedyTolerance = 0.05;

Outcome planted_behavior(const std::vector<harness::PlantedInstance>& suite) {
  Outcome o;
  const DecodeConfig cfg;
  double min_share = 1.0, min_h = 1.0;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto& inst = suite[i];
    const auto d = decode_step(inst.snapshot, cfg);
    o.require(std::binary_search(d.support.begin(), d.support.end(), inst.gold),
              "gold outside R_t in instance " + std::to_string(i));
    min_h = std::min(min_h, d.h_norm);
    min_share = std::min(min_share, harness::gold_evidence_share(inst, cfg));
  }
  o.require(min_h >= 0.9, "min H_norm " + fmt(min_h));
  o.require(min_share >= 0.6, "min gold evidence share " + fmt(min_share));

  const double have_rate = harness::gold_selection_rate(suite, Policy::have(cfg));
  const double greedy_rate = harness::gold_selection_rate(suite, Policy::greedy());
  const double expected = 1.0 / static_cast<double>(cfg.fusion.top_rank);
  o.require(have_rate >= 0.95, "HAVE rate " + fmt(have_rate));
  o.require(std::abs(greedy_rate - expected) <= kGreedyTolerance, "greedy rate " + fmt(greedy_rate));

  harness::PlantedParams hot;
  hot.one_hot = true;
  const auto hot_suite = harness::make_planted_suite(hot);
  std::size_t agree = 0;
  for (const auto& inst : hot_suite) {
    agree += decode_step(inst.snapshot, cfg).chosen == greedy_step(inst.snapshot).chosen ? 1 : 0;
  }
  o.require(agree == hot_suite.size(), "one-hot agreement " + std::to_string(agree) + "/" +
                                           std::to_string(hot_suite.size()));
  if (o.pass) {
    o.detail = std::to_string(suite.size()) + " instances; HAVE " + fmt(have_rate) + ", greedy " +
               fmt(greedy_rate) + " (expected " + fmt(expected) + " +/- " + fmt(kGreedyTolerance, 2) +
               "); min H_norm " + fmt(min_h) + ", min gold share " + fmt(min_share) + "; one-hot " +
               std::to_string(agree) + "/" + std::to_string(hot_suite.size());
  }
  return o;
}

Outcome ablation_ordering(const std::vector<harness::PlantedInstance>& suite) {
  Outcome o;
  auto rate = [&](bool no_hag, bool no_vc) {
    DecodeConfig cfg;
    cfg.ablations = {no_hag, no_vc};
    return harness::gold_selection_rate(suite, Policy::have(cfg));
  };
  const double full = rate(false, false);
  const double no_hag = rate(true, false);
  const double no_vc = rate(false, true);
  const double no_both = rate(true, true);
  o.require(full >= no_hag, "full < w/o HAG");
  o.require(no_hag >= no_both, "w/o HAG < w/o both");
  o.require(full >= no_vc, "full < w/o VC");
  o.detail = (o.pass ? "" : o.detail + "; ") + "full " + fmt(full) + ", w/o HAG " + fmt(no_hag) +
             ", w/o VC " + fmt(no_vc) + ", w/o both " + fmt(no_both);
  return o;
}

// Rates are fractions of 200, so one instance is 0.005.
constexpr double kSweepNoise = 0.02;

std::string series_text(const std::vector<std::pair<double, double>>& s) {
  std::string out;
  for (const auto& [x, y] : s) out += (out.empty() ? "" : " ") + fmt(x, 2) + ":" + fmt(y);
  return out;
}

Outcome sweep_shape(const std::vector<harness::PlantedInstance>& suite) {
  Outcome o;
  const std::vector<double> alphas{0, 0.25, 0.5, 1, 2, 4};
  const std::vector<double> ranks{1, 2, 5, 10, 20, 50};
  const auto a = harness::planted_sweep(suite, {}, harness::SweepAxis::kAlpha, alphas);
  const auto r = harness::planted_sweep(suite, {}, harness::SweepAxis::kRank, ranks);

  // alpha: non-decreasing within noise, then flat within noise from the
  // first point that reaches the maximum
  double best = 0.0;
  for (const auto& p : a) best = std::max(best, p.second);
  for (std::size_t i = 1; i < a.size(); ++i) {
    o.require(a[i].second + kSweepNoise >= a[i - 1].second, "alpha curve drops at " + fmt(a[i].first, 2));
  }
  std::size_t plateau = 0;
  while (a[plateau].second + kSweepNoise < best) ++plateau;
  for (std::size_t i = plateau; i < a.size(); ++i) {
    o.require(best - a[i].second <= kSweepNoise, "alpha curve not flat after its rise");
  }
  o.require(plateau > 0 && a.front().second + kSweepNoise < best, "alpha curve does not rise");

  // rank: rises to an interior peak, then degrades
  std::size_t peak = 0;
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (r[i].second > r[peak].second) peak = i;
  }
  o.require(peak > 0 && peak + 1 < r.size(), "rank curve has no interior peak");
  for (std::size_t i = 1; i <= peak; ++i) {
    o.require(r[i].second + kSweepNoise >= r[i - 1].second, "rank curve drops before its peak");
  }
  o.require(r.back().second + kSweepNoise < r[peak].second, "rank curve does not degrade past its peak");
  o.detail = (o.pass ? "" : o.detail + "; ") + "alpha [" + series_text(a) + "], rank [" + series_text(r) + "]";
  return o;
}

Outcome live_replay() {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t configs = 0, steps = 0;
  for (std::uint32_t group : {1U, 2U, 4U}) {
    for (bool windowed : {false, true}) {
      for (std::uint64_t seed : {11ULL, 12ULL}) {
        toy::ToyConfig c;
        c.num_heads = 4;
        c.num_kv_heads = 4 / group;
        if (windowed) c.window = 6;
        c.seed = seed;
        const toy::Model model(c);
        const std::vector<TokenId> prompt{0, 7, 8, 9, 7};
        for (const Policy& policy : {Policy::greedy(), Policy::have()}) {
          TraceFile trace;
          const auto live = harness::generate(model, prompt, policy, {16, std::nullopt}, &trace);
          const auto replay = harness::generate(decode_trace(encode_trace(trace)), policy, {16, std::nullopt});
          o.require(live.tokens == replay.tokens, "token ids differ");
          for (std::size_t t = 0; t < live.steps.size(); ++t) {
            const auto& x = live.steps[t].s;
            const auto& y = replay.steps[t].s;
            bool same = x.size() == y.size();
            for (std::size_t v = 0; same && v < x.size(); ++v) {
              same = std::bit_cast<std::uint64_t>(x[v]) == std::bit_cast<std::uint64_t>(y[v]);
            }
            o.require(same, "S_t differs at step " + std::to_string(t));
          }
          o.require(validate_trace(trace).ok(), "recorded trace fails validation");
          steps += live.steps.size();
        }
        ++configs;
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "took " + fmt(secs) + " s");
  if (o.pass) {
    o.detail = std::to_string(configs) + " configurations, " + std::to_string(steps) + " steps, " +
               fmt(secs, 2) + " s";
  }
  return o;
}

Outcome trace_round_trip() {
  Outcome o;
  have::testing::Rng rng(77);
  std::size_t total_steps = 0;
  for (int i = 0; i < 100; ++i) {
    const TraceFile t = have::testing::random_trace(rng);
    const auto bytes = encode_trace(t);
    const TraceFile back = decode_trace(bytes);
    o.require(bitwise_equal(back, t), "trace " + std::to_string(i) + " differs after decoding");
    o.require(encode_trace(back) == bytes, "trace " + std::to_string(i) + " re-encodes differently");
    total_steps += t.steps.size();
  }
  if (o.pass) o.detail = "100 traces, " + std::to_string(total_steps) + " steps";
  return o;
}

}  // namespace

int main() {
  const harness::PlantedParams params;
  const auto suite = harness::make_planted_suite(params);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"invariant suite", invariant_suite},
      {"oracle equivalence", oracle_equivalence},
      {"planted-evidence behavior", [&] { return planted_behavior(suite); }},
      {"ablation ordering", [&] { return ablation_ordering(suite); }},
      {"sweep shape", [&] { return sweep_shape(suite); }},
      {"live/replay equivalence", live_replay},
      {"trace round-trip", trace_round_trip},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
