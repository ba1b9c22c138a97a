#include "support/generators.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>

namespace have::testing {
namespace {

constexpr std::array<const char*, 7> kBlankSurfaces{" ", "\n", "\t", "", "\xE2\x96\x81", "\xC4\xA0", "  "};

std::vector<float> random_row(Rng& rng, std::size_t n) {
  std::vector<double> raw(n);
  const int style = static_cast<int>(rng.between(0, 3));
  for (std::size_t j = 0; j < n; ++j) {
    switch (style) {
      case 0: raw[j] = rng.uniform(); break;
      case 1: raw[j] = std::exp(3.0 * rng.normal()); break;
      case 2: raw[j] = rng.chance(0.5) ? 0.0 : rng.uniform(); break;
      default: raw[j] = 1.0; break;
    }
  }
  double total = 0.0;
  for (double v : raw) total += v;
  if (total == 0.0) {
    raw[rng.between(0, static_cast<std::uint32_t>(n - 1))] = 1.0;
    total = 1.0;
  }
  std::vector<float> row(n);
  for (std::size_t j = 0; j < n; ++j) row[j] = static_cast<float>(raw[j] / total);
  return row;
}

}  // namespace

StepSnapshot random_snapshot(Rng& rng, const SnapshotLimits& limits) {
  StepSnapshot s;
  s.num_layers = rng.between(1, limits.max_layers);
  s.num_heads = rng.between(1, limits.max_heads);
  std::vector<std::uint32_t> divisors;
  for (std::uint32_t d = 1; d <= s.num_heads; ++d) {
    if (s.num_heads % d == 0) divisors.push_back(d);
  }
  s.num_kv_heads = divisors[rng.between(0, static_cast<std::uint32_t>(divisors.size() - 1))];
  const std::uint32_t vocab = rng.between(limits.min_vocab, limits.max_vocab);
  const std::uint32_t n = rng.between(1, limits.max_context);
  s.step = rng.between(0, 1000);

  // A small pool forces repeated ids; the pool favours low ids so contexts
  // overlap the high-probability region of peaked logits sometimes.
  const std::uint32_t pool = rng.between(1, std::min<std::uint32_t>(vocab, n + 2));
  const double sink_rate = rng.chance(0.1) ? 1.0 : rng.uniform(0.0, 0.4);
  for (std::uint32_t j = 0; j < n; ++j) {
    ContextToken tok;
    tok.position = j;
    tok.token_id = rng.between(0, pool - 1);
    if (rng.chance(sink_rate)) {
      tok.surface = kBlankSurfaces[rng.between(0, kBlankSurfaces.size() - 1)];
      tok.is_sink = true;
    } else {
      tok.surface = " t" + std::to_string(tok.token_id);
      tok.is_sink = rng.chance(0.05);
    }
    s.context.push_back(std::move(tok));
  }

  for (std::size_t r = 0; r < s.head_count(); ++r) {
    const auto row = random_row(rng, n);
    s.attention.insert(s.attention.end(), row.begin(), row.end());
  }
  const std::size_t norm_count = std::size_t{s.num_layers} * s.num_kv_heads * n;
  for (std::size_t k = 0; k < norm_count; ++k) {
    s.value_norms.push_back(rng.chance(0.05) ? 0.0F : static_cast<float>(rng.uniform(0.0, 5.0)));
  }

  const int logit_style = static_cast<int>(rng.between(0, 4));
  s.logits.resize(vocab);
  for (float& x : s.logits) {
    switch (logit_style) {
      case 0: x = 0.0F; break;
      case 1: x = static_cast<float>(rng.normal() * 0.1); break;
      case 2: x = static_cast<float>(rng.normal() * 5.0); break;
      default: x = static_cast<float>(rng.normal()); break;
    }
  }
  if (logit_style == 3) s.logits[rng.between(0, vocab - 1)] = 200.0F;
  return s;
}

TraceFile random_trace(Rng& rng, std::uint32_t max_steps) {
  TraceFile t;
  t.header.vocab_size = rng.between(1, 40);
  t.header.num_layers = rng.between(1, 3);
  t.header.num_kv_heads = rng.between(1, 3);
  t.header.num_heads = t.header.num_kv_heads * rng.between(1, 3);
  t.header.sink_policy_id = static_cast<std::uint16_t>(rng.between(0, 3));
  for (std::uint32_t i = rng.between(0, 12); i > 0; --i) {
    t.header.tokenizer.push_back(static_cast<char>(rng.between(1, 255)));
  }

  const std::uint32_t steps = rng.between(0, max_steps);
  std::uint64_t step = rng.between(0, 5);
  for (std::uint32_t k = 0; k < steps; ++k) {
    StepSnapshot s;
    s.step = step;
    step += rng.between(1, 3);
    if (rng.chance(0.2)) s.step = rng.bits();
    s.num_layers = t.header.num_layers;
    s.num_heads = t.header.num_heads;
    s.num_kv_heads = t.header.num_kv_heads;
    const std::uint32_t n = rng.between(0, 9);
    for (std::uint32_t j = 0; j < n; ++j) {
      ContextToken tok;
      tok.position = j;
      tok.token_id = static_cast<TokenId>(rng.bits());
      for (std::uint32_t c = rng.between(0, 8); c > 0; --c) {
        tok.surface.push_back(static_cast<char>(rng.between(0, 255)));
      }
      tok.is_sink = rng.chance(0.3);
      s.context.push_back(std::move(tok));
    }
    auto fill = [&](std::vector<float>& v, std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) {
        v.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(rng.bits())));
      }
    };
    fill(s.attention, s.head_count() * n);
    fill(s.value_norms, std::size_t{s.num_layers} * s.num_kv_heads * n);
    fill(s.logits, t.header.vocab_size);
    t.steps.push_back(std::move(s));
  }
  return t;
}

}  // namespace have::testing
