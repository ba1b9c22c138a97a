#include "have/harness/planted.hpp"

#include <algorithm>
#include <fstream>
#include "json.hpp"
#include <numeric>
#include <random>
#include <string>

#include "have/error.hpp"
#include "have/trace_io.hpp"

namespace have::harness {
namespace {

constexpr TokenId kBos = 0;
constexpr TokenId kSpace = 2;
constexpr TokenId kFirstWord = 3;
constexpr std::uint32_t kContextSize = 24;
constexpr std::uint32_t kSpaces = 4;
constexpr std::uint32_t kDistractorCopies = 3;
constexpr std::uint32_t kOtherCandidates = 3;
constexpr std::uint32_t kFillerKinds = 3;

// Portable draws: the suite must not depend on the standard library's
// distribution implementations.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

enum class Role : std::uint8_t { kBos, kSpace, kGold, kStrong, kDistractor, kCandidate, kFiller };

struct HeadProfile {
  double bos, space, gold, strong, distractor, candidate, filler;

  double weight(Role r) const {
    switch (r) {
      case Role::kBos: return bos;
      case Role::kSpace: return space;
      case Role::kGold: return gold;
      case Role::kStrong: return strong;
      case Role::kDistractor: return distractor;
      case Role::kCandidate: return candidate;
      case Role::kFiller: return filler;
    }
    return 0.0;
  }
};

std::string surface_of(TokenId id) {
  if (id == kBos) return "<s>";
  if (id == 1) return "</s>";
  if (id == kSpace) return " ";
  return " w" + std::to_string(id);
}

void check(const PlantedParams& p) {
  if (p.num_kv_heads == 0 || p.num_heads % p.num_kv_heads != 0) {
    throw DimensionError("planted: num_heads must be a multiple of num_kv_heads");
  }
  if (p.candidates < kOtherCandidates + 2) throw DomainError("planted: too few candidates");
  if (p.vocab_size < kFirstWord + p.candidates + 1 + kFillerKinds) {
    throw DimensionError("planted: vocab_size too small for the construction");
  }
  if (p.retrieval_heads == 0 || p.retrieval_heads >= p.num_layers * p.num_heads) {
    throw DomainError("planted: retrieval_heads must leave at least one background head");
  }
  if (!(p.conflict_rate >= 0.0 && p.conflict_rate <= 1.0)) {
    throw DomainError("planted: conflict_rate must lie in [0, 1]");
  }
}

PlantedInstance make_instance(const PlantedParams& p, Draw& draw, std::uint64_t step) {
  std::vector<TokenId> words(p.vocab_size - kFirstWord);
  std::iota(words.begin(), words.end(), kFirstWord);
  draw.shuffle(words);

  PlantedInstance inst;
  inst.candidates.assign(words.begin(), words.begin() + p.candidates);
  inst.strong_distractor = words[p.candidates];
  const std::vector<TokenId> fillers(words.begin() + p.candidates + 1,
                                     words.begin() + p.candidates + 1 + kFillerKinds);
  const std::size_t gold_at = draw.index(p.candidates);
  inst.gold = inst.candidates[gold_at];
  std::vector<TokenId> others;
  for (TokenId c : inst.candidates) {
    if (c != inst.gold) others.push_back(c);
  }
  inst.distractor = others[0];
  inst.conflict = draw.uniform() < p.conflict_rate;

  std::vector<std::pair<TokenId, Role>> body;
  for (std::uint32_t i = 0; i < kSpaces; ++i) body.emplace_back(kSpace, Role::kSpace);
  body.emplace_back(inst.gold, Role::kGold);
  for (std::uint32_t i = 0; i < kDistractorCopies; ++i) body.emplace_back(inst.distractor, Role::kDistractor);
  for (std::uint32_t i = 1; i <= kOtherCandidates; ++i) body.emplace_back(others[i], Role::kCandidate);
  body.emplace_back(inst.strong_distractor, Role::kStrong);
  for (std::uint32_t i = 0; body.size() + 1 < kContextSize; ++i) {
    body.emplace_back(fillers[i % kFillerKinds], Role::kFiller);
  }
  draw.shuffle(body);
  body.insert(body.begin(), {kBos, Role::kBos});

  StepSnapshot& s = inst.snapshot;
  s.step = step;
  s.num_layers = p.num_layers;
  s.num_heads = p.num_heads;
  s.num_kv_heads = p.num_kv_heads;
  for (std::uint32_t j = 0; j < body.size(); ++j) {
    const TokenId id = body[j].first;
    s.context.push_back({j, id, surface_of(id), id == kBos || id == kSpace});
  }
  const std::size_t n = body.size();

  std::vector<std::size_t> heads(static_cast<std::size_t>(p.num_layers) * p.num_heads);
  std::iota(heads.begin(), heads.end(), std::size_t{0});
  draw.shuffle(heads);
  std::vector<bool> retrieval(heads.size(), false);
  for (std::uint32_t i = 0; i < p.retrieval_heads; ++i) retrieval[heads[i]] = true;

  const double d = draw.uniform(0.02, 0.2);
  const double g = draw.uniform(0.01, 0.08);
  const HeadProfile retrieval_profile{0.05, 0.01, 0.8, 0.02, 0.03, 0.01, 0.005};
  const HeadProfile background{0.03, 0.18, g, inst.conflict ? 0.6 : 0.01, d, 0.005, 0.02};

  s.attention.resize(heads.size() * n);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const HeadProfile& prof = retrieval[h] ? retrieval_profile : background;
    std::vector<double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = prof.weight(body[j].second) * (1.0 + 0.1 * draw.uniform(-1, 1));
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) s.attention[h * n + j] = static_cast<float>(row[j] / total);
  }

  s.value_norms.resize(static_cast<std::size_t>(p.num_layers) * p.num_kv_heads * n);
  for (std::size_t k = 0; k < s.value_norms.size(); ++k) {
    const Role r = body[k % n].second;
    double v = 1.0 + 0.1 * draw.uniform(-1, 1);
    if (r == Role::kBos) v = 4.0;
    if (r == Role::kGold) v = 10.0 * (1.0 + 0.05 * draw.uniform(-1, 1));
    if (r == Role::kStrong && inst.conflict) v = 5.0 * (1.0 + 0.05 * draw.uniform(-1, 1));
    s.value_norms[k] = static_cast<float>(v);
  }

  s.logits.resize(p.vocab_size);
  for (float& x : s.logits) x = static_cast<float>(draw.uniform(-0.5, 0.3));
  for (TokenId c : inst.candidates) s.logits[c] = static_cast<float>(1.0 + draw.uniform(-0.02, 0.02));
  s.logits[inst.strong_distractor] = 0.6F;
  if (p.one_hot) {
    s.logits[inst.candidates[draw.index(p.candidates)]] = 1000.0F;
  }
  return inst;
}

}  // namespace

TraceHeader planted_header(const PlantedParams& params) {
  TraceHeader h;
  h.vocab_size = params.vocab_size;
  h.num_layers = params.num_layers;
  h.num_heads = params.num_heads;
  h.num_kv_heads = params.num_kv_heads;
  h.tokenizer = "planted-v1";
  return h;
}

std::vector<PlantedInstance> make_planted_suite(const PlantedParams& params) {
  check(params);
  Draw draw(params.seed);
  std::vector<PlantedInstance> suite;
  suite.reserve(params.instances);
  for (std::uint32_t i = 0; i < params.instances; ++i) {
    suite.push_back(make_instance(params, draw, kContextSize));
  }
  return suite;
}

double gold_selection_rate(std::span<const PlantedInstance> suite, const Policy& policy) {
  if (suite.empty()) throw InputError("gold_selection_rate: empty suite");
  std::size_t hits = 0;
  for (const PlantedInstance& inst : suite) {
    if (decode_with(policy, inst.snapshot).chosen == inst.gold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(suite.size());
}

double gold_evidence_share(const PlantedInstance& instance, const DecodeConfig& cfg) {
  const FusedDistribution step = decode_step(instance.snapshot, cfg);
  const auto it = step.evidence.vocab_scores.find(instance.gold);
  return it == step.evidence.vocab_scores.end() ? 0.0 : it->second;
}

void write_planted_dataset(std::span<const PlantedInstance> suite, const PlantedParams& params,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "dataset.jsonl");
  if (!index) throw InputError("cannot write " + (dir / "dataset.jsonl").string());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const std::string name = "planted_" + std::to_string(i) + ".trace";
    TraceFile trace{planted_header(params), {suite[i].snapshot}};
    write_trace_file(trace, dir / name);
    nlohmann::json record{{"id", "planted-" + std::to_string(i)},
                          {"trace", name},
                          {"answers", {surface_of(suite[i].gold)}},
                          {"max_len", 1}};
    index << record.dump() << '\n';
  }
}

}  // namespace have::harness
