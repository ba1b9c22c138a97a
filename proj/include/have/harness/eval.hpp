#pragma once

/**
 * Dataset evaluation: EM / F1 over QA instances under a grid of decoding
 * configurations, plus alpha / Top-R sweeps.
 *
 * Dataset files are JSON lines, one instance per line:
 *   {"id": "q1", "answers": ["w17"], "prompt_ids": [0, 17, 4]}
 *   {"id": "q2", "answers": ["w9"], "context": "w9 w4 w9", "question": "w5"}
 *   {"id": "q3", "answers": ["w12"], "trace": "q3.trace", "max_len": 1}
 * An instance either runs live on the toy model or replays a recorded trace
 * ("trace", relative to the dataset file). A live prompt is "prompt_ids", or
 * BOS followed by the toy encoding of the context and question text.
 *
 * Grid files are key = value text:
 *   alpha = 1.0
 *   top_rank = 10
 *   greedy = true
 *   ablations = full no_hag no_vc no_both
 *   alphas = 0 0.25 0.5 1 2 4
 *   ranks = 1 2 5 10 20 50
 *   max_len = 8
 *   stop_token = 1
 *   model_config = toy.cfg
 *   estimator = mask.txt
 *   length_bins = 0 200 400 600 800
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "have/fusion.hpp"
#include "have/harness/planted.hpp"
#include "have/toy_transformer.hpp"

namespace have::harness {

struct QAInstance {
  std::string id;
  std::vector<std::string> answers;
  std::string context;
  std::string question;
  std::vector<TokenId> prompt_ids;
  std::optional<std::filesystem::path> trace;  // resolved path
  std::optional<std::uint32_t> max_len;
};

struct Dataset {
  std::vector<QAInstance> instances;
  // "line N: reason" for every malformed line; those lines are skipped.
  std::vector<std::string> errors;

  // Throws InputError only when no line yields an instance.
  static Dataset parse(std::istream& in, const std::filesystem::path& base_dir = {});
  static Dataset load(const std::filesystem::path& path);
};

enum class SweepAxis : std::uint8_t { kNone, kAlpha, kRank };

const char* to_string(SweepAxis axis) noexcept;
// "alpha" or "rank"; throws InputError otherwise.
SweepAxis parse_axis(const std::string& text);

struct EvalConfig {
  std::string name;
  Policy policy;
  SweepAxis axis = SweepAxis::kNone;
  double axis_value = 0.0;
};

struct EvalGrid {
  double alpha = FusionConfig::kDefaultAlpha;
  std::uint32_t top_rank = FusionConfig::kDefaultTopRank;
  bool greedy = true;
  std::vector<std::string> ablations{"full", "no_hag", "no_vc", "no_both"};
  std::vector<double> alphas;
  std::vector<std::uint32_t> ranks;
  std::uint32_t max_len = 8;
  std::optional<TokenId> stop_token;
  toy::ToyConfig model;
  EstimatorSpec estimator;
  std::vector<std::uint32_t> length_bins{0, 200, 400, 600, 800};

  // Relative paths inside the file resolve against its directory.
  static EvalGrid parse(std::istream& in, const std::filesystem::path& base_dir = {});
  static EvalGrid load(const std::filesystem::path& path);
};

// Baseline rows (greedy, then each ablation), then one HAVE row per sweep
// value. Throws InputError if the grid yields no rows.
std::vector<EvalConfig> expand_grid(const EvalGrid& grid);

struct InstanceResult {
  std::string id;
  std::string prediction;
  std::vector<TokenId> tokens;
  int em = 0;
  double f1 = 0.0;
  std::size_t context_length = 0;
};

struct LengthBin {
  std::uint32_t lo = 0;
  std::optional<std::uint32_t> hi;  // open-ended last bin
  std::size_t count = 0;
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
};

struct ConfigResult {
  std::string name;
  SweepAxis axis = SweepAxis::kNone;
  double axis_value = 0.0;
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  std::size_t steps = 0;
  double fallback_rate = 0.0;
  double mean_h_norm = 0.0;
  // Mean per-step U_t mass on ids whose surface is a gold answer word.
  double gold_evidence_mass = 0.0;
  std::vector<LengthBin> bins;
  std::vector<InstanceResult> instances;
};

struct EvalReport {
  std::vector<std::string> dataset_errors;
  std::vector<std::string> warnings;
  std::vector<ConfigResult> configs;
};

EvalReport run_eval(const Dataset& data, const EvalGrid& grid);

// Line-delimited JSON: one "dataset_error" record per skipped line and one
// "warning" record per warning, then
// one "config" record per row followed by its "instance" records. Output
// is byte-identical for identical inputs.
void write_report(const EvalReport& report, std::ostream& out);

// Two numeric columns per line: axis value and EM for every row on `axis`.
void write_series(const EvalReport& report, SweepAxis axis, std::ostream& out);

// Gold-selection rate on a planted suite as `axis` varies over `values`,
// every other setting taken from `base`.
std::vector<std::pair<double, double>> planted_sweep(std::span<const PlantedInstance> suite,
                                                     const DecodeConfig& base, SweepAxis axis,
                                                     std::span<const double> values);

}  // namespace have::harness
