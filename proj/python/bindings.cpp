#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "have/error.hpp"
#include "have/fusion.hpp"
#include "have/harness/eval.hpp"
#include "have/harness/generate.hpp"
#include "have/harness/metrics.hpp"
#include "have/harness/planted.hpp"
#include "have/snapshot.hpp"
#include "have/toy_transformer.hpp"
#include "have/trace_io.hpp"

namespace py = pybind11;
using namespace have;

namespace {

DecodeConfig make_config(double alpha, std::uint32_t top_rank, bool no_hag, bool no_vc) {
  DecodeConfig cfg;
  cfg.fusion.alpha = alpha;
  cfg.fusion.top_rank = top_rank;
  cfg.ablations = {no_hag, no_vc};
  return cfg;
}

Policy make_policy(const std::string& kind, double alpha, std::uint32_t top_rank, bool no_hag, bool no_vc) {
  if (kind == "greedy") return Policy::greedy();
  if (kind == "have") return Policy::have(make_config(alpha, top_rank, no_hag, no_vc));
  throw InputError("policy must be 'have' or 'greedy'");
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Head-adaptive gating and value calibration decoding";

  auto base = py::register_exception<Error>(m, "HaveError", PyExc_RuntimeError);
  auto input = py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", input.ptr());
  py::register_exception<TruncationError>(m, "TruncationError", input.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", input.ptr());
  py::register_exception<NumericError>(m, "NumericError", input.ptr());
  py::register_exception<DomainError>(m, "DomainError", input.ptr());
  py::register_exception<TraceExhaustedError>(m, "TraceExhaustedError", input.ptr());
  py::register_exception<InvariantViolation>(m, "InvariantViolation", base.ptr());

  py::class_<ContextToken>(m, "ContextToken")
      .def(py::init([](std::uint32_t position, TokenId token_id, std::string surface, bool is_sink) {
             return ContextToken{position, token_id, std::move(surface), is_sink};
           }),
           py::arg("position"), py::arg("token_id"), py::arg("surface"), py::arg("is_sink") = false)
      .def_readwrite("position", &ContextToken::position)
      .def_readwrite("token_id", &ContextToken::token_id)
      .def_readwrite("surface", &ContextToken::surface)
      .def_readwrite("is_sink", &ContextToken::is_sink)
      .def("__repr__", [](const ContextToken& t) {
        return "ContextToken(" + std::to_string(t.position) + ", " + std::to_string(t.token_id) + ", '" +
               t.surface + "', " + (t.is_sink ? "True" : "False") + ")";
      });

  py::class_<TraceHeader>(m, "TraceHeader")
      .def(py::init<>())
      .def_readwrite("version", &TraceHeader::version)
      .def_readwrite("vocab_size", &TraceHeader::vocab_size)
      .def_readwrite("num_layers", &TraceHeader::num_layers)
      .def_readwrite("num_heads", &TraceHeader::num_heads)
      .def_readwrite("num_kv_heads", &TraceHeader::num_kv_heads)
      .def_readwrite("sink_policy_id", &TraceHeader::sink_policy_id)
      .def_readwrite("tokenizer", &TraceHeader::tokenizer)
      .def(py::self == py::self);

  py::class_<StepSnapshot>(m, "StepSnapshot")
      .def(py::init<>())
      .def_readwrite("step", &StepSnapshot::step)
      .def_readwrite("context", &StepSnapshot::context)
      .def_readwrite("num_layers", &StepSnapshot::num_layers)
      .def_readwrite("num_heads", &StepSnapshot::num_heads)
      .def_readwrite("num_kv_heads", &StepSnapshot::num_kv_heads)
      .def_readwrite("attention", &StepSnapshot::attention)
      .def_readwrite("value_norms", &StepSnapshot::value_norms)
      .def_readwrite("logits", &StepSnapshot::logits)
      .def("attention_row", [](const StepSnapshot& s, std::uint32_t l, std::uint32_t h) {
        const auto row = s.attention_row(l, h);
        return std::vector<float>(row.begin(), row.end());
      })
      .def("header", [](const StepSnapshot& s, const std::string& tokenizer) { return header_for(s, tokenizer); },
           py::arg("tokenizer") = "");

  py::class_<TraceFile>(m, "TraceFile")
      .def(py::init<>())
      .def_readwrite("header", &TraceFile::header)
      .def_readwrite("steps", &TraceFile::steps);

  py::class_<FusedDistribution>(m, "FusedDistribution")
      .def_readonly("p", &FusedDistribution::p)
      .def_readonly("support", &FusedDistribution::support)
      .def_property_readonly("evidence", [](const FusedDistribution& d) { return d.evidence.vocab_scores; })
      .def_property_readonly("ctx_scores", [](const FusedDistribution& d) { return d.evidence.ctx_scores; })
      .def_property_readonly("fallback_used", &FusedDistribution::fallback_used)
      .def_readonly("h_norm", &FusedDistribution::h_norm)
      .def_readonly("s", &FusedDistribution::s)
      .def_readonly("s_hat", &FusedDistribution::s_hat)
      .def_readonly("chosen", &FusedDistribution::chosen)
      .def_property_readonly("head_weights",
                             [](const FusedDistribution& d) { return d.head_weights.weights.values; });

  m.def("softmax", [](const std::vector<double>& z) { return softmax(std::span<const double>(z)); });
  m.def("top_r_support", [](const std::vector<double>& p, std::uint32_t r) { return top_r_support(p, r); });
  m.def("normalized_entropy", [](const std::vector<double>& p) { return normalized_entropy(p); });

  m.def("validate_snapshot", [](const StepSnapshot& s) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& v : validate_snapshot(s, header_for(s)).violations) out.emplace_back(to_string(v.kind), v.message);
    return out;
  });
  m.def("validate_trace", [](const TraceFile& t) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& v : validate_trace(t).violations) out.emplace_back(to_string(v.kind), v.message);
    return out;
  });

  m.def("decode_step",
        [](const StepSnapshot& s, double alpha, std::uint32_t top_rank, bool no_hag, bool no_vc) {
          return decode_step(s, make_config(alpha, top_rank, no_hag, no_vc));
        },
        py::arg("snapshot"), py::arg("alpha") = FusionConfig::kDefaultAlpha,
        py::arg("top_rank") = FusionConfig::kDefaultTopRank, py::arg("no_hag") = false, py::arg("no_vc") = false);
  m.def("greedy_step", &greedy_step, py::arg("snapshot"));

  m.def("encode_trace", [](const TraceFile& t) { return to_bytes(encode_trace(t)); });
  m.def("decode_trace", [](const py::bytes& b) { return decode_trace(from_bytes(b)); });
  m.def("write_trace_file", &write_trace_file, py::arg("trace"), py::arg("path"));
  m.def("read_trace_file", &read_trace_file, py::arg("path"));

  m.def("toy_generate",
        [](const std::vector<TokenId>& prompt, std::uint32_t steps, std::uint64_t seed, const std::string& policy,
           double alpha, std::uint32_t top_rank, std::optional<std::uint32_t> window, std::uint32_t num_heads,
           std::uint32_t num_kv_heads) {
          toy::ToyConfig cfg;
          cfg.seed = seed;
          cfg.window = window;
          cfg.num_heads = num_heads;
          cfg.num_kv_heads = num_kv_heads;
          const toy::Model model(cfg);
          auto run = harness::run_and_trace(model, prompt, steps, make_policy(policy, alpha, top_rank, false, false));
          return py::make_tuple(run.generation.tokens, run.trace);
        },
        py::arg("prompt"), py::arg("steps"), py::arg("seed") = 0, py::arg("policy") = "greedy",
        py::arg("alpha") = FusionConfig::kDefaultAlpha, py::arg("top_rank") = FusionConfig::kDefaultTopRank,
        py::arg("window") = py::none(), py::arg("num_heads") = 4, py::arg("num_kv_heads") = 2);

  m.def("replay",
        [](const TraceFile& trace, std::uint32_t max_len, const std::string& policy, double alpha,
           std::uint32_t top_rank, bool no_hag, bool no_vc) {
          const auto gen = harness::generate(trace, make_policy(policy, alpha, top_rank, no_hag, no_vc),
                                             harness::StopRule{max_len, std::nullopt});
          return py::make_tuple(gen.tokens, gen.steps);
        },
        py::arg("trace"), py::arg("max_len"), py::arg("policy") = "have",
        py::arg("alpha") = FusionConfig::kDefaultAlpha, py::arg("top_rank") = FusionConfig::kDefaultTopRank,
        py::arg("no_hag") = false, py::arg("no_vc") = false);

  m.def("exact_match", [](const std::string& pred, const std::vector<std::string>& golds) {
    return harness::exact_match(pred, golds);
  });
  m.def("token_f1", [](const std::string& pred, const std::vector<std::string>& golds) {
    return harness::token_f1(pred, golds);
  });

  m.def("planted_rate",
        [](const std::string& policy, std::uint32_t instances, std::uint64_t seed, double alpha, std::uint32_t top_rank,
           bool no_hag, bool no_vc, bool one_hot) {
          harness::PlantedParams params;
          params.instances = instances;
          params.seed = seed;
          params.one_hot = one_hot;
          const auto suite = harness::make_planted_suite(params);
          return harness::gold_selection_rate(suite, make_policy(policy, alpha, top_rank, no_hag, no_vc));
        },
        py::arg("policy") = "have", py::arg("instances") = 200, py::arg("seed") = harness::PlantedParams{}.seed,
        py::arg("alpha") = FusionConfig::kDefaultAlpha, py::arg("top_rank") = FusionConfig::kDefaultTopRank,
        py::arg("no_hag") = false, py::arg("no_vc") = false, py::arg("one_hot") = false);

  m.def("run_eval",
        [](const std::filesystem::path& dataset, std::optional<std::filesystem::path> grid) {
          const auto data = harness::Dataset::load(dataset);
          const auto g = grid ? harness::EvalGrid::load(*grid) : harness::EvalGrid{};
          std::ostringstream out;
          harness::write_report(harness::run_eval(data, g), out);
          return out.str();
        },
        py::arg("dataset"), py::arg("grid") = py::none());
}
