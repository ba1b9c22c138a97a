#include "have/trace_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "have/error.hpp"

namespace have {
namespace {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* data, std::size_t n) {
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os_) throw InputError("trace write failed");
    written_ += n;
  }

  template <typename T>
  void le(T value) {
    static_assert(std::is_unsigned_v<T>);
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
    bytes(buf, sizeof(T));
  }

  void f32s(std::span<const float> values) {
    for (float f : values) le(std::bit_cast<std::uint32_t>(f));
  }

  void str(std::string_view s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::uint64_t written() const noexcept { return written_; }

 private:
  std::ostream& os_;
  std::uint64_t written_ = 0;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(void* out, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    offset_ += got;
    if (got != n) throw TruncationError(std::string("truncated trace while reading ") + what, offset_);
  }

  template <typename T>
  T le(const char* what) {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(T{buf[i]} << (8 * i));
    return value;
  }

  void f32s(std::vector<float>& out, std::size_t n, const char* what) {
    out.clear();
    constexpr std::size_t kChunk = 1 << 14;
    unsigned char raw[4 * kChunk];
    std::size_t remaining = n;
    while (remaining > 0) {
      const std::size_t take = std::min(remaining, kChunk);
      bytes(raw, 4 * take, what);
      for (std::size_t i = 0; i < take; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= std::uint32_t{raw[4 * i + b]} << (8 * b);
        out.push_back(std::bit_cast<float>(bits));
      }
      remaining -= take;
    }
  }

  std::string str(const char* what) {
    const auto n = le<std::uint32_t>(what);
    std::string s;
    // read in bounded chunks so a corrupt length cannot force a huge allocation
    constexpr std::size_t kChunk = 1 << 16;
    std::size_t remaining = n;
    while (remaining > 0) {
      const std::size_t take = std::min(remaining, kChunk);
      const std::size_t old = s.size();
      s.resize(old + take);
      bytes(s.data() + old, take, what);
      remaining -= take;
    }
    return s;
  }

  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

void write_step(Writer& w, const StepSnapshot& s, const TraceHeader& h) {
  const std::size_t n = s.context.size();
  if (s.num_layers != h.num_layers || s.num_heads != h.num_heads ||
      s.num_kv_heads != h.num_kv_heads || s.logits.size() != h.vocab_size ||
      s.attention.size() != std::size_t{h.num_layers} * h.num_heads * n ||
      s.value_norms.size() != std::size_t{h.num_layers} * h.num_kv_heads * n) {
    throw DimensionError("step " + std::to_string(s.step) +
                         " is inconsistent with the trace header dimensions");
  }
  w.le(s.step);
  w.le(static_cast<std::uint32_t>(n));
  for (const ContextToken& tok : s.context) {
    w.le(tok.token_id);
    w.str(tok.surface);
    w.le(static_cast<std::uint8_t>(tok.is_sink ? 1 : 0));
  }
  w.f32s(s.attention);
  w.f32s(s.value_norms);
  w.f32s(s.logits);
}

}  // namespace

std::uint64_t write_trace(const TraceFile& trace, std::ostream& sink) {
  Writer w(sink);
  const TraceHeader& h = trace.header;
  w.bytes(kTraceMagic.data(), kTraceMagic.size());
  w.le(h.version);
  w.le(h.vocab_size);
  w.le(h.num_layers);
  w.le(h.num_heads);
  w.le(h.num_kv_heads);
  w.le(h.sink_policy_id);
  w.str(h.tokenizer);
  for (const StepSnapshot& s : trace.steps) write_step(w, s, h);
  return w.written();
}

TraceFile read_trace(std::istream& source) {
  Reader r(source);
  char magic[8];
  r.bytes(magic, sizeof(magic), "magic");
  if (std::string_view(magic, sizeof(magic)) != kTraceMagic) {
    throw FormatError("not a trace file: bad magic");
  }

  TraceFile trace;
  TraceHeader& h = trace.header;
  h.version = r.le<std::uint32_t>("version");
  if (h.version != TraceHeader::kCurrentVersion) {
    throw FormatError("unsupported trace version " + std::to_string(h.version));
  }
  h.vocab_size = r.le<std::uint32_t>("header");
  h.num_layers = r.le<std::uint32_t>("header");
  h.num_heads = r.le<std::uint32_t>("header");
  h.num_kv_heads = r.le<std::uint32_t>("header");
  h.sink_policy_id = r.le<std::uint16_t>("header");
  h.tokenizer = r.str("tokenizer name");

  const std::size_t heads = std::size_t{h.num_layers} * h.num_heads;
  const std::size_t kv_heads = std::size_t{h.num_layers} * h.num_kv_heads;
  while (!r.at_end()) {
    StepSnapshot s;
    s.num_layers = h.num_layers;
    s.num_heads = h.num_heads;
    s.num_kv_heads = h.num_kv_heads;
    s.step = r.le<std::uint64_t>("step index");
    const auto n = r.le<std::uint32_t>("context size");
    s.context.reserve(std::min<std::size_t>(n, 1 << 16));
    for (std::uint32_t j = 0; j < n; ++j) {
      ContextToken tok;
      tok.position = j;
      tok.token_id = r.le<std::uint32_t>("token id");
      tok.surface = r.str("token surface");
      tok.is_sink = r.le<std::uint8_t>("sink flag") != 0;
      s.context.push_back(std::move(tok));
    }
    r.f32s(s.attention, heads * n, "attention");
    r.f32s(s.value_norms, kv_heads * n, "value norms");
    r.f32s(s.logits, h.vocab_size, "logits");
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

std::vector<std::uint8_t> encode_trace(const TraceFile& trace) {
  std::ostringstream os(std::ios::binary);
  write_trace(trace, os);
  const std::string bytes = std::move(os).str();
  return {bytes.begin(), bytes.end()};
}

TraceFile decode_trace(std::span<const std::uint8_t> bytes) {
  std::istringstream is(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read_trace(is);
}

std::string manifest_text(const TraceFile& trace) {
  const TraceHeader& h = trace.header;
  std::ostringstream os;
  os << "format = HAVETR1\n"
     << "version = " << h.version << "\n"
     << "vocab_size = " << h.vocab_size << "\n"
     << "num_layers = " << h.num_layers << "\n"
     << "num_heads = " << h.num_heads << "\n"
     << "num_kv_heads = " << h.num_kv_heads << "\n"
     << "sink_policy_id = " << h.sink_policy_id << "\n"
     << "tokenizer = " << h.tokenizer << "\n"
     << "steps = " << trace.steps.size() << "\n";
  return os.str();
}

std::uint64_t write_trace_file(const TraceFile& trace, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  const auto n = write_trace(trace, os);
  std::ofstream manifest(path.string() + ".manifest", std::ios::trunc);
  if (!manifest) throw InputError("cannot write manifest for " + path.string());
  manifest << manifest_text(trace);
  return n;
}

TraceFile read_trace_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open trace " + path.string());
  return read_trace(is);
}

}  // namespace have
