#pragma once

/**
 * Trace file format, version 1. All integers and floats little-endian.
 *
 *   magic    "HAVETR1\0"                                   8 bytes
 *   header   u32 version, u32 |V|, u32 L, u32 H, u32 H_kv,
 *            u16 sink policy id, u32 len + UTF-8 tokenizer name
 *   step*    u64 step, u32 |C|,
 *            |C| x { u32 token id, u32 len + UTF-8 surface, u8 sink flag },
 *            f32 attention   L*H*|C|     (layer, head, position)
 *            f32 value norms L*H_kv*|C|  (layer, kv_head, position)
 *            f32 logits      |V|
 *
 * Step records follow each other until end of stream; a stream that ends
 * inside a record is truncated. Float payloads are copied bit for bit.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "have/snapshot.hpp"

namespace have {

inline constexpr std::string_view kTraceMagic{"HAVETR1\0", 8};

// Serializes `trace`; returns the number of bytes written.
std::uint64_t write_trace(const TraceFile& trace, std::ostream& sink);

// Throws FormatError on a bad magic/version and TruncationError (carrying
// the byte offset) when the payload ends early.
TraceFile read_trace(std::istream& source);

std::vector<std::uint8_t> encode_trace(const TraceFile& trace);
TraceFile decode_trace(std::span<const std::uint8_t> bytes);

// File helpers. write_trace_file also writes "<path>.manifest", a plain-text
// copy of the header for human inspection.
std::uint64_t write_trace_file(const TraceFile& trace, const std::filesystem::path& path);
TraceFile read_trace_file(const std::filesystem::path& path);

std::string manifest_text(const TraceFile& trace);

}  // namespace have
