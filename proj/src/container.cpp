// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "pairmerge/bf16.hpp"

namespace pairmerge {

namespace {

constexpr char kMagic[4] = {'P', 'Z', 'M', '1'};

std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

template <typename T>
void put_le(std::vector<std::uint8_t>& out, std::size_t at, T value) {
  using U = std::make_unsigned_t<T>;
  const U u = static_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out[at + b] = static_cast<std::uint8_t>((u >> (8 * b)) & 0xFFu);
  }
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U u = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) u |= static_cast<U>(p[b]) << (8 * b);
  return u;
}

std::vector<std::uint8_t> words_to_bytes(std::span<const std::uint16_t> words) {
  std::vector<std::uint8_t> out(words.size() * 2);
  for (std::size_t k = 0; k < words.size(); ++k) put_le(out, 2 * k, words[k]);
  return out;
}

std::vector<std::uint16_t> bytes_to_words(const std::vector<std::uint8_t>& bytes) {
  std::vector<std::uint16_t> out(bytes.size() / 2);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = get_le<std::uint16_t>(&bytes[2 * k]);
  return out;
}

void require_rank2(const TensorRecord& r, std::size_t& rows, std::size_t& cols) {
  if (r.shape.size() == 2) {
    rows = r.shape[0];
    cols = r.shape[1];
  } else if (r.shape.size() == 1) {
    rows = 1;
    cols = r.shape[0];
  } else {
    throw CorruptHeader("tensor " + r.name + " must be rank 1 or 2");
  }
}

}  // namespace

std::uint64_t TensorRecord::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const TensorRecord* Container::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TensorRecord& Container::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw CorruptHeader("missing tensor " + name);
}

void Container::add(TensorRecord record) {
  if (find(record.name)) throw DuplicateName("duplicate tensor name " + record.name);
  tensors.push_back(std::move(record));
}

std::uint64_t dtype_byte_len(const std::string& dtype, std::uint64_t elements) {
  if (dtype == "f32") return 4 * elements;
  if (dtype == "bf16" || dtype == "pbf16") return 2 * elements;
  int bits = 0;
  int group = 0;
  if (parse_quant_dtype(dtype, bits, group)) {
    return (elements * static_cast<std::uint64_t>(bits) + 7) / 8;
  }
  throw CorruptHeader("unknown dtype " + dtype);
}

std::vector<std::uint8_t> serialize_container(const Container& c) {
  nlohmann::json tensors = nlohmann::json::array();
  std::set<std::string> names;
  std::uint64_t offset = 0;
  for (const auto& t : c.tensors) {
    if (!names.insert(t.name).second) throw DuplicateName("duplicate tensor name " + t.name);
    const std::uint64_t expected = dtype_byte_len(t.dtype, t.element_count());
    if (expected != t.bytes.size()) {
      throw CorruptHeader("tensor " + t.name + " has " + std::to_string(t.bytes.size()) +
                          " bytes, dtype/shape imply " + std::to_string(expected));
    }
    offset = align_up(offset, kPayloadAlignment);
    tensors.push_back({{"name", t.name},
                       {"dtype", t.dtype},
                       {"shape", t.shape},
                       {"byte_offset", offset},
                       {"byte_len", t.bytes.size()}});
    offset += t.bytes.size();
  }
  const nlohmann::json header{{"format_version", kContainerFormatVersion},
                              {"tensors", tensors},
                              {"metadata", c.metadata}};
  const std::string text = header.dump();

  const std::size_t header_end = 8 + text.size();
  const std::size_t payload_start = c.tensors.empty() ? header_end : align_up(header_end, kPayloadAlignment);
  std::vector<std::uint8_t> out(payload_start + offset, 0);
  std::memcpy(out.data(), kMagic, 4);
  put_le(out, 4, static_cast<std::uint32_t>(text.size()));
  std::memcpy(out.data() + 8, text.data(), text.size());
  for (std::size_t k = 0; k < c.tensors.size(); ++k) {
    const auto& bytes = c.tensors[k].bytes;
    const auto at = payload_start + tensors[k]["byte_offset"].get<std::uint64_t>();
    if (!bytes.empty()) std::memcpy(out.data() + at, bytes.data(), bytes.size());
  }
  return out;
}

Container parse_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw TruncatedPayload("file shorter than the 8-byte prefix");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw BadMagic("not a PZM1 container");
  const auto header_len = get_le<std::uint32_t>(bytes.data() + 4);
  if (8 + static_cast<std::uint64_t>(header_len) > bytes.size()) {
    throw TruncatedPayload("header extends past end of file");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(std::string("header is not valid JSON: ") + e.what());
  }

  Container c;
  std::uint64_t payload_end = 0;
  try {
    if (header.at("format_version").get<int>() != kContainerFormatVersion) {
      throw CorruptHeader("unsupported format_version");
    }
    c.metadata = header.at("metadata");
    const auto& list = header.at("tensors");
    const std::size_t header_end = 8 + header_len;
    const std::size_t payload_start =
        list.empty() ? header_end : align_up(header_end, kPayloadAlignment);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& entry : list) {
      TensorRecord r;
      r.name = entry.at("name").get<std::string>();
      r.dtype = entry.at("dtype").get<std::string>();
      r.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
      const auto offset = entry.at("byte_offset").get<std::uint64_t>();
      const auto len = entry.at("byte_len").get<std::uint64_t>();
      if (dtype_byte_len(r.dtype, r.element_count()) != len) {
        throw CorruptHeader("tensor " + r.name + ": byte_len disagrees with dtype and shape");
      }
      if (offset % kPayloadAlignment != 0) {
        throw CorruptHeader("tensor " + r.name + ": byte_offset not 64-byte aligned");
      }
      const std::uint64_t begin = payload_start + offset;
      if (begin + len > bytes.size()) {
        throw TruncatedPayload("tensor " + r.name + " extends past end of file");
      }
      ranges.emplace_back(offset, offset + len);
      payload_end = std::max<std::uint64_t>(payload_end, begin + len);
      r.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(begin),
                     bytes.begin() + static_cast<std::ptrdiff_t>(begin + len));
      c.add(std::move(r));
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t k = 1; k < ranges.size(); ++k) {
      if (ranges[k].first < ranges[k - 1].second) throw CorruptHeader("tensor byte ranges overlap");
    }
    if (list.empty()) payload_end = header_end;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(std::string("malformed header: ") + e.what());
  }
  if (payload_end != bytes.size()) {
    throw CorruptHeader("file has " + std::to_string(bytes.size() - payload_end) +
                        " trailing bytes past the declared payload");
  }
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  const auto bytes = serialize_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

TensorRecord make_f32(const std::string& name, const MatrixF& m) {
  TensorRecord r{name, "f32", {m.rows(), m.cols()}, std::vector<std::uint8_t>(m.size() * 4)};
  for (std::size_t k = 0; k < m.size(); ++k) put_le(r.bytes, 4 * k, std::bit_cast<std::uint32_t>(m[k]));
  return r;
}

TensorRecord make_bf16(const std::string& name, const MatrixF& m) {
  std::vector<std::uint16_t> words(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const Bf16 b = Bf16::from_float(m[k]);
    if (b.to_float() != m[k] && !b.is_nan()) {
      throw InvalidArgument("tensor " + name + " holds values that are not bf16-exact");
    }
    words[k] = b.bits;
  }
  return TensorRecord{name, "bf16", {m.rows(), m.cols()}, words_to_bytes(words)};
}

TensorRecord make_pbf16(const std::string& name, const PackedExpertPair& p) {
  return TensorRecord{name, "pbf16", {p.rows(), p.cols()}, words_to_bytes(p.words.flat())};
}

std::vector<TensorRecord> make_quantized(const std::string& name, const QuantizedTensor& q) {
  std::vector<TensorRecord> out;
  out.push_back(TensorRecord{name, q.dtype(), {q.rows, q.cols}, pack_codes(q.codes, q.bits)});
  out.push_back(make_f32(name + "/scales", MatrixF(1, q.scales.size(), q.scales)));
  out.back().shape = {q.scales.size()};
  return out;
}

MatrixF to_matrix(const TensorRecord& r) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  require_rank2(r, rows, cols);
  MatrixF m(rows, cols);
  if (r.dtype == "f32") {
    for (std::size_t k = 0; k < m.size(); ++k) {
      m[k] = std::bit_cast<float>(get_le<std::uint32_t>(&r.bytes[4 * k]));
    }
  } else if (r.dtype == "bf16") {
    const auto words = bytes_to_words(r.bytes);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = Bf16{words[k]}.to_float();
  } else {
    throw CorruptHeader("tensor " + r.name + " has dtype " + r.dtype + ", expected f32 or bf16");
  }
  return m;
}

std::vector<float> to_vector(const TensorRecord& r) { return to_matrix(r).data(); }

PackedExpertPair to_packed(const TensorRecord& r, std::array<int, 2> pair_id) {
  if (r.dtype != "pbf16") throw CorruptHeader("tensor " + r.name + " is not pbf16");
  std::size_t rows = 0;
  std::size_t cols = 0;
  require_rank2(r, rows, cols);
  return PackedExpertPair{Matrix<std::uint16_t>(rows, cols, bytes_to_words(r.bytes)), pair_id};
}

QuantizedTensor to_quantized(const TensorRecord& codes, const TensorRecord& scales) {
  QuantizedTensor q;
  if (!parse_quant_dtype(codes.dtype, q.bits, q.group_size)) {
    throw CorruptHeader("tensor " + codes.name + " is not a quantized dtype");
  }
  require_rank2(codes, q.rows, q.cols);
  q.codes = unpack_codes(codes.bytes, q.bits, codes.element_count());
  q.scales = to_vector(scales);
  const std::size_t groups =
      (q.codes.size() + static_cast<std::size_t>(q.group_size) - 1) / static_cast<std::size_t>(q.group_size);
  if (q.scales.size() != groups) throw CorruptHeader("scale count mismatch for " + codes.name);
  return q;
}

}  // namespace pairmerge
