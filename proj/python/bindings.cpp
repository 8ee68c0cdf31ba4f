// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "pairmerge/analysis.hpp"
#include "pairmerge/bitcodec.hpp"
#include "pairmerge/compress.hpp"
#include "pairmerge/gemv.hpp"
#include "pairmerge/merge.hpp"
#include "pairmerge/model_io.hpp"
#include "pairmerge/parallel.hpp"
#include "pairmerge/quantization.hpp"

namespace py = pybind11;
namespace pm = pairmerge;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using WordArray = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;

pm::MatrixF to_matrix(const FloatArray& a) {
  if (a.ndim() != 2) throw pm::ShapeMismatch("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  std::vector<float> data(a.data(), a.data() + rows * cols);
  return pm::MatrixF(rows, cols, std::move(data));
}

std::vector<float> to_vector(const FloatArray& a) {
  if (a.ndim() != 1) throw pm::ShapeMismatch("expected a 1-D array");
  return {a.data(), a.data() + a.shape(0)};
}

template <typename T>
py::array_t<T> to_array(const pm::Matrix<T>& m) {
  py::array_t<T> out({m.rows(), m.cols()});
  if (m.size() != 0) std::memcpy(out.mutable_data(), m.flat().data(), m.size() * sizeof(T));
  return out;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
  py::array_t<T> out(v.size());
  if (!v.empty()) std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(T));
  return out;
}

pm::PackedExpertPair to_packed(const WordArray& words) {
  if (words.ndim() != 2) throw pm::ShapeMismatch("expected a 2-D uint16 array");
  pm::PackedExpertPair p;
  const auto rows = static_cast<std::size_t>(words.shape(0));
  const auto cols = static_cast<std::size_t>(words.shape(1));
  p.words = pm::Matrix<std::uint16_t>(rows, cols, std::vector<std::uint16_t>(words.data(), words.data() + rows * cols));
  return p;
}

pm::MergeArtifacts merge(const FloatArray& w_i, const FloatArray& w_j, const FloatArray& norms_i,
                         const FloatArray& norms_j, float tau) {
  return pm::merge_experts(to_matrix(w_i), to_matrix(w_j), to_vector(norms_i), to_vector(norms_j), tau);
}

pm::GroupingStrategy parse_grouping(const std::string& g) {
  if (g == "random") return pm::GroupingStrategy::random;
  if (g == "search") return pm::GroupingStrategy::search;
  throw pm::InvalidArgument("grouping must be 'random' or 'search'");
}

}  // namespace

PYBIND11_MODULE(_pairmerge, m) {
  m.doc() = "Pairwise dual-mask expert merging with packed bf16 storage.";

  auto base = py::register_exception<pm::Error>(m, "PairmergeError", PyExc_RuntimeError);
  py::register_exception<pm::ShapeMismatch>(m, "ShapeMismatch", base.ptr());
  py::register_exception<pm::DimensionMismatch>(m, "DimensionMismatch", base.ptr());
  py::register_exception<pm::InvalidThreshold>(m, "InvalidThreshold", base.ptr());
  py::register_exception<pm::InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<pm::RatioOutOfRange>(m, "RatioOutOfRange", base.ptr());
  py::register_exception<pm::DomainError>(m, "DomainError", base.ptr());
  py::register_exception<pm::InvalidBits>(m, "InvalidBits", base.ptr());
  py::register_exception<pm::ConfigMismatch>(m, "ConfigMismatch", base.ptr());
  py::register_exception<pm::IoError>(m, "IoError", base.ptr());
  py::register_exception<pm::BadMagic>(m, "BadMagic", base.ptr());
  py::register_exception<pm::CorruptHeader>(m, "CorruptHeader", base.ptr());
  py::register_exception<pm::TruncatedPayload>(m, "TruncatedPayload", base.ptr());
  py::register_exception<pm::DuplicateName>(m, "DuplicateName", base.ptr());
  py::register_exception<pm::DegenerateVariance>(m, "DegenerateVariance", base.ptr());

  m.def(
      "merge_experts",
      [](const FloatArray& w_i, const FloatArray& w_j, const FloatArray& norms_i, const FloatArray& norms_j,
         float tau) {
        const pm::MergeArtifacts a = merge(w_i, w_j, norms_i, norms_j, tau);
        py::dict d;
        d["w_merged"] = to_array(a.w_merged);
        d["m_sim"] = to_array(a.masks.m_sim);
        d["m_i"] = to_array(a.masks.m_i);
        d["m_j"] = to_array(a.masks.m_j);
        d["s_i"] = to_array(a.s_i);
        d["s_j"] = to_array(a.s_j);
        d["recon_i"] = to_array(pm::reconstruct(a, pm::ExpertPos::first));
        d["recon_j"] = to_array(pm::reconstruct(a, pm::ExpertPos::second));
        return d;
      },
      py::arg("w_i"), py::arg("w_j"), py::arg("norms_i"), py::arg("norms_j"), py::arg("tau") = 0.4f);

  m.def(
      "pack_pair",
      [](const FloatArray& w_i, const FloatArray& w_j, const FloatArray& norms_i, const FloatArray& norms_j,
         float tau) { return to_array(pm::pack_pair(merge(w_i, w_j, norms_i, norms_j, tau)).words); },
      py::arg("w_i"), py::arg("w_j"), py::arg("norms_i"), py::arg("norms_j"), py::arg("tau") = 0.4f,
      "Merges two experts and returns the packed uint16 words.");

  m.def(
      "unpack_pair",
      [](const WordArray& words, int pos) {
        return to_array(pm::unpack_pair(to_packed(words), pm::expert_pos_from_int(pos)).values);
      },
      py::arg("words"), py::arg("pos"));

  m.def(
      "decode_word", [](std::uint16_t word, int pos) { return pm::decode_word(pm::PackedWord{word}, pm::expert_pos_from_int(pos)).bits; },
      py::arg("word"), py::arg("pos"), "Returns the bf16 bit pattern for one expert position.");

  m.def(
      "gemv_fused",
      [](const WordArray& words, int pos, const FloatArray& x) {
        return to_array(pm::gemv_fused(to_packed(words), pm::expert_pos_from_int(pos), to_vector(x)));
      },
      py::arg("words"), py::arg("pos"), py::arg("x"));

  m.def(
      "gemv_reference", [](const FloatArray& w, const FloatArray& x) { return to_array(pm::gemv_reference(to_matrix(w), to_vector(x))); },
      py::arg("w"), py::arg("x"));

  m.def("similarity_fraction_closed", &pm::similarity_fraction_closed, py::arg("sigma_ratio"), py::arg("tau"));
  m.def("similarity_fraction_mc", &pm::similarity_fraction_mc, py::arg("sigma1"), py::arg("sigma2"),
        py::arg("tau"), py::arg("n_samples"), py::arg("seed") = 0);
  m.def("avg_bitwidth", &pm::avg_bitwidth, py::arg("quant_bits"), py::arg("group_size"), py::arg("scale_bits") = 16);

  m.def(
      "quantize_group",
      [](const FloatArray& magnitudes, int bits, int group_size) {
        const pm::QuantizedTensor q = pm::quantize_group(to_matrix(magnitudes), bits, group_size);
        pm::Matrix<std::uint16_t> codes(q.rows, q.cols, q.codes);
        return py::make_tuple(to_array(codes), to_array(q.scales), to_array(q.dequantize()));
      },
      py::arg("magnitudes"), py::arg("bits"), py::arg("group_size"),
      "Returns (codes, scales, dequantized).");

  m.def(
      "generate_toy",
      [](const std::string& path, int layers, int experts, int top_k, int d_model, int d_ff, std::uint64_t seed,
         bool dup_pairs, double noise) {
        const pm::ToyMoEConfig config{layers, experts, top_k, d_model, d_ff, seed};
        pm::save_model(path, pm::generate_toy(config, dup_pairs, noise));
      },
      py::arg("path"), py::arg("layers") = 4, py::arg("experts") = 8, py::arg("top_k") = 2, py::arg("d_model") = 64,
      py::arg("d_ff") = 128, py::arg("seed") = 0, py::arg("dup_pairs") = false, py::arg("noise") = 0.0);

  m.def(
      "compress",
      [](const std::string& in, const std::string& out, double ratio, float tau, std::uint64_t seed,
         const std::string& grouping, std::size_t calib_tokens) {
        pm::CompressOptions o;
        o.ratio = ratio;
        o.tau = tau;
        o.seed = seed;
        o.grouping = parse_grouping(grouping);
        o.calib_tokens = calib_tokens;
        pm::CompressResult r;
        {
          py::gil_scoped_release release;
          r = pm::compress(pm::load_model(in), o);
          pm::save_model(out, r.model, {{"pairing_plan", r.plan}, {"seed", seed}});
        }
        return py::module_::import("json").attr("loads")(pm::report_to_json(r.report).dump());
      },
      py::arg("model_in"), py::arg("model_out"), py::arg("ratio") = 0.5, py::arg("tau") = 0.4f, py::arg("seed") = 0,
      py::arg("grouping") = "random", py::arg("calib_tokens") = 512);

  m.def(
      "eval_deviation",
      [](const std::string& original, const std::string& compressed, std::size_t tokens, std::uint64_t seed) {
        const pm::ToyMoEModel a = pm::load_model(original);
        const pm::ToyMoEModel b = pm::load_model(compressed);
        const pm::MatrixF x = pm::gaussian_inputs(tokens, static_cast<std::size_t>(a.config.d_model), seed);
        const pm::Deviation d = pm::eval_deviation(a, b, x);
        py::dict out;
        out["mean_rel_l2"] = d.mean_rel_l2;
        out["max_rel_l2"] = d.max_rel_l2;
        return out;
      },
      py::arg("original"), py::arg("compressed"), py::arg("tokens") = 256, py::arg("seed") = 7);

  m.def("set_max_threads", &pm::set_max_threads, py::arg("n"));
}
