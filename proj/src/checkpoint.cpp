#include "lanedetect/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include "byte_io.hpp"

namespace lanedetect {

namespace {

using detail::ByteReader;
using detail::ByteWriter;

constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::string_view kAdamTag = "ADAM";

void write_tensor(ByteWriter& w, const NamedTensor& t) {
  if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + t.name);
  if (t.dims.empty() || t.dims.size() > 0xFF) throw FormatError("tensor rank out of range: " + t.name);
  std::size_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.values.size()) throw FormatError("tensor dims do not match data: " + t.name);
  w.u16(static_cast<std::uint16_t>(t.name.size()));
  w.bytes(t.name);
  w.u8(kDtypeF32);
  w.u8(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) w.u32(d);
  for (float v : t.values) w.f32(v);
}

NamedTensor read_tensor(ByteReader& r) {
  NamedTensor t;
  const std::uint16_t len = r.u16();
  auto name = r.take(len);
  t.name.assign(name.begin(), name.end());
  const std::uint8_t dtype = r.u8();
  if (dtype != kDtypeF32) {
    throw FormatError("checkpoint: tensor '" + t.name + "' has unsupported dtype " +
                      std::to_string(dtype));
  }
  const std::uint8_t rank = r.u8();
  if (rank == 0) throw FormatError("checkpoint: tensor '" + t.name + "' has rank 0");
  std::uint64_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    t.dims.push_back(r.u32());
    count *= t.dims.back();
    if (count > r.remaining()) throw FormatError("checkpoint: truncated tensor '" + t.name + "'");
  }
  t.values.resize(count);
  for (auto& v : t.values) v = r.f32();
  return t;
}

std::vector<std::uint32_t> dims_of(const Shape& s) {
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
}

template <class T>
NamedTensor to_named(const std::string& name, std::vector<std::uint32_t> dims,
                     std::span<const T> values) {
  return NamedTensor{name, std::move(dims), std::vector<float>(values.begin(), values.end())};
}

/// Expected name and dims of every parameter buffer, in buffer order.
std::vector<std::pair<std::string, std::vector<std::uint32_t>>> expected_layout(
    const ModelGraph& graph) {
  std::vector<std::pair<std::string, std::vector<std::uint32_t>>> out;
  for (const LayerSpec* l : graph.parametric_layers()) {
    const Shape w = l->kind == LayerKind::conv
                        ? Shape{l->out_channels, l->in_channels, l->kernel, l->kernel}
                        : Shape{l->in_channels, l->out_channels, l->kernel, l->kernel};
    out.emplace_back(l->name + ".weight", dims_of(w));
    out.emplace_back(l->name + ".bias",
                     std::vector<std::uint32_t>{static_cast<std::uint32_t>(l->out_channels)});
  }
  return out;
}

/// Matches `tensors` against the graph's layout; returns them in buffer order.
std::vector<const NamedTensor*> match_layout(const ModelGraph& graph,
                                             const std::vector<NamedTensor>& tensors,
                                             const std::string& what) {
  std::set<std::string> seen;
  for (const auto& t : tensors) {
    if (!seen.insert(t.name).second) throw FormatError(what + ": duplicate tensor '" + t.name + "'");
  }
  std::vector<const NamedTensor*> out;
  for (const auto& [name, dims] : expected_layout(graph)) {
    const NamedTensor* found = nullptr;
    for (const auto& t : tensors) {
      if (t.name == name) found = &t;
    }
    if (!found) throw FormatError(what + ": missing parameter '" + name + "'");
    if (found->dims != dims) throw FormatError(what + ": parameter '" + name + "' has wrong shape");
    out.push_back(found);
  }
  if (out.size() != tensors.size()) throw FormatError(what + ": unexpected extra tensors");
  return out;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) write_tensor(w, t);
  if (ckpt.adam) {
    if (ckpt.adam->m.size() != ckpt.adam->v.size()) {
      throw FormatError("checkpoint: Adam m and v differ in length");
    }
    w.bytes(kAdamTag);
    w.u64(ckpt.adam->step);
    w.u32(static_cast<std::uint32_t>(ckpt.adam->m.size()));
    for (const auto& t : ckpt.adam->m) write_tensor(w, t);
    for (const auto& t : ckpt.adam->v) write_tensor(w, t);
  }
  w.u32(ckpt.epoch);
  w.u64(ckpt.seed);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  auto magic = r.take(sizeof kCheckpointMagic);
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("checkpoint: bad magic (expected LDFCN001)");
  }
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) ckpt.tensors.push_back(read_tensor(r));
  if (r.peek_equals(kAdamTag)) {
    r.take(kAdamTag.size());
    AdamSnapshot adam;
    adam.step = r.u64();
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) adam.m.push_back(read_tensor(r));
    for (std::uint32_t i = 0; i < n; ++i) adam.v.push_back(read_tensor(r));
    ckpt.adam = std::move(adam);
  }
  ckpt.epoch = r.u32();
  ckpt.seed = r.u64();
  if (r.remaining() != 0) {
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <class T>
Checkpoint make_checkpoint(const ModelGraph& graph, const ModelParams<T>& params,
                           const AdamState<T>* adam, std::uint32_t epoch, std::uint64_t seed) {
  const auto layout = expected_layout(graph);
  const auto buffers = params.buffers();
  if (buffers.size() != layout.size()) throw ShapeError("parameters do not match the model graph");
  Checkpoint ckpt;
  ckpt.epoch = epoch;
  ckpt.seed = seed;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    ckpt.tensors.push_back(to_named<T>(layout[k].first, layout[k].second, buffers[k]));
  }
  if (adam && adam->step > 0) {
    if (adam->m.size() != layout.size()) throw ShapeError("optimizer state does not match graph");
    AdamSnapshot snap;
    snap.step = adam->step;
    for (std::size_t k = 0; k < layout.size(); ++k) {
      snap.m.push_back(to_named<T>(layout[k].first, layout[k].second, adam->m[k]));
      snap.v.push_back(to_named<T>(layout[k].first, layout[k].second, adam->v[k]));
    }
    ckpt.adam = std::move(snap);
  }
  return ckpt;
}

ModelParams<float> params_from_checkpoint(const ModelGraph& graph, const Checkpoint& ckpt) {
  const auto ordered = match_layout(graph, ckpt.tensors, "checkpoint");
  ModelParams<float> params;
  std::size_t k = 0;
  for (const LayerSpec* l : graph.parametric_layers()) {
    const NamedTensor* w = ordered[k++];
    const NamedTensor* b = ordered[k++];
    ConvParams<float> p;
    p.weights = TensorF(Shape{w->dims[0], w->dims[1], w->dims[2], w->dims[3]}, w->values);
    p.bias = b->values;
    p.stride = l->stride;
    p.padding = l->padding;
    params.layers.push_back(std::move(p));
  }
  return params;
}

void restore_adam(const ModelGraph& graph, const Checkpoint& ckpt, AdamState<float>& state) {
  if (!ckpt.adam) return;
  const auto m = match_layout(graph, ckpt.adam->m, "checkpoint Adam m");
  const auto v = match_layout(graph, ckpt.adam->v, "checkpoint Adam v");
  state.m.clear();
  state.v.clear();
  for (std::size_t k = 0; k < m.size(); ++k) {
    state.m.push_back(m[k]->values);
    state.v.push_back(v[k]->values);
  }
  state.step = ckpt.adam->step;
}

ModelConfig config_from_checkpoint(const Checkpoint& ckpt, std::size_t height, std::size_t width,
                                   double dropout_rate) {
  const NamedTensor* first = ckpt.find("enc1.weight");
  if (!first || first->dims.size() != 4 || first->dims[0] == 0 || first->dims[0] % 8 != 0) {
    throw FormatError("checkpoint: cannot infer network width from 'enc1.weight'");
  }
  ModelConfig config;
  config.height = height;
  config.width = width;
  config.filter_scale = first->dims[0] / 8;
  config.dropout_rate = dropout_rate;
  return config;
}

template Checkpoint make_checkpoint(const ModelGraph&, const ModelParams<float>&,
                                    const AdamState<float>*, std::uint32_t, std::uint64_t);
template Checkpoint make_checkpoint(const ModelGraph&, const ModelParams<double>&,
                                    const AdamState<double>*, std::uint32_t, std::uint64_t);

}  // namespace lanedetect
