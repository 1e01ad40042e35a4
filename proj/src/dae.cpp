// src/dae.cpp

// Copyright 2026 The xmodal Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xmodal/dae.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"

namespace xmodal {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and feature I/O assume a little-endian host");

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kAcoustic: return "acoustic";
    case Modality::kVisual: return "visual";
    case Modality::kLexical: return "lexical";
  }
  return "?";
}

DAEConfig DAEConfig::full() {
  DAEConfig c;
  c.latent_dim = 128;
  c.acoustic = {1582, {512, 256}};
  c.visual.steps = 18;
  c.visual.features = 342;
  c.visual.convs = {{16, 4, 2, 1}, {64, 5, 2, 1}, {32, 3, 3, 1}};
  c.visual.hidden = {};
  c.lexical.steps = 22;
  c.lexical.features = 1024;
  c.lexical.convs = {{64, 4, 2, 1}, {4, 4, 3, 1}};
  c.lexical.hidden = {512};
  return c;
}

DAEConfig DAEConfig::toy() {
  DAEConfig c;
  c.latent_dim = 16;
  c.acoustic = {64, {32}};
  c.visual = {6, 16, 2, 1, {{4, 4, 2, 1}, {8, 3, 3, 1}}, {}, true};
  c.lexical = {8, 32, 2, 1, {{8, 4, 2, 1}, {4, 4, 3, 1}}, {32}, true};
  return c;
}

void DAEConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("dae config: ") + what + " must be positive");
  };
  positive(latent_dim, "latent_dim");
  positive(acoustic.features, "acoustic.features");
  for (std::size_t h : acoustic.hidden) positive(h, "acoustic.hidden");
  for (const SequenceConfig* s : {&visual, &lexical}) {
    positive(s->steps, "steps");
    positive(s->features, "features");
    positive(s->heads, "heads");
    if (s->heads > s->features) throw ConfigError("dae config: more heads than features");
    if (s->convs.empty()) throw ConfigError("dae config: sequence model needs a convolution");
    for (const auto& c : s->convs) {
      positive(c.out_channels, "conv channels");
      positive(c.kernel, "conv kernel");
      positive(c.stride, "conv stride");
    }
    for (std::size_t h : s->hidden) positive(h, "hidden");
  }
}

// ---------------------------------------------------------------------------

AcousticDAE::AcousticDAE(const AcousticConfig& config, std::size_t latent_dim,
                         ParameterSet& params, Rng& rng)
    : config_(config), latent_dim_(latent_dim) {
  std::vector<std::size_t> widths{config.features};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(latent_dim);
  encoder_ = nn::Mlp::make(params, "acoustic.enc", widths, false, rng);
  std::vector<std::size_t> back(widths.rbegin(), widths.rend());
  decoder_ = nn::Mlp::make(params, "acoustic.dec", back, false, rng);
}

Var AcousticDAE::encode(Graph& g, Var x) const {
  if (x.shape().size() != 2 || x.shape()[1] != config_.features)
    throw ShapeError("acoustic: expected input [Bx" + std::to_string(config_.features) +
                     "], got " + shape_str(x.shape()));
  return encoder_(g, x);
}

Var AcousticDAE::decode(Graph& g, Var z) const {
  if (z.shape().size() != 2 || z.shape()[1] != latent_dim_)
    throw ShapeError("acoustic: expected latent [Bx" + std::to_string(latent_dim_) + "], got " +
                     shape_str(z.shape()));
  return decoder_(g, z);
}

// ---------------------------------------------------------------------------

SequenceDAE::SequenceDAE(Modality modality, const SequenceConfig& config, std::size_t latent_dim,
                         ParameterSet& params, Rng& rng)
    : modality_(modality), config_(config), latent_dim_(latent_dim) {
  const std::string name(modality_name(modality));
  const std::size_t e = config.features;
  positions_ = sinusoidal_positions(config.steps, e);

  shapes_.push_back({1, config.steps, e});
  for (std::size_t i = 0; i < config.convs.size(); ++i) {
    const ConvSpec& c = config.convs[i];
    kernels::ConvGeometry geo;
    geo.in_channels = shapes_.back()[0];
    geo.in_h = shapes_.back()[1];
    geo.in_w = shapes_.back()[2];
    geo.out_channels = c.out_channels;
    geo.kernel_h = geo.kernel_w = c.kernel;
    geo.stride = c.stride;
    geo.pad = c.pad;
    geo.infer_output();
    convs_.push_back(nn::Conv2d::make(params, name + ".conv" + std::to_string(i), geo.in_channels,
                                      c.out_channels, c.kernel, c.stride, c.pad, rng));
    shapes_.push_back({c.out_channels, geo.out_h, geo.out_w});
  }
  for (std::size_t b = 0; b < config.blocks; ++b)
    enc_blocks_.push_back(nn::TransformerBlock::make(
        params, name + ".enc.block" + std::to_string(b), e, config.heads, rng));

  std::vector<std::size_t> widths{flat_size()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(latent_dim);
  enc_proj_ = nn::Mlp::make(params, name + ".enc.proj", widths, false, rng);
  std::vector<std::size_t> back(widths.rbegin(), widths.rend());
  dec_proj_ = nn::Mlp::make(params, name + ".dec.proj", back, true, rng);

  for (std::size_t i = config.convs.size(); i-- > 0;) {
    const ConvSpec& c = config.convs[i];
    const Shape& from = shapes_[i + 1];
    const Shape& to = shapes_[i];
    auto d = nn::Deconv2d::make(params, name + ".deconv" + std::to_string(i), from[0], to[0],
                                c.kernel, c.stride, c.pad, rng);
    auto output_pad = [&](std::size_t in, std::size_t target) {
      const long base = static_cast<long>((in - 1) * c.stride + c.kernel) - 2 * static_cast<long>(c.pad);
      const long op = static_cast<long>(target) - base;
      if (op < 0 || op >= static_cast<long>(c.stride))
        throw ConfigError(name + ": transposed convolution cannot restore size " +
                          std::to_string(target) + " from " + std::to_string(in));
      return static_cast<std::size_t>(op);
    };
    d.output_pad_h = output_pad(from[1], to[1]);
    d.output_pad_w = output_pad(from[2], to[2]);
    deconvs_.push_back(d);
  }
  for (std::size_t b = 0; b < config.blocks; ++b)
    dec_blocks_.push_back(nn::TransformerBlock::make(
        params, name + ".dec.block" + std::to_string(b), e, config.heads, rng));
  output_ = nn::Linear::make(params, name + ".out", e, e, rng);
}

Var SequenceDAE::add_positions(Graph& g, Var x) const {
  const std::size_t batch = x.shape()[0];
  Tensor tiled({batch, config_.steps, config_.features});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy(positions_.data().begin(), positions_.data().end(),
              tiled.data().begin() + static_cast<std::ptrdiff_t>(b * positions_.size()));
  return ops::add(x, g.constant(std::move(tiled)));
}

Var SequenceDAE::encode(Graph& g, Var x, const std::vector<std::uint8_t>& key_mask,
                        std::vector<Shape>* trace) const {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] != config_.steps || s[2] != config_.features)
    throw ShapeError(std::string(modality_name(modality_)) + ": expected input [Bx" +
                     std::to_string(config_.steps) + "x" + std::to_string(config_.features) +
                     "], got " + shape_str(s));
  const std::size_t batch = s[0];
  static const std::vector<std::uint8_t> kNoMask;
  const auto& mask = config_.padding_mask ? key_mask : kNoMask;
  Var h = add_positions(g, x);
  for (const auto& block : enc_blocks_) h = block(g, h, mask);
  h = ops::reshape(h, {batch, 1, config_.steps, config_.features});
  for (const auto& conv : convs_) {
    h = ops::relu(conv(g, h));
    if (trace) trace->push_back(Shape(h.shape().begin() + 1, h.shape().end()));
  }
  h = ops::reshape(h, {batch, flat_size()});
  return enc_proj_(g, h);
}

Var SequenceDAE::decode(Graph& g, Var z, std::vector<Shape>* trace) const {
  if (z.shape().size() != 2 || z.shape()[1] != latent_dim_)
    throw ShapeError(std::string(modality_name(modality_)) + ": expected latent [Bx" +
                     std::to_string(latent_dim_) + "], got " + shape_str(z.shape()));
  const std::size_t batch = z.shape()[0];
  const Shape& b = bottleneck();
  Var h = ops::reshape(dec_proj_(g, z), {batch, b[0], b[1], b[2]});
  if (trace) trace->push_back(b);
  for (std::size_t i = 0; i < deconvs_.size(); ++i) {
    h = deconvs_[i](g, h);
    if (i + 1 < deconvs_.size()) h = ops::relu(h);
    if (trace) trace->push_back(Shape(h.shape().begin() + 1, h.shape().end()));
  }
  h = add_positions(g, ops::reshape(h, {batch, config_.steps, config_.features}));
  for (const auto& block : dec_blocks_) h = block(g, h);
  return output_(g, h);
}

// ---------------------------------------------------------------------------

Var reconstruction_target(Modality m, Var x) {
  if (m == Modality::kAcoustic) return x;
  return ops::reverse_along_axis(x, 1);
}

Var reconstruction_loss(Var x_hat, Var target) {
  if (x_hat.shape() != target.shape())
    throw ShapeError("reconstruction_loss: expected " + shape_str(target.shape()) + ", got " +
                     shape_str(x_hat.shape()));
  return ops::mse(x_hat, target);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'X', 'M', 'O', 'D', 'A', 'L', 'C', 'K'};

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError("checkpoint " + path.string() + ": truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::string_view config_text,
                     const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint " + path.string() + ": cannot open for writing");
  out.write(kMagic, sizeof kMagic);
  put_u64(out, kCheckpointVersion);
  put_u64(out, config_text.size());
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  const auto all = params.all();
  put_u64(out, all.size());
  for (const Parameter* p : all) {
    put_u64(out, p->name.size());
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u64(out, p->value.rank());
    for (std::size_t d : p->value.shape()) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(p->value.ptr()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint " + path.string() + ": write failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint " + path.string() + ": cannot open");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError("checkpoint " + path.string() + ": bad magic");
  const std::uint64_t version = get_u64(in, path);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint " + path.string() + ": unsupported version " +
                  std::to_string(version));
  Checkpoint ck;
  const std::uint64_t text_len = get_u64(in, path);
  if (text_len > (1u << 26)) throw IoError("checkpoint " + path.string() + ": bad header");
  ck.config_text.resize(text_len);
  if (!in.read(ck.config_text.data(), static_cast<std::streamsize>(text_len)))
    throw IoError("checkpoint " + path.string() + ": truncated");
  const std::uint64_t count = get_u64(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = get_u64(in, path);
    if (name_len > 4096) throw IoError("checkpoint " + path.string() + ": bad record");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw IoError("checkpoint " + path.string() + ": truncated");
    const std::uint64_t rank = get_u64(in, path);
    if (rank > 8) throw IoError("checkpoint " + path.string() + ": bad rank for " + name);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) {
      const std::uint64_t d = get_u64(in, path);
      if (d == 0 || d > (1u << 28)) throw IoError("checkpoint " + path.string() + ": bad dims for " + name);
      shape.push_back(d);
    }
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.ptr()),
                 static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw IoError("checkpoint " + path.string() + ": truncated in " + name);
    ck.params.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void load_parameters(const Checkpoint& checkpoint, ParameterSet& params) {
  if (checkpoint.params.size() != params.size())
    throw IoError("checkpoint: " + std::to_string(checkpoint.params.size()) +
                  " parameters, model has " + std::to_string(params.size()));
  for (const auto& [name, value] : checkpoint.params) {
    Parameter* p = params.find(name);
    if (!p) throw IoError("checkpoint: unknown parameter " + name);
    if (p->value.shape() != value.shape())
      throw IoError("checkpoint: " + name + " has shape " + shape_str(value.shape()) +
                    ", model expects " + shape_str(p->value.shape()));
    p->value = value;
  }
}

}  // namespace xmodal
