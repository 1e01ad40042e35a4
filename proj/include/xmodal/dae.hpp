// include/xmodal/dae.hpp

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

// Per-modality auto-encoders.
//
// The acoustic model is a symmetric stack of linear layers over one feature
// vector per utterance. The visual and lexical models read a [T, F] feature
// sequence: self-attention blocks, then the sequence treated as a one-channel
// T x F image goes through strided convolutions, is flattened and projected
// to the latent. Decoding mirrors every stage; the transposed convolutions
// pick their output padding so each one restores the exact shape its
// counterpart consumed.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xmodal/layers.hpp"

namespace xmodal {

enum class Modality { kAcoustic, kVisual, kLexical };

std::string_view modality_name(Modality m);

struct ConvSpec {
  std::size_t out_channels = 1, kernel = 1, stride = 1, pad = 0;
};

struct AcousticConfig {
  std::size_t features = 1582;
  std::vector<std::size_t> hidden{512, 256};
};

struct SequenceConfig {
  std::size_t steps = 1, features = 1;
  std::size_t heads = 4, blocks = 2;
  std::vector<ConvSpec> convs;
  std::vector<std::size_t> hidden;  // linear widths between flatten and latent
  bool padding_mask = false;
};

struct DAEConfig {
  std::size_t latent_dim = 128;
  AcousticConfig acoustic;
  SequenceConfig visual, lexical;

  static DAEConfig full();
  static DAEConfig toy();
  /// Throws ConfigError on non-positive sizes.
  void validate() const;
};

class AcousticDAE {
 public:
  AcousticDAE(const AcousticConfig& config, std::size_t latent_dim, ParameterSet& params, Rng& rng);

  /// x [B, F] -> z [B, d].
  Var encode(Graph& g, Var x) const;
  /// z [B, d] -> x_hat [B, F].
  Var decode(Graph& g, Var z) const;

  std::size_t features() const { return config_.features; }
  std::size_t latent_dim() const { return latent_dim_; }

 private:
  AcousticConfig config_;
  std::size_t latent_dim_;
  nn::Mlp encoder_, decoder_;
};

class SequenceDAE {
 public:
  SequenceDAE(Modality modality, const SequenceConfig& config, std::size_t latent_dim,
              ParameterSet& params, Rng& rng);

  /// x [B, T, F] -> z [B, d]. `key_mask` (B*T entries, 1 = real step) is
  /// used only when the config enables the padding mask. When `trace` is
  /// given it receives the per-sample [C, H, W] shape after each convolution.
  Var encode(Graph& g, Var x, const std::vector<std::uint8_t>& key_mask = {},
             std::vector<Shape>* trace = nullptr) const;
  /// z [B, d] -> x_hat [B, T, F]. `trace` receives the [C, H, W] shape after
  /// the reshape and after each transposed convolution.
  Var decode(Graph& g, Var z, std::vector<Shape>* trace = nullptr) const;

  Modality modality() const { return modality_; }
  const SequenceConfig& config() const { return config_; }
  /// [C, H, W] after the last convolution, fixed at construction.
  const Shape& bottleneck() const { return shapes_.back(); }
  std::size_t flat_size() const { return numel(shapes_.back()); }

 private:
  Var add_positions(Graph& g, Var x) const;

  Modality modality_;
  SequenceConfig config_;
  std::size_t latent_dim_;
  std::vector<Shape> shapes_;  // [1,T,F] then one entry per convolution
  Tensor positions_;
  std::vector<nn::TransformerBlock> enc_blocks_, dec_blocks_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::Deconv2d> deconvs_;  // applied in order, mirroring convs_
  nn::Mlp enc_proj_, dec_proj_;
  nn::Linear output_;
};

/// Acoustic: x itself. Visual/lexical: x reversed along time (axis 1 of a
/// [B, T, F] batch).
Var reconstruction_target(Modality m, Var x);

/// Mean squared error between x_hat and the target; throws ShapeError on a
/// shape mismatch.
Var reconstruction_loss(Var x_hat, Var target);

// Checkpoints: "XMODALCK", u64 format version, u64 length + config text,
// u64 parameter count, then per parameter u64 name length, name bytes,
// u64 rank, rank x u64 dims, values as f64. All integers and reals are
// little-endian.

inline constexpr std::uint64_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> params;
};

void save_checkpoint(const std::filesystem::path& path, std::string_view config_text,
                     const ParameterSet& params);
/// Throws IoError on a malformed or truncated file.
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Copies values into `params`; names and shapes must match exactly.
void load_parameters(const Checkpoint& checkpoint, ParameterSet& params);

}  // namespace xmodal
