#pragma once

#include "pgcan/grid_encoder.hpp"
#include "pgcan/model.hpp"
#include "pgcan/random.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pgcan {

struct DecoderSpec {
  int layers = 3;
  int width = 64;
  ad::Activation activation = ad::Activation::Tanh;
  /// Activation of the attention gates z^k.
  ad::Activation gate = ad::Activation::Tanh;
  int outputs = 1;

  void validate() const;
};

/// Graph handles of an attention decoder's weights.
struct AttentionWeights {
  ad::Var input_weight, input_bias;
  std::vector<ad::Var> gate_weights, gate_biases;
  ad::Var output_weight, output_bias;
};

/// Gated decoder:
///   h1 = s(W_in x + b_in)
///   z_k = g(W_k h_k + b_k)
///   h_{k+1} = (1 - z_k) * phi1 + z_k * phi2
///   out = W h_{L+1} + b
/// phi1, phi2 and every hidden state share the decoder width; a mismatch is a
/// ConfigError.
ad::Var attention_decode(ad::Var phi1, ad::Var phi2, ad::Var input, const AttentionWeights& w,
                         const DecoderSpec& spec, const ad::JetLayout& layout);

/// Plain tanh (or other activation) feed-forward network.
class MlpModel final : public Model {
 public:
  MlpModel(int input_dim, int output_dim, std::vector<int> hidden, ad::Activation act, Rng& rng);

  std::string kind() const override { return "vpinn"; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<MlpModel>(*this); }

 protected:
  ad::Var evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const override;

 private:
  std::vector<int> hidden_;
  ad::Activation act_;
};

/// Attention network whose projections phi1, phi2 come from dense layers on
/// the coordinates.
class M4Model final : public Model {
 public:
  M4Model(int input_dim, DecoderSpec decoder, Rng& rng);

  std::string kind() const override { return "m4"; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<M4Model>(*this); }
  const DecoderSpec& decoder() const { return decoder_; }

 protected:
  ad::Var evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const override;

 private:
  DecoderSpec decoder_;
};

/// Convolved parametric grid encoder feeding an attention decoder: the two
/// halves of the encoded feature vector play the roles of phi1 and phi2.
class PgcanModel final : public Model {
 public:
  PgcanModel(GridSpec grid, DecoderSpec decoder, Rng& rng);

  std::string kind() const override { return "pgcan"; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<PgcanModel>(*this); }

  const GridSpec& grid() const { return grid_; }
  const DecoderSpec& decoder() const { return decoder_; }
  /// True when N_f / 2 != decoder width and a dense adapter is inserted.
  bool has_adapter() const { return adapter_; }

  /// Encoder output (f1 | f2), summed over repetitions, at unit-box points.
  Matrix encode_features(const Matrix& points) const;

 protected:
  void prepare(BoundModel& bound) const override;
  ad::Var evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const override;

 private:
  GridSpec grid_;
  DecoderSpec decoder_;
  bool adapter_ = false;
};

/// Unconvolved multi-grid encoder with a shallow dense decoder.
class PixelModel final : public Model {
 public:
  PixelModel(GridSpec grid, std::vector<int> hidden, int outputs, Rng& rng);

  std::string kind() const override { return "pixel"; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<PixelModel>(*this); }
  const GridSpec& grid() const { return grid_; }

 protected:
  ad::Var evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const override;

 private:
  GridSpec grid_;
  std::vector<int> hidden_;
};

std::unique_ptr<Model> build_pgcan(const GridSpec& grid, const DecoderSpec& decoder, Rng& rng);
std::unique_ptr<Model> build_vpinn(int input_dim, int outputs, Rng& rng, int layers = 8, int width = 40);
std::unique_ptr<Model> build_m4(int input_dim, int outputs, Rng& rng, int layers = 4, int width = 40);
std::unique_ptr<Model> build_pixel(int input_dim, int outputs, Rng& rng, int vertices = 16, int n_features = 4,
                                   int n_rep = 96, int width = 16);

/// Name plus optional overrides of an architecture's published defaults.
struct ArchitectureConfig {
  std::string name = "pgcan";
  std::optional<int> layers;
  std::optional<int> width;
  std::optional<int> grid_vertices;
  std::optional<int> n_features;
  std::optional<int> n_rep;
  std::optional<std::string> gate;  // "tanh" or "sigmoid"
};

/// {"pgcan", "vpinn", "m4", "pixel"}.
const std::vector<std::string>& architecture_names();

/// Copy with every setting of the named architecture filled in. Throws
/// ConfigError for unknown names or settings the architecture lacks.
ArchitectureConfig resolve_architecture(const ArchitectureConfig& config);

/// Throws ConfigError for unknown names or invalid overrides.
std::unique_ptr<Model> build_architecture(const ArchitectureConfig& config, int input_dim, int outputs, Rng& rng);

/// Whether the architecture trains with dynamic loss weights by default.
bool uses_dynamic_weights(const std::string& name);

ad::Activation parse_activation(const std::string& name);

}  // namespace pgcan
