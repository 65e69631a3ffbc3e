#include "pgcan/architectures.hpp"

#include "pgcan/errors.hpp"

#include <algorithm>

namespace pgcan {

namespace {

Matrix dense_weight(int in, int out, Rng& rng) {
  Matrix w(in, out);
  glorot_uniform(w, rng);
  return w;
}

Matrix zero_bias(int out) { return Matrix::Zero(1, out); }

// Recovers the seed (unit-box points and directions) from an input jet.
JetSeed seed_from_input(ad::Var input, const ad::JetLayout& layout) {
  const Matrix& in = input.value();
  const Eigen::Index n = layout.points;
  JetSeed s;
  s.points = in.topRows(n);
  s.order = layout.order;
  s.directions.resize(layout.directions, in.cols());
  for (int k = 0; k < layout.directions; ++k) s.directions.row(k) = in.row(layout.first(k) * n);
  return s;
}

}  // namespace

void DecoderSpec::validate() const {
  if (layers < 1) throw ConfigError("decoder: layers must be >= 1");
  if (width < 1) throw ConfigError("decoder: width must be >= 1");
  if (outputs < 1) throw ConfigError("decoder: outputs must be >= 1");
}

ad::Var attention_decode(ad::Var phi1, ad::Var phi2, ad::Var input, const AttentionWeights& w,
                         const DecoderSpec& spec, const ad::JetLayout& layout) {
  if (phi1.cols() != spec.width || phi2.cols() != spec.width) {
    throw ConfigError("attention decoder: projection width " + std::to_string(phi1.cols()) + "/" +
                      std::to_string(phi2.cols()) + " does not match decoder width " + std::to_string(spec.width));
  }
  if (static_cast<int>(w.gate_weights.size()) != spec.layers) {
    throw ConfigError("attention decoder: expected one gate per layer");
  }
  ad::Var h = ad::jet_activation(ad::jet_linear(input, w.input_weight, w.input_bias, layout), spec.activation, layout);
  if (h.cols() != spec.width) throw ConfigError("attention decoder: hidden width mismatch");
  const ad::Var diff = ad::sub(phi2, phi1);
  for (int k = 0; k < spec.layers; ++k) {
    const ad::Var z =
        ad::jet_activation(ad::jet_linear(h, w.gate_weights[k], w.gate_biases[k], layout), spec.gate, layout);
    // (1 - z) phi1 + z phi2 == phi1 + z (phi2 - phi1)
    h = ad::add(phi1, ad::jet_mul(z, diff, layout));
  }
  return ad::jet_linear(h, w.output_weight, w.output_bias, layout);
}

// --- vPINN ------------------------------------------------------------------

MlpModel::MlpModel(int input_dim, int output_dim, std::vector<int> hidden, ad::Activation act, Rng& rng)
    : Model(input_dim, output_dim), hidden_(std::move(hidden)), act_(act) {
  int in = input_dim;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    if (hidden_[l] < 1) throw ConfigError("mlp: hidden width must be >= 1");
    add_parameter("hidden" + std::to_string(l) + ".weight", dense_weight(in, hidden_[l], rng));
    add_parameter("hidden" + std::to_string(l) + ".bias", zero_bias(hidden_[l]));
    in = hidden_[l];
  }
  add_parameter("output.weight", dense_weight(in, output_dim, rng));
  add_parameter("output.bias", zero_bias(output_dim));
}

ad::Var MlpModel::evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const {
  ad::Var h = input;
  std::size_t p = 0;
  for (std::size_t l = 0; l < hidden_.size(); ++l, p += 2) {
    h = ad::jet_activation(ad::jet_linear(h, bound.parameter(p), bound.parameter(p + 1), layout), act_, layout);
  }
  return ad::jet_linear(h, bound.parameter(p), bound.parameter(p + 1), layout);
}

// --- M4 ---------------------------------------------------------------------

M4Model::M4Model(int input_dim, DecoderSpec decoder, Rng& rng)
    : Model(input_dim, decoder.outputs), decoder_(decoder) {
  decoder_.validate();
  const int w = decoder_.width;
  add_parameter("phi1.weight", dense_weight(input_dim, w, rng));
  add_parameter("phi1.bias", zero_bias(w));
  add_parameter("phi2.weight", dense_weight(input_dim, w, rng));
  add_parameter("phi2.bias", zero_bias(w));
  add_parameter("decoder.input.weight", dense_weight(input_dim, w, rng));
  add_parameter("decoder.input.bias", zero_bias(w));
  for (int k = 0; k < decoder_.layers; ++k) {
    add_parameter("decoder.gate" + std::to_string(k + 1) + ".weight", dense_weight(w, w, rng));
    add_parameter("decoder.gate" + std::to_string(k + 1) + ".bias", zero_bias(w));
  }
  add_parameter("decoder.output.weight", dense_weight(w, decoder_.outputs, rng));
  add_parameter("decoder.output.bias", zero_bias(decoder_.outputs));
}

ad::Var M4Model::evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const {
  const ad::Activation act = decoder_.activation;
  ad::Var phi1 = ad::jet_activation(ad::jet_linear(input, bound.parameter(0), bound.parameter(1), layout), act, layout);
  ad::Var phi2 = ad::jet_activation(ad::jet_linear(input, bound.parameter(2), bound.parameter(3), layout), act, layout);
  AttentionWeights w;
  w.input_weight = bound.parameter(4);
  w.input_bias = bound.parameter(5);
  std::size_t p = 6;
  for (int k = 0; k < decoder_.layers; ++k, p += 2) {
    w.gate_weights.push_back(bound.parameter(p));
    w.gate_biases.push_back(bound.parameter(p + 1));
  }
  w.output_weight = bound.parameter(p);
  w.output_bias = bound.parameter(p + 1);
  return attention_decode(phi1, phi2, input, w, decoder_, layout);
}

// --- PGCAN ------------------------------------------------------------------
//
// Parameter order: encoder.features, encoder.kernels, [adapter1, adapter2],
// decoder.input, decoder.gate1..L, decoder.output.

PgcanModel::PgcanModel(GridSpec grid, DecoderSpec decoder, Rng& rng)
    : Model(grid.dims, decoder.outputs), grid_(std::move(grid)), decoder_(decoder) {
  grid_.validate();
  decoder_.validate();
  if (!grid_.convolve) throw ConfigError("pgcan: encoder must convolve its features");
  if (grid_.n_features % 2 != 0) throw ConfigError("pgcan: n_features must be even to split into f1/f2");
  const int half = grid_.n_features / 2;
  const int w = decoder_.width;
  adapter_ = half != w;

  add_parameter("encoder.features", initial_features(grid_, rng));
  add_parameter("encoder.kernels", initial_kernels(grid_, rng));
  if (adapter_) {
    add_parameter("adapter1.weight", dense_weight(half, w, rng));
    add_parameter("adapter1.bias", zero_bias(w));
    add_parameter("adapter2.weight", dense_weight(half, w, rng));
    add_parameter("adapter2.bias", zero_bias(w));
  }
  add_parameter("decoder.input.weight", dense_weight(grid_.dims, w, rng));
  add_parameter("decoder.input.bias", zero_bias(w));
  for (int k = 0; k < decoder_.layers; ++k) {
    add_parameter("decoder.gate" + std::to_string(k + 1) + ".weight", dense_weight(w, w, rng));
    add_parameter("decoder.gate" + std::to_string(k + 1) + ".bias", zero_bias(w));
  }
  add_parameter("decoder.output.weight", dense_weight(w, decoder_.outputs, rng));
  add_parameter("decoder.output.bias", zero_bias(decoder_.outputs));
}

void PgcanModel::prepare(BoundModel& bound) const {
  bound.cache().push_back(convolve(grid_, bound.parameter(0), bound.parameter(1)));
}

ad::Var PgcanModel::evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const {
  const ad::Var table = bound.cache().at(0);
  const ad::Var f = ad::gather(table, interpolation_plan(grid_, seed_from_input(input, layout)));
  const int half = grid_.n_features / 2;
  ad::Var phi1 = ad::cols(f, 0, half);
  ad::Var phi2 = ad::cols(f, half, half);
  std::size_t p = 2;
  if (adapter_) {
    phi1 = ad::jet_activation(ad::jet_linear(phi1, bound.parameter(2), bound.parameter(3), layout),
                              decoder_.activation, layout);
    phi2 = ad::jet_activation(ad::jet_linear(phi2, bound.parameter(4), bound.parameter(5), layout),
                              decoder_.activation, layout);
    p = 6;
  }
  AttentionWeights w;
  w.input_weight = bound.parameter(p);
  w.input_bias = bound.parameter(p + 1);
  p += 2;
  for (int k = 0; k < decoder_.layers; ++k, p += 2) {
    w.gate_weights.push_back(bound.parameter(p));
    w.gate_biases.push_back(bound.parameter(p + 1));
  }
  w.output_weight = bound.parameter(p);
  w.output_bias = bound.parameter(p + 1);
  return attention_decode(phi1, phi2, input, w, decoder_, layout);
}

Matrix PgcanModel::encode_features(const Matrix& points) const {
  const Matrix table = convolve(grid_, parameters()[0].value, parameters()[1].value);
  ad::Graph g;
  const ad::Var t = g.constant(table);
  JetSeed seed{points, Matrix(0, grid_.dims), 0};
  return ad::gather(t, interpolation_plan(grid_, seed)).value();
}

// --- PIXEL ------------------------------------------------------------------

PixelModel::PixelModel(GridSpec grid, std::vector<int> hidden, int outputs, Rng& rng)
    : Model(grid.dims, outputs), grid_(std::move(grid)), hidden_(std::move(hidden)) {
  grid_.convolve = false;
  grid_.validate();
  add_parameter("encoder.features", initial_features(grid_, rng));
  int in = grid_.n_features;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    add_parameter("decoder.hidden" + std::to_string(l) + ".weight", dense_weight(in, hidden_[l], rng));
    add_parameter("decoder.hidden" + std::to_string(l) + ".bias", zero_bias(hidden_[l]));
    in = hidden_[l];
  }
  add_parameter("decoder.output.weight", dense_weight(in, outputs, rng));
  add_parameter("decoder.output.bias", zero_bias(outputs));
}

ad::Var PixelModel::evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const {
  ad::Var h = ad::gather(bound.parameter(0), interpolation_plan(grid_, seed_from_input(input, layout)));
  std::size_t p = 1;
  for (std::size_t l = 0; l < hidden_.size(); ++l, p += 2) {
    h = ad::jet_activation(ad::jet_linear(h, bound.parameter(p), bound.parameter(p + 1), layout),
                           ad::Activation::Tanh, layout);
  }
  return ad::jet_linear(h, bound.parameter(p), bound.parameter(p + 1), layout);
}

// --- builders ---------------------------------------------------------------

std::unique_ptr<Model> build_pgcan(const GridSpec& grid, const DecoderSpec& decoder, Rng& rng) {
  return std::make_unique<PgcanModel>(grid, decoder, rng);
}

std::unique_ptr<Model> build_vpinn(int input_dim, int outputs, Rng& rng, int layers, int width) {
  if (layers < 0 || width < 1) throw ConfigError("vpinn: invalid layers/width");
  return std::make_unique<MlpModel>(input_dim, outputs, std::vector<int>(layers, width), ad::Activation::Tanh, rng);
}

std::unique_ptr<Model> build_m4(int input_dim, int outputs, Rng& rng, int layers, int width) {
  DecoderSpec d;
  d.layers = layers;
  d.width = width;
  d.outputs = outputs;
  return std::make_unique<M4Model>(input_dim, d, rng);
}

std::unique_ptr<Model> build_pixel(int input_dim, int outputs, Rng& rng, int vertices, int n_features, int n_rep,
                                   int width) {
  GridSpec g = GridSpec::uniform(input_dim, vertices, n_features, n_rep, false);
  return std::make_unique<PixelModel>(g, std::vector<int>{width}, outputs, rng);
}

const std::vector<std::string>& architecture_names() {
  static const std::vector<std::string> names{"pgcan", "vpinn", "m4", "pixel"};
  return names;
}

ad::Activation parse_activation(const std::string& name) {
  if (name == "tanh") return ad::Activation::Tanh;
  if (name == "sigmoid") return ad::Activation::Sigmoid;
  if (name == "sin") return ad::Activation::Sin;
  throw ConfigError("unknown activation '" + name + "'");
}

ArchitectureConfig resolve_architecture(const ArchitectureConfig& c) {
  ArchitectureConfig r;
  r.name = c.name;
  auto reject = [&](bool set, const char* field) {
    if (set) throw ConfigError("architecture '" + c.name + "' has no '" + field + "' setting");
  };
  if (c.name == "pgcan") {
    r.layers = c.layers.value_or(3);
    r.width = c.width.value_or(64);
    r.grid_vertices = c.grid_vertices.value_or(9);
    r.n_features = c.n_features.value_or(128);
    r.n_rep = c.n_rep.value_or(2);
    r.gate = c.gate.value_or("tanh");
  } else if (c.name == "vpinn") {
    r.layers = c.layers.value_or(8);
    r.width = c.width.value_or(40);
    reject(c.grid_vertices.has_value(), "grid_vertices");
    reject(c.n_features.has_value(), "n_features");
    reject(c.n_rep.has_value(), "n_rep");
    reject(c.gate.has_value(), "gate");
  } else if (c.name == "m4") {
    r.layers = c.layers.value_or(4);
    r.width = c.width.value_or(40);
    r.gate = c.gate.value_or("tanh");
    reject(c.grid_vertices.has_value(), "grid_vertices");
    reject(c.n_features.has_value(), "n_features");
    reject(c.n_rep.has_value(), "n_rep");
  } else if (c.name == "pixel") {
    r.width = c.width.value_or(16);
    r.grid_vertices = c.grid_vertices.value_or(16);
    r.n_features = c.n_features.value_or(4);
    r.n_rep = c.n_rep.value_or(96);
    reject(c.layers.has_value(), "layers");
    reject(c.gate.has_value(), "gate");
  } else {
    std::string known;
    for (const auto& n : architecture_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown architecture '" + c.name + "' (known: " + known + ")");
  }
  if (r.gate) parse_activation(*r.gate);
  return r;
}

std::unique_ptr<Model> build_architecture(const ArchitectureConfig& config, int input_dim, int outputs, Rng& rng) {
  const ArchitectureConfig c = resolve_architecture(config);
  if (c.name == "pgcan") {
    GridSpec g = GridSpec::uniform(input_dim, *c.grid_vertices, *c.n_features, *c.n_rep, true);
    DecoderSpec d;
    d.layers = *c.layers;
    d.width = *c.width;
    d.outputs = outputs;
    d.gate = parse_activation(*c.gate);
    return build_pgcan(g, d, rng);
  }
  if (c.name == "vpinn") return build_vpinn(input_dim, outputs, rng, *c.layers, *c.width);
  if (c.name == "m4") {
    DecoderSpec d;
    d.layers = *c.layers;
    d.width = *c.width;
    d.outputs = outputs;
    d.gate = parse_activation(*c.gate);
    return std::make_unique<M4Model>(input_dim, d, rng);
  }
  return build_pixel(input_dim, outputs, rng, *c.grid_vertices, *c.n_features, *c.n_rep, *c.width);
}

bool uses_dynamic_weights(const std::string& name) { return name == "pgcan" || name == "m4"; }

}  // namespace pgcan
