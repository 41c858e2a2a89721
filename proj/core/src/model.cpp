#include "wcgan/model.hpp"

#include <iomanip>
#include <sstream>

#include "wcgan/error.hpp"

namespace wcgan {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string layer_prefix(std::size_t index) { return "layer" + std::to_string(index); }

ActivationKind parse_activation(std::string_view s) {
  if (s == "leaky_relu") return ActivationKind::leaky_relu;
  if (s == "tanh") return ActivationKind::tanh;
  if (s == "sigmoid") return ActivationKind::sigmoid;
  if (s == "none") return ActivationKind::none;
  throw SpecError("unknown activation '" + std::string(s) + "'");
}

NetworkKind parse_kind(std::string_view s) {
  if (s == "generator") return NetworkKind::generator;
  if (s == "discriminator") return NetworkKind::discriminator;
  if (s == "classifier") return NetworkKind::classifier;
  throw SpecError("unknown network kind '" + std::string(s) + "'");
}

Shape apply_layer(const LayerDesc& layer, const Shape& in, std::size_t index) {
  auto fail = [&](const std::string& what) {
    return SpecError("layer " + std::to_string(index) + ": " + what + " (input " + shape_to_string(in) + ")");
  };
  return std::visit(
      overloaded{
          [&](const DenseLayer& l) -> Shape {
            if (in.size() != 1 || in[0] != l.in) throw fail("dense expects [" + std::to_string(l.in) + "]");
            if (l.out == 0) throw fail("dense output must be positive");
            return {l.out};
          },
          [&](const ReshapeLayer& l) -> Shape {
            if (shape_numel(l.shape) != shape_numel(in)) throw fail("reshape to " + shape_to_string(l.shape));
            return l.shape;
          },
          [&](const FlattenLayer&) -> Shape { return {shape_numel(in)}; },
          [&](const UpsampleLayer& l) -> Shape {
            if (in.size() != 3) throw fail("upsample expects [C×H×W]");
            if (l.factor < 1) throw fail("upsample factor must be >= 1");
            return {in[0], in[1] * l.factor, in[2] * l.factor};
          },
          [&](const ConvLayer& l) -> Shape {
            if (in.size() != 3 || in[0] != l.in_channels) {
              throw fail("conv expects [" + std::to_string(l.in_channels) + "×H×W]");
            }
            if (l.kernel < 1 || l.stride < 1) throw fail("conv kernel and stride must be >= 1");
            if (in[1] + 2 * l.pad < l.kernel || in[2] + 2 * l.pad < l.kernel) throw fail("conv output below 1");
            return {l.out_channels, (in[1] + 2 * l.pad - l.kernel) / l.stride + 1,
                    (in[2] + 2 * l.pad - l.kernel) / l.stride + 1};
          },
          [&](const BatchNormLayer& l) -> Shape {
            if (in.empty() || in[0] != l.channels) throw fail("batchnorm over " + std::to_string(l.channels));
            if (!(l.eps > 0.0)) throw fail("batchnorm eps must be positive");
            return in;
          },
          [&](const DropoutLayer& l) -> Shape {
            if (!(l.rate >= 0.0 && l.rate < 1.0)) throw fail("dropout rate must lie in [0,1)");
            return in;
          },
          [&](const ActivationLayer& l) -> Shape {
            if (l.kind == ActivationKind::leaky_relu && !(l.slope > 0.0 && l.slope < 1.0)) {
              throw fail("leaky_relu slope must lie in (0,1)");
            }
            return in;
          },
      },
      layer);
}

void append_shape(std::ostringstream& os, const Shape& s) {
  for (auto d : s) os << ' ' << d;
}

Shape read_shape(std::istringstream& is) {
  Shape s;
  std::size_t d;
  while (is >> d) s.push_back(d);
  return s;
}

}  // namespace

std::string to_string(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::generator:
      return "generator";
    case NetworkKind::discriminator:
      return "discriminator";
    case NetworkKind::classifier:
      return "classifier";
  }
  return "?";
}

std::string to_string(CriticVariant variant) { return variant == CriticVariant::dc ? "dc" : "wasserstein"; }

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::leaky_relu:
      return "leaky_relu";
    case ActivationKind::tanh:
      return "tanh";
    case ActivationKind::sigmoid:
      return "sigmoid";
    case ActivationKind::none:
      return "none";
  }
  return "?";
}

CriticVariant parse_variant(std::string_view text) {
  if (text == "dc") return CriticVariant::dc;
  if (text == "wasserstein") return CriticVariant::wasserstein;
  throw SpecError("unknown variant '" + std::string(text) + "' (expected dc or wasserstein)");
}

std::vector<Shape> ModelSpec::shape_trace() const {
  if (input_shape.empty() || shape_numel(input_shape) == 0) throw SpecError("model input shape must be non-empty");
  std::vector<Shape> trace{input_shape};
  for (std::size_t i = 0; i < layers.size(); ++i) trace.push_back(apply_layer(layers[i], trace.back(), i));
  return trace;
}

void ModelSpec::validate() const {
  const auto out = output_shape();
  if (layers.empty()) throw SpecError("model has no layers");
  const auto* last_act = std::get_if<ActivationLayer>(&layers.back());
  if (final_activation == ActivationKind::none) {
    if (last_act) throw SpecError("final_activation is none but the stack ends in an activation");
  } else if (!last_act || last_act->kind != final_activation) {
    throw SpecError("final_activation " + to_string(final_activation) + " does not match the last layer");
  }
  switch (kind) {
    case NetworkKind::generator:
      if (final_activation != ActivationKind::tanh) throw SpecError("generator must end in tanh");
      break;
    case NetworkKind::discriminator:
      if (out != Shape{1}) throw SpecError("discriminator must emit one score per sample");
      if (final_activation != ActivationKind::sigmoid && final_activation != ActivationKind::none) {
        throw SpecError("discriminator head must be sigmoid (dc) or none (wasserstein)");
      }
      break;
    case NetworkKind::classifier:
      if (final_activation != ActivationKind::none) throw SpecError("classifier emits raw logits");
      break;
  }
}

std::string ModelSpec::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "kind " << wcgan::to_string(kind) << '\n';
  os << "latent_dim " << latent_dim << '\n';
  os << "cond_dim " << cond_dim << '\n';
  os << "channels " << channels << '\n';
  os << "base_spatial " << base_spatial << '\n';
  os << "width " << width << '\n';
  os << "final_activation " << wcgan::to_string(final_activation) << '\n';
  os << "input";
  append_shape(os, input_shape);
  os << '\n';
  for (const auto& layer : layers) {
    std::visit(overloaded{
                   [&](const DenseLayer& l) { os << "dense " << l.in << ' ' << l.out; },
                   [&](const ReshapeLayer& l) {
                     os << "reshape";
                     append_shape(os, l.shape);
                   },
                   [&](const FlattenLayer&) { os << "flatten"; },
                   [&](const UpsampleLayer& l) { os << "upsample " << l.factor; },
                   [&](const ConvLayer& l) {
                     os << "conv " << l.in_channels << ' ' << l.out_channels << ' ' << l.kernel << ' ' << l.stride
                        << ' ' << l.pad;
                   },
                   [&](const BatchNormLayer& l) { os << "batchnorm " << l.channels << ' ' << l.eps << ' ' << l.momentum; },
                   [&](const DropoutLayer& l) { os << "dropout " << l.rate; },
                   [&](const ActivationLayer& l) { os << "activation " << wcgan::to_string(l.kind) << ' ' << l.slope; },
               },
               layer);
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

ModelSpec ModelSpec::from_text(std::string_view text) {
  ModelSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto need = [&](auto& v) {
      if (!(ls >> v)) throw SpecError("malformed spec line: '" + line + "'");
    };
    if (key == "kind") {
      std::string v;
      need(v);
      spec.kind = parse_kind(v);
    } else if (key == "latent_dim") {
      need(spec.latent_dim);
    } else if (key == "cond_dim") {
      need(spec.cond_dim);
    } else if (key == "channels") {
      need(spec.channels);
    } else if (key == "base_spatial") {
      need(spec.base_spatial);
    } else if (key == "width") {
      need(spec.width);
    } else if (key == "final_activation") {
      std::string v;
      need(v);
      spec.final_activation = parse_activation(v);
    } else if (key == "input") {
      spec.input_shape = read_shape(ls);
    } else if (key == "dense") {
      DenseLayer l;
      need(l.in);
      need(l.out);
      spec.layers.emplace_back(l);
    } else if (key == "reshape") {
      spec.layers.emplace_back(ReshapeLayer{read_shape(ls)});
    } else if (key == "flatten") {
      spec.layers.emplace_back(FlattenLayer{});
    } else if (key == "upsample") {
      UpsampleLayer l;
      need(l.factor);
      spec.layers.emplace_back(l);
    } else if (key == "conv") {
      ConvLayer l;
      need(l.in_channels);
      need(l.out_channels);
      need(l.kernel);
      need(l.stride);
      need(l.pad);
      spec.layers.emplace_back(l);
    } else if (key == "batchnorm") {
      BatchNormLayer l;
      need(l.channels);
      need(l.eps);
      need(l.momentum);
      spec.layers.emplace_back(l);
    } else if (key == "dropout") {
      DropoutLayer l;
      need(l.rate);
      spec.layers.emplace_back(l);
    } else if (key == "activation") {
      std::string kind;
      ActivationLayer l;
      need(kind);
      need(l.slope);
      l.kind = parse_activation(kind);
      spec.layers.emplace_back(l);
    } else if (key == "end") {
      ended = true;
      break;
    } else {
      throw SpecError("unknown spec key '" + key + "'");
    }
  }
  if (!ended) throw SpecError("spec text missing 'end'");
  spec.validate();
  return spec;
}

ModelSpec generator_spec(std::size_t latent_dim, std::size_t channels, std::size_t base_spatial, std::size_t width,
                         const GeneratorOptions& opts) {
  if (latent_dim < 1 || channels < 1 || base_spatial < 1 || width < 1) {
    throw SpecError("generator dimensions must all be >= 1");
  }
  if (width % 2 != 0) throw SpecError("generator width " + std::to_string(width) + " is not divisible by 2");
  const std::size_t half = width / 2;
  const ActivationLayer lrelu{ActivationKind::leaky_relu, opts.slope};
  ModelSpec s;
  s.kind = NetworkKind::generator;
  s.latent_dim = latent_dim;
  s.channels = channels;
  s.base_spatial = base_spatial;
  s.width = width;
  s.final_activation = ActivationKind::tanh;
  s.input_shape = {latent_dim};
  s.layers = {
      DenseLayer{latent_dim, width * base_spatial * base_spatial},
      lrelu,
      ReshapeLayer{{width, base_spatial, base_spatial}},
      BatchNormLayer{width, opts.first_bn_eps, opts.bn_momentum},
      UpsampleLayer{2},
      ConvLayer{width, width, 3, 1, 1},
      BatchNormLayer{width, opts.bn_eps, opts.bn_momentum},
      lrelu,
      UpsampleLayer{2},
      ConvLayer{width, half, 3, 1, 1},
      BatchNormLayer{half, opts.bn_eps, opts.bn_momentum},
      lrelu,
      ConvLayer{half, channels, 3, 1, 1},
      ActivationLayer{ActivationKind::tanh, opts.slope},
  };
  s.validate();
  return s;
}

ModelSpec discriminator_spec(std::size_t channels, std::size_t input_spatial, std::size_t width,
                             CriticVariant variant, const DiscriminatorOptions& opts) {
  if (channels < 1 || width < 1 || input_spatial < 1) throw SpecError("discriminator dimensions must all be >= 1");
  if (input_spatial % 16 != 0) {
    throw SpecError("discriminator input size " + std::to_string(input_spatial) +
                    " is not divisible by 16 (four stride-2 convolutions)");
  }
  const ActivationLayer lrelu{ActivationKind::leaky_relu, opts.slope};
  const DropoutLayer drop{opts.dropout};
  ModelSpec s;
  s.kind = NetworkKind::discriminator;
  s.channels = channels;
  s.width = width;
  s.input_shape = {channels, input_spatial, input_spatial};
  s.final_activation = variant == CriticVariant::dc ? ActivationKind::sigmoid : ActivationKind::none;

  const std::size_t widths[] = {width, 2 * width, 4 * width, 8 * width};
  std::size_t in_ch = channels;
  for (std::size_t i = 0; i < 4; ++i) {
    s.layers.emplace_back(ConvLayer{in_ch, widths[i], 3, 2, 1});
    s.layers.emplace_back(lrelu);
    s.layers.emplace_back(drop);
    if (i > 0) s.layers.emplace_back(BatchNormLayer{widths[i], opts.bn_eps, opts.bn_momentum});
    in_ch = widths[i];
  }
  s.layers.emplace_back(FlattenLayer{});
  // Size the head from the traced shape rather than a fixed constant.
  const auto flat = s.shape_trace().back()[0];
  s.layers.emplace_back(DenseLayer{flat, 1});
  if (variant == CriticVariant::dc) s.layers.emplace_back(ActivationLayer{ActivationKind::sigmoid, opts.slope});
  s.validate();
  return s;
}

ModelSpec mlp_generator_spec(std::size_t latent_dim, std::size_t out_dim, std::size_t hidden, std::size_t depth,
                             double slope) {
  if (latent_dim < 1 || out_dim < 1 || hidden < 1 || depth < 1) throw SpecError("mlp dimensions must all be >= 1");
  ModelSpec s;
  s.kind = NetworkKind::generator;
  s.latent_dim = latent_dim;
  s.channels = out_dim;
  s.width = hidden;
  s.final_activation = ActivationKind::tanh;
  s.input_shape = {latent_dim};
  std::size_t in = latent_dim;
  for (std::size_t i = 0; i < depth; ++i) {
    s.layers.emplace_back(DenseLayer{in, hidden});
    s.layers.emplace_back(ActivationLayer{ActivationKind::leaky_relu, slope});
    in = hidden;
  }
  s.layers.emplace_back(DenseLayer{in, out_dim});
  s.layers.emplace_back(ActivationLayer{ActivationKind::tanh, slope});
  s.validate();
  return s;
}

ModelSpec mlp_discriminator_spec(std::size_t in_dim, std::size_t hidden, std::size_t depth, CriticVariant variant,
                                 double slope) {
  if (in_dim < 1 || hidden < 1 || depth < 1) throw SpecError("mlp dimensions must all be >= 1");
  ModelSpec s;
  s.kind = NetworkKind::discriminator;
  s.channels = in_dim;
  s.width = hidden;
  s.final_activation = variant == CriticVariant::dc ? ActivationKind::sigmoid : ActivationKind::none;
  s.input_shape = {in_dim};
  std::size_t in = in_dim;
  for (std::size_t i = 0; i < depth; ++i) {
    s.layers.emplace_back(DenseLayer{in, hidden});
    s.layers.emplace_back(ActivationLayer{ActivationKind::leaky_relu, slope});
    in = hidden;
  }
  s.layers.emplace_back(DenseLayer{in, 1});
  if (variant == CriticVariant::dc) s.layers.emplace_back(ActivationLayer{ActivationKind::sigmoid, slope});
  s.validate();
  return s;
}

ModelSpec mlp_classifier_spec(std::size_t in_dim, std::size_t hidden, std::size_t feature_dim,
                              std::size_t num_classes, double slope) {
  if (in_dim < 1 || hidden < 1 || feature_dim < 1) throw SpecError("classifier dimensions must all be >= 1");
  if (num_classes < 2) throw SpecError("classifier needs at least two classes");
  ModelSpec s;
  s.kind = NetworkKind::classifier;
  s.channels = num_classes;
  s.width = feature_dim;
  s.final_activation = ActivationKind::none;
  s.input_shape = {in_dim};
  s.layers = {
      DenseLayer{in_dim, hidden},
      ActivationLayer{ActivationKind::leaky_relu, slope},
      DenseLayer{hidden, feature_dim},
      ActivationLayer{ActivationKind::leaky_relu, slope},
      DenseLayer{feature_dim, num_classes},
  };
  s.validate();
  return s;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelSpec& spec) {
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto p = layer_prefix(i);
    const auto& layer = spec.layers[i];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      out.emplace_back(p + ".weight", Shape{d->in, d->out});
      out.emplace_back(p + ".bias", Shape{d->out});
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      out.emplace_back(p + ".weight", Shape{c->out_channels, c->in_channels, c->kernel, c->kernel});
      out.emplace_back(p + ".bias", Shape{c->out_channels});
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      out.emplace_back(p + ".gamma", Shape{b->channels});
      out.emplace_back(p + ".beta", Shape{b->channels});
    }
  }
  return out;
}

std::vector<NamedTensor> init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<NamedTensor> params;
  for (auto& [name, shape] : parameter_shapes(spec)) {
    std::vector<double> values(shape_numel(shape), 0.0);
    Rng rng(derive_seed(seed, name));
    if (name.ends_with(".weight")) {
      rng.fill_normal(values, 0.0, 0.02);
    } else if (name.ends_with(".gamma")) {
      rng.fill_normal(values, 1.0, 0.02);
    }
    params.push_back({name, Tensor(shape, std::move(values), true)});
  }
  return params;
}

Network::Network(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  params_ = init_params(spec_, seed_);
  for (const auto& layer : spec_.layers) {
    if (const auto* b = std::get_if<BatchNormLayer>(&layer)) running_.emplace_back(b->channels);
  }
}

Network::Network(const Network& other) : spec_(other.spec_), seed_(other.seed_), running_(other.running_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back({p.name, p.tensor.clone()});
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

const Tensor& Network::param(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

Tensor& Network::param(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const Network&>(*this).param(name));
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::vector<NamedTensor> Network::state() const {
  std::vector<NamedTensor> out;
  for (const auto& p : params_) out.push_back({p.name, p.tensor.detach()});
  std::size_t bn = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (!std::holds_alternative<BatchNormLayer>(spec_.layers[i])) continue;
    const auto& rs = running_[bn++];
    const auto p = layer_prefix(i);
    const std::size_t c = rs.mean.size();
    out.push_back({p + ".running_mean", Tensor({c}, rs.mean)});
    out.push_back({p + ".running_var", Tensor({c}, rs.var)});
    out.push_back({p + ".batches_tracked", Tensor::scalar(static_cast<double>(rs.batches_tracked))});
  }
  return out;
}

void Network::load_state(const std::vector<NamedTensor>& tensors) {
  auto expected = state();
  if (expected.size() != tensors.size()) {
    throw FormatError("network state has " + std::to_string(tensors.size()) + " tensors, spec implies " +
                      std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (expected[i].name != tensors[i].name || expected[i].tensor.shape() != tensors[i].tensor.shape()) {
      throw FormatError("tensor '" + tensors[i].name + "' " + shape_to_string(tensors[i].tensor.shape()) +
                        " disagrees with spec entry '" + expected[i].name + "' " +
                        shape_to_string(expected[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.data();
    auto src = tensors[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  std::size_t idx = params_.size();
  for (auto& rs : running_) {
    auto m = tensors[idx++].tensor.data();
    auto v = tensors[idx++].tensor.data();
    rs.mean.assign(m.begin(), m.end());
    rs.var.assign(v.begin(), v.end());
    rs.batches_tracked = static_cast<std::uint64_t>(tensors[idx++].tensor.item());
  }
}

Tensor Network::forward(Graph& g, const Tensor& batch, Mode mode, Rng& rng, std::size_t stop_after) {
  const auto& in = spec_.input_shape;
  bool ok = batch.rank() == in.size() + 1;
  for (std::size_t i = 0; ok && i < in.size(); ++i) ok = batch.dim(i + 1) == in[i];
  if (!ok) {
    throw DimensionError("network input " + shape_to_string(batch.shape()) + " does not match [N×" +
                         shape_to_string(in) + "]");
  }
  const std::size_t n = batch.dim(0);
  Tensor x = batch;
  std::size_t param_idx = 0, bn_idx = 0;
  const std::size_t count = std::min(stop_after, spec_.layers.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& layer = spec_.layers[i];
    x = std::visit(overloaded{
                       [&](const DenseLayer&) {
                         const auto& w = params_[param_idx++].tensor;
                         const auto& b = params_[param_idx++].tensor;
                         return linear(g, x, w, b);
                       },
                       [&](const ReshapeLayer& l) {
                         Shape s{n};
                         s.insert(s.end(), l.shape.begin(), l.shape.end());
                         return reshape(g, x, std::move(s));
                       },
                       [&](const FlattenLayer&) { return flatten(g, x); },
                       [&](const UpsampleLayer& l) { return upsample_nearest(g, x, l.factor); },
                       [&](const ConvLayer& l) {
                         const auto& w = params_[param_idx++].tensor;
                         const auto& b = params_[param_idx++].tensor;
                         return conv2d(g, x, w, b, l.stride, l.pad);
                       },
                       [&](const BatchNormLayer& l) {
                         const auto& gamma = params_[param_idx++].tensor;
                         const auto& beta = params_[param_idx++].tensor;
                         return batchnorm(g, x, gamma, beta, {l.eps, l.momentum}, mode, running_[bn_idx++]);
                       },
                       [&](const DropoutLayer& l) { return dropout(g, x, l.rate, mode, rng); },
                       [&](const ActivationLayer& l) { return activation(g, x, Activation{l.kind, l.slope}); },
                   },
                   layer);
  }
  return x;
}

Tensor Network::infer(const Tensor& batch, Mode mode, Rng& rng) {
  Graph g;
  const bool trainable = !params_.empty() && params_.front().tensor.requires_grad();
  set_trainable(false);
  auto out = forward(g, batch, mode, rng).detach();
  if (trainable) set_trainable(true);
  return out;
}

void Network::set_trainable(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

void Network::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Network build_generator(std::size_t latent_dim, std::size_t channels, std::size_t base_spatial, std::size_t width,
                        std::uint64_t seed, const GeneratorOptions& opts) {
  return Network(generator_spec(latent_dim, channels, base_spatial, width, opts), seed);
}

Network build_discriminator(std::size_t channels, std::size_t input_spatial, std::size_t width,
                            CriticVariant variant, std::uint64_t seed, const DiscriminatorOptions& opts) {
  return Network(discriminator_spec(channels, input_spatial, width, variant, opts), seed);
}

}  // namespace wcgan
