/*
 * Copyright 2026 The suq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "suq/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "suq/sampling.hpp"

namespace suq::nn {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Matrix apply_affine(const Matrix& x, const Matrix& w, const RowVector& b) {
  Matrix out = x * w.transpose();
  out.rowwise() += b;
  return out;
}

Matrix softplus_of(const Matrix& rho) { return rho.unaryExpr([](double r) { return softplus(r); }); }
RowVector softplus_of(const RowVector& rho) {
  return rho.unaryExpr([](double r) { return softplus(r); });
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> cspan_of(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<const double> cspan_of(const RowVector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::vector<double> to_vec(const Matrix& m) { return {m.data(), m.data() + m.size()}; }
std::vector<double> to_vec(const RowVector& v) { return {v.data(), v.data() + v.size()}; }

bool needs_noise(const Layer& layer) {
  if (const auto* d = std::get_if<DropoutSpec>(&layer)) return d->p > 0.0;
  return std::holds_alternative<VariationalDenseLayer>(layer);
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * n01(rng);
  return m;
}

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) {
  if (!(y > 0)) throw DomainError("inverse_softplus needs a positive argument");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double cross_entropy_loss(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() == 0 || labels.empty()) throw InvalidArgument("cross_entropy_loss: empty batch");
  if (static_cast<std::size_t>(probs.rows()) != labels.size())
    throw ShapeError("cross_entropy_loss: batch and label counts differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols()) throw InvalidArgument("cross_entropy_loss: label out of range");
    total -= std::log(std::max(probs(i, y), kProbabilityFloor));
  }
  return total / static_cast<double>(probs.rows());
}

double kl_gaussian_to_standard_normal(std::span<const double> mu, std::span<const double> sigma) {
  if (mu.size() != sigma.size()) throw ShapeError("kl: mu and sigma sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double s = sigma[i];
    if (!(s > 0.0)) throw DomainError("kl: sigma must be positive");
    const double s2 = s * s;
    kl += 0.5 * (s2 + mu[i] * mu[i] - 1.0 - std::log(s2));
  }
  return kl;
}

double elbo_loss(double ce, double kl_total, double beta, int batches_per_epoch) {
  if (batches_per_epoch < 1) throw InvalidArgument("elbo_loss: batches_per_epoch must be positive");
  if (beta < 0.0) throw InvalidArgument("elbo_loss: beta must be non-negative");
  if (!std::isfinite(ce) || !std::isfinite(kl_total)) throw NumericError("elbo_loss: non-finite input");
  return ce + beta * kl_total / static_cast<double>(batches_per_epoch);
}

FlipoutNoise sample_flipout_noise(Eigen::Index batch, Eigen::Index in, Eigen::Index out, Rng& rng) {
  FlipoutNoise n;
  n.perturbation = random_normal(out, in, 1.0, rng);
  std::bernoulli_distribution coin(0.5);
  n.sign_in.resize(batch, in);
  for (Eigen::Index i = 0; i < n.sign_in.size(); ++i) n.sign_in.data()[i] = coin(rng) ? 1.0 : -1.0;
  n.sign_out.resize(batch, out);
  for (Eigen::Index i = 0; i < n.sign_out.size(); ++i) n.sign_out.data()[i] = coin(rng) ? 1.0 : -1.0;
  n.bias_noise = random_normal(1, out, 1.0, rng);
  return n;
}

Matrix flipout_forward(const Matrix& x, const Matrix& weight_mean, const Matrix& weight_sigma,
                       const RowVector& bias_mean, const RowVector& bias_sigma,
                       const FlipoutNoise& noise) {
  if (x.cols() != weight_mean.cols() || weight_sigma.rows() != weight_mean.rows() ||
      weight_sigma.cols() != weight_mean.cols() || bias_mean.size() != weight_mean.rows() ||
      bias_sigma.size() != bias_mean.size())
    throw ShapeError("flipout_forward: inconsistent shapes");
  if (noise.perturbation.rows() != weight_mean.rows() ||
      noise.perturbation.cols() != weight_mean.cols() || noise.sign_in.rows() != x.rows() ||
      noise.sign_in.cols() != x.cols() || noise.sign_out.rows() != x.rows() ||
      noise.sign_out.cols() != weight_mean.rows() || noise.bias_noise.size() != bias_mean.size())
    throw ShapeError("flipout_forward: noise does not match the layer and batch");
  if ((weight_sigma.array() < 0.0).any() || (bias_sigma.array() < 0.0).any())
    throw DomainError("flipout_forward: sigma must be non-negative");

  Matrix out = x * weight_mean.transpose();
  const Matrix scaled = weight_sigma.cwiseProduct(noise.perturbation);
  const Matrix pert = (x.cwiseProduct(noise.sign_in) * scaled.transpose()).cwiseProduct(noise.sign_out);
  out += pert;
  const RowVector bias = bias_mean + bias_sigma.cwiseProduct(noise.bias_noise);
  out.rowwise() += bias;
  return out;
}

Matrix flipout_forward(const Matrix& x, const Matrix& weight_mean, const Matrix& weight_sigma,
                       const RowVector& bias_mean, const RowVector& bias_sigma, Rng& rng) {
  const FlipoutNoise noise = sample_flipout_noise(x.rows(), x.cols(), weight_mean.rows(), rng);
  return flipout_forward(x, weight_mean, weight_sigma, bias_mean, bias_sigma, noise);
}

Matrix dropout_forward(const DropoutSpec& spec, const Matrix& x, Mode mode, Rng* rng,
                       Matrix* mask_out) {
  if (!(spec.p >= 0.0 && spec.p < 1.0)) throw DomainError("dropout probability must be in [0,1)");
  if (mode == Mode::kEval || spec.p == 0.0) {
    if (mask_out) mask_out->resize(0, 0);
    return x;
  }
  if (!rng) throw InvalidArgument("dropout in train mode requires an rng");
  const double keep_scale = 1.0 / (1.0 - spec.p);
  std::bernoulli_distribution drop(spec.p);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = drop(*rng) ? 0.0 : keep_scale;
  Matrix out = x.cwiseProduct(mask);
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

void Network::validate() const {
  Eigen::Index width = -1;
  bool any_parametric = false;
  auto expect = [&](Eigen::Index in, const char* what) {
    if (width >= 0 && in != width)
      throw ShapeError(std::string("layer '") + what + "' expects width " + std::to_string(in) +
                       " but receives " + std::to_string(width));
  };
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const StandardizeLayer& l) {
                     if (l.mean.size() != l.inv_std.size() || l.mean.size() == 0)
                       throw ShapeError("standardize: mean/inv_std sizes differ");
                     if (!l.mean.allFinite() || !l.inv_std.allFinite())
                       throw NumericError("standardize: non-finite entries");
                     expect(l.mean.size(), "standardize");
                     width = l.mean.size();
                   },
                   [&](const DenseLayer& l) {
                     if (l.bias.size() != l.weights.rows())
                       throw ShapeError("dense: bias size does not match weight rows");
                     if (!l.weights.allFinite() || !l.bias.allFinite())
                       throw NumericError("dense: non-finite parameters");
                     expect(l.weights.cols(), "dense");
                     width = l.weights.rows();
                     any_parametric = true;
                   },
                   [&](const VariationalDenseLayer& l) {
                     if (l.weight_rho.rows() != l.weight_mean.rows() ||
                         l.weight_rho.cols() != l.weight_mean.cols() ||
                         l.bias_mean.size() != l.weight_mean.rows() ||
                         l.bias_rho.size() != l.bias_mean.size())
                       throw ShapeError("variational: inconsistent shapes");
                     if (!l.weight_mean.allFinite() || !l.weight_rho.allFinite() ||
                         !l.bias_mean.allFinite() || !l.bias_rho.allFinite())
                       throw NumericError("variational: non-finite parameters");
                     if (!(l.prior_weight >= 0.0)) throw DomainError("variational: prior weight < 0");
                     expect(l.weight_mean.cols(), "variational");
                     width = l.weight_mean.rows();
                     any_parametric = true;
                   },
                   [&](const ReluLayer&) {},
                   [&](const DropoutSpec& d) {
                     if (!(d.p >= 0.0 && d.p < 1.0))
                       throw DomainError("dropout probability must be in [0,1)");
                   },
               },
               layer);
  }
  if (!any_parametric) throw ShapeError("network needs at least one dense layer");
}

Network Network::make_mlp(const MlpSpec& spec, Rng& rng) {
  if (spec.input_width < 1 || spec.classes < 2) throw InvalidArgument("mlp: bad widths");
  std::vector<Layer> layers;
  if (spec.input_mean.size() > 0) {
    if (spec.input_mean.size() != spec.input_width || spec.input_std.size() != spec.input_width)
      throw ShapeError("mlp: standardization vectors do not match input width");
    StandardizeLayer s;
    s.mean = spec.input_mean;
    s.inv_std = spec.input_std.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / v : 1.0; });
    layers.emplace_back(std::move(s));
  }
  std::vector<int> widths = {spec.input_width};
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(spec.classes);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i];
    const int out = widths[i + 1];
    const double he = std::sqrt(2.0 / in);
    if (spec.kind == MlpSpec::Kind::kVariational) {
      VariationalDenseLayer v;
      v.weight_mean = random_normal(out, in, he, rng);
      v.weight_rho = Matrix::Constant(out, in, inverse_softplus(spec.initial_sigma));
      v.bias_mean = RowVector::Zero(out);
      v.bias_rho = RowVector::Constant(out, inverse_softplus(spec.initial_sigma));
      v.prior_weight = spec.prior_weight;
      layers.emplace_back(std::move(v));
    } else {
      DenseLayer d;
      d.weights = random_normal(out, in, he, rng);
      d.bias = RowVector::Zero(out);
      layers.emplace_back(std::move(d));
    }
    const bool hidden = i + 2 < widths.size();
    if (hidden) {
      layers.emplace_back(ReluLayer{});
      if (spec.kind == MlpSpec::Kind::kDropout) layers.emplace_back(DropoutSpec{spec.dropout_p});
    }
  }
  return Network(std::move(layers));
}

int Network::input_width() const {
  for (const auto& layer : layers_) {
    if (const auto* s = std::get_if<StandardizeLayer>(&layer)) return static_cast<int>(s->mean.size());
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return static_cast<int>(d->weights.cols());
    if (const auto* v = std::get_if<VariationalDenseLayer>(&layer))
      return static_cast<int>(v->weight_mean.cols());
  }
  return 0;
}

int Network::output_width() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (const auto* d = std::get_if<DenseLayer>(&*it)) return static_cast<int>(d->weights.rows());
    if (const auto* v = std::get_if<VariationalDenseLayer>(&*it))
      return static_cast<int>(v->weight_mean.rows());
  }
  return 0;
}

bool Network::has_dropout() const {
  return std::any_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return std::holds_alternative<DropoutSpec>(l); });
}

bool Network::has_variational() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const Layer& l) {
    return std::holds_alternative<VariationalDenseLayer>(l);
  });
}

Matrix Network::forward(const Matrix& x, Mode mode, Rng* rng, ForwardTape* tape) const {
  if (x.cols() != input_width())
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " features, network expects " +
                     std::to_string(input_width()));
  const bool replay = tape && tape->frozen_noise;
  if (replay && tape->layers.size() != layers_.size())
    throw InvalidArgument("forward: frozen tape was recorded on a different network");
  if (mode == Mode::kTrain && !rng && !replay &&
      std::any_of(layers_.begin(), layers_.end(), needs_noise))
    throw InvalidArgument("forward: train mode requires an rng");
  if (tape && !replay) tape->layers.assign(layers_.size(), LayerTape{});

  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerTape* lt = tape ? &tape->layers[i] : nullptr;
    if (lt) lt->input = h;
    std::visit(
        Overloaded{
            [&](const StandardizeLayer& l) {
              h = ((h.rowwise() - l.mean).array().rowwise() * l.inv_std.array()).matrix();
            },
            [&](const DenseLayer& l) { h = apply_affine(h, l.weights, l.bias); },
            [&](const VariationalDenseLayer& l) {
              if (mode == Mode::kEval) {
                h = apply_affine(h, l.weight_mean, l.bias_mean);
                if (lt) lt->noise = FlipoutNoise{};
                return;
              }
              const Matrix sigma = softplus_of(l.weight_rho);
              const RowVector bias_sigma = softplus_of(l.bias_rho);
              if (replay) {
                h = flipout_forward(h, l.weight_mean, sigma, l.bias_mean, bias_sigma, lt->noise);
              } else {
                FlipoutNoise noise =
                    sample_flipout_noise(h.rows(), h.cols(), l.weight_mean.rows(), *rng);
                h = flipout_forward(h, l.weight_mean, sigma, l.bias_mean, bias_sigma, noise);
                if (lt) lt->noise = std::move(noise);
              }
            },
            [&](const ReluLayer&) { h = h.cwiseMax(0.0); },
            [&](const DropoutSpec& d) {
              if (replay) {
                if (lt->mask.size() > 0) h = h.cwiseProduct(lt->mask);
              } else {
                h = dropout_forward(d, h, mode, rng, lt ? &lt->mask : nullptr);
              }
            },
        },
        layers_[i]);
  }
  if (!h.allFinite()) throw NumericError("forward: non-finite activation");
  Matrix probs = softmax_rows(h);
  if (tape) tape->probs = probs;
  return probs;
}

Gradients Network::backward(const ForwardTape& tape, std::span<const int> labels,
                            double kl_scale) const {
  if (tape.layers.size() != layers_.size()) throw InvalidArgument("backward: tape mismatch");
  const Eigen::Index batch = tape.probs.rows();
  if (static_cast<std::size_t>(batch) != labels.size())
    throw ShapeError("backward: label count differs from batch");

  // Block index of each layer's first parameter block.
  std::vector<std::size_t> first_block(layers_.size(), 0);
  std::size_t blocks = 0;
  Gradients grads;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    first_block[i] = blocks;
    if (const auto* d = std::get_if<DenseLayer>(&layers_[i])) {
      grads.emplace_back(static_cast<std::size_t>(d->weights.size()), 0.0);
      grads.emplace_back(static_cast<std::size_t>(d->bias.size()), 0.0);
      blocks += 2;
    } else if (const auto* v = std::get_if<VariationalDenseLayer>(&layers_[i])) {
      grads.emplace_back(static_cast<std::size_t>(v->weight_mean.size()), 0.0);
      grads.emplace_back(static_cast<std::size_t>(v->weight_rho.size()), 0.0);
      grads.emplace_back(static_cast<std::size_t>(v->bias_mean.size()), 0.0);
      grads.emplace_back(static_cast<std::size_t>(v->bias_rho.size()), 0.0);
      blocks += 4;
    }
  }

  Matrix d = tape.probs;
  for (Eigen::Index r = 0; r < batch; ++r) d(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
  d /= static_cast<double>(batch);

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const LayerTape& lt = tape.layers[li];
    const bool first_layer = li == 0;
    std::visit(
        Overloaded{
            [&](const StandardizeLayer& l) {
              if (!first_layer) d = (d.array().rowwise() * l.inv_std.array()).matrix();
            },
            [&](const DenseLayer& l) {
              const Matrix dw = d.transpose() * lt.input;
              const RowVector db = d.colwise().sum();
              grads[first_block[li]] = to_vec(dw);
              grads[first_block[li] + 1] = to_vec(db);
              if (!first_layer) d = d * l.weights;
            },
            [&](const VariationalDenseLayer& l) {
              const Matrix sigma = softplus_of(l.weight_rho);
              const RowVector bias_sigma = softplus_of(l.bias_rho);
              Matrix d_mean = d.transpose() * lt.input;
              RowVector d_bias_mean = d.colwise().sum();
              Matrix d_sigma = Matrix::Zero(sigma.rows(), sigma.cols());
              RowVector d_bias_sigma = RowVector::Zero(bias_sigma.size());
              Matrix dx;
              const bool sampled = lt.noise.perturbation.size() > 0;
              if (sampled) {
                const Matrix g = d.cwiseProduct(lt.noise.sign_out);
                const Matrix xs = lt.input.cwiseProduct(lt.noise.sign_in);
                d_sigma = (g.transpose() * xs).cwiseProduct(lt.noise.perturbation);
                d_bias_sigma = d_bias_mean.cwiseProduct(lt.noise.bias_noise);
                if (!first_layer) {
                  const Matrix scaled = sigma.cwiseProduct(lt.noise.perturbation);
                  dx = d * l.weight_mean + (g * scaled).cwiseProduct(lt.noise.sign_in);
                }
              } else if (!first_layer) {
                dx = d * l.weight_mean;
              }
              const double k = kl_scale * l.prior_weight;
              if (k != 0.0) {
                d_mean += k * l.weight_mean;
                d_bias_mean += k * l.bias_mean;
                d_sigma += k * (sigma - sigma.cwiseInverse());
                d_bias_sigma += k * (bias_sigma - bias_sigma.cwiseInverse());
              }
              const Matrix d_rho =
                  d_sigma.cwiseProduct(l.weight_rho.unaryExpr([](double r) { return sigmoid(r); }));
              const RowVector d_bias_rho = d_bias_sigma.cwiseProduct(
                  l.bias_rho.unaryExpr([](double r) { return sigmoid(r); }));
              grads[first_block[li]] = to_vec(d_mean);
              grads[first_block[li] + 1] = to_vec(d_rho);
              grads[first_block[li] + 2] = to_vec(d_bias_mean);
              grads[first_block[li] + 3] = to_vec(d_bias_rho);
              if (!first_layer) d = std::move(dx);
            },
            [&](const ReluLayer&) {
              d = d.cwiseProduct((lt.input.array() > 0.0).cast<double>().matrix());
            },
            [&](const DropoutSpec&) {
              if (lt.mask.size() > 0) d = d.cwiseProduct(lt.mask);
            },
        },
        layers_[li]);
  }
  return grads;
}

double Network::weighted_kl() const {
  double total = 0.0;
  for (const auto& layer : layers_) {
    if (const auto* v = std::get_if<VariationalDenseLayer>(&layer)) {
      if (v->prior_weight == 0.0) continue;
      const Matrix sigma = softplus_of(v->weight_rho);
      const RowVector bias_sigma = softplus_of(v->bias_rho);
      const double kl = kl_gaussian_to_standard_normal(cspan_of(v->weight_mean), cspan_of(sigma)) +
                        kl_gaussian_to_standard_normal(cspan_of(v->bias_mean), cspan_of(bias_sigma));
      total += v->prior_weight * kl;
    }
  }
  return total;
}

std::vector<std::span<double>> Network::parameters() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      out.push_back(span_of(d->weights));
      out.push_back(span_of(d->bias));
    } else if (auto* v = std::get_if<VariationalDenseLayer>(&layer)) {
      out.push_back(span_of(v->weight_mean));
      out.push_back(span_of(v->weight_rho));
      out.push_back(span_of(v->bias_mean));
      out.push_back(span_of(v->bias_rho));
    }
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) n += d->weights.size() + d->bias.size();
    if (const auto* v = std::get_if<VariationalDenseLayer>(&layer))
      n += 2 * (v->weight_mean.size() + v->bias_mean.size());
  }
  return n;
}

bool operator==(const Network& a, const Network& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const Layer& x = a.layers_[i];
    const Layer& y = b.layers_[i];
    if (x.index() != y.index()) return false;
    const bool same = std::visit(
        Overloaded{
            [&](const StandardizeLayer& l) {
              const auto& r = std::get<StandardizeLayer>(y);
              return l.mean == r.mean && l.inv_std == r.inv_std;
            },
            [&](const DenseLayer& l) {
              const auto& r = std::get<DenseLayer>(y);
              return l.weights == r.weights && l.bias == r.bias;
            },
            [&](const VariationalDenseLayer& l) {
              const auto& r = std::get<VariationalDenseLayer>(y);
              return l.weight_mean == r.weight_mean && l.weight_rho == r.weight_rho &&
                     l.bias_mean == r.bias_mean && l.bias_rho == r.bias_rho &&
                     l.prior_weight == r.prior_weight;
            },
            [&](const ReluLayer&) { return true; },
            [&](const DropoutSpec& l) { return l.p == std::get<DropoutSpec>(y).p; },
        },
        x);
    if (!same) return false;
  }
  return true;
}

double objective(const Network& net, const Matrix& x, std::span<const int> labels, Mode mode,
                 Rng* rng, ForwardTape* tape, double kl_scale) {
  const Matrix probs = net.forward(x, mode, rng, tape);
  double loss = cross_entropy_loss(probs, labels);
  if (kl_scale != 0.0) loss += kl_scale * net.weighted_kl();
  return loss;
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    probs.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

void AdamState::apply(std::vector<std::span<double>> params, const Gradients& grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("adam: gradient layout mismatch");
  if (first_moment.empty()) {
    for (const auto& p : params) {
      first_moment.emplace_back(p.size(), 0.0);
      second_moment.emplace_back(p.size(), 0.0);
    }
  }
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = first_moment[b];
    auto& v = second_moment[b];
    const auto& g = grads[b];
    if (g.size() != params[b].size() || m.size() != g.size())
      throw ShapeError("adam: block size mismatch");
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      params[b][j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + epsilon);
    }
  }
}

PlateauScheduler::PlateauScheduler(double learning_rate, int patience, double factor)
    : lr_(learning_rate), patience_(patience), factor_(factor),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(learning_rate > 0)) throw InvalidArgument("learning rate must be positive");
  if (patience < 1) throw InvalidArgument("plateau patience must be positive");
  if (!(factor > 0 && factor < 1)) throw InvalidArgument("plateau factor must be in (0,1)");
}

bool PlateauScheduler::step(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
    ++reductions_;
    return true;
  }
  return false;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be positive");
  if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
  if (plateau_patience < 1) throw InvalidArgument("plateau_patience must be positive");
  if (!(plateau_factor > 0 && plateau_factor < 1))
    throw InvalidArgument("plateau_factor must be in (0,1)");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be positive");
}

namespace {

LabeledData gather(const LabeledData& data, std::span<const std::size_t> rows) {
  LabeledData out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[i] = data.labels[rows[i]];
  }
  return out;
}

double accuracy_of(const Matrix& probs, std::span<const int> labels) {
  const auto pred = argmax_rows(probs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

TrainResult train(Network network, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.labels.empty() || val_set.labels.empty())
    throw InvalidArgument("train: empty training or validation set");
  if (train_set.features.rows() != static_cast<Eigen::Index>(train_set.labels.size()) ||
      val_set.features.rows() != static_cast<Eigen::Index>(val_set.labels.size()))
    throw ShapeError("train: feature rows and labels differ");
  if (train_set.features.cols() != network.input_width() ||
      val_set.features.cols() != network.input_width())
    throw ShapeError("train: feature width does not match the network");

  Rng rng(config.seed);
  const std::size_t n = train_set.labels.size();
  const std::size_t batches =
      std::max<std::size_t>(1, (n + config.batch_size - 1) / config.batch_size);
  const double kl_scale = 1.0 / static_cast<double>(batches);

  std::optional<BalancedBatchSampler> sampler;
  if (config.class_balanced)
    sampler.emplace(train_set.labels, network.output_width(), config.batch_size);

  PlateauScheduler scheduler(config.learning_rate, config.plateau_patience, config.plateau_factor);
  AdamState adam;
  TrainResult result;
  double best_accuracy = -1.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = scheduler.learning_rate();
    if (!sampler) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<std::size_t> rows;
      if (sampler) {
        rows = sampler->next(rng);
      } else {
        const std::size_t lo = b * config.batch_size;
        const std::size_t hi = std::min(n, lo + config.batch_size);
        rows.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                    order.begin() + static_cast<std::ptrdiff_t>(hi));
      }
      LabeledData batch = gather(train_set, rows);
      if (config.augment) config.augment(batch.features, rng);
      ForwardTape tape;
      const double loss =
          objective(network, batch.features, batch.labels, Mode::kTrain, &rng, &tape, kl_scale);
      if (!std::isfinite(loss))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += loss;
      adam.apply(network.parameters(), network.backward(tape, batch.labels, kl_scale), lr);
    }

    const Matrix val_probs = network.forward(val_set.features, Mode::kEval, nullptr);
    const double val_loss = cross_entropy_loss(val_probs, val_set.labels);
    if (!std::isfinite(val_loss))
      throw NumericError("training diverged: non-finite validation loss at epoch " +
                         std::to_string(epoch));
    const double val_accuracy = accuracy_of(val_probs, val_set.labels);
    const bool reduced = scheduler.step(val_loss);
    result.history.push_back(EpochRecord{epoch, loss_sum / static_cast<double>(batches), val_loss,
                                         val_accuracy, lr, reduced});
    if (val_accuracy > best_accuracy) {
      best_accuracy = val_accuracy;
      result.network = network;
      result.best_epoch = epoch;
    }
  }
  return result;
}

GradientCheckResult gradient_check(Network net, const Matrix& x, std::span<const int> labels,
                                   double epsilon, Rng& rng, double kl_scale) {
  ForwardTape tape;
  objective(net, x, labels, Mode::kTrain, &rng, &tape, kl_scale);
  const Gradients analytic = net.backward(tape, labels, kl_scale);
  tape.frozen_noise = true;

  GradientCheckResult res;
  double norm2 = 0.0;
  auto params = net.parameters();
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t j = 0; j < params[b].size(); ++j) {
      double& p = params[b][j];
      const double orig = p;
      p = orig + epsilon;
      const double fp = objective(net, x, labels, Mode::kTrain, nullptr, &tape, kl_scale);
      p = orig - epsilon;
      const double fm = objective(net, x, labels, Mode::kTrain, nullptr, &tape, kl_scale);
      p = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[b][j];
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-3});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      res.max_relative_error = std::max(res.max_relative_error, abs_err / scale);
      norm2 += a * a;
      ++res.checked;
    }
  }
  res.analytic_norm = std::sqrt(norm2);
  return res;
}

}  // namespace suq::nn
