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

// Network checkpoints. Layout:
//
//   SUQNET1
//   layers <count>
//   <kind> <shape...>      one header line per layer, followed by its values
//
// Values are written one row per line in shortest round-trip decimal form.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "suq/nn.hpp"

namespace suq::nn {
namespace {

constexpr const char* kMagic = "SUQNET1";

void write_row(std::ostream& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out << ' ';
    out << format_double(data[i]);
  }
  out << '\n';
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) write_row(out, m.data() + r * m.cols(), m.cols());
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string token() {
    std::string t;
    if (!(in_ >> t)) throw ParseError("checkpoint: unexpected end of input");
    return t;
  }
  long long integer() { return parse_int(token()); }
  double real() { return parse_double(token()); }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = real();
    return m;
  }
  RowVector row(Eigen::Index n) {
    RowVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = real();
    return v;
  }

 private:
  std::istream& in_;
};

Eigen::Index dim(long long v) {
  if (v < 0 || v > (1LL << 24)) throw ParseError("checkpoint: implausible dimension");
  return static_cast<Eigen::Index>(v);
}

}  // namespace

void save_network(const Network& net, std::ostream& out) {
  out << kMagic << '\n' << "layers " << net.layers().size() << '\n';
  for (const auto& layer : net.layers()) {
    if (const auto* s = std::get_if<StandardizeLayer>(&layer)) {
      out << "standardize " << s->mean.size() << '\n';
      write_row(out, s->mean.data(), s->mean.size());
      write_row(out, s->inv_std.data(), s->inv_std.size());
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      out << "dense " << d->weights.rows() << ' ' << d->weights.cols() << '\n';
      write_matrix(out, d->weights);
      write_row(out, d->bias.data(), d->bias.size());
    } else if (const auto* v = std::get_if<VariationalDenseLayer>(&layer)) {
      out << "variational " << v->weight_mean.rows() << ' ' << v->weight_mean.cols() << ' '
          << format_double(v->prior_weight) << '\n';
      write_matrix(out, v->weight_mean);
      write_matrix(out, v->weight_rho);
      write_row(out, v->bias_mean.data(), v->bias_mean.size());
      write_row(out, v->bias_rho.data(), v->bias_rho.size());
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      out << "relu\n";
    } else if (const auto* p = std::get_if<DropoutSpec>(&layer)) {
      out << "dropout " << format_double(p->p) << '\n';
    }
  }
  if (!out) throw IoError("checkpoint: write failed");
}

Network load_network(std::istream& in) {
  Reader r(in);
  if (r.token() != kMagic) throw ParseError("checkpoint: missing SUQNET1 header");
  if (r.token() != "layers") throw ParseError("checkpoint: expected 'layers'");
  const long long count = r.integer();
  if (count < 1 || count > 4096) throw ParseError("checkpoint: bad layer count");
  std::vector<Layer> layers;
  for (long long i = 0; i < count; ++i) {
    const std::string kind = r.token();
    if (kind == "standardize") {
      const Eigen::Index n = dim(r.integer());
      StandardizeLayer s;
      s.mean = r.row(n);
      s.inv_std = r.row(n);
      layers.emplace_back(std::move(s));
    } else if (kind == "dense") {
      const Eigen::Index out = dim(r.integer());
      const Eigen::Index in = dim(r.integer());
      DenseLayer d;
      d.weights = r.matrix(out, in);
      d.bias = r.row(out);
      layers.emplace_back(std::move(d));
    } else if (kind == "variational") {
      const Eigen::Index out = dim(r.integer());
      const Eigen::Index in = dim(r.integer());
      VariationalDenseLayer v;
      v.prior_weight = r.real();
      v.weight_mean = r.matrix(out, in);
      v.weight_rho = r.matrix(out, in);
      v.bias_mean = r.row(out);
      v.bias_rho = r.row(out);
      layers.emplace_back(std::move(v));
    } else if (kind == "relu") {
      layers.emplace_back(ReluLayer{});
    } else if (kind == "dropout") {
      layers.emplace_back(DropoutSpec{r.real()});
    } else {
      throw ParseError("checkpoint: unknown layer kind '" + kind + "'");
    }
  }
  return Network(std::move(layers));
}

}  // namespace suq::nn
