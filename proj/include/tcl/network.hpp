#pragma once

#include <cmath>
#include <concepts>
#include <type_traits>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tcl/error.hpp"
#include "tcl/numerics.hpp"

namespace tcl {

// Layer widths of the encoder (d_in -> ... -> d_rep) and the projector
// (d_rep -> ... -> d_z). Every encoder layer is followed by ReLU; projector
// hidden layers use ReLU and its output is L2-normalized.
struct MlpSpec {
  std::vector<std::size_t> encoder{32, 64, 32};
  std::vector<std::size_t> projector{32, 32, 16};

  void validate() const {
    if (encoder.size() < 2) throw InvalidShape("encoder needs input and output widths");
    if (projector.size() < 2) throw InvalidShape("projector needs input and output widths");
    for (auto w : encoder) {
      if (w < 1) throw InvalidShape("layer widths must be >= 1");
    }
    for (auto w : projector) {
      if (w < 1) throw InvalidShape("layer widths must be >= 1");
    }
    if (projector.front() != encoder.back()) {
      throw InvalidShape("projector input width must equal encoder output width");
    }
  }

  std::size_t input_dim() const { return encoder.front(); }
  std::size_t rep_dim() const { return encoder.back(); }
  std::size_t embed_dim() const { return projector.back(); }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;

  friend bool operator==(const Dense& a, const Dense& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
  }
};

// Encoder plus projector. Gradients use the same type.
struct Network {
  MlpSpec spec;
  std::vector<Dense> encoder;
  std::vector<Dense> projector;

  friend bool operator==(const Network&, const Network&) = default;
};

// He-uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)]; biases uniform in
// [-1/sqrt(fan_in), 1/sqrt(fan_in)]. With weights on the bias scale the
// projections start almost parallel and some seeds never leave that
// collapsed state.
inline Dense init_dense(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  const double bias_bound = 1.0 / std::sqrt(static_cast<double>(in));
  Dense d;
  d.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  d.bias.resize(static_cast<Eigen::Index>(out));
  for (Eigen::Index r = 0; r < d.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.weight.cols(); ++c) d.weight(r, c) = rng.uniform(-bound, bound);
  }
  for (Eigen::Index r = 0; r < d.bias.size(); ++r) d.bias(r) = rng.uniform(-bias_bound, bias_bound);
  return d;
}

inline Network init_network(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  Network net{spec, {}, {}};
  for (std::size_t l = 0; l + 1 < spec.encoder.size(); ++l) {
    net.encoder.push_back(init_dense(spec.encoder[l], spec.encoder[l + 1], rng));
  }
  for (std::size_t l = 0; l + 1 < spec.projector.size(); ++l) {
    net.projector.push_back(init_dense(spec.projector[l], spec.projector[l + 1], rng));
  }
  return net;
}

inline Network zeros_like(const Network& net) {
  Network z = net;
  for (auto* layers : {&z.encoder, &z.projector}) {
    for (auto& d : *layers) {
      d.weight.setZero();
      d.bias.setZero();
    }
  }
  return z;
}

// Calls fn(param, other...) for every weight matrix and bias vector, pairing
// tensors of equally shaped parameter sets.
template <class Fn, class First, class... Rest>
  requires std::same_as<std::remove_cvref_t<First>, Dense>
void for_each_tensor(Fn&& fn, First&& first, Rest&&... rest) {
  fn(first.weight, rest.weight...);
  fn(first.bias, rest.bias...);
}

template <class Fn, class First, class... Rest>
  requires std::same_as<std::remove_cvref_t<First>, Network>
void for_each_tensor(Fn&& fn, First&& first, Rest&&... rest) {
  for (std::size_t l = 0; l < first.encoder.size(); ++l) {
    for_each_tensor(fn, first.encoder[l], rest.encoder[l]...);
  }
  for (std::size_t l = 0; l < first.projector.size(); ++l) {
    for_each_tensor(fn, first.projector[l], rest.projector[l]...);
  }
}

inline std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const auto* layers : {&net.encoder, &net.projector}) {
    for (const auto& d : *layers) n += static_cast<std::size_t>(d.weight.size() + d.bias.size());
  }
  return n;
}

// Activations kept for the backward pass. Rows are samples.
struct ForwardPass {
  std::vector<Eigen::MatrixXd> encoder_in;    // input of each encoder layer
  std::vector<Eigen::MatrixXd> encoder_pre;   // pre-activation of each encoder layer
  std::vector<Eigen::MatrixXd> projector_in;
  std::vector<Eigen::MatrixXd> projector_pre;
  Eigen::MatrixXd representations;  // encoder output (probe features)
  Eigen::MatrixXd projections;      // raw projector output v (after any jitter)
  Eigen::VectorXd projection_norms;
  std::vector<Embedding> embeddings;  // z = v / ||v||
};

namespace detail {

inline Eigen::MatrixXd affine(const Dense& d, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = x * d.weight.transpose();
  y.rowwise() += d.bias.transpose();
  return y;
}

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

inline void check_input(const Network& net, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != net.spec.input_dim()) {
    throw DimensionMismatch("network expects " + std::to_string(net.spec.input_dim()) +
                            " input features, got " + std::to_string(x.cols()));
  }
}

inline ForwardPass forward_impl(const Network& net, const Eigen::MatrixXd& x, Rng* jitter) {
  check_input(net, x);
  ForwardPass fp;
  Eigen::MatrixXd h = x;
  for (const auto& layer : net.encoder) {
    fp.encoder_in.push_back(h);
    fp.encoder_pre.push_back(affine(layer, h));
    h = relu(fp.encoder_pre.back());
  }
  fp.representations = h;
  for (std::size_t l = 0; l < net.projector.size(); ++l) {
    fp.projector_in.push_back(h);
    fp.projector_pre.push_back(affine(net.projector[l], h));
    h = l + 1 < net.projector.size() ? relu(fp.projector_pre.back()) : fp.projector_pre.back();
  }
  fp.projections = h;
  fp.projection_norms.resize(h.rows());
  fp.embeddings.reserve(static_cast<std::size_t>(h.rows()));
  Vector v(static_cast<std::size_t>(h.cols()));
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.cols(); ++c) v[static_cast<std::size_t>(c)] = h(r, c);
    if (jitter != nullptr && !(norm(v) > kZeroNormThreshold)) {
      for (Eigen::Index c = 0; c < h.cols(); ++c) {
        v[static_cast<std::size_t>(c)] += jitter->normal(0.0, 1e-8);
        fp.projections(r, c) = v[static_cast<std::size_t>(c)];
      }
    }
    fp.projection_norms(r) = norm(v);
    fp.embeddings.push_back(l2_normalize(v));
  }
  return fp;
}

}  // namespace detail

// Throws ZeroVector if a projector output vanishes.
inline ForwardPass forward(const Network& net, const Eigen::MatrixXd& x) {
  return detail::forward_impl(net, x, nullptr);
}

// Same, but a vanishing projector output is perturbed by 1e-8 Gaussian
// jitter drawn from `jitter` before normalizing.
inline ForwardPass forward(const Network& net, const Eigen::MatrixXd& x, Rng& jitter) {
  return detail::forward_impl(net, x, &jitter);
}

// Encoder only.
inline Eigen::MatrixXd encode(const Network& net, const Eigen::MatrixXd& x) {
  detail::check_input(net, x);
  Eigen::MatrixXd h = x;
  for (const auto& layer : net.encoder) h = detail::relu(detail::affine(layer, h));
  return h;
}

inline Eigen::MatrixXd to_matrix(const std::vector<Vector>& rows, std::size_t cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw DimensionMismatch("ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

// Backpropagates dL/dz (one row per sample) through the normalization
// Jacobian (I - z z^T) / ||v|| and both MLPs. Weight decay is not included.
inline Network backward(const Network& net, const ForwardPass& fp, const Eigen::MatrixXd& grad_z) {
  const auto n = static_cast<Eigen::Index>(fp.embeddings.size());
  if (grad_z.rows() != n || static_cast<std::size_t>(grad_z.cols()) != net.spec.embed_dim()) {
    throw DimensionMismatch("upstream gradient shape does not match the embeddings");
  }
  Network g = zeros_like(net);

  Eigen::MatrixXd delta(n, grad_z.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& z = fp.embeddings[static_cast<std::size_t>(r)].components();
    double radial = 0.0;
    for (Eigen::Index c = 0; c < grad_z.cols(); ++c) radial += z[static_cast<std::size_t>(c)] * grad_z(r, c);
    for (Eigen::Index c = 0; c < grad_z.cols(); ++c) {
      delta(r, c) = (grad_z(r, c) - radial * z[static_cast<std::size_t>(c)]) / fp.projection_norms(r);
    }
  }

  for (std::size_t l = net.projector.size(); l-- > 0;) {
    if (l + 1 < net.projector.size()) {
      delta = delta.cwiseProduct((fp.projector_pre[l].array() > 0.0).cast<double>().matrix());
    }
    g.projector[l].weight = delta.transpose() * fp.projector_in[l];
    g.projector[l].bias = delta.colwise().sum().transpose();
    delta = delta * net.projector[l].weight;
  }
  for (std::size_t l = net.encoder.size(); l-- > 0;) {
    delta = delta.cwiseProduct((fp.encoder_pre[l].array() > 0.0).cast<double>().matrix());
    g.encoder[l].weight = delta.transpose() * fp.encoder_in[l];
    g.encoder[l].bias = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * net.encoder[l].weight;
  }
  return g;
}

inline Network backward(const Network& net, const ForwardPass& fp, const std::vector<Vector>& grad_z) {
  return backward(net, fp, to_matrix(grad_z, net.spec.embed_dim()));
}

}  // namespace tcl
