#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "addnet/loss.hpp"
#include "addnet/maskgen.hpp"
#include "addnet/model_spec.hpp"
#include "addnet/nn/ops.hpp"

namespace addnet::model {

using nn::Matrix;
using nn::Shape;
using nn::Tensor;
using nn::Vector;

/// Parameters of one network plus the ModelSpec they were built from.
template <typename Scalar>
class Detector {
 public:
  /// He-normal weights (head: LeCun-normal), zero biases, seeded.
  explicit Detector(ModelSpec spec, std::uint64_t seed = 0)
      : spec_(std::move(spec)), plan_(plan_network(spec_)) {
    parameters_ = Vector<Scalar>::Zero(plan_.parameter_count());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& e : plan_.entries) {
      if (e.name.ends_with(".bias")) continue;
      const double gain = e.name.starts_with("head.") ? 1.0 : 2.0;
      const double stddev = std::sqrt(gain / double(e.cols()));
      for (std::int64_t i = 0; i < e.size; ++i)
        parameters_(e.offset + i) = Scalar(stddev * normal(rng));
    }
  }

  Detector(ModelSpec spec, Vector<Scalar> parameters)
      : spec_(std::move(spec)), plan_(plan_network(spec_)), parameters_(std::move(parameters)) {
    if (parameters_.size() != plan_.parameter_count())
      throw ShapeMismatch("Detector: parameter vector has " +
                          std::to_string(parameters_.size()) + " values, spec needs " +
                          std::to_string(plan_.parameter_count()));
  }

  const ModelSpec& spec() const { return spec_; }
  const NetworkPlan& plan() const { return plan_; }
  const Vector<Scalar>& parameters() const { return parameters_; }
  Vector<Scalar>& parameters() { return parameters_; }
  std::int64_t parameter_count() const { return parameters_.size(); }

  Eigen::Map<const Matrix<Scalar>> weight(int entry) const {
    const auto& e = plan_.entries[std::size_t(entry)];
    return {parameters_.data() + e.offset, e.rows(), Eigen::Index(e.cols())};
  }
  Eigen::Map<const Vector<Scalar>> bias(int entry) const {
    const auto& e = plan_.entries[std::size_t(entry)];
    return {parameters_.data() + e.offset, Eigen::Index(e.size)};
  }

  template <typename Other>
  Detector<Other> cast() const {
    return Detector<Other>(spec_, parameters_.template cast<Other>().eval());
  }

 private:
  ModelSpec spec_;
  NetworkPlan plan_;
  Vector<Scalar> parameters_;
};

/// One training/evaluation unit: a single frame in image mode, L frames in
/// sequence mode, each with its mask pyramid.
template <typename Scalar>
struct Example {
  std::vector<Image<Scalar>> frames;
  std::vector<maskgen::BasicMaskPyramid<Scalar>> pyramids;
  int label = 0;
};

/// Intermediate values of one stage, kept for backpropagation and inspection.
template <typename Scalar>
struct StageTape {
  Tensor<Scalar> input;
  std::optional<nn::GatherIndex> gather;
  Matrix<Scalar> cols;
  Tensor<Scalar> depthwise;
  Tensor<Scalar> linear;          // convolution + bias
  Tensor<Scalar> pre_activation;  // linear, masked when injecting before the ReLU
  Tensor<Scalar> activation;
  Tensor<Scalar> output;
  const Plane<Scalar>* mask = nullptr;
};

template <typename Scalar>
struct AddBlockTape {
  std::vector<StageTape<Scalar>> stages;
};

template <typename Scalar>
struct ForwardTape {
  std::vector<AddBlockTape<Scalar>> frames;
  std::vector<StageTape<Scalar>> trunk;
  StageTape<Scalar> head;
  Logits<Scalar> logits;
};

/// dL/d(mask level), indexed [frame][injection].
template <typename Scalar>
struct MaskGradients {
  std::vector<std::vector<Plane<Scalar>>> levels;

  /// Chains the level gradients back to each frame's base mask.
  std::vector<Plane<Scalar>> base(const ModelSpec& spec) const {
    std::vector<Plane<Scalar>> out;
    const auto res = spec.injection_resolutions();
    for (const auto& frame : levels) {
      Plane<Scalar> g = Plane<Scalar>::Zero(spec.input_size.height, spec.input_size.width);
      for (std::size_t k = 0; k < frame.size(); ++k)
        g += maskgen::average_pool_adjoint(frame[k], spec.input_size.width / res[k].width,
                                           spec.input_size.height / res[k].height);
      out.push_back(std::move(g));
    }
    return out;
  }
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> run_stage(const Detector<Scalar>& net, const StagePlan& p, Tensor<Scalar> x,
                         std::type_identity_t<const Plane<Scalar>*> mask,
                         StageTape<Scalar>& tape) {
  const bool pointwise = !p.separable && p.geometry.taps() == 1 &&
                         p.geometry.stride == std::array<int, 3>{1, 1, 1};
  const auto w = net.weight(p.weight);
  const auto b = net.bias(p.bias);
  if (x.shape.channels != p.in_channels)
    throw ShapeMismatch(p.prefix + ": expected " + std::to_string(p.in_channels) +
                        " input channels, got " + std::to_string(x.shape.channels));
  if (p.separable) {
    tape.gather.emplace(x.shape, p.geometry);
    tape.depthwise = nn::depthwise_forward(x, *tape.gather, net.weight(p.depthwise));
    Shape out = tape.depthwise.shape;
    out.channels = p.out_channels;
    tape.linear = Tensor<Scalar>(out, w * tape.depthwise.data);
    tape.linear.data.colwise() += b;
  } else if (pointwise) {
    Shape out = x.shape;
    out.channels = p.out_channels;
    tape.linear = Tensor<Scalar>(out, w * x.data);
    tape.linear.data.colwise() += b;
  } else {
    tape.gather.emplace(x.shape, p.geometry);
    tape.linear = nn::conv_forward(x, *tape.gather, w, b, tape.cols);
  }
  tape.input = std::move(x);

  const Shape& s = tape.linear.shape;
  if (mask && (s.depth != 1 || mask->rows() != s.height || mask->cols() != s.width))
    throw ShapeMismatch(p.prefix + ": mask " + std::to_string(mask->cols()) + "x" +
                        std::to_string(mask->rows()) + " does not match feature map " + s.str());
  tape.mask = mask;
  const InjectionSite site = net.spec().injection_site;

  tape.pre_activation = tape.linear;
  if (mask && site == InjectionSite::pre_activation) nn::multiply_by_mask(tape.pre_activation, *mask);
  tape.activation = tape.pre_activation;
  if (p.activation) tape.activation.data = tape.activation.data.cwiseMax(Scalar(0));
  tape.output = tape.activation;
  if (mask && site == InjectionSite::post_activation) nn::multiply_by_mask(tape.output, *mask);
  return tape.output;
}

template <typename Scalar>
Tensor<Scalar> backprop_stage(const Detector<Scalar>& net, const StagePlan& p,
                              const StageTape<Scalar>& tape, Tensor<Scalar> grad_out,
                              Vector<Scalar>& grad,
                              std::type_identity_t<Plane<Scalar>*> mask_grad) {
  const InjectionSite site = net.spec().injection_site;
  const auto& entries = net.plan().entries;
  auto grad_matrix = [&](int entry) {
    const auto& e = entries[std::size_t(entry)];
    return Eigen::Map<Matrix<Scalar>>(grad.data() + e.offset, e.rows(), Eigen::Index(e.cols()));
  };
  auto grad_vector = [&](int entry) {
    const auto& e = entries[std::size_t(entry)];
    return Eigen::Map<Vector<Scalar>>(grad.data() + e.offset, Eigen::Index(e.size));
  };
  const Shape& s = tape.linear.shape;

  if (tape.mask && site == InjectionSite::post_activation) {
    if (mask_grad) *mask_grad += nn::mask_gradient(grad_out, tape.activation, s.height, s.width);
    nn::multiply_by_mask(grad_out, *tape.mask);
  }
  if (p.activation)
    grad_out.data.array() *= (tape.pre_activation.data.array() > Scalar(0)).template cast<Scalar>();
  if (tape.mask && site == InjectionSite::pre_activation) {
    if (mask_grad) *mask_grad += nn::mask_gradient(grad_out, tape.linear, s.height, s.width);
    nn::multiply_by_mask(grad_out, *tape.mask);
  }

  const auto w = net.weight(p.weight);
  grad_vector(p.bias) += grad_out.data.rowwise().sum();
  if (p.separable) {
    grad_matrix(p.weight).noalias() += grad_out.data * tape.depthwise.data.transpose();
    Tensor<Scalar> grad_dw(tape.depthwise.shape, w.transpose() * grad_out.data);
    return nn::depthwise_backward(tape.input, grad_dw, *tape.gather, net.weight(p.depthwise),
                                  grad_matrix(p.depthwise));
  }
  if (!tape.gather) {
    grad_matrix(p.weight).noalias() += grad_out.data * tape.input.data.transpose();
    return Tensor<Scalar>(tape.input.shape, w.transpose() * grad_out.data);
  }
  grad_matrix(p.weight).noalias() += grad_out.data * tape.cols.transpose();
  const Matrix<Scalar> dcols = w.transpose() * grad_out.data;
  Tensor<Scalar> dx(tape.input.shape);
  nn::col2im_add(dcols, *tape.gather, dx);
  return dx;
}

template <typename Scalar>
void check_frame(const ModelSpec& spec, const Image<Scalar>& image,
                 const maskgen::BasicMaskPyramid<Scalar>& pyramid) {
  if (image.width() != spec.input_size.width || image.height() != spec.input_size.height ||
      image.num_channels() != spec.input_channels)
    throw ShapeMismatch("input image " + std::to_string(image.width()) + "x" +
                        std::to_string(image.height()) + "x" +
                        std::to_string(image.num_channels()) + " does not match model input " +
                        std::to_string(spec.input_size.width) + "x" +
                        std::to_string(spec.input_size.height) + "x" +
                        std::to_string(spec.input_channels));
  if (spec.attention_enabled && pyramid.num_injections() != spec.injection_points.size())
    throw ShapeMismatch("mask pyramid has " + std::to_string(pyramid.num_injections()) +
                        " injection levels, model needs " +
                        std::to_string(spec.injection_points.size()));
}

template <typename Scalar>
Logits<Scalar> run_head(const Detector<Scalar>& net, Tensor<Scalar> features,
                        StageTape<Scalar>& tape) {
  const Tensor<Scalar> z = run_stage(net, net.plan().head, std::move(features), nullptr, tape);
  return z.data.rowwise().mean();
}

}  // namespace detail

/// Runs the ADD block on one frame, multiplying each injected stage's output by
/// its pyramid level (broadcast over channels).
template <typename Scalar>
Tensor<Scalar> add_block_forward(const Detector<Scalar>& net, const Image<Scalar>& image,
                                 const maskgen::BasicMaskPyramid<Scalar>& pyramid,
                                 AddBlockTape<Scalar>* tape = nullptr) {
  detail::check_frame(net.spec(), image, pyramid);
  AddBlockTape<Scalar> local;
  AddBlockTape<Scalar>& t = tape ? *tape : local;
  t.stages.assign(net.plan().add_block.size(), {});
  Tensor<Scalar> x = Tensor<Scalar>::from_image(image);
  for (std::size_t i = 0; i < net.plan().add_block.size(); ++i) {
    const StagePlan& p = net.plan().add_block[i];
    const Plane<Scalar>* mask =
        p.injection >= 0 ? &pyramid.injection_level(std::size_t(p.injection)) : nullptr;
    x = detail::run_stage(net, p, std::move(x), mask, t.stages[i]);
  }
  return x;
}

/// ADD block, 2D trunk, 1x1 convolution to two channels, global average pooling.
template <typename Scalar>
Logits<Scalar> addnet2d_forward(const Detector<Scalar>& net, const Image<Scalar>& image,
                                const maskgen::BasicMaskPyramid<Scalar>& pyramid,
                                ForwardTape<Scalar>* tape = nullptr) {
  if (net.spec().mode != Mode::image) throw ModeMismatch("addnet2d_forward needs an image-mode spec");
  ForwardTape<Scalar> local;
  ForwardTape<Scalar>& t = tape ? *tape : local;
  t.frames.assign(1, {});
  Tensor<Scalar> x = add_block_forward(net, image, pyramid, &t.frames[0]);
  t.trunk.assign(net.plan().trunk.size(), {});
  for (std::size_t i = 0; i < net.plan().trunk.size(); ++i)
    x = detail::run_stage(net, net.plan().trunk[i], std::move(x), nullptr, t.trunk[i]);
  t.logits = detail::run_head(net, std::move(x), t.head);
  return t.logits;
}

/// Shared ADD block per frame, frames stacked on a temporal axis, 3D trunk, head.
template <typename Scalar>
Logits<Scalar> addnet3d_forward(const Detector<Scalar>& net, std::span<const Image<Scalar>> clip,
                                std::span<const maskgen::BasicMaskPyramid<Scalar>> pyramids,
                                ForwardTape<Scalar>* tape = nullptr) {
  const ModelSpec& spec = net.spec();
  if (spec.mode != Mode::sequence) throw ModeMismatch("addnet3d_forward needs a sequence-mode spec");
  if (int(clip.size()) != spec.sequence_length || pyramids.size() != clip.size())
    throw BadClipLength("clip has " + std::to_string(clip.size()) + " frames and " +
                        std::to_string(pyramids.size()) + " pyramids, model expects " +
                        std::to_string(spec.sequence_length));
  ForwardTape<Scalar> local;
  ForwardTape<Scalar>& t = tape ? *tape : local;
  t.frames.assign(clip.size(), {});
  Tensor<Scalar> stacked;
  for (std::size_t l = 0; l < clip.size(); ++l) {
    const Tensor<Scalar> f = add_block_forward(net, clip[l], pyramids[l], &t.frames[l]);
    if (l == 0) {
      Shape s = f.shape;
      s.depth = int(clip.size());
      stacked = Tensor<Scalar>(s);
    }
    stacked.data.middleCols(Eigen::Index(l) * f.shape.spatial(), f.shape.spatial()) = f.data;
  }
  Tensor<Scalar> x = std::move(stacked);
  t.trunk.assign(net.plan().trunk.size(), {});
  for (std::size_t i = 0; i < net.plan().trunk.size(); ++i)
    x = detail::run_stage(net, net.plan().trunk[i], std::move(x), nullptr, t.trunk[i]);
  t.logits = detail::run_head(net, std::move(x), t.head);
  return t.logits;
}

template <typename Scalar>
Logits<Scalar> forward(const Detector<Scalar>& net, const Example<Scalar>& example,
                       ForwardTape<Scalar>* tape = nullptr) {
  if (net.spec().mode == Mode::image) {
    if (example.frames.size() != 1 || example.pyramids.size() != 1)
      throw ModeMismatch("image-mode model needs exactly one frame per example");
    return addnet2d_forward(net, example.frames[0], example.pyramids[0], tape);
  }
  return addnet3d_forward<Scalar>(net, example.frames, example.pyramids, tape);
}

/// Cross-entropy loss of one example. Adds dL/dθ into `grad` (which must be
/// sized to the parameter count) and, optionally, dL/dmask per frame and level.
template <typename Scalar>
Scalar loss_and_gradient(const Detector<Scalar>& net, const Example<Scalar>& example,
                         Vector<Scalar>& grad,
                         std::type_identity_t<MaskGradients<Scalar>*> mask_grads = nullptr,
                         std::type_identity_t<Logits<Scalar>*> logits_out = nullptr) {
  ForwardTape<Scalar> tape;
  const Logits<Scalar> logits = forward(net, example, &tape);
  if (logits_out) *logits_out = logits;
  const Scalar loss = cross_entropy(logits, example.label);
  const Logits<Scalar> dlogits = cross_entropy_gradient(logits, example.label);

  const NetworkPlan& plan = net.plan();
  const Shape head_shape = tape.head.linear.shape;
  Tensor<Scalar> g(head_shape);
  g.data.colwise() = dlogits / Scalar(head_shape.spatial());
  g = detail::backprop_stage(net, plan.head, tape.head, std::move(g), grad, nullptr);
  for (std::size_t i = plan.trunk.size(); i-- > 0;)
    g = detail::backprop_stage(net, plan.trunk[i], tape.trunk[i], std::move(g), grad, nullptr);

  const std::size_t frames = tape.frames.size();
  const std::size_t injections = net.spec().injection_points.size();
  if (mask_grads) {
    mask_grads->levels.assign(frames, {});
    const auto res = net.spec().injection_resolutions();
    for (auto& f : mask_grads->levels)
      for (std::size_t k = 0; k < injections; ++k)
        f.push_back(Plane<Scalar>::Zero(res[k].height, res[k].width));
  }
  const int per_frame = g.shape.spatial() / g.shape.depth;
  for (std::size_t l = frames; l-- > 0;) {
    Shape s = g.shape;
    s.depth = 1;
    Tensor<Scalar> gf(s, g.data.middleCols(Eigen::Index(l) * per_frame, per_frame));
    const auto& stages = tape.frames[l].stages;
    for (std::size_t i = stages.size(); i-- > 0;) {
      const StagePlan& p = plan.add_block[i];
      Plane<Scalar>* mg = (mask_grads && p.injection >= 0)
                              ? &mask_grads->levels[l][std::size_t(p.injection)]
                              : nullptr;
      gf = detail::backprop_stage(net, p, stages[i], std::move(gf), grad, mg);
    }
  }
  return loss;
}

extern template class Detector<float>;
extern template class Detector<double>;

}  // namespace addnet::model
