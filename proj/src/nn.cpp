#include "rowlab/nn.hpp"

#include <cmath>

#include <Eigen/QR>

namespace rowlab::nn {

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::kElu:
      return "elu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view text) {
  if (text == "elu") return Activation::kElu;
  if (text == "tanh") return Activation::kTanh;
  if (text == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + std::string(text) + "'");
}

namespace {

template <typename Derived>
void apply_activation(Activation activation, Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  switch (activation) {
    case Activation::kElu:
      z = z.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : std::expm1(v); });
      break;
    case Activation::kTanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::kIdentity:
      break;
  }
}

// Multiplies `delta` in place by f'(z).
template <typename Matrix>
void scale_by_derivative(Activation activation, const Matrix& z, Matrix& delta) {
  using Scalar = typename Matrix::Scalar;
  switch (activation) {
    case Activation::kElu:
      delta.array() *=
          z.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : std::exp(v); }).array();
      break;
    case Activation::kTanh:
      delta.array() *= (Scalar(1) - z.array().tanh().square());
      break;
    case Activation::kIdentity:
      break;
  }
}

}  // namespace

template <typename Scalar>
Mlp<Scalar>::Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output)
    : sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
  for (int size : sizes_) {
    if (size <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
  }
  Eigen::Index offset = 0;
  for (int l = 0; l < layer_count(); ++l) {
    weight_offset_.push_back(offset);
    offset += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
    bias_offset_.push_back(offset);
    offset += sizes_[l + 1];
  }
  params_ = Vector::Zero(offset);
}

template <typename Scalar>
Eigen::Map<const typename Mlp<Scalar>::Matrix> Mlp<Scalar>::weight(int layer) const {
  return {params_.data() + weight_offset_[layer], sizes_[layer + 1], sizes_[layer]};
}

template <typename Scalar>
Eigen::Map<typename Mlp<Scalar>::Matrix> Mlp<Scalar>::mutable_weight(int layer) {
  ++generation_;
  return {params_.data() + weight_offset_[layer], sizes_[layer + 1], sizes_[layer]};
}

template <typename Scalar>
Eigen::Map<const typename Mlp<Scalar>::Vector> Mlp<Scalar>::bias(int layer) const {
  return {params_.data() + bias_offset_[layer], sizes_[layer + 1]};
}

template <typename Scalar>
Eigen::Map<typename Mlp<Scalar>::Vector> Mlp<Scalar>::mutable_bias(int layer) {
  ++generation_;
  return {params_.data() + bias_offset_[layer], sizes_[layer + 1]};
}

template <typename Scalar>
typename Mlp<Scalar>::Matrix Mlp<Scalar>::forward(const Eigen::Ref<const Matrix>& input,
                                                  Cache* cache) const {
  if (input.rows() != input_size()) {
    throw std::invalid_argument("mlp input has " + std::to_string(input.rows()) +
                                " rows, expected " + std::to_string(input_size()));
  }
  if (cache) {
    cache->inputs.resize(static_cast<std::size_t>(layer_count()));
    cache->pre_activations.resize(static_cast<std::size_t>(layer_count()));
    cache->generation = generation_;
  }
  Matrix activation = input;
  for (int l = 0; l < layer_count(); ++l) {
    Matrix z = weight(l) * activation;
    z.colwise() += bias(l);
    if (cache) {
      cache->inputs[static_cast<std::size_t>(l)] = std::move(activation);
      cache->pre_activations[static_cast<std::size_t>(l)] = z;
    }
    apply_activation(activation_of(l), z);
    activation = std::move(z);
  }
  return activation;
}

template <typename Scalar>
typename Mlp<Scalar>::Vector Mlp<Scalar>::forward_one(const Vector& input) const {
  return forward(Eigen::Ref<const Matrix>(input), nullptr);
}

template <typename Scalar>
typename Mlp<Scalar>::Vector Mlp<Scalar>::backward(const Cache& cache,
                                                   const Eigen::Ref<const Matrix>& output_grad,
                                                   Matrix* input_grad) const {
  if (cache.generation != generation_ ||
      cache.inputs.size() != static_cast<std::size_t>(layer_count())) {
    throw std::logic_error("mlp backward called with a stale or foreign cache");
  }
  const Eigen::Index batch = cache.inputs.front().cols();
  if (output_grad.rows() != output_size() || output_grad.cols() != batch) {
    throw std::invalid_argument("mlp output gradient shape mismatch");
  }
  Vector grad = Vector::Zero(params_.size());
  Matrix delta = output_grad;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const auto& z = cache.pre_activations[static_cast<std::size_t>(l)];
    scale_by_derivative(activation_of(l), z, delta);
    Eigen::Map<Matrix> grad_w(grad.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]);
    grad_w.noalias() = delta * cache.inputs[static_cast<std::size_t>(l)].transpose();
    Eigen::Map<Vector>(grad.data() + bias_offset_[l], sizes_[l + 1]) = delta.rowwise().sum();
    if (l > 0 || input_grad != nullptr) {
      Matrix next = weight(l).transpose() * delta;
      delta = std::move(next);
    }
  }
  if (input_grad) *input_grad = std::move(delta);
  return grad;
}

template <typename Scalar>
void Mlp<Scalar>::init_orthogonal(std::mt19937_64& rng, double hidden_gain, double output_gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < layer_count(); ++l) {
    const int rows = sizes_[l + 1];
    const int cols = sizes_[l];
    const int tall = std::max(rows, cols);
    const int narrow = std::min(rows, cols);
    Eigen::MatrixXd gaussian(tall, narrow);
    for (Eigen::Index j = 0; j < gaussian.cols(); ++j) {
      for (Eigen::Index i = 0; i < gaussian.rows(); ++i) gaussian(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, narrow);
    // Sign fix makes the distribution uniform over orthogonal matrices.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(narrow).template triangularView<Eigen::Upper>();
    for (int k = 0; k < narrow; ++k) {
      if (r(k, k) < 0.0) q.col(k) *= -1.0;
    }
    const double gain = l + 1 == layer_count() ? output_gain : hidden_gain;
    const Eigen::MatrixXd w = rows >= cols ? Eigen::MatrixXd(q) : Eigen::MatrixXd(q.transpose());
    mutable_weight(l) = (gain * w).cast<Scalar>();
    mutable_bias(l).setZero();
  }
}

template <typename Scalar>
void adam_step_impl(AdamState<Scalar>& state,
               Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> params,
               const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& grads) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam: parameter, gradient and moment sizes differ");
  }
  if (!grads.allFinite()) {
    Eigen::Index bad = 0;
    while (bad < grads.size() && std::isfinite(static_cast<double>(grads[bad]))) ++bad;
    throw NonFiniteError("adam: non-finite gradient at parameter " + std::to_string(bad) +
                         " (value " + std::to_string(static_cast<double>(grads[bad])) +
                         "); update skipped");
  }
  state.step += 1;
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  state.first_moment = b1 * state.first_moment + (Scalar(1) - b1) * grads;
  state.second_moment =
      b2 * state.second_moment + (Scalar(1) - b2) * grads.cwiseProduct(grads);
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto step_size = static_cast<Scalar>(state.learning_rate / correction1);
  const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(correction2));
  const auto eps = static_cast<Scalar>(state.epsilon);
  params.array() -= step_size * state.first_moment.array() /
                    (state.second_moment.array().sqrt() * inv_sqrt_c2 + eps);
}

template class Mlp<float>;
template class Mlp<double>;
void adam_step(AdamState<float>& state, Eigen::Ref<Eigen::VectorXf> params,
               const Eigen::Ref<const Eigen::VectorXf>& grads) {
  adam_step_impl(state, params, grads);
}

void adam_step(AdamState<double>& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads) {
  adam_step_impl(state, params, grads);
}

}  // namespace rowlab::nn
