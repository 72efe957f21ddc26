#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rowlab::nn {

enum class Activation { kElu, kTanh, kIdentity };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view text);

/// Raised when a gradient or loss contains NaN/Inf. Parameters are left untouched.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully connected network. Hidden layers use `hidden`, the last layer `output`.
/// All parameters live in one flat vector: for each layer, the column-major weight
/// matrix (out x in) followed by the bias.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// Intermediate values of one forward pass; one column per sample.
  struct Cache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre_activations;
    std::uint64_t generation = 0;
  };

  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output = Activation::kIdentity);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  const Vector& parameters() const { return params_; }
  /// Mutable access invalidates caches from earlier forward passes.
  Vector& mutable_parameters() {
    ++generation_;
    return params_;
  }

  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<Matrix> mutable_weight(int layer);
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<Vector> mutable_bias(int layer);

  /// `input` is (input_size x batch).
  Matrix forward(const Eigen::Ref<const Matrix>& input, Cache* cache = nullptr) const;
  Vector forward_one(const Vector& input) const;

  /// Reverse-mode gradient of <output_grad, forward(input)> w.r.t. the flat parameters.
  /// Writes d/d(input) into `input_grad` when given. Throws std::logic_error if the cache
  /// does not belong to the current parameters.
  Vector backward(const Cache& cache, const Eigen::Ref<const Matrix>& output_grad,
                  Matrix* input_grad = nullptr) const;

  /// Orthogonal weights scaled by `hidden_gain` (hidden layers) and `output_gain` (last
  /// layer); zero biases.
  void init_orthogonal(std::mt19937_64& rng, double hidden_gain, double output_gain);

 private:
  Activation activation_of(int layer) const {
    return layer + 1 == layer_count() ? output_ : hidden_;
  }

  std::vector<int> sizes_;
  Activation hidden_ = Activation::kElu;
  Activation output_ = Activation::kIdentity;
  Vector params_;
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  std::uint64_t generation_ = 1;
};

/// Bias-corrected Adam.
template <typename Scalar>
struct AdamState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index size, double lr = 1e-3)
      : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)), learning_rate(lr) {}
};

/// One Adam update of `params` in place. Throws NonFiniteError (and leaves both the
/// parameters and the optimizer state untouched) when any gradient is NaN/Inf.
void adam_step(AdamState<float>& state, Eigen::Ref<Eigen::VectorXf> params,
               const Eigen::Ref<const Eigen::VectorXf>& grads);
void adam_step(AdamState<double>& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads);

extern template class Mlp<float>;
extern template class Mlp<double>;

}  // namespace rowlab::nn
