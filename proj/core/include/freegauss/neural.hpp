#pragma once

// Small feed-forward networks with reverse-mode gradients, Adam and SGD.
// Inputs and outputs are column batches: x is in_dim x batch.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "freegauss/matcore.hpp"

namespace freegauss::neural {

enum class Activation { Identity, Tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Identity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Layer shape without parameters.
struct LayerSpec {
  int in;
  int out;
  Activation activation;
};

class Mlp {
 public:
  Mlp() = default;
  /// Throws ShapeError unless consecutive layers chain.
  explicit Mlp(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::vector<LayerSpec> shape() const;
  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<Layer> layers_;
};

/// 2 -> 32 -> tanh -> 32 -> tanh -> 32 -> tanh -> 32 -> out_dim, with an identity
/// first layer (no activation between the first two linear maps).
std::vector<LayerSpec> encoder_shape(int out_dim = 32, int in_dim = 2, int hidden = 32);
/// Mirror of the encoder: code_dim -> 32 -> tanh -> 32 -> tanh -> 32 -> tanh -> out_dim.
std::vector<LayerSpec> decoder_shape(int code_dim = 32, int out_dim = 2, int hidden = 32);

enum class InitScheme {
  /// Weights uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  UniformFanIn,
  /// Weights and biases both uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  UniformFanInBias,
  Zero,
};
std::string to_string(InitScheme s);
InitScheme init_scheme_from_string(std::string_view s);

Mlp init_params(const std::vector<LayerSpec>& shape, Rng& rng,
                InitScheme scheme = InitScheme::UniformFanIn);

struct ForwardResult;
struct BackwardResult;

/// Activations cached by one forward pass. Move-only; consumed by backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;

  bool empty() const noexcept { return inputs_.empty(); }

 private:
  friend ForwardResult forward(const Mlp&, const Matrix&);
  friend BackwardResult backward(const Mlp&, Tape&&, const Matrix&);

  std::vector<Matrix> inputs_;   // input to each layer
  std::vector<Matrix> outputs_;  // post-activation output of each layer
  std::vector<LayerSpec> shape_;
};

struct ForwardResult {
  Matrix y;
  Tape tape;
};

/// Errors: ShapeError when x.rows() != net.in_dim().
ForwardResult forward(const Mlp& net, const Matrix& x);
/// Forward pass without recording.
Matrix predict(const Mlp& net, const Matrix& x);

struct LayerGrad {
  Matrix weight;
  Vector bias;
};

struct BackwardResult {
  std::vector<LayerGrad> grads;
  Matrix dx;
};

/// Reverse pass for upstream gradient dy = dL/dy. StaleTape when the tape is empty
/// (already consumed) or was recorded on a network of a different shape.
BackwardResult backward(const Mlp& net, Tape&& tape, const Matrix& dy);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<LayerGrad> m;
  std::vector<LayerGrad> v;
};

AdamState make_adam(const Mlp& net, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                    double eps = 1e-8);
/// Bias-corrected Adam update in place; step increments by one.
void adam_step(AdamState& state, Mlp& net, const std::vector<LayerGrad>& grads);
/// params <- params - lr * grads.
void sgd_step(Mlp& net, const std::vector<LayerGrad>& grads, double lr);

// Checkpoint: versioned plain text, 17 significant digits, exact round trip.
void save_checkpoint(std::ostream& os, const Mlp& net);
void save_checkpoint(const std::filesystem::path& path, const Mlp& net);
Mlp load_checkpoint(std::istream& is);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace freegauss::neural
