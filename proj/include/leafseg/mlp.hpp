#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "leafseg/features.hpp"
#include "leafseg/image.hpp"

namespace leafseg {

// Fully connected feedforward network with a hyperbolic-tangent activation
// on every neuron. The momentum buffers hold the previous parameter update.
struct Network {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;  // [l]: layer_sizes[l+1] x layer_sizes[l]
  std::vector<Eigen::VectorXd> biases;
  std::vector<Eigen::MatrixXd> weight_momentum;
  std::vector<Eigen::VectorXd> bias_momentum;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::int64_t parameter_count() const;
};

// Weights and biases drawn uniformly from [-0.5, 0.5]; per layer the weight
// matrix is filled one output neuron at a time, then the biases, so a seed
// pins every parameter.
Network init_network(std::span<const int> layer_sizes, std::uint32_t seed);

Eigen::VectorXd forward(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x);

// One column per sample.
Eigen::MatrixXd forward_batch(const Network& net,
                              const Eigen::Ref<const Eigen::MatrixXd>& xs);

// Gradients of E = 1/2 |y - d|^2 for a single sample.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

Gradients backprop(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& target);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int epochs = 100;
  // Recorded alongside results and used by callers to seed init_network;
  // the training loop itself is deterministic.
  std::uint32_t seed = 0;
};

// Mean squared error over the training set after each epoch.
using LearningCurve = std::vector<double>;

// Online backpropagation in ascending sample order (no shuffling):
//   dW = lr * delta * a_prev^T + momentum * dW_prev
// applied after every sample. Throws if the epoch error turns non-finite,
// naming the epoch.
LearningCurve train(Network& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                    const Eigen::Ref<const Eigen::MatrixXd>& targets,
                    const TrainConfig& cfg);

// Pixel-by-pixel inference over a feature set. Outputs are clamped into
// [0, 1]: the activation can emit negatives, the image domain cannot.
NormalizedPlane predict_image(const Network& net, const PixelFeatureSet& features);

// Plain-text parameter file (versioned):
//   mlpnet 1
//   layers <n0> <n1> ...
//   weights <rows> <cols>   (one line per row, incoming weights of a neuron)
//   ...
//   biases <n>              (one line of values)
// repeated per layer transition; values carry 17 significant digits so a
// save/load round trip is exact. Momentum buffers are not persisted and load
// as zeros.
void save_network(const Network& net, std::ostream& out);
Network load_network(std::istream& in);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace leafseg
