#include "leafseg/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "leafseg/rng.hpp"

namespace leafseg {

std::int64_t Network::parameter_count() const {
  std::int64_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += std::int64_t{layer_sizes[l + 1]} * layer_sizes[l] + layer_sizes[l + 1];
  return n;
}

Network init_network(std::span<const int> layer_sizes, std::uint32_t seed) {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("init_network: need at least input and output layers");
  for (const int s : layer_sizes)
    if (s < 1) throw std::invalid_argument("init_network: layer sizes must be >= 1");

  Network net;
  net.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  std::mt19937 gen(seed);
  const auto draw = [&gen] { return uniform_unit(gen) - 0.5; };
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    const int rows = net.layer_sizes[l + 1];
    const int cols = net.layer_sizes[l];
    Eigen::MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = draw();
    Eigen::VectorXd b(rows);
    for (int r = 0; r < rows; ++r) b[r] = draw();
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    net.weight_momentum.push_back(Eigen::MatrixXd::Zero(rows, cols));
    net.bias_momentum.push_back(Eigen::VectorXd::Zero(rows));
  }
  return net;
}

Eigen::VectorXd forward(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != net.input_size())
    throw std::invalid_argument("forward: input arity " + std::to_string(x.size()) +
                                " does not match input layer " +
                                std::to_string(net.input_size()));
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    a = ((net.weights[l] * a + net.biases[l]).array().tanh()).matrix();
  return a;
}

Eigen::MatrixXd forward_batch(const Network& net,
                              const Eigen::Ref<const Eigen::MatrixXd>& xs) {
  if (xs.rows() != net.input_size())
    throw std::invalid_argument("forward_batch: input arity " +
                                std::to_string(xs.rows()) +
                                " does not match input layer " +
                                std::to_string(net.input_size()));
  Eigen::MatrixXd a = xs;
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    a = (((net.weights[l] * a).colwise() + net.biases[l]).array().tanh()).matrix();
  return a;
}

Gradients backprop(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& target) {
  if (x.size() != net.input_size())
    throw std::invalid_argument("backprop: input arity mismatch");
  if (target.size() != net.output_size())
    throw std::invalid_argument("backprop: target arity mismatch");

  const std::size_t transitions = net.weights.size();
  std::vector<Eigen::VectorXd> activations(transitions + 1);
  activations[0] = x;
  for (std::size_t l = 0; l < transitions; ++l)
    activations[l + 1] =
        ((net.weights[l] * activations[l] + net.biases[l]).array().tanh()).matrix();

  Gradients grads;
  grads.weights.resize(transitions);
  grads.biases.resize(transitions);
  // delta_l = dE/dz_l with E = 1/2 |y - d|^2 and tanh'(z) = 1 - a^2
  Eigen::VectorXd delta = ((activations.back() - target).array() *
                           (1.0 - activations.back().array().square()))
                              .matrix();
  for (std::size_t l = transitions; l-- > 0;) {
    grads.weights[l] = delta * activations[l].transpose();
    grads.biases[l] = delta;
    if (l > 0)
      delta = ((net.weights[l].transpose() * delta).array() *
               (1.0 - activations[l].array().square()))
                  .matrix();
  }
  return grads;
}

LearningCurve train(Network& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                    const Eigen::Ref<const Eigen::MatrixXd>& targets,
                    const TrainConfig& cfg) {
  if (inputs.rows() != net.input_size())
    throw std::invalid_argument("train: input arity mismatch");
  if (targets.rows() != net.output_size())
    throw std::invalid_argument("train: target arity mismatch");
  if (inputs.cols() != targets.cols())
    throw std::invalid_argument("train: " + std::to_string(inputs.cols()) +
                                " inputs vs " + std::to_string(targets.cols()) +
                                " targets");
  if (inputs.cols() == 0) throw std::invalid_argument("train: empty training set");
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("train: learning rate must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");

  const std::size_t transitions = net.weights.size();
  std::vector<Eigen::VectorXd> activations(transitions + 1);
  std::vector<Eigen::VectorXd> deltas(transitions);
  for (std::size_t l = 0; l < transitions; ++l) {
    activations[l + 1].resize(net.layer_sizes[l + 1]);
    deltas[l].resize(net.layer_sizes[l + 1]);
  }

  LearningCurve curve;
  curve.reserve(static_cast<std::size_t>(cfg.epochs));
  const Eigen::Index samples = inputs.cols();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Eigen::Index i = 0; i < samples; ++i) {
      activations[0] = inputs.col(i);
      for (std::size_t l = 0; l < transitions; ++l) {
        Eigen::VectorXd& z = activations[l + 1];
        z.noalias() = net.weights[l] * activations[l];
        z += net.biases[l];
        z = z.array().tanh().matrix();
      }

      deltas[transitions - 1] = activations.back() - targets.col(i);
      deltas[transitions - 1].array() *=
          1.0 - activations.back().array().square();
      for (std::size_t l = transitions - 1; l-- > 0;) {
        deltas[l].noalias() = net.weights[l + 1].transpose() * deltas[l + 1];
        deltas[l].array() *= 1.0 - activations[l + 1].array().square();
      }

      for (std::size_t l = 0; l < transitions; ++l) {
        net.weight_momentum[l] *= cfg.momentum;
        net.weight_momentum[l].noalias() -=
            cfg.learning_rate * deltas[l] * activations[l].transpose();
        net.bias_momentum[l] *= cfg.momentum;
        net.bias_momentum[l] -= cfg.learning_rate * deltas[l];
        net.weights[l] += net.weight_momentum[l];
        net.biases[l] += net.bias_momentum[l];
      }
    }

    const Eigen::MatrixXd outputs = forward_batch(net, inputs);
    const double mse =
        (outputs - targets).array().square().sum() /
        static_cast<double>(outputs.size());
    if (!std::isfinite(mse))
      throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch + 1));
    curve.push_back(mse);
  }
  return curve;
}

NormalizedPlane predict_image(const Network& net, const PixelFeatureSet& features) {
  if (features.vectors.rows() != net.input_size())
    throw std::invalid_argument("predict_image: feature arity " +
                                std::to_string(features.vectors.rows()) +
                                " does not match input layer " +
                                std::to_string(net.input_size()));
  const Eigen::MatrixXd outputs = forward_batch(net, features.vectors);

  NormalizedPlane plane;
  plane.width = features.width;
  plane.height = features.height;
  plane.channels = static_cast<int>(outputs.rows());
  plane.values.resize(outputs.size());
  const Eigen::Index arity = outputs.rows();
  for (Eigen::Index i = 0; i < outputs.cols(); ++i)
    for (Eigen::Index c = 0; c < arity; ++c)
      plane.values[i * arity + c] = std::clamp(outputs(c, i), 0.0, 1.0);
  return plane;
}

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_network(const Network& net, std::ostream& out) {
  out << "mlpnet 1\nlayers";
  for (const int s : net.layer_sizes) out << ' ' << s;
  out << '\n';
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Eigen::MatrixXd& w = net.weights[l];
    out << "weights " << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (c) out << ' ';
        out << format_value(w(r, c));
      }
      out << '\n';
    }
    out << "biases " << net.biases[l].size() << '\n';
    for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) {
      if (r) out << ' ';
      out << format_value(net.biases[l][r]);
    }
    out << '\n';
  }
}

Network load_network(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "mlpnet" || version != 1)
    throw std::runtime_error("load_network: not a version-1 mlpnet file");
  if (!(in >> tag) || tag != "layers")
    throw std::runtime_error("load_network: expected 'layers' line");

  std::vector<int> sizes;
  {
    std::string rest;
    std::getline(in, rest);
    std::istringstream line(rest);
    int s = 0;
    while (line >> s) sizes.push_back(s);
  }
  if (sizes.size() < 2)
    throw std::runtime_error("load_network: need at least two layer sizes");

  Network net;
  net.layer_sizes = sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag >> rows >> cols) || tag != "weights" || rows != sizes[l + 1] ||
        cols != sizes[l])
      throw std::runtime_error("load_network: malformed weights block for layer " +
                               std::to_string(l));
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        if (!(in >> w(r, c)))
          throw std::runtime_error("load_network: truncated weights for layer " +
                                   std::to_string(l));
    Eigen::Index n = 0;
    if (!(in >> tag >> n) || tag != "biases" || n != rows)
      throw std::runtime_error("load_network: malformed biases block for layer " +
                               std::to_string(l));
    Eigen::VectorXd b(n);
    for (Eigen::Index r = 0; r < n; ++r)
      if (!(in >> b[r]))
        throw std::runtime_error("load_network: truncated biases for layer " +
                                 std::to_string(l));
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    net.weight_momentum.push_back(Eigen::MatrixXd::Zero(rows, cols));
    net.bias_momentum.push_back(Eigen::VectorXd::Zero(rows));
  }
  return net;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open network file: " + path.string());
  save_network(net, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network file: " + path.string());
  return load_network(in);
}

}  // namespace leafseg
