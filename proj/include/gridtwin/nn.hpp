#pragma once

// Small dense networks with reverse-mode gradients, an adaptive-moment
// optimizer and soft (Polyak) target updates. Batches are column-major:
// a batch of k inputs is a (features x k) matrix.

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace gridtwin::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class Activation { Identity, Relu, Tanh };

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::Identity, "identity"}, {Activation::Relu, "relu"}, {Activation::Tanh, "tanh"}})

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Parameter-shaped container used for gradients and optimizer moments.
struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] += o.weight[i];
      bias[i] += o.bias[i];
    }
    return *this;
  }
};

class DenseNet {
 public:
  DenseNet() = default;

  /// `sizes` lists layer widths from input to output, e.g. {21, 256, 256, 2}.
  DenseNet(std::vector<int> sizes, Activation hidden, Activation output, Rng& rng)
      : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
    if (sizes_.size() < 2) throw std::invalid_argument("a network needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
      const int in = sizes_[i], out = sizes_[i + 1];
      if (in <= 0 || out <= 0) throw std::invalid_argument("layer sizes must be positive");
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      DenseLayer l{Matrix(out, in), Vector(out)};
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = u(rng);
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = u(rng);
      layers_.push_back(std::move(l));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  bool same_architecture(const DenseNet& o) const {
    return sizes_ == o.sizes_ && hidden_ == o.hidden_ && output_ == o.output_;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Intermediate values kept for the backward pass.
  struct Tape {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> outputs;  // activated output of each layer
  };

  Matrix forward(const Matrix& x) const { return run(x, nullptr); }

  Matrix forward(const Matrix& x, Tape& tape) const { return run(x, &tape); }

  Vector forward_one(const Vector& x) const { return forward(Matrix(x)).col(0); }

  /// Backpropagates dL/d(output). Returns parameter gradients when
  /// `want_params`, and writes dL/d(input) when `d_input` is given.
  Gradients backward(const Tape& tape, const Matrix& d_out, Matrix* d_input = nullptr,
                     bool want_params = true) const {
    Gradients g;
    if (want_params) {
      g.weight.resize(layers_.size());
      g.bias.resize(layers_.size());
    }
    Matrix delta = d_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Activation act = i + 1 == layers_.size() ? output_ : hidden_;
      apply_derivative(act, tape.outputs[i], delta);
      if (want_params) {
        g.weight[i].noalias() = delta * tape.inputs[i].transpose();
        g.bias[i] = delta.rowwise().sum();
      }
      if (i > 0 || d_input) {
        Matrix next(layers_[i].weight.cols(), delta.cols());
        next.noalias() = layers_[i].weight.transpose() * delta;
        delta = std::move(next);
      }
    }
    if (d_input) *d_input = std::move(delta);
    return g;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
      g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

 private:
  static void activate(Activation a, Matrix& z) {
    switch (a) {
      case Activation::Identity: break;
      case Activation::Relu: z = z.cwiseMax(0.0); break;
      case Activation::Tanh: z = z.array().tanh().matrix(); break;
    }
  }

  // Multiplies delta by the activation derivative, expressed via the output.
  static void apply_derivative(Activation a, const Matrix& y, Matrix& delta) {
    switch (a) {
      case Activation::Identity: break;
      case Activation::Relu: delta = (y.array() > 0.0).select(delta, 0.0); break;
      case Activation::Tanh: delta.array() *= 1.0 - y.array().square(); break;
    }
  }

  Matrix run(const Matrix& x, Tape* tape) const {
    if (x.rows() != input_size())
      throw std::invalid_argument("input dimension " + std::to_string(x.rows()) + " does not match network input " +
                                  std::to_string(input_size()));
    if (tape) {
      tape->inputs.resize(layers_.size());
      tape->outputs.resize(layers_.size());
    }
    Matrix a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z(layers_[i].weight.rows(), a.cols());
      z.noalias() = layers_[i].weight * a;
      z.colwise() += layers_[i].bias;
      activate(i + 1 == layers_.size() ? output_ : hidden_, z);
      if (tape) {
        tape->inputs[i] = std::move(a);
        tape->outputs[i] = z;
      }
      a = std::move(z);
    }
    return a;
  }

  std::vector<int> sizes_;
  Activation hidden_{Activation::Relu};
  Activation output_{Activation::Identity};
  std::vector<DenseLayer> layers_;
};

/// Loss over network outputs: returns the loss and fills dL/d(output).
using LossFn = std::function<double(const Matrix& output, Matrix& d_output)>;

/// Parameter gradients of `loss(net(x))`.
inline Gradients gradients(const DenseNet& net, const Matrix& x, const LossFn& loss, double* loss_value = nullptr) {
  DenseNet::Tape tape;
  const Matrix out = net.forward(x, tape);
  Matrix d_out = Matrix::Zero(out.rows(), out.cols());
  const double l = loss(out, d_out);
  if (loss_value) *loss_value = l;
  return net.backward(tape, d_out);
}

/// Adam optimizer state for one network.
struct AdamState {
  double learning_rate{0.001};
  double beta1{0.9};
  double beta2{0.999};
  double epsilon{1e-8};
  long step_count{0};
  Gradients first_moment;
  Gradients second_moment;

  AdamState() = default;
  AdamState(const DenseNet& net, double lr)
      : learning_rate(lr), first_moment(net.zero_gradients()), second_moment(net.zero_gradients()) {}
};

inline void optimizer_step(AdamState& opt, DenseNet& net, const Gradients& grads) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || opt.first_moment.weight.size() != layers.size())
    throw std::invalid_argument("optimizer_step: gradient shape mismatch");
  ++opt.step_count;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
  const double b1 = opt.beta1, b2 = opt.beta2, lr = opt.learning_rate, eps = opt.epsilon;
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    if (g.rows() != param.rows() || g.cols() != param.cols())
      throw std::invalid_argument("optimizer_step: gradient shape mismatch");
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads.weight[i], opt.first_moment.weight[i], opt.second_moment.weight[i]);
    update(layers[i].bias, grads.bias[i], opt.first_moment.bias[i], opt.second_moment.bias[i]);
  }
}

/// target <- (1 - tau) * target + tau * source.
inline void soft_update(DenseNet& target, const DenseNet& source, double tau) {
  if (!target.same_architecture(source)) throw std::invalid_argument("soft_update: architecture mismatch");
  for (std::size_t i = 0; i < target.layers().size(); ++i) {
    auto& t = target.layers()[i];
    const auto& s = source.layers()[i];
    t.weight = (1.0 - tau) * t.weight + tau * s.weight;
    t.bias = (1.0 - tau) * t.bias + tau * s.bias;
  }
}

inline void to_json(nlohmann::json& j, const DenseNet& net) {
  j["architecture"] = {{"sizes", net.sizes()}, {"hidden", net.hidden_activation()}, {"output", net.output_activation()}};
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.weight.cols()));
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weight(r, c);
      w.push_back(row);
    }
    j["layers"].push_back({{"weight", w}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
}

inline void from_json(const nlohmann::json& j, DenseNet& net) {
  const auto& arch = j.at("architecture");
  Rng rng(0);
  DenseNet out(arch.at("sizes").get<std::vector<int>>(), arch.at("hidden").get<Activation>(),
               arch.at("output").get<Activation>(), rng);
  const auto& jl = j.at("layers");
  if (jl.size() != out.layers().size()) throw std::invalid_argument("network file: layer count mismatch");
  for (std::size_t i = 0; i < jl.size(); ++i) {
    auto& l = out.layers()[i];
    const auto& w = jl[i].at("weight");
    const auto b = jl[i].at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != l.weight.rows() || static_cast<Eigen::Index>(b.size()) != l.bias.size())
      throw std::invalid_argument("network file: layer shape mismatch");
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      const auto row = w[static_cast<std::size_t>(r)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != l.weight.cols())
        throw std::invalid_argument("network file: layer shape mismatch");
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = row[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = b[static_cast<std::size_t>(r)];
  }
  net = std::move(out);
}

}  // namespace gridtwin::nn
