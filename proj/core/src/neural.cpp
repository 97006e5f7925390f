#include "freegauss/neural.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace freegauss::neural {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  throw Error(ErrorKind::ParseError, "unknown activation '" + std::string(s) + "'");
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (l.bias.size() != l.out_dim() || l.weight.size() == 0) {
      throw Error(ErrorKind::ShapeError, "layer " + std::to_string(k) + " has inconsistent shapes");
    }
    if (k > 0 && l.in_dim() != layers_[k - 1].out_dim()) {
      throw Error(ErrorKind::ShapeError, "layer " + std::to_string(k) + " input " +
                                             std::to_string(l.in_dim()) +
                                             " does not match previous output " +
                                             std::to_string(layers_[k - 1].out_dim()));
    }
  }
}

std::vector<LayerSpec> Mlp::shape() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) {
    out.push_back({static_cast<int>(l.in_dim()), static_cast<int>(l.out_dim()), l.activation});
  }
  return out;
}

Eigen::Index Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
Eigen::Index Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t k = 0; k < a.layers_.size(); ++k) {
    const auto& x = a.layers_[k];
    const auto& y = b.layers_[k];
    if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
        x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

std::vector<LayerSpec> encoder_shape(int out_dim, int in_dim, int hidden) {
  return {{in_dim, hidden, Activation::Identity},
          {hidden, hidden, Activation::Tanh},
          {hidden, hidden, Activation::Tanh},
          {hidden, hidden, Activation::Tanh},
          {hidden, out_dim, Activation::Identity}};
}

std::vector<LayerSpec> decoder_shape(int code_dim, int out_dim, int hidden) {
  return {{code_dim, hidden, Activation::Tanh},
          {hidden, hidden, Activation::Tanh},
          {hidden, hidden, Activation::Tanh},
          {hidden, out_dim, Activation::Identity}};
}

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::UniformFanIn: return "uniform_fan_in";
    case InitScheme::UniformFanInBias: return "uniform_fan_in_bias";
    case InitScheme::Zero: return "zero";
  }
  return "?";
}

InitScheme init_scheme_from_string(std::string_view s) {
  if (s == "uniform_fan_in") return InitScheme::UniformFanIn;
  if (s == "uniform_fan_in_bias") return InitScheme::UniformFanInBias;
  if (s == "zero") return InitScheme::Zero;
  throw Error(ErrorKind::ConstraintViolation, "unknown init scheme '" + std::string(s) + "'");
}

Mlp init_params(const std::vector<LayerSpec>& shape, Rng& rng, InitScheme scheme) {
  std::vector<Layer> layers;
  for (const auto& spec : shape) {
    if (spec.in < 1 || spec.out < 1) throw Error(ErrorKind::ShapeError, "layer dims must be >= 1");
    Layer l;
    l.weight = Matrix::Zero(spec.out, spec.in);
    l.bias = Vector::Zero(spec.out);
    l.activation = spec.activation;
    if (scheme != InitScheme::Zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in));
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
          l.weight(i, j) = bound * (2.0 * rng.uniform() - 1.0);
        }
      }
      if (scheme == InitScheme::UniformFanInBias) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = bound * (2.0 * rng.uniform() - 1.0);
      }
    }
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

Tape::Tape(Tape&& other) noexcept
    : inputs_(std::move(other.inputs_)),
      outputs_(std::move(other.outputs_)),
      shape_(std::move(other.shape_)) {
  other.inputs_.clear();
  other.outputs_.clear();
  other.shape_.clear();
}

Tape& Tape::operator=(Tape&& other) noexcept {
  if (this != &other) {
    inputs_ = std::move(other.inputs_);
    outputs_ = std::move(other.outputs_);
    shape_ = std::move(other.shape_);
    other.inputs_.clear();
    other.outputs_.clear();
    other.shape_.clear();
  }
  return *this;
}

namespace {

Matrix apply_layer(const Layer& l, const Matrix& x) {
  Matrix z = l.weight * x;
  z.colwise() += l.bias;
  if (l.activation == Activation::Tanh) z = z.array().tanh().matrix();
  return z;
}

void check_input(const Mlp& net, const Matrix& x) {
  if (net.layers().empty()) throw Error(ErrorKind::ShapeError, "network has no layers");
  if (x.rows() != net.in_dim()) {
    throw Error(ErrorKind::ShapeError, "input has " + std::to_string(x.rows()) +
                                           " rows, network expects " +
                                           std::to_string(net.in_dim()));
  }
}

bool same_shape(const std::vector<LayerSpec>& a, const std::vector<LayerSpec>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].in != b[k].in || a[k].out != b[k].out || a[k].activation != b[k].activation) {
      return false;
    }
  }
  return true;
}

}  // namespace

ForwardResult forward(const Mlp& net, const Matrix& x) {
  check_input(net, x);
  ForwardResult result;
  Tape& tape = result.tape;
  tape.shape_ = net.shape();
  Matrix a = x;
  for (const auto& l : net.layers()) {
    Matrix next = apply_layer(l, a);
    tape.inputs_.push_back(std::move(a));
    tape.outputs_.push_back(next);
    a = std::move(next);
  }
  result.y = std::move(a);
  return result;
}

Matrix predict(const Mlp& net, const Matrix& x) {
  check_input(net, x);
  Matrix a = x;
  for (const auto& l : net.layers()) a = apply_layer(l, a);
  return a;
}

BackwardResult backward(const Mlp& net, Tape&& tape_in, const Matrix& dy) {
  Tape tape = std::move(tape_in);
  if (tape.empty()) throw Error(ErrorKind::StaleTape, "tape is empty or already consumed");
  if (!same_shape(tape.shape_, net.shape())) {
    throw Error(ErrorKind::StaleTape, "tape was recorded on a network of a different shape");
  }
  const Matrix& y = tape.outputs_.back();
  if (dy.rows() != y.rows() || dy.cols() != y.cols()) {
    throw Error(ErrorKind::ShapeError, "upstream gradient shape does not match forward output");
  }
  const auto& layers = net.layers();
  BackwardResult result;
  result.grads.resize(layers.size());
  Matrix delta = dy;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    if (l.activation == Activation::Tanh) {
      delta.array() *= 1.0 - tape.outputs_[k].array().square();
    }
    result.grads[k].weight = delta * tape.inputs_[k].transpose();
    result.grads[k].bias = delta.rowwise().sum();
    delta = l.weight.transpose() * delta;
  }
  result.dx = std::move(delta);
  return result;
}

AdamState make_adam(const Mlp& net, double lr, double beta1, double beta2, double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& l : net.layers()) {
    s.m.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    s.v.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return s;
}

namespace {

void check_grads(const Mlp& net, const std::vector<LayerGrad>& grads) {
  const auto& layers = net.layers();
  if (grads.size() != layers.size()) {
    throw Error(ErrorKind::ShapeError, "gradient list does not match the layer count");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (grads[k].weight.rows() != layers[k].weight.rows() ||
        grads[k].weight.cols() != layers[k].weight.cols() ||
        grads[k].bias.size() != layers[k].bias.size()) {
      throw Error(ErrorKind::ShapeError, "gradient shape mismatch at layer " + std::to_string(k));
    }
  }
}

template <class Param, class Grad, class Moment>
void adam_update(Param& p, const Grad& g, Moment& m, Moment& v, const AdamState& s, double bc1,
                 double bc2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
  p.array() -= s.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.eps);
}

}  // namespace

void adam_step(AdamState& state, Mlp& net, const std::vector<LayerGrad>& grads) {
  check_grads(net, grads);
  if (state.m.size() != grads.size() || state.v.size() != grads.size()) {
    throw Error(ErrorKind::ShapeError, "Adam state does not match the network");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    adam_update(layers[k].weight, grads[k].weight, state.m[k].weight, state.v[k].weight, state,
                bc1, bc2);
    adam_update(layers[k].bias, grads[k].bias, state.m[k].bias, state.v[k].bias, state, bc1, bc2);
  }
}

void sgd_step(Mlp& net, const std::vector<LayerGrad>& grads, double lr) {
  check_grads(net, grads);
  auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].weight -= lr * grads[k].weight;
    layers[k].bias -= lr * grads[k].bias;
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   freegauss-mlp 1
//   layers <n>
//   layer <k> <in> <out> <activation>
//   weight <out*in values, row-major>
//   bias <out values>

namespace {

constexpr std::string_view kMagic = "freegauss-mlp";
constexpr int kVersion = 1;

std::vector<double> read_values(std::istringstream& line, std::size_t count, int line_no) {
  std::vector<double> out;
  out.reserve(count);
  std::string token;
  while (line >> token) {
    const auto v = parse_double(token);
    if (!v) {
      throw Error(ErrorKind::ParseError,
                  "checkpoint line " + std::to_string(line_no) + ": bad number '" + token + "'");
    }
    out.push_back(*v);
  }
  if (out.size() != count) {
    throw Error(ErrorKind::ParseError, "checkpoint line " + std::to_string(line_no) +
                                           ": expected " + std::to_string(count) + " values, got " +
                                           std::to_string(out.size()));
  }
  return out;
}

}  // namespace

void save_checkpoint(std::ostream& os, const Mlp& net) {
  os << kMagic << ' ' << kVersion << '\n';
  os << "layers " << net.layers().size() << '\n';
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    const auto& l = net.layers()[k];
    os << "layer " << k << ' ' << l.in_dim() << ' ' << l.out_dim() << ' '
       << to_string(l.activation) << '\n';
    os << "weight";
    for (double w : to_row_major(l.weight)) os << ' ' << format_double(w);
    os << "\nbias";
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) os << ' ' << format_double(l.bias[i]);
    os << '\n';
  }
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  save_checkpoint(os, net);
}

Mlp load_checkpoint(std::istream& is) {
  std::string text;
  int line_no = 0;
  auto next_line = [&](std::string_view expected_tag) {
    if (!std::getline(is, text)) {
      throw Error(ErrorKind::ParseError, "checkpoint truncated before '" +
                                             std::string(expected_tag) + "'");
    }
    ++line_no;
    std::istringstream line(text);
    std::string tag;
    line >> tag;
    if (tag != expected_tag) {
      throw Error(ErrorKind::ParseError, "checkpoint line " + std::to_string(line_no) +
                                             ": expected '" + std::string(expected_tag) + "'");
    }
    return line;
  };

  auto header = next_line(kMagic);
  int version = 0;
  header >> version;
  if (version != kVersion) {
    throw Error(ErrorKind::ParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  auto count_line = next_line("layers");
  std::size_t n = 0;
  if (!(count_line >> n)) throw Error(ErrorKind::ParseError, "bad layer count");

  std::vector<Layer> layers;
  for (std::size_t k = 0; k < n; ++k) {
    auto spec = next_line("layer");
    std::size_t index = 0;
    long in = 0;
    long out = 0;
    std::string act;
    if (!(spec >> index >> in >> out >> act) || index != k || in < 1 || out < 1) {
      throw Error(ErrorKind::ParseError, "checkpoint line " + std::to_string(line_no) +
                                             ": bad layer header");
    }
    Layer l;
    l.activation = activation_from_string(act);
    auto wline = next_line("weight");
    l.weight = matrix_from_row_major(out, in,
                                     read_values(wline, static_cast<std::size_t>(in * out), line_no));
    auto bline = next_line("bias");
    const auto b = read_values(bline, static_cast<std::size_t>(out), line_no);
    l.bias = Eigen::Map<const Vector>(b.data(), out);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return load_checkpoint(is);
}

}  // namespace freegauss::neural
