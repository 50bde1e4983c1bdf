#pragma once

// Minimal sequential network engine: dense and per-point dense layers,
// max-pooling over the point axis, activations, a named parameter store,
// reverse-mode gradients recorded on a tape, and Adam.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dlsi/error.hpp"

namespace dlsi {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

// splitmix64; used to derive independent per-item seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

struct Tensor {
  std::vector<std::size_t> dims;
  // aligned so vectorised reductions round the same way on every allocation
  std::vector<double, Eigen::aligned_allocator<double>> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> d) : dims(std::move(d)) {
    data.assign(element_count(dims), 0.0);
  }

  static std::size_t element_count(const std::vector<std::size_t>& d) {
    return std::accumulate(d.begin(), d.end(), std::size_t{1},
                           std::multiplies<>());
  }
  std::size_t size() const noexcept { return data.size(); }

  // Rank-1 tensors view as a single row.
  Eigen::Index rows() const {
    return dims.size() >= 2 ? static_cast<Eigen::Index>(dims[0]) : 1;
  }
  Eigen::Index cols() const {
    return static_cast<Eigen::Index>(dims.empty() ? 1 : data.size() / rows());
  }
  MatMap matrix() { return MatMap(data.data(), rows(), cols()); }
  ConstMatMap matrix() const { return ConstMatMap(data.data(), rows(), cols()); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Named tensors with gradient and Adam moment slots. Insertion order is kept
// and is the serialisation order.
class ParamStore {
 public:
  struct Slot {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    bool trainable = true;
  };

  std::size_t add(const std::string& name, std::vector<std::size_t> dims) {
    require(!index_.contains(name), "duplicate parameter '", name, "'");
    Slot s;
    s.name = name;
    s.value = Tensor(dims);
    s.grad = Tensor(dims);
    s.m = Tensor(dims);
    s.v = Tensor(dims);
    slots_.push_back(std::move(s));
    index_.emplace(name, slots_.size() - 1);
    ++version_;
    return slots_.size() - 1;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail("unknown parameter '", name, "'");
    return it->second;
  }

  std::size_t size() const noexcept { return slots_.size(); }
  const Slot& slot(std::size_t i) const { return slots_.at(i); }
  const std::vector<Slot>& slots() const noexcept { return slots_; }

  const Tensor& value(std::size_t i) const { return slots_.at(i).value; }
  const Tensor& value(const std::string& name) const { return value(index(name)); }

  // Mutable access invalidates every outstanding tape.
  Tensor& mutable_value(std::size_t i) {
    ++version_;
    return slots_.at(i).value;
  }
  Tensor& mutable_value(const std::string& name) {
    return mutable_value(index(name));
  }

  Tensor& grad(std::size_t i) { return slots_.at(i).grad; }
  const Tensor& grad(std::size_t i) const { return slots_.at(i).grad; }
  const Tensor& grad(const std::string& name) const { return grad(index(name)); }

  bool trainable(std::size_t i) const { return slots_.at(i).trainable; }

  // Applies to every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool on) {
    for (auto& s : slots_) {
      if (s.name.starts_with(prefix)) s.trainable = on;
    }
  }
  void set_all_trainable(bool on) {
    for (auto& s : slots_) s.trainable = on;
  }

  void zero_grad() {
    for (auto& s : slots_) std::fill(s.grad.data.begin(), s.grad.data.end(), 0.0);
  }
  void reset_moments() {
    for (auto& s : slots_) {
      std::fill(s.m.data.begin(), s.m.data.end(), 0.0);
      std::fill(s.v.data.begin(), s.v.data.end(), 0.0);
    }
  }

  std::uint64_t version() const noexcept { return version_; }
  void touch() noexcept { ++version_; }

  std::vector<Slot>& mutable_slots() {
    ++version_;
    return slots_;
  }

 private:
  std::vector<Slot> slots_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t version_ = 0;
};

enum class Activation { Identity, Relu, Tanh };
enum class LayerKind { Dense, Pointwise, MaxPool, Activation, Affine };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  Activation activation = Activation::Identity;
  std::string name;  // parameter prefix for dense kinds
  // fixed map (x + shift) * scale; no parameters
  Eigen::RowVectorXd shift;
  double scale = 1.0;
};

inline LayerSpec dense(std::string name, std::size_t in, std::size_t out) {
  return {LayerKind::Dense, in, out, Activation::Identity, std::move(name), {}, 1.0};
}
inline LayerSpec pointwise(std::string name, std::size_t in, std::size_t out) {
  return {LayerKind::Pointwise, in, out, Activation::Identity, std::move(name), {}, 1.0};
}
inline LayerSpec max_pool(std::size_t width) {
  return {LayerKind::MaxPool, width, width, Activation::Identity, {}, {}, 1.0};
}
inline LayerSpec activation(Activation a, std::size_t width) {
  return {LayerKind::Activation, width, width, a, {}, {}, 1.0};
}
inline LayerSpec affine(Eigen::RowVectorXd shift, double scale) {
  const auto w = static_cast<std::size_t>(shift.size());
  return {LayerKind::Affine, w, w, Activation::Identity, {}, std::move(shift), scale};
}

inline std::string layer_label(const LayerSpec& l, std::size_t index) {
  switch (l.kind) {
    case LayerKind::Dense: return "dense '" + l.name + "'";
    case LayerKind::Pointwise: return "pointwise '" + l.name + "'";
    case LayerKind::MaxPool: return "max-pool #" + std::to_string(index);
    case LayerKind::Activation: return "activation #" + std::to_string(index);
    case LayerKind::Affine: return "affine #" + std::to_string(index);
  }
  return "layer #" + std::to_string(index);
}

// Sequential stack of layers. Rows of an activation matrix are points
// (pointwise stage) or samples (dense stage); max-pool collapses each of
// `groups` equal row blocks into one row.
class Network {
 public:
  Network() = default;
  Network(std::string name, std::vector<LayerSpec> layers)
      : name_(std::move(name)), layers_(std::move(layers)) {
    require(!layers_.empty(), "network '", name_, "' has no layers");
    for (std::size_t k = 1; k < layers_.size(); ++k) {
      require(layers_[k].fan_in == layers_[k - 1].fan_out, "network '", name_,
              "': ", layer_label(layers_[k], k), " fan-in ", layers_[k].fan_in,
              " does not match previous fan-out ", layers_[k - 1].fan_out);
    }
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t in_width() const { return layers_.front().fan_in; }
  std::size_t out_width() const { return layers_.back().fan_out; }

  static std::string weight_name(const LayerSpec& l) { return l.name + ".weight"; }
  static std::string bias_name(const LayerSpec& l) { return l.name + ".bias"; }

  /// Registers parameters with Glorot-uniform weights and zero biases.
  void initialize(ParamStore& store, Rng& rng) const {
    for (const auto& l : layers_) {
      if (l.kind != LayerKind::Dense && l.kind != LayerKind::Pointwise) continue;
      const auto w = store.add(weight_name(l), {l.fan_in, l.fan_out});
      store.add(bias_name(l), {l.fan_out});
      const double limit =
          std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
      for (double& x : store.mutable_value(w).data) x = rng.uniform(-limit, limit);
    }
  }

 private:
  std::string name_;
  std::vector<LayerSpec> layers_;
};

// Everything backward needs from a forward pass.
struct Tape {
  const Network* net = nullptr;
  const ParamStore* store = nullptr;
  std::uint64_t version = 0;
  Eigen::Index groups = 1;
  std::vector<Mat> inputs;   // input of each layer
  std::vector<std::vector<Eigen::Index>> argmax;  // max-pool routing
  std::vector<std::size_t> weight_slot;
  std::vector<std::size_t> bias_slot;
  Mat output;
};

namespace detail {

inline void check_finite(const Mat& m, const Network& net, std::size_t k) {
#ifndef NDEBUG
  if (!m.allFinite()) {
    fail("non-finite value after ", layer_label(net.layers()[k], k),
         " in network '", net.name(), "'");
  }
#else
  (void)m;
  (void)net;
  (void)k;
#endif
}

}  // namespace detail

/// Runs `net` on `input`. For networks with a max-pool, `groups` is the
/// number of samples stacked along the rows.
inline Tape forward(const Network& net, const ParamStore& store, Mat input,
                    Eigen::Index groups = 1) {
  Tape tape;
  tape.net = &net;
  tape.store = &store;
  tape.version = store.version();
  tape.groups = groups;
  const auto& layers = net.layers();
  tape.inputs.reserve(layers.size());
  tape.argmax.resize(layers.size());
  tape.weight_slot.assign(layers.size(), 0);
  tape.bias_slot.assign(layers.size(), 0);

  Mat x = std::move(input);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const LayerSpec& l = layers[k];
    if (static_cast<std::size_t>(x.cols()) != l.fan_in) {
      fail("network '", net.name(), "': ", layer_label(l, k), " expects width ",
           l.fan_in, ", got ", x.cols());
    }
    Mat y;
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Pointwise: {
        const auto wi = store.index(Network::weight_name(l));
        const auto bi = store.index(Network::bias_name(l));
        tape.weight_slot[k] = wi;
        tape.bias_slot[k] = bi;
        const ConstMatMap w = store.value(wi).matrix();
        const Eigen::Map<const Eigen::RowVectorXd> b(
            store.value(bi).data.data(), static_cast<Eigen::Index>(l.fan_out));
        y.resize(x.rows(), static_cast<Eigen::Index>(l.fan_out));
        y.noalias() = x * w;
        y.rowwise() += b;
        break;
      }
      case LayerKind::MaxPool: {
        require(groups >= 1 && x.rows() % groups == 0, "network '", net.name(),
                "': ", layer_label(l, k), " cannot split ", x.rows(),
                " rows into ", groups, " groups");
        const Eigen::Index per = x.rows() / groups;
        require(per >= 1, "network '", net.name(), "': ", layer_label(l, k),
                " received no points");
        y.resize(groups, x.cols());
        auto& arg = tape.argmax[k];
        arg.assign(static_cast<std::size_t>(groups * x.cols()), 0);
        // row-major sweep; strict comparison so the first index wins ties
        const Eigen::Index cols = x.cols();
        for (Eigen::Index g = 0; g < groups; ++g) {
          const Eigen::Index base = g * per;
          double* best = y.row(g).data();
          Eigen::Index* at = arg.data() + g * cols;
          const double* first = x.row(base).data();
          for (Eigen::Index c = 0; c < cols; ++c) {
            best[c] = first[c];
            at[c] = base;
          }
          for (Eigen::Index r = base + 1; r < base + per; ++r) {
            const double* xr = x.row(r).data();
            for (Eigen::Index c = 0; c < cols; ++c) {
              if (xr[c] > best[c]) {
                best[c] = xr[c];
                at[c] = r;
              }
            }
          }
        }
        break;
      }
      case LayerKind::Activation: {
        // in place; backward reads the output, kept as the next layer's input
        switch (l.activation) {
          case Activation::Identity: break;
          case Activation::Relu: x.array() = x.array().max(0.0); break;
          case Activation::Tanh: x.array() = x.array().tanh(); break;
        }
        detail::check_finite(x, net, k);
        tape.inputs.emplace_back();
        continue;
      }
      case LayerKind::Affine: {
        y = (x.rowwise() + l.shift) * l.scale;
        break;
      }
    }
    detail::check_finite(y, net, k);
    tape.inputs.push_back(std::move(x));
    x = std::move(y);
  }
  tape.output = std::move(x);
  return tape;
}

inline Mat forward_value(const Network& net, const ParamStore& store, Mat input,
                         Eigen::Index groups = 1) {
  return forward(net, store, std::move(input), groups).output;
}

namespace detail {

inline Mat backward_impl(const Tape& tape, const Mat& upstream, ParamStore* grads) {
  require(tape.net != nullptr && tape.store != nullptr, "backward: empty tape");
  if (tape.store->version() != tape.version) {
    fail("backward: stale tape for network '", tape.net->name(),
         "' (parameters changed since forward)");
  }
  require(grads == nullptr || grads == tape.store,
          "backward: gradients must go to the store used in forward");
  require(upstream.rows() == tape.output.rows() &&
              upstream.cols() == tape.output.cols(),
          "backward: upstream gradient shape ", upstream.rows(), "x",
          upstream.cols(), " does not match output ", tape.output.rows(), "x",
          tape.output.cols());

  const auto& layers = tape.net->layers();
  const ParamStore& store = *tape.store;
  Mat g = upstream;
  // Below a max-pool only the routed rows carry gradient; `active` lists
  // them and `g` then holds just those rows.
  std::vector<Eigen::Index> active;
  bool compact = false;
  for (std::size_t kk = layers.size(); kk-- > 0;) {
    const LayerSpec& l = layers[kk];
    const Mat& x = tape.inputs[kk];
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Pointwise: {
        const auto wi = tape.weight_slot[kk];
        const auto bi = tape.bias_slot[kk];
        if (grads != nullptr && store.trainable(wi)) {
          MatMap dw = grads->grad(wi).matrix();
          if (compact) {
            const Mat xs = x(active, Eigen::all);
            dw.noalias() += xs.transpose() * g;
          } else {
            dw.noalias() += x.transpose() * g;
          }
          Eigen::Map<Eigen::RowVectorXd> db(grads->grad(bi).data.data(),
                                            static_cast<Eigen::Index>(l.fan_out));
          db += g.colwise().sum();
        }
        const ConstMatMap w = store.value(wi).matrix();
        Mat gx(g.rows(), x.cols());
        gx.noalias() = g * w.transpose();
        g = std::move(gx);
        break;
      }
      case LayerKind::MaxPool: {
        if (compact) {
          // a second pool: back to full rows first
          Mat full = Mat::Zero(tape.inputs[kk + 1].rows(), g.cols());
          for (std::size_t i = 0; i < active.size(); ++i) full.row(active[i]) = g.row(static_cast<Eigen::Index>(i));
          g = std::move(full);
        }
        const auto& arg = tape.argmax[kk];
        std::vector<Eigen::Index> pos(static_cast<std::size_t>(x.rows()), -1);
        for (Eigen::Index r : arg) pos[static_cast<std::size_t>(r)] = 0;
        std::vector<Eigen::Index> rows;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          if (pos[static_cast<std::size_t>(r)] == 0) {
            pos[static_cast<std::size_t>(r)] = static_cast<Eigen::Index>(rows.size());
            rows.push_back(r);
          }
        }
        Mat gx = Mat::Zero(static_cast<Eigen::Index>(rows.size()), x.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          for (Eigen::Index c = 0; c < g.cols(); ++c) {
            const auto src = arg[static_cast<std::size_t>(r * g.cols() + c)];
            gx(pos[static_cast<std::size_t>(src)], c) += g(r, c);
          }
        }
        active = std::move(rows);
        compact = true;
        g = std::move(gx);
        break;
      }
      case LayerKind::Activation: {
        const Mat& y = kk + 1 < layers.size() ? tape.inputs[kk + 1] : tape.output;
        const auto apply = [&](const auto& yv) {
          switch (l.activation) {
            case Activation::Identity: break;
            case Activation::Relu: g.array() *= (yv.array() > 0.0).template cast<double>(); break;
            case Activation::Tanh: g.array() *= (1.0 - yv.array().square()); break;
          }
        };
        if (compact) {
          apply(Mat(y(active, Eigen::all)));
        } else {
          apply(y);
        }
        break;
      }
      case LayerKind::Affine: g *= l.scale; break;
    }
  }
  if (compact) {
    Mat full = Mat::Zero(tape.inputs.front().rows(), g.cols());
    for (std::size_t i = 0; i < active.size(); ++i) full.row(active[i]) = g.row(static_cast<Eigen::Index>(i));
    g = std::move(full);
  }
  return g;
}

}  // namespace detail

/// Accumulates parameter gradients (trainable slots only) into `store` and
/// returns the gradient with respect to the network input.
inline Mat backward(const Tape& tape, const Mat& upstream, ParamStore& store) {
  return detail::backward_impl(tape, upstream, &store);
}

/// Input gradient only; parameters are not touched.
inline Mat backward_input(const Tape& tape, const Mat& upstream) {
  return detail::backward_impl(tape, upstream, nullptr);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of the trainable parameters; `step` is
/// 1-based. Returns false (and leaves everything untouched) when any
/// trainable gradient is non-finite.
inline bool adam_step(ParamStore& store, const AdamConfig& cfg, long step) {
  require(step >= 1, "adam_step: step counter must start at 1");
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store.trainable(i)) continue;
    for (double g : store.grad(i).data) {
      if (!std::isfinite(g)) {
        std::cerr << "adam: non-finite gradient in '" << store.slot(i).name
                  << "' at step " << step << ", update skipped\n";
        return false;
      }
    }
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  auto& slots = store.mutable_slots();
  for (auto& s : slots) {
    if (!s.trainable) continue;
    auto& w = s.value.data;
    auto& m = s.m.data;
    auto& v = s.v.data;
    const auto& g = s.grad.data;
    const auto n = static_cast<Eigen::Index>(w.size());
    Eigen::Map<Eigen::ArrayXd> wa(w.data(), n), ma(m.data(), n), va(v.data(), n);
    const Eigen::Map<const Eigen::ArrayXd> ga(g.data(), n);
    ma = cfg.beta1 * ma + (1.0 - cfg.beta1) * ga;
    va = cfg.beta2 * va + (1.0 - cfg.beta2) * ga.square();
    wa -= cfg.lr * (ma / c1) / ((va / c2).sqrt() + cfg.eps);
  }
  return true;
}

inline Mat row(const Eigen::VectorXd& v) { return Mat(v.transpose()); }

}  // namespace dlsi
