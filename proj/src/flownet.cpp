#include "plume/flownet.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "plume/array_io.hpp"
#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

namespace {

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

// For ELU with alpha=1 the derivative is recoverable from the activation
// value: phi'(x) = 1 for x>0, phi(x)+1 otherwise (and phi(x)>0 iff x>0).
inline double elu_deriv_from_value(double h) { return h > 0.0 ? 1.0 : h + 1.0; }

void apply_activation(Mat& a, Activation act) {
  if (act == Activation::Identity) return;
  double* p = a.data();
  const Eigen::Index n = a.size();
  for (Eigen::Index i = 0; i < n; ++i) p[i] = elu(p[i]);
}

void check_dims(const FlowNet& net, const Vec& c, const Vec& w) {
  if (c.size() != net.state_dim || w.size() != net.wind_dim) {
    throw DimensionMismatch("flownet: input dimensions do not match network");
  }
}

}  // namespace

Eigen::Index FlowNet::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].size() + biases[l].size();
  }
  return n;
}

Vec FlowNet::flatten() const {
  Vec out(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Mat& w = weights[l];
    std::copy(w.data(), w.data() + w.size(), out.data() + at);
    at += w.size();
    const Vec& b = biases[l];
    std::copy(b.data(), b.data() + b.size(), out.data() + at);
    at += b.size();
  }
  return out;
}

void FlowNet::unflatten(const Vec& params) {
  if (params.size() != parameter_count()) {
    throw DimensionMismatch("flownet: flat parameter length mismatch");
  }
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Mat& w = weights[l];
    std::copy(params.data() + at, params.data() + at + w.size(), w.data());
    at += w.size();
    Vec& b = biases[l];
    std::copy(params.data() + at, params.data() + at + b.size(), b.data());
    at += b.size();
  }
}

Mat glorot_init(int rows, int cols, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Rng rng(seed);
  Mat w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = rng.uniform(-bound, bound);
  }
  return w;
}

FlowNet make_flownet(int state_dim, int wind_dim, double dt, int width,
                     int depth, std::uint64_t seed) {
  if (state_dim < 1 || wind_dim < 0 || width < 1 || depth < 1) {
    throw ConfigError("make_flownet: bad architecture parameters");
  }
  FlowNet net;
  net.state_dim = state_dim;
  net.wind_dim = wind_dim;
  net.dt = dt;
  const int in = net.input_dim();
  for (int l = 0; l < depth; ++l) {
    const int rows = width;
    const int cols = l == 0 ? in : width;
    net.weights.push_back(glorot_init(rows, cols, mix_seed(seed, l)));
    net.biases.push_back(Vec::Zero(rows));
  }
  net.weights.push_back(glorot_init(state_dim, width, mix_seed(seed, depth)));
  net.biases.push_back(Vec::Zero(state_dim));
  net.input_scale = Vec::Ones(in);
  net.output_scale = Vec::Ones(state_dim);
  return net;
}

Vec net_forward(const FlowNet& net, const Vec& c, double z, const Vec& w) {
  check_dims(net, c, w);
  Vec x(net.input_dim());
  x << c, z, w;
  x.array() /= net.input_scale.array();
  Vec h = x;
  for (int l = 0; l < net.hidden_depth(); ++l) {
    Vec a = net.weights[l] * h + net.biases[l];
    if (net.activation == Activation::Elu) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = elu(a[i]);
    }
    h = std::move(a);
  }
  Vec out = net.weights.back() * h + net.biases.back();
  return c + net.dt * out.cwiseProduct(net.output_scale);
}

NetJacobians net_jacobians(const FlowNet& net, const Vec& c, double z,
                           const Vec& w) {
  check_dims(net, c, w);
  Vec x(net.input_dim());
  x << c, z, w;
  x.array() /= net.input_scale.array();

  std::vector<Vec> acts(net.hidden_depth());
  Vec h = x;
  for (int l = 0; l < net.hidden_depth(); ++l) {
    Vec a = net.weights[l] * h + net.biases[l];
    if (net.activation == Activation::Elu) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = elu(a[i]);
    }
    acts[l] = a;
    h = acts[l];
  }

  // Accumulate d(out)/d(x) from the output side.
  Mat j = net.weights.back();
  for (int l = net.hidden_depth() - 1; l >= 0; --l) {
    if (net.activation == Activation::Elu) {
      Mat scaled = j;
      for (Eigen::Index col = 0; col < scaled.cols(); ++col) {
        scaled.col(col) *= elu_deriv_from_value(acts[l][col]);
      }
      j.noalias() = scaled * net.weights[l];
    } else {
      j = j * net.weights[l];
    }
  }
  // Chain the fixed scalings: next = c + dt * S_out .* raw(S_in^{-1} [c;z;w]).
  j.array().colwise() *= net.dt * net.output_scale.array();
  j.array().rowwise() /= net.input_scale.transpose().array();

  NetJacobians result;
  result.dc = j.leftCols(net.state_dim);
  result.dc += Mat::Identity(net.state_dim, net.state_dim);
  result.dz = j.col(net.state_dim);
  result.dw = j.rightCols(net.wind_dim);
  return result;
}

Vec compose(const FlowNet& net, const Vec& c0, const Vec& z_seq,
            const Mat& w_seq) {
  if (w_seq.cols() != z_seq.size()) {
    throw DimensionMismatch("compose: step parameter lengths differ");
  }
  Vec c = c0;
  for (Eigen::Index p = 0; p < z_seq.size(); ++p) {
    c = net_forward(net, c, z_seq[p], w_seq.col(p));
  }
  return c;
}

namespace {

// Batched loss/gradient over anchor pairs (trajectory, start step). Columns
// are kept sorted by start step so the anchors still alive after s
// composition steps (those with n < N-s) always form a contiguous prefix.
class LossEngine {
 public:
  LossEngine(const ReducedDataset& data, int horizon,
             std::vector<std::pair<int, int>> anchors)  // (n, traj)
      : data_(data), n_(data.n_steps()), horizon_(std::min(horizon, n_)),
        anchors_(std::move(anchors)) {
    if (horizon < 1) throw ConfigError("loss: horizon must be >= 1");
    std::stable_sort(anchors_.begin(), anchors_.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    active_.resize(horizon_);
    for (int s = 0; s < horizon_; ++s) {
      const int limit = n_ - s;  // anchors with n < limit are active
      active_[s] = static_cast<int>(
          std::upper_bound(anchors_.begin(), anchors_.end(), limit - 1,
                           [](int v, const auto& a) { return v < a.first; }) -
          anchors_.begin());
    }
  }

  static std::vector<std::pair<int, int>> all_anchors(const ReducedDataset& d) {
    std::vector<std::pair<int, int>> a;
    a.reserve(static_cast<std::size_t>(d.n_steps()) * d.num_trajectories());
    for (int n = 0; n < d.n_steps(); ++n) {
      for (int i = 0; i < d.num_trajectories(); ++i) a.emplace_back(n, i);
    }
    return a;
  }

  double loss_only(const FlowNet& net) {
    double value = 0.0;
    forward(net, nullptr, &value);
    return value;
  }

  std::pair<double, Vec> loss_grad(const FlowNet& net) {
    Workspace ws;
    double value = 0.0;
    forward(net, &ws, &value);
    return {value, backward(net, ws)};
  }

 private:
  struct Workspace {
    std::vector<Mat> inputs;                // scaled inputs per step
    std::vector<std::vector<Mat>> hiddens;  // activations per step per layer
    std::vector<Mat> residuals;             // prediction - target per step
  };

  void forward(const FlowNet& net, Workspace* ws, double* value) {
    const int r = net.state_dim;
    const int rw = net.wind_dim;
    const int depth = net.hidden_depth();
    const int total = static_cast<int>(anchors_.size());

    Mat state(r, total);
    for (int col = 0; col < total; ++col) {
      state.col(col) = data_.coords[anchors_[col].second].col(anchors_[col].first);
    }

    if (ws) {
      ws->inputs.resize(horizon_);
      ws->hiddens.assign(horizon_, std::vector<Mat>(depth));
      ws->residuals.resize(horizon_);
    }

    const Eigen::ArrayXd inv_in = net.input_scale.array().inverse();
    Mat input, scratch, keep, targets;
    *value = 0.0;
    for (int s = 0; s < horizon_; ++s) {
      const int a = active_[s];
      if (a == 0) break;
      input.resize(net.input_dim(), a);
      targets.resize(r, a);
      input.topRows(r) = state.leftCols(a);
      for (int col = 0; col < a; ++col) {
        const auto [n, i] = anchors_[col];
        input(r, col) = data_.source[i][n + s];
        input.col(col).tail(rw) = data_.wind[i].col(n + s);
        targets.col(col) = data_.coords[i].col(n + s + 1);
      }
      input.array().colwise() *= inv_in;
      if (ws) ws->inputs[s] = input;

      const Mat* below = &input;
      for (int l = 0; l < depth; ++l) {
        scratch.noalias() = net.weights[l] * (*below);
        scratch.colwise() += net.biases[l];
        apply_activation(scratch, net.activation);
        if (ws) {
          ws->hiddens[s][l] = scratch;
          below = &ws->hiddens[s][l];
        } else {
          keep = scratch;
          below = &keep;
        }
      }
      scratch.noalias() = net.weights.back() * (*below);
      scratch.colwise() += net.biases.back();
      scratch.array().colwise() *= net.output_scale.array();
      state.leftCols(a) += net.dt * scratch;

      Mat res = state.leftCols(a) - targets;
      *value += res.squaredNorm();
      if (ws) ws->residuals[s] = std::move(res);
    }
    if (!std::isfinite(*value)) {
      throw NonFinite("loss: non-finite value");
    }
  }

  Vec backward(const FlowNet& net, const Workspace& ws) {
    const int r = net.state_dim;
    const int depth = net.hidden_depth();
    std::vector<Mat> grad_w(depth + 1);
    std::vector<Vec> grad_b(depth + 1);
    for (int l = 0; l <= depth; ++l) {
      grad_w[l].setZero(net.weights[l].rows(), net.weights[l].cols());
      grad_b[l].setZero(net.biases[l].size());
    }

    const Eigen::ArrayXd inv_in = net.input_scale.array().inverse();
    Mat chained, delta, delta_next, din;
    int last = horizon_ - 1;
    while (last >= 0 && active_[last] == 0) --last;
    for (int s = last; s >= 0; --s) {
      Mat g = 2.0 * ws.residuals[s];
      if (s + 1 <= last) {
        g.leftCols(active_[s + 1]) += chained;
      }

      delta = g;
      delta.array().colwise() *= net.dt * net.output_scale.array();
      grad_w[depth].noalias() += delta * ws.hiddens[s][depth - 1].transpose();
      grad_b[depth] += delta.rowwise().sum();

      for (int l = depth - 1; l >= 0; --l) {
        delta_next.noalias() = net.weights[l + 1].transpose() * delta;
        if (net.activation == Activation::Elu) {
          const Mat& h = ws.hiddens[s][l];
          double* d = delta_next.data();
          const double* hv = h.data();
          for (Eigen::Index i = 0; i < delta_next.size(); ++i) {
            d[i] *= elu_deriv_from_value(hv[i]);
          }
        }
        const Mat& below = l == 0 ? ws.inputs[s] : ws.hiddens[s][l - 1];
        grad_w[l].noalias() += delta_next * below.transpose();
        grad_b[l] += delta_next.rowwise().sum();
        delta = std::move(delta_next);
      }

      din.noalias() = net.weights[0].transpose() * delta;
      din.array().colwise() *= inv_in;
      chained = g + din.topRows(r);
    }

    FlowNet shape = net;
    shape.weights = std::move(grad_w);
    shape.biases = std::move(grad_b);
    return shape.flatten();
  }

  const ReducedDataset& data_;
  int n_;
  int horizon_;
  std::vector<std::pair<int, int>> anchors_;
  std::vector<int> active_;
};

}  // namespace

double loss(const ReducedDataset& data, const FlowNet& net, int horizon) {
  if (data.num_trajectories() == 0) throw ConfigError("loss: empty dataset");
  LossEngine engine(data, horizon, LossEngine::all_anchors(data));
  return engine.loss_only(net);
}

Vec loss_gradient(const ReducedDataset& data, const FlowNet& net, int horizon) {
  if (data.num_trajectories() == 0) throw ConfigError("loss: empty dataset");
  LossEngine engine(data, horizon, LossEngine::all_anchors(data));
  return engine.loss_grad(net).second;
}

std::pair<double, Vec> loss_and_gradient(const ReducedDataset& data,
                                         const FlowNet& net, int horizon) {
  if (data.num_trajectories() == 0) throw ConfigError("loss: empty dataset");
  LossEngine engine(data, horizon, LossEngine::all_anchors(data));
  return engine.loss_grad(net);
}

double scheduled_learning_rate(const TrainConfig& cfg, int epoch) {
  const int stairs = epoch / 1000;
  return cfg.learning_rate * std::pow(1.0 - cfg.decay_rate, stairs);
}

void adam_step(Vec& params, const Vec& grad, AdamState& state,
               const TrainConfig& cfg, int epoch) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment = Vec::Zero(params.size());
    state.second_moment = Vec::Zero(params.size());
    state.step = 0;
  }
  if (grad.size() != params.size()) {
    throw DimensionMismatch("adam_step: gradient length mismatch");
  }
  state.step += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  state.first_moment = b1 * state.first_moment + (1.0 - b1) * grad;
  state.second_moment =
      b2 * state.second_moment + (1.0 - b2) * grad.cwiseProduct(grad);
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = scheduled_learning_rate(cfg, epoch);
  params.array() -= lr * (state.first_moment.array() / corr1) /
                    ((state.second_moment.array() / corr2).sqrt() + cfg.adam_eps);
}

namespace {

// Per-component standard deviations as fixed network scalings, floored so
// degenerate channels stay harmless.
void set_scales_from_data(FlowNet& net, const ReducedDataset& data) {
  const int r = net.state_dim;
  const int rw = net.wind_dim;
  const int n = data.n_steps();
  const int traj = data.num_trajectories();

  Vec in_sum = Vec::Zero(r + 1 + rw), in_sq = Vec::Zero(r + 1 + rw);
  Vec out_sum = Vec::Zero(r), out_sq = Vec::Zero(r);
  long count_state = 0, count_step = 0;
  for (int i = 0; i < traj; ++i) {
    for (int k = 0; k <= n; ++k) {
      Vec c = data.coords[i].col(k);
      in_sum.head(r) += c;
      in_sq.head(r) += c.cwiseProduct(c);
      ++count_state;
    }
    for (int k = 0; k < n; ++k) {
      const double z = data.source[i][k];
      in_sum[r] += z;
      in_sq[r] += z * z;
      Vec w = data.wind[i].col(k);
      in_sum.tail(rw) += w;
      in_sq.tail(rw) += w.cwiseProduct(w);
      Vec d = (data.coords[i].col(k + 1) - data.coords[i].col(k)) / net.dt;
      out_sum += d;
      out_sq += d.cwiseProduct(d);
      ++count_step;
    }
  }
  auto stds = [](const Vec& sum, const Vec& sq, long cnt) -> Vec {
    Vec mean = sum / static_cast<double>(cnt);
    Vec var = sq / static_cast<double>(cnt) - mean.cwiseProduct(mean);
    return var.cwiseMax(0.0).cwiseSqrt();
  };
  Vec in_std(r + 1 + rw);
  in_std.head(r) = stds(in_sum.head(r), in_sq.head(r), count_state);
  in_std.tail(1 + rw) = stds(in_sum.tail(1 + rw), in_sq.tail(1 + rw), count_step);
  Vec out_std = stds(out_sum, out_sq, count_step);

  net.input_scale = in_std.cwiseMax(std::max(1e-12, in_std.maxCoeff() * 1e-6));
  net.output_scale = out_std.cwiseMax(std::max(1e-12, out_std.maxCoeff() * 1e-6));
}

}  // namespace

TrainResult train(const ReducedDataset& training,
                  const ReducedDataset* validation, const TrainConfig& cfg) {
  if (training.num_trajectories() == 0) {
    throw ConfigError("train: empty training set");
  }
  if (training.dt <= 0.0) {
    throw ConfigError("train: dataset step size must be positive");
  }
  const int r = static_cast<int>(training.coords.front().rows());
  const int rw = static_cast<int>(training.wind.front().rows());

  FlowNet net = make_flownet(r, rw, training.dt, cfg.width, cfg.depth, cfg.seed);
  set_scales_from_data(net, training);

  TrainResult result;
  result.loss_history.reserve(cfg.epochs);

  Vec params = net.flatten();
  AdamState adam;
  Rng batch_rng(mix_seed(cfg.seed, 0x6261746368ULL));

  const auto full_anchors = LossEngine::all_anchors(training);
  LossEngine full_engine(training, cfg.composition_horizon, full_anchors);

  Vec best_params = params;
  result.best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double value;
    Vec grad;
    if (cfg.batch > 0 && cfg.batch < static_cast<int>(full_anchors.size())) {
      std::vector<std::pair<int, int>> sub(cfg.batch);
      for (int b = 0; b < cfg.batch; ++b) {
        sub[b] = full_anchors[static_cast<std::size_t>(
            batch_rng.next_u64() % full_anchors.size())];
      }
      LossEngine engine(training, cfg.composition_horizon, std::move(sub));
      std::tie(value, grad) = engine.loss_grad(net);
    } else {
      std::tie(value, grad) = full_engine.loss_grad(net);
    }
    if (!std::isfinite(value)) throw Diverged("train: loss diverged");
    result.loss_history.push_back(value);

    adam_step(params, grad, adam, cfg, epoch);
    net.unflatten(params);

    const bool last = epoch + 1 == cfg.epochs;
    if (validation && (last || (epoch + 1) % std::max(1, cfg.val_every) == 0)) {
      const double err = validation_error(*validation, net);
      result.val_history.emplace_back(epoch + 1, err);
      if (err < result.best_val) {
        result.best_val = err;
        result.best_epoch = epoch + 1;
        best_params = params;
      }
    }
  }

  if (validation && result.best_epoch >= 0) {
    net.unflatten(best_params);
  }
  result.net = std::move(net);
  return result;
}

double validation_error(const ReducedDataset& data, const FlowNet& net) {
  const int n = data.n_steps();
  const bool full_state = !data.state_sqnorm.empty();
  double sum = 0.0;
  long count = 0;
  for (int i = 0; i < data.num_trajectories(); ++i) {
    Vec c = data.coords[i].col(0);
    for (int k = 0; k < n; ++k) {
      c = net_forward(net, c, data.source[i][k], data.wind[i].col(k));
      double num = (c - data.coords[i].col(k + 1)).squaredNorm();
      double den;
      if (full_state) {
        num += data.pca_residual_sq[i][k + 1];
        den = data.state_sqnorm[i][k + 1];
      } else {
        den = data.coords[i].col(k + 1).squaredNorm();
      }
      ++count;
      if (den > 0.0) sum += num / den;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

void save_flownet(const std::string& dir, const FlowNet& net) {
  std::filesystem::create_directories(dir);
  std::ostringstream meta;
  meta << "plume-flownet v1\n";
  meta << "state_dim: " << net.state_dim << "\n";
  meta << "wind_dim: " << net.wind_dim << "\n";
  meta.precision(17);
  meta << "dt: " << net.dt << "\n";
  meta << "layers: " << net.weights.size() << "\n";
  meta << "activation: " << (net.activation == Activation::Elu ? "elu" : "identity")
       << "\n";
  std::ofstream out(dir + "/meta.txt", std::ios::trunc);
  out << meta.str();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    save_matrix(dir + "/weights_" + std::to_string(l) + ".arr",
                "weights_" + std::to_string(l), net.weights[l]);
    save_vector(dir + "/biases_" + std::to_string(l) + ".arr",
                "biases_" + std::to_string(l), net.biases[l]);
  }
  save_vector(dir + "/input_scale.arr", "input_scale", net.input_scale);
  save_vector(dir + "/output_scale.arr", "output_scale", net.output_scale);
}

FlowNet load_flownet(const std::string& dir) {
  std::ifstream in(dir + "/meta.txt");
  if (!in) throw std::runtime_error("load_flownet: missing meta in " + dir);
  FlowNet net;
  std::string line;
  std::getline(in, line);
  if (line != "plume-flownet v1") {
    throw std::runtime_error("load_flownet: bad meta header");
  }
  std::size_t layers = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "state_dim:") ss >> net.state_dim;
    else if (key == "wind_dim:") ss >> net.wind_dim;
    else if (key == "dt:") ss >> net.dt;
    else if (key == "layers:") ss >> layers;
    else if (key == "activation:") {
      std::string v;
      ss >> v;
      net.activation = v == "identity" ? Activation::Identity : Activation::Elu;
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    net.weights.push_back(load_matrix(dir + "/weights_" + std::to_string(l) + ".arr"));
    net.biases.push_back(load_vector(dir + "/biases_" + std::to_string(l) + ".arr"));
  }
  net.input_scale = load_vector(dir + "/input_scale.arr");
  net.output_scale = load_vector(dir + "/output_scale.arr");
  return net;
}

}  // namespace plume
