#include "ecdg/regressor.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "ecdg/error.hpp"

namespace ecdg {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "ecdg-regressor";

// Inputs as columns: the category part is filled here, the embedding rows by
// the caller (they depend on the parameters).
MatrixXd encode_batch(const CircuitConfig& cfg, const RegressorParams& params, std::span<const Example> batch) {
  const int D = cfg.dims();
  const double S = cfg.categories();
  MatrixXd in(input_size(cfg), static_cast<Index>(batch.size()));
  for (Index j = 0; j < in.cols(); ++j) {
    const Example& e = batch[static_cast<std::size_t>(j)];
    if (e.layer < 0 || e.layer >= cfg.layers()) throw ValidationError("regressor: layer out of range");
    const State sx = unflatten(cfg, e.x);
    const State sy = unflatten(cfg, e.y);
    for (int d = 0; d < D; ++d) {
      in(d, j) = (sx.categories[static_cast<std::size_t>(d)] + 0.5) / S;
      in(D + d, j) = (sy.categories[static_cast<std::size_t>(d)] + 0.5) / S;
    }
    in.block(2 * D, j, kEmbeddingWidth, 1) = params.embedding.row(e.layer).transpose();
  }
  return in;
}

struct Activations {
  std::vector<MatrixXd> z;  // pre-activations per layer
  std::vector<MatrixXd> a;  // a[0] = input, a[k+1] = relu(z[k]) for hidden layers
};

Activations forward_pass(const RegressorParams& params, MatrixXd input) {
  Activations act;
  act.a.push_back(std::move(input));
  const std::size_t depth = params.weights.size();
  for (std::size_t k = 0; k < depth; ++k) {
    MatrixXd z = params.weights[k] * act.a.back();
    z.colwise() += params.biases[k];
    if (k + 1 < depth) act.a.push_back(z.cwiseMax(0.0));
    act.z.push_back(std::move(z));
  }
  return act;
}

void require_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string("regressor: non-finite ") + what);
}

// Visits every parameter block in flatten() order.
template <typename Params, typename Fn>
void for_each_block(Params& p, Fn&& fn) {
  for (auto& w : p.weights) fn(w.data(), static_cast<std::size_t>(w.size()));
  for (auto& b : p.biases) fn(b.data(), static_cast<std::size_t>(b.size()));
  fn(p.embedding.data(), static_cast<std::size_t>(p.embedding.size()));
}

nlohmann::json matrix_rows(const MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  return flat;
}

MatrixXd matrix_from_rows(const nlohmann::json& j, Index rows, Index cols) {
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != static_cast<std::size_t>(rows * cols))
    throw ValidationError("checkpoint: array has the wrong length");
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = flat[static_cast<std::size_t>(i * cols + k)];
  return m;
}

}  // namespace

std::size_t RegressorParams::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(embedding.size());
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

Eigen::VectorXd RegressorParams::flatten() const {
  VectorXd out(static_cast<Index>(parameter_count()));
  Index pos = 0;
  for_each_block(*this, [&](const double* data, std::size_t n) {
    out.segment(pos, static_cast<Index>(n)) = Eigen::Map<const VectorXd>(data, static_cast<Index>(n));
    pos += static_cast<Index>(n);
  });
  return out;
}

void RegressorParams::unflatten(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count())
    throw ValidationError("regressor: flat parameter vector has the wrong size");
  Index pos = 0;
  for_each_block(*this, [&](double* data, std::size_t n) {
    Eigen::Map<VectorXd>(data, static_cast<Index>(n)) = flat.segment(pos, static_cast<Index>(n));
    pos += static_cast<Index>(n);
  });
}

RegressorParams RegressorParams::zeros_like() const {
  RegressorParams z;
  for (const auto& w : weights) z.weights.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) z.biases.push_back(VectorXd::Zero(b.size()));
  z.embedding = MatrixXd::Zero(embedding.rows(), embedding.cols());
  return z;
}

int input_size(const CircuitConfig& cfg) { return 2 * cfg.dims() + kEmbeddingWidth; }

RegressorParams init_params(const CircuitConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  RegressorParams p;
  int fan_in = input_size(cfg);
  for (int width : kHiddenWidths) {
    const double bound = std::sqrt(6.0 / fan_in);
    MatrixXd w(width, fan_in);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(VectorXd::Zero(width));
    fan_in = width;
  }
  p.weights.push_back(MatrixXd::Zero(1, fan_in));
  p.biases.push_back(VectorXd::Zero(1));
  p.embedding.resize(cfg.layers(), kEmbeddingWidth);
  for (Index j = 0; j < p.embedding.cols(); ++j)
    for (Index i = 0; i < p.embedding.rows(); ++i) p.embedding(i, j) = rng.uniform(-0.1, 0.1);
  return p;
}

Eigen::VectorXd encode(const CircuitConfig& cfg, const RegressorParams& params, StateIndex x, StateIndex y,
                       int layer) {
  const Example e{layer, x, y, 0.0};
  return encode_batch(cfg, params, std::span<const Example>(&e, 1)).col(0);
}

Eigen::VectorXd predict(const CircuitConfig& cfg, const RegressorParams& params, std::span<const Example> batch) {
  const Activations act = forward_pass(params, encode_batch(cfg, params, batch));
  return act.z.back().row(0).transpose();
}

double predict(const CircuitConfig& cfg, const RegressorParams& params, int layer, StateIndex x, StateIndex y) {
  const Example e{layer, x, y, 0.0};
  return predict(cfg, params, std::span<const Example>(&e, 1))[0];
}

double loss_and_gradient(const CircuitConfig& cfg, const RegressorParams& params, std::span<const Example> batch,
                         RegressorParams& grad) {
  if (batch.empty()) throw ValidationError("regressor: empty batch");
  const Activations act = forward_pass(params, encode_batch(cfg, params, batch));
  const auto B = static_cast<Index>(batch.size());
  Eigen::RowVectorXd residual(B);
  for (Index j = 0; j < B; ++j) residual[j] = act.z.back()(0, j) - batch[static_cast<std::size_t>(j)].target;
  const double loss = residual.squaredNorm() / static_cast<double>(B);
  if (!std::isfinite(loss)) throw NumericalError("regressor: non-finite loss");

  grad = params.zeros_like();
  MatrixXd delta = (2.0 / static_cast<double>(B)) * residual;  // dL/dz of the head
  for (std::size_t k = params.weights.size(); k-- > 0;) {
    grad.weights[k].noalias() = delta * act.a[k].transpose();
    grad.biases[k] = delta.rowwise().sum();
    MatrixXd back = params.weights[k].transpose() * delta;
    if (k > 0) {
      delta = back.cwiseProduct((act.z[k - 1].array() > 0.0).cast<double>().matrix());
    } else {
      const int D = cfg.dims();
      for (Index j = 0; j < B; ++j)
        grad.embedding.row(batch[static_cast<std::size_t>(j)].layer) +=
            back.block(2 * D, j, kEmbeddingWidth, 1).transpose();
    }
  }
  for (const auto& w : grad.weights) require_finite(w, "gradient");
  return loss;
}

void sgd_step(RegressorParams& params, const RegressorParams& grad, double learning_rate, double weight_decay) {
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    params.weights[k] -= learning_rate * grad.weights[k];
    params.weights[k] *= 1.0 - learning_rate * weight_decay;
    params.biases[k] -= learning_rate * grad.biases[k];
  }
  params.embedding -= learning_rate * grad.embedding;
}

TrainResult train(const CircuitConfig& cfg, const Coupling& coupling, const TrainConfig& tc) {
  if (tc.steps < 0 || tc.batch < 1 || tc.pair_batch < 1 || !(tc.learning_rate >= 0.0) ||
      !(tc.weight_decay >= 0.0) || !(tc.target_scale > 0.0))
    throw ValidationError("train: invalid training configuration");
  if (coupling.states() != cfg.states()) throw ValidationError("train: coupling size mismatch");

  TrainResult out;
  out.params = init_params(cfg, derive_seed(tc.seed, 0));
  out.loss.reserve(static_cast<std::size_t>(tc.steps));
  const PairPotentials<double> memo(cfg);
  RegressorParams grad;
  std::vector<Example> batch(static_cast<std::size_t>(tc.batch));

  for (int step = 0; step < tc.steps; ++step) {
    const auto pairs = PairBatch::draw(coupling, static_cast<std::size_t>(tc.pair_batch),
                                       derive_seed(tc.seed, 1, step));
    Rng rng(derive_seed(tc.seed, 2, step));
    for (auto& e : batch) {
      e.layer = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.layers())));
      e.x = rng.uniform_index(cfg.states());
      e.y = rng.uniform_index(cfg.states());
      e.target = tc.target_scale * pairs.current(memo, cfg, e.layer, e.x, e.y);
    }
    double loss;
    try {
      loss = loss_and_gradient(cfg, out.params, batch, grad);
    } catch (const NumericalError& err) {
      std::ostringstream msg;
      msg << err.what() << " at training step " << step;
      throw NumericalError(msg.str());
    }
    out.loss.push_back(loss);
    sgd_step(out.params, grad, tc.learning_rate, tc.weight_decay);
  }
  return out;
}

std::pair<double, double> loss_window_means(const std::vector<double>& loss, std::size_t window) {
  if (loss.empty()) throw ValidationError("loss trace is empty");
  window = std::min(window, loss.size());
  const double head = std::accumulate(loss.begin(), loss.begin() + static_cast<std::ptrdiff_t>(window), 0.0);
  const double tail = std::accumulate(loss.end() - static_cast<std::ptrdiff_t>(window), loss.end(), 0.0);
  return {head / static_cast<double>(window), tail / static_cast<double>(window)};
}

void save_checkpoint(const std::filesystem::path& path, const CircuitConfig& cfg, const RegressorParams& params,
                     const TrainConfig& tc) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["circuit"] = cfg;
  j["train"] = {{"steps", tc.steps},           {"batch", tc.batch},
                {"learning_rate", tc.learning_rate}, {"weight_decay", tc.weight_decay},
                {"pair_batch", tc.pair_batch}, {"target_scale", tc.target_scale},
                {"seed", tc.seed}};
  j["layers"] = nlohmann::json::array();
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    const auto& w = params.weights[k];
    j["layers"].push_back({{"in", w.cols()},
                           {"out", w.rows()},
                           {"weight", matrix_rows(w)},
                           {"bias", std::vector<double>(params.biases[k].data(),
                                                        params.biases[k].data() + params.biases[k].size())}});
  }
  j["embedding"] = {{"rows", params.embedding.rows()},
                    {"cols", params.embedding.cols()},
                    {"values", matrix_rows(params.embedding)}};
  auto out = detail::open_for_write(path);
  out << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_for_read(path);
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != kCheckpointFormat) throw ValidationError("checkpoint: unknown format");
    if (j.at("version").get<int>() != kCheckpointVersion) throw ValidationError("checkpoint: unsupported version");
    Checkpoint ck{circuit_from_json(j.at("circuit")), {}, {}};
    const auto& t = j.at("train");
    ck.train.steps = t.at("steps");
    ck.train.batch = t.at("batch");
    ck.train.learning_rate = t.at("learning_rate");
    ck.train.weight_decay = t.at("weight_decay");
    ck.train.pair_batch = t.at("pair_batch");
    ck.train.target_scale = t.at("target_scale");
    ck.train.seed = t.at("seed");

    // Shapes must match a freshly initialized network for this circuit.
    const RegressorParams shape = init_params(ck.cfg, 0);
    const auto& layers = j.at("layers");
    if (layers.size() != shape.weights.size()) throw ValidationError("checkpoint: wrong layer count");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const Index rows = shape.weights[k].rows(), cols = shape.weights[k].cols();
      if (layers[k].at("in") != cols || layers[k].at("out") != rows)
        throw ValidationError("checkpoint: layer shape does not match the circuit");
      ck.params.weights.push_back(matrix_from_rows(layers[k].at("weight"), rows, cols));
      ck.params.biases.push_back(matrix_from_rows(layers[k].at("bias"), rows, 1));
    }
    const auto& emb = j.at("embedding");
    if (emb.at("rows") != shape.embedding.rows() || emb.at("cols") != shape.embedding.cols())
      throw ValidationError("checkpoint: embedding shape does not match the circuit");
    ck.params.embedding = matrix_from_rows(emb.at("values"), shape.embedding.rows(), shape.embedding.cols());
    for (const auto& w : ck.params.weights)
      if (!w.allFinite()) throw ValidationError("checkpoint: non-finite weights");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& loss) {
  auto out = detail::open_for_write(path);
  out << "step,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) out << i << ',' << detail::format_double(loss[i]) << '\n';
}

LearnedCurrentField::LearnedCurrentField(const CircuitConfig& cfg, RegressorParams params, double target_scale,
                                         const DiscreteDistribution& sinks)
    : cfg_(cfg), params_(std::move(params)), scale_(target_scale), sink_(sinks.mass()) {
  if (!(scale_ > 0.0)) throw ValidationError("learned field: target scale must be positive");
  if (static_cast<StateIndex>(sink_.size()) != cfg_.states())
    throw ValidationError("learned field: sink table has the wrong size");
  if (params_.embedding.rows() != cfg_.layers() || params_.weights.empty() ||
      params_.weights.front().cols() != input_size(cfg_))
    throw ValidationError("learned field: parameters do not match the circuit");
}

double LearnedCurrentField::current(int layer, StateIndex x, StateIndex y) const {
  if (y >= cfg_.states()) throw ValidationError("learned field: state out of range");
  return row(true, layer, x)[y];
}

void LearnedCurrentField::forward_currents(int layer, StateIndex x, std::span<double> out) const {
  const auto& r = row(true, layer, x);
  if (out.size() != r.size()) throw ValidationError("learned field: output row has the wrong size");
  std::copy(r.begin(), r.end(), out.begin());
}

void LearnedCurrentField::backward_currents(int layer, StateIndex x, std::span<double> out) const {
  const auto& r = row(false, layer - 1, x);
  if (out.size() != r.size()) throw ValidationError("learned field: output row has the wrong size");
  std::copy(r.begin(), r.end(), out.begin());
}

// forward: I(layer, x, .)   backward: I(layer, ., x)
const std::vector<double>& LearnedCurrentField::row(bool forward, int layer, StateIndex x) const {
  if (layer < 0 || layer >= cfg_.layers() || x >= cfg_.states())
    throw ValidationError("learned field: edge out of range");
  const auto key = std::make_tuple(forward, layer, x);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return *it->second;
  }
  std::vector<Example> batch(cfg_.states());
  for (StateIndex y = 0; y < batch.size(); ++y)
    batch[y] = forward ? Example{layer, x, y, 0.0} : Example{layer, y, x, 0.0};
  const VectorXd pred = predict(cfg_, params_, batch) / scale_;
  auto values = std::make_shared<const std::vector<double>>(pred.data(), pred.data() + pred.size());
  std::lock_guard lock(mutex_);
  return *cache_.emplace(key, std::move(values)).first->second;
}

}  // namespace ecdg
