#include "squeal/model.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

namespace squeal {
namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void glorot(std::mt19937_64& rng, double* out, std::size_t n, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t k = 0; k < n; ++k) out[k] = (2.0 * uniform01(rng) - 1.0) * limit;
}

}  // namespace

ModelConfig ModelConfig::preset(const std::string& name, TargetMode mode) {
  ModelConfig c;
  c.mode = mode;
  const std::size_t w = mode == TargetMode::Scalar ? 200 : 400;
  c.window = WindowSpec::from_fraction(w, 0.75);
  if (name == "paper")
    c.n_units = 256;
  else if (name == "desk")
    c.n_units = 64;
  else
    throw Error("unknown preset '" + name + "' (expected desk or paper)");
  return c;
}

kernels::NetShape ModelConfig::shape() const {
  return {n_inputs, n_units, dense_units ? dense_units : n_units, window.w, mode == TargetMode::Sequence};
}

void ModelConfig::validate() const {
  if (n_inputs == 0 || n_units == 0) throw Error("model: layer sizes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("model: dropout must be in [0, 1)");
  window.validate();
}

json to_json(const ModelConfig& c) {
  return {{"mode", to_string(c.mode)}, {"n_inputs", c.n_inputs}, {"n_units", c.n_units},
          {"dense_units", c.dense_units ? c.dense_units : c.n_units}, {"dropout", c.dropout},
          {"window", to_json(c.window)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  if (j.contains("mode")) c.mode = target_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("preset")) c = ModelConfig::preset(j.at("preset").get<std::string>(), c.mode);
  c.n_inputs = j.value("n_inputs", c.n_inputs);
  c.n_units = j.value("n_units", c.n_units);
  c.dense_units = j.value("dense_units", c.dense_units);
  c.dropout = j.value("dropout", c.dropout);
  if (j.contains("window")) c.window = window_spec_from_json(j.at("window"));
  c.validate();
  return c;
}

Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto s = cfg.shape();
  Model model;
  model.config = cfg;
  model.seed = seed;
  model.theta.assign(s.n_params(), 0.0);
  for (auto& v : model.stats.std) v = 1.0;
  std::mt19937_64 rng(seed);
  const std::size_t H = s.units, m = s.inputs;
  double* p = model.theta.data();
  glorot(rng, p, 4 * H * m, m, 4 * H);
  p += 4 * H * m;

  Eigen::MatrixXd gauss(4 * H, H);
  for (Eigen::Index c = 0; c < gauss.cols(); ++c)
    for (Eigen::Index r = 0; r < gauss.rows(); ++r) gauss(r, c) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(4 * H, H);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(H).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < q.cols(); ++c)
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  Eigen::Map<Eigen::MatrixXd>(p, 4 * H, H) = q;
  p += 4 * H * H;
  for (std::size_t k = H; k < 2 * H; ++k) p[k] = 1.0;
  p += 4 * H;

  if (s.sequence) {
    glorot(rng, p, H, H, 1);
  } else {
    glorot(rng, p, s.dense * H, H, s.dense);
    p += s.dense * H + s.dense;
    glorot(rng, p, s.dense, s.dense, 1);
  }
  return model;
}

Eigen::MatrixXd lstm_forward(const ModelConfig& cfg, std::span<const double> theta, const double* inputs,
                             std::size_t steps, const LstmState* initial) {
  const auto s = cfg.shape();
  if (theta.size() != s.n_params()) throw Error("lstm_forward: parameter count does not match the config");
  const auto H = static_cast<Eigen::Index>(s.units);
  const auto m = static_cast<Eigen::Index>(s.inputs);
  const Eigen::Map<const Eigen::MatrixXd> W(theta.data(), 4 * H, m);
  const Eigen::Map<const Eigen::MatrixXd> U(theta.data() + 4 * H * m, 4 * H, H);
  const Eigen::Map<const Eigen::VectorXd> b(theta.data() + 4 * H * (m + H), 4 * H);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H), c = Eigen::VectorXd::Zero(H);
  if (initial) {
    if (initial->h.size() != H || initial->c.size() != H) throw Error("lstm_forward: initial state has the wrong size");
    h = initial->h;
    c = initial->c;
  }
  auto sig = [](const Eigen::VectorXd& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix().eval(); };
  Eigen::MatrixXd out(static_cast<Eigen::Index>(steps), H);
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::Map<const Eigen::VectorXd> x(inputs + t * s.inputs, m);
    const Eigen::VectorXd z = W * x + U * h + b;
    const Eigen::VectorXd i = sig(z.segment(0, H)), f = sig(z.segment(H, H)), o = sig(z.segment(3 * H, H));
    const Eigen::VectorXd g = z.segment(2 * H, H).array().tanh().matrix();
    c = (f.array() * c.array() + i.array() * g.array()).matrix();
    h = (o.array() * c.array().tanh()).matrix();
    out.row(static_cast<Eigen::Index>(t)) = h.transpose();
  }
  return out;
}

std::vector<double> model_forward(const Model& model, const double* window, std::size_t real) {
  const kernels::Sample x{window, nullptr, real, nullptr};
  return kernels::forward_serial(model.config.shape(), model.theta, std::span(&x, 1));
}

double bce_loss(std::span<const double> p, std::span<const std::uint8_t> y, std::span<const std::uint8_t> mask) {
  if (p.size() != y.size() || p.size() != mask.size()) throw Error("bce_loss: length mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!mask[k]) continue;
    const double pc = std::clamp(p[k], kernels::kBceEps, 1.0 - kernels::kBceEps);
    sum += y[k] ? -std::log(pc) : -std::log(1.0 - pc);
    ++n;
  }
  if (n == 0) throw Error("bce_loss: every position is masked");
  return sum / static_cast<double>(n);
}

std::vector<kernels::Sample> make_batch(const ModelConfig& cfg, const WindowedDataset& ds,
                                        std::span<const std::size_t> windows) {
  if (ds.mode != cfg.mode)
    throw Error("dataset targets are " + to_string(ds.mode) + " but the model is " + to_string(cfg.mode));
  if (ds.spec.w != cfg.window.w)
    throw Error("dataset windows have " + std::to_string(ds.spec.w) + " samples, the model expects " +
                std::to_string(cfg.window.w));
  if (!ds.normalized) throw Error("dataset must be normalized before it reaches the model");
  std::vector<kernels::Sample> out;
  out.reserve(windows.size());
  for (const auto i : windows) {
    if (i >= ds.size()) throw Error("window index out of range");
    out.push_back({ds.window(i), ds.target(i), ds.real[i], nullptr});
  }
  return out;
}

Gradient backward(const Model& model, std::span<const kernels::Sample> batch) {
  const double scale = 1.0 / (1.0 - model.config.dropout);
  auto r = kernels::loss_grad_omp(model.config.shape(), model.theta, batch, scale);
  if (r.count == 0) throw Error("backward: empty batch");
  Gradient g;
  const double inv = 1.0 / static_cast<double>(r.count);
  g.loss = r.loss * inv;
  g.grad = std::move(r.grad);
  for (auto& v : g.grad) v *= inv;
  return g;
}

GradCheckResult gradient_check(const ModelConfig& cfg, std::uint64_t seed, const GradCheckOptions& opt) {
  cfg.validate();
  GradCheckResult res;
  if (cfg.dropout > 0.0) {
    res.skipped = true;
    return res;
  }
  if (cfg.n_units > 8 || cfg.window.w > 20 || cfg.n_inputs > 4)
    throw Error("gradient_check: needs n_units <= 8, w <= 20 and at most 4 inputs");
  std::mt19937_64 rng(mix_seed(seed, 0x67726164));
  Model model = init_model(cfg, seed);
  for (auto& v : model.theta) v = 1.2 * uniform01(rng) - 0.6;

  const auto s = cfg.shape();
  std::vector<std::vector<double>> xs(opt.batch);
  std::vector<std::vector<std::uint8_t>> ys(opt.batch);
  std::vector<kernels::Sample> batch;
  for (std::size_t n = 0; n < opt.batch; ++n) {
    xs[n].resize(s.steps * s.inputs);
    for (auto& v : xs[n]) v = normal(rng);
    ys[n].resize(s.outputs());
    for (auto& v : ys[n]) v = rng() & 1;
    const std::size_t real = s.steps / 2 + 1 + rng() % (s.steps - s.steps / 2);
    batch.push_back({xs[n].data(), ys[n].data(), real, nullptr});
  }
  const auto analytic = backward(model, batch).grad;
  auto loss_at = [&](const std::vector<double>& theta) {
    std::size_t count = 0;
    const long double sum = kernels::loss_extended(s, theta, batch, count);
    return sum / static_cast<long double>(count);
  };
  std::vector<double> theta = model.theta;
  for (std::size_t k = opt.head_only ? s.lstm_params() : 0; k < theta.size(); ++k) {
    const double orig = theta[k];
    const double hi = orig + opt.step, lo = orig - opt.step;
    theta[k] = hi;
    const long double up = loss_at(theta);
    theta[k] = lo;
    const long double down = loss_at(theta);
    theta[k] = orig;
    const auto numeric = static_cast<double>((up - down) / static_cast<long double>(hi - lo));
    const double err = std::abs(analytic[k] - numeric) / std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
    if (err > res.max_rel_error || res.n_checked == 0) {
      res.max_rel_error = err;
      res.worst_index = k;
    }
    ++res.n_checked;
  }
  return res;
}

void save_model(const std::filesystem::path& stem, const Model& model, const json& extra) {
  const auto s = model.config.shape();
  if (model.theta.size() != s.n_params()) throw Error("save_model: parameter count does not match the config");
  std::string blob(model.theta.size() * sizeof(double), '\0');
  std::memcpy(blob.data(), model.theta.data(), blob.size());
  auto bin = stem;
  bin += ".bin";
  write_file_atomic(bin, blob);
  json layout = {{"W", {4 * s.units, s.inputs}}, {"U", {4 * s.units, s.units}}, {"b", {4 * s.units}}};
  if (s.sequence) {
    layout["wy"] = {1, s.units};
    layout["by"] = {1};
  } else {
    layout["W1"] = {s.dense, s.units};
    layout["b1"] = {s.dense};
    layout["W2"] = {1, s.dense};
    layout["b2"] = {1};
  }
  json j = {{"format", "squeal-model"},    {"version", 1},
            {"data_file", bin.filename().string()},
            {"dtype", "float64-le"},       {"order", "column-major, gates i f g o"},
            {"n_params", s.n_params()},    {"layout", layout},
            {"config", to_json(model.config)}, {"seed", model.seed},
            {"stats", to_json(model.stats)}, {"extra", extra}};
  auto side = stem;
  side += ".json";
  write_json(side, j);
}

Model load_model(const std::filesystem::path& stem) {
  auto side = stem;
  side += ".json";
  const json j = read_json(side);
  if (j.value("format", "") != "squeal-model") throw Error(side.string() + " is not a model manifest");
  Model m;
  m.config = model_config_from_json(j.at("config"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.stats = channel_stats_from_json(j.at("stats"));
  const std::string blob = read_file(stem.parent_path() / j.at("data_file").get<std::string>());
  if (blob.size() != m.config.n_params() * sizeof(double) || j.at("n_params").get<std::size_t>() != m.config.n_params())
    throw Error(side.string() + ": parameter file does not match the config");
  m.theta.resize(m.config.n_params());
  std::memcpy(m.theta.data(), blob.data(), blob.size());
  return m;
}

}  // namespace squeal
