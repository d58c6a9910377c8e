#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "squeal/train.hpp"

using namespace squeal;

namespace {

double sigm(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ModelConfig small(TargetMode mode, std::size_t units, std::size_t w, std::size_t m = kLoadChannels) {
  ModelConfig c;
  c.mode = mode;
  c.n_inputs = m;
  c.n_units = units;
  c.dense_units = units;
  c.dropout = 0.0;
  c.window = {w, w};
  return c;
}

std::vector<double> random_theta(std::size_t n, std::mt19937_64& rng, double a = 0.5) {
  std::uniform_real_distribution<double> u(-a, a);
  std::vector<double> t(n);
  for (auto& v : t) v = u(rng);
  return t;
}

struct RandomBatch {
  std::vector<double> x;
  std::vector<std::uint8_t> y, keep;
  std::vector<kernels::Sample> samples;
};

RandomBatch random_batch(const kernels::NetShape& s, std::size_t n, std::mt19937_64& rng, bool dropout) {
  RandomBatch b;
  std::normal_distribution<double> g;
  b.x.resize(n * s.steps * s.inputs);
  for (auto& v : b.x) v = g(rng);
  b.y.resize(n * s.outputs());
  for (auto& v : b.y) v = rng() & 1;
  b.keep.resize(n * s.keep_len());
  for (auto& v : b.keep) v = (rng() % 10) != 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t real = s.steps / 2 + 1 + rng() % (s.steps - s.steps / 2);
    b.samples.push_back({b.x.data() + k * s.steps * s.inputs, b.y.data() + k * s.outputs(), real,
                         dropout ? b.keep.data() + k * s.keep_len() : nullptr});
  }
  return b;
}

// label is the sign of the T_rot offset; everything else is noise
std::vector<LoadSequence> toy_brakings(std::size_t n, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<LoadSequence> out;
  for (std::size_t b = 0; b < n; ++b) {
    LoadSequence s;
    s.id = "toy_" + std::to_string(b);
    const bool pos = b % 2 == 0;
    s.data.resize(len * kLoadChannels);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t c = 0; c < kLoadChannels; ++c) {
        double v = g(rng);
        if (c == Omega) v = 300.0 + v;
        if (c == Mu) v = 0.4 + 0.01 * v;
        if (c == TRot) v += pos ? 1.5 : -1.5;
        s.data[i * kLoadChannels + c] = v;
      }
    s.labels.assign(len, pos ? 1 : 0);
    out.push_back(std::move(s));
  }
  return out;
}

WindowedDataset toy_set(TargetMode mode, std::size_t n, std::uint64_t seed) {
  auto raw = build_windows(toy_brakings(n, 12, seed), {12, 12}, mode);
  std::vector<std::size_t> all(raw.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto stats = compute_stats(raw, all);
  return normalize(std::move(raw), stats);
}

}  // namespace

TEST_SUITE("rnn_core") {

TEST_CASE("zero weights keep the hidden state at zero") {
  const auto cfg = small(TargetMode::Scalar, 5, 7);
  std::vector<double> theta(cfg.n_params(), 0.0), x(7 * kLoadChannels, 3.0);
  const auto h = lstm_forward(cfg, theta, x.data(), 7);
  CHECK(h.rows() == 7);
  CHECK(h.cols() == 5);
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one unit, two steps, by hand") {
  auto cfg = small(TargetMode::Scalar, 1, 2, 1);
  cfg.dense_units = 1;
  // W: i f g o, U: i f g o, b: i f g o, W1, b1, W2, b2
  const std::vector<double> theta{0.5, -0.3, 0.8, 0.2, 0.1, 0.4, -0.6, 0.3, 0.05, 1.0, -0.1, 0.2, 1.5, 0.1, -2.0, 0.3};
  REQUIRE(theta.size() == cfg.n_params());
  const std::vector<double> x{0.7, -1.2};
  double h = 0.0, c = 0.0;
  std::vector<double> hs;
  for (double xt : x) {
    const double i = sigm(0.5 * xt + 0.1 * h + 0.05);
    const double f = sigm(-0.3 * xt + 0.4 * h + 1.0);
    const double g = std::tanh(0.8 * xt - 0.6 * h - 0.1);
    const double o = sigm(0.2 * xt + 0.3 * h + 0.2);
    c = f * c + i * g;
    h = o * std::tanh(c);
    hs.push_back(h);
  }
  const auto got = lstm_forward(cfg, theta, x.data(), 2);
  CHECK(std::abs(got(0, 0) - hs[0]) < 1e-12);
  CHECK(std::abs(got(1, 0) - hs[1]) < 1e-12);

  Model model;
  model.config = cfg;
  model.theta = theta;
  const double expect = sigm(-2.0 * std::max(0.0, 1.5 * h + 0.1) + 0.3);
  CHECK(std::abs(model_forward(model, x.data(), 2)[0] - expect) < 1e-12);
}

TEST_CASE("initial state continues a sequence") {
  const auto cfg = small(TargetMode::Sequence, 4, 10);
  std::mt19937_64 rng(3);
  const auto theta = random_theta(cfg.n_params(), rng);
  const auto x = random_theta(10 * kLoadChannels, rng, 2.0);
  const auto full = lstm_forward(cfg, theta, x.data(), 10);

  // rebuild the cell state by running the first half one step at a time
  LstmState st{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)};
  const auto H = 4;
  const Eigen::Map<const Eigen::MatrixXd> W(theta.data(), 4 * H, kLoadChannels);
  const Eigen::Map<const Eigen::MatrixXd> U(theta.data() + 4 * H * kLoadChannels, 4 * H, H);
  const Eigen::Map<const Eigen::VectorXd> b(theta.data() + 4 * H * (kLoadChannels + H), 4 * H);
  for (int t = 0; t < 5; ++t) {
    const Eigen::Map<const Eigen::VectorXd> xt(x.data() + t * kLoadChannels, kLoadChannels);
    const Eigen::VectorXd z = W * xt + U * st.h + b;
    for (int j = 0; j < H; ++j) {
      const double i = sigm(z[j]), f = sigm(z[H + j]), g = std::tanh(z[2 * H + j]), o = sigm(z[3 * H + j]);
      st.c[j] = f * st.c[j] + i * g;
      st.h[j] = o * std::tanh(st.c[j]);
    }
  }
  const auto tail = lstm_forward(cfg, theta, x.data() + 5 * kLoadChannels, 5, &st);
  CHECK((tail - full.bottomRows(5)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("output depends on input order") {
  const auto cfg = small(TargetMode::Scalar, 6, 8);
  std::mt19937_64 rng(11);
  Model model;
  model.config = cfg;
  model.theta = random_theta(cfg.n_params(), rng);
  auto x = random_theta(8 * kLoadChannels, rng, 2.0);
  auto rev = x;
  for (std::size_t t = 0; t < 8; ++t)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((7 - t) * kLoadChannels), kLoadChannels,
                rev.begin() + static_cast<std::ptrdiff_t>(t * kLoadChannels));
  CHECK(std::abs(model_forward(model, x.data(), 8)[0] - model_forward(model, rev.data(), 8)[0]) > 1e-6);
}

TEST_CASE("output shapes and zero head") {
  for (auto mode : {TargetMode::Scalar, TargetMode::Sequence}) {
    const auto cfg = small(mode, 3, 9);
    Model model;
    model.config = cfg;
    model.theta.assign(cfg.n_params(), 0.0);
    std::vector<double> x(9 * kLoadChannels, 1.0);
    const auto p = model_forward(model, x.data(), 6);
    if (mode == TargetMode::Scalar) {
      REQUIRE(p.size() == 1);
      CHECK(p[0] == 0.5);
    } else {
      REQUIRE(p.size() == 9);
      for (std::size_t t = 0; t < 6; ++t) CHECK(p[t] == 0.5);
      for (std::size_t t = 6; t < 9; ++t) CHECK(p[t] == 0.0);
    }
  }
}

TEST_CASE("parameter counts") {
  ModelConfig c;
  c.n_units = 256;
  c.dense_units = 0;
  CHECK(c.n_params() == 4 * 256 * (8 + 256 + 1) + 256 * 256 + 256 + 256 + 1);
  c.mode = TargetMode::Sequence;
  c.window = {400, 300};
  CHECK(c.n_params() == 4 * 256 * (8 + 256 + 1) + 257);
  CHECK(c.shape().outputs() == 400);
}

TEST_CASE("binary cross-entropy") {
  const std::vector<std::uint8_t> one{1}, zero{0}, on{1};
  CHECK(bce_loss(std::vector{0.5}, one, on) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(std::vector{0.9}, one, on) == doctest::Approx(0.105360515657826).epsilon(1e-12));
  CHECK(bce_loss(std::vector{0.1}, zero, on) == doctest::Approx(0.105360515657826).epsilon(1e-12));
  CHECK(bce_loss(std::vector{1.0}, one, on) <= 1e-6);
  CHECK(std::isfinite(bce_loss(std::vector{0.0}, one, on)));
  CHECK(bce_loss(std::vector{0.5, 0.0}, std::vector<std::uint8_t>{1, 1}, std::vector<std::uint8_t>{1, 0}) ==
        doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(bce_loss(std::vector{0.5}, one, std::vector<std::uint8_t>{0}), Error);
}

TEST_CASE("saturated correct predictions give vanishing gradients") {
  for (auto mode : {TargetMode::Scalar, TargetMode::Sequence}) {
    const auto cfg = small(mode, 4, 6);
    std::mt19937_64 rng(5);
    Model model;
    model.config = cfg;
    model.theta = random_theta(cfg.n_params(), rng, 0.2);
    model.theta.back() = 40.0;
    auto b = random_batch(cfg.shape(), 4, rng, false);
    std::fill(b.y.begin(), b.y.end(), 1);
    const auto g = backward(model, b.samples);
    CHECK(g.loss <= 1e-6);
    for (double v : g.grad) CHECK(std::abs(v) <= 1e-8);
  }
}

TEST_CASE("gradient is linear in the loss") {
  const auto s = small(TargetMode::Sequence, 5, 7).shape();
  std::mt19937_64 rng(9);
  const auto theta = random_theta(s.n_params(), rng);
  auto b = random_batch(s, 3, rng, true);
  auto twice = b.samples;
  twice.insert(twice.end(), b.samples.begin(), b.samples.end());
  const auto one = kernels::loss_grad_serial(s, theta, b.samples, 1.25);
  const auto two = kernels::loss_grad_serial(s, theta, twice, 1.25);
  CHECK(two.loss == doctest::Approx(2.0 * one.loss).epsilon(1e-14));
  for (std::size_t k = 0; k < one.grad.size(); ++k) CHECK(std::abs(two.grad[k] - 2.0 * one.grad[k]) < 1e-12);
}

TEST_CASE("gradient check over random small configs") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int k = 0; k < 24; ++k) {
    ModelConfig c;
    c.mode = k % 2 ? TargetMode::Sequence : TargetMode::Scalar;
    c.n_inputs = 1 + rng() % 4;
    c.n_units = 1 + rng() % 8;
    c.dense_units = 1 + rng() % 8;
    c.dropout = 0.0;
    c.window = {2 + rng() % 19, 1};
    const auto r = gradient_check(c, static_cast<std::uint64_t>(k));
    CAPTURE(k);
    CHECK_FALSE(r.skipped);
    CHECK(r.n_checked == c.n_params());
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("gradient check: seed 0, head only, dropout") {
  ModelConfig c;
  c.n_inputs = 4;
  c.n_units = 8;
  c.dense_units = 8;
  c.dropout = 0.0;
  c.window = {20, 15};
  CHECK(gradient_check(c, 0).max_rel_error < 1e-4);
  for (auto mode : {TargetMode::Scalar, TargetMode::Sequence}) {
    c.mode = mode;
    const auto r = gradient_check(c, 1, {3, 1e-5, true});
    CHECK(r.n_checked == c.shape().head_params());
    CHECK(r.max_rel_error < 1e-7);
  }
  c.dropout = 0.1;
  CHECK(gradient_check(c, 0).skipped);
  c.dropout = 0.0;
  c.n_units = 9;
  CHECK_THROWS_AS(gradient_check(c, 0), Error);
}

TEST_CASE("batched kernel matches the serial reference") {
  for (auto sequence : {false, true})
    for (std::size_t n : {1, 31, 32, 33, 70}) {
      const kernels::NetShape s{kLoadChannels, 7, 5, 12, sequence};
      std::mt19937_64 rng(n * 7 + sequence);
      const auto theta = random_theta(s.n_params(), rng);
      const auto b = random_batch(s, n, rng, true);
      const auto a = kernels::loss_grad_serial(s, theta, b.samples, 1.0 / 0.9);
      const auto o = kernels::loss_grad_omp(s, theta, b.samples, 1.0 / 0.9);
      CAPTURE(n);
      CHECK(a.count == o.count);
      CHECK(std::abs(a.loss - o.loss) <= 1e-10 * std::max(1.0, std::abs(a.loss)));
      double dg = 0.0, dp = 0.0;
      for (std::size_t k = 0; k < a.grad.size(); ++k) dg = std::max(dg, std::abs(a.grad[k] - o.grad[k]));
      for (std::size_t k = 0; k < a.prob.size(); ++k) dp = std::max(dp, std::abs(a.prob[k] - o.prob[k]));
      CHECK(dg < 1e-10);
      CHECK(dp < 1e-12);
      const auto fs = kernels::forward_serial(s, theta, b.samples);
      const auto fo = kernels::forward_omp(s, theta, b.samples);
      for (std::size_t k = 0; k < fs.size(); ++k) CHECK(std::abs(fs[k] - fo[k]) < 1e-12);
    }
}

TEST_CASE("init") {
  ModelConfig c;
  c.n_units = 16;
  const auto m = init_model(c, 4);
  const std::size_t H = 16, m_in = kLoadChannels;
  const Eigen::Map<const Eigen::MatrixXd> U(m.theta.data() + 4 * H * m_in, 4 * H, H);
  CHECK((U.transpose() * U - Eigen::MatrixXd::Identity(H, H)).cwiseAbs().maxCoeff() < 1e-12);
  const double* b = m.theta.data() + 4 * H * (m_in + H);
  for (std::size_t k = 0; k < 4 * H; ++k) CHECK(b[k] == (k >= H && k < 2 * H ? 1.0 : 0.0));
  const double limit = std::sqrt(6.0 / static_cast<double>(m_in + 4 * H));
  for (std::size_t k = 0; k < 4 * H * m_in; ++k) CHECK(std::abs(m.theta[k]) <= limit);
  CHECK(init_model(c, 4).theta == m.theta);
  CHECK(init_model(c, 5).theta != m.theta);
}

TEST_CASE("zero learning rate leaves the parameters alone") {
  const auto ds = toy_set(TargetMode::Scalar, 40, 1);
  auto cfg = small(TargetMode::Scalar, 4, 12);
  TrainConfig t;
  t.lr = 0.0;
  t.epochs = 3;
  t.batch = 8;
  const auto r = train(cfg, t, ds, &ds);
  CHECK(r.model.theta == init_model(cfg, t.seed).theta);
  REQUIRE(r.history.size() == 3);
  CHECK(r.history[1].val_loss == r.history[0].val_loss);
  CHECK(r.history[2].val_mcc == r.history[0].val_mcc);
}

TEST_CASE("training is deterministic") {
  const auto ds = toy_set(TargetMode::Sequence, 40, 2);
  auto cfg = small(TargetMode::Sequence, 4, 12);
  cfg.dropout = 0.1;
  TrainConfig t;
  t.epochs = 3;
  t.batch = 8;
  t.seed = 17;
  const auto a = train(cfg, t, ds, &ds);
  const auto b = train(cfg, t, ds, &ds);
  CHECK(a.model.theta == b.model.theta);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_mcc == b.history[e].val_mcc);
  }
  t.seed = 18;
  CHECK(train(cfg, t, ds, &ds).model.theta != a.model.theta);
}

TEST_CASE("learns a separable toy problem") {
  for (auto mode : {TargetMode::Scalar, TargetMode::Sequence}) {
    const auto tr = toy_set(mode, 160, 3);
    const auto va = toy_set(mode, 80, 4);
    auto cfg = small(mode, 8, 12);
    TrainConfig t;
    t.epochs = 30;
    t.batch = 16;
    t.lr = 1e-2;
    const auto r = train(cfg, t, tr, &va);
    CAPTURE(to_string(mode));
    CHECK(r.history[9].train_loss < r.history[0].train_loss);
    CHECK(r.history.back().val_mcc > 0.95);
  }
}

TEST_CASE("loss falls over the first ten epochs at the default rate") {
  const auto tr = toy_set(TargetMode::Scalar, 200, 5);
  const auto cfg = small(TargetMode::Scalar, 8, 12);
  TrainConfig t;
  t.epochs = 10;
  t.batch = 16;
  const auto r = train(cfg, t, tr);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  CHECK(std::isnan(r.history.back().val_mcc));
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  auto ds = toy_set(TargetMode::Scalar, 10, 6);
  ds.inputs[3] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig t;
  t.epochs = 1;
  try {
    train(small(TargetMode::Scalar, 2, 12), t, ds);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("non-finite loss at epoch 1") != std::string::npos);
  }
}

TEST_CASE("prediction is repeatable and stitched") {
  auto cfg = small(TargetMode::Sequence, 4, 20);
  cfg.window = {20, 15};
  cfg.dropout = 0.3;
  std::mt19937_64 rng(8);
  Model model = init_model(cfg, 8);
  auto seq = toy_brakings(1, 47, 9)[0];
  const auto a = predict_braking(model, seq);
  const auto b = predict_braking(model, seq);
  CHECK(a.propensity == b.propensity);
  CHECK(a.propensity.size() == 47);

  model.theta.assign(model.theta.size(), 0.0);
  const auto z = predict_braking(model, seq);
  for (double p : z.propensity) CHECK(p == 0.5);
  CHECK(z.squeal);
  CHECK(z.onset == 0.0);

  seq.data.resize(10 * kLoadChannels);
  seq.labels.resize(10);
  CHECK_THROWS_AS(predict_braking(model, seq), Error);
}

TEST_CASE("onset error is infinite when nothing is predicted") {
  auto cfg = small(TargetMode::Sequence, 2, 12);
  Model model;
  model.config = cfg;
  model.theta.assign(cfg.n_params(), 0.0);
  model.theta.back() = -30.0;
  auto seqs = toy_brakings(2, 30, 1);
  const auto err = onset_errors(model, seqs);
  REQUIRE(err.size() == 1);
  CHECK(std::isinf(err[0]));
  model.theta.back() = 30.0;
  CHECK(onset_errors(model, seqs)[0] == 0.0);
}

TEST_CASE("model round trip and mode checks") {
  const auto dir = std::filesystem::temp_directory_path() / "squeal_rnn_test";
  std::filesystem::create_directories(dir);
  auto cfg = small(TargetMode::Sequence, 3, 12);
  auto m = init_model(cfg, 21);
  m.stats.mean[2] = 1.5;
  m.stats.std[2] = 0.25;
  save_model(dir / "m", m, {{"note", "x"}});
  const auto back = load_model(dir / "m");
  CHECK(back.theta == m.theta);
  CHECK(back.seed == 21);
  CHECK(back.stats.mean == m.stats.mean);
  CHECK(back.stats.std == m.stats.std);
  CHECK(to_json(back.config) == to_json(cfg));
  std::filesystem::remove_all(dir);

  const auto seq_set = toy_set(TargetMode::Sequence, 4, 1);
  const auto cfg_scalar = small(TargetMode::Scalar, 3, 12);
  CHECK_THROWS_AS(make_batch(cfg_scalar, seq_set, std::vector<std::size_t>{0}), Error);
  auto cfg_long = small(TargetMode::Sequence, 3, 13);
  CHECK_THROWS_AS(make_batch(cfg_long, seq_set, std::vector<std::size_t>{0}), Error);
}

TEST_CASE("adam") {
  TrainConfig t;
  t.lr = 0.1;
  Adam adam(t, 2);
  std::vector<double> theta{1.0, -1.0};
  const std::vector<double> g{0.5, -2.0};
  adam.step(theta, g);
  // first bias-corrected step moves each parameter by about lr against the sign
  CHECK(theta[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(-0.9).epsilon(1e-6));
  CHECK(adam.steps() == 1);
}

}
