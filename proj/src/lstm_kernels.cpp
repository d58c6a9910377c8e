#include "squeal/kernels/lstm_kernels.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "squeal/error.hpp"

namespace squeal::kernels {
namespace {

using Eigen::ArrayXXd;
using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

template <class Scalar>
struct Layout {
  using CMat = std::conditional_t<std::is_const_v<Scalar>, Map<const MatrixXd>, Map<MatrixXd>>;
  using CVec = std::conditional_t<std::is_const_v<Scalar>, Map<const VectorXd>, Map<VectorXd>>;
  using CRow = std::conditional_t<std::is_const_v<Scalar>, Map<const RowVectorXd>, Map<RowVectorXd>>;

  Layout(const NetShape& s, Scalar* p)
      : W(p, 4 * s.units, s.inputs),
        U(p + 4 * s.units * s.inputs, 4 * s.units, s.units),
        b(p + 4 * s.units * (s.inputs + s.units), 4 * s.units),
        W1(s.sequence ? nullptr : p + s.lstm_params(), s.sequence ? 0 : s.dense, s.sequence ? 0 : s.units),
        b1(s.sequence ? nullptr : p + s.lstm_params() + s.dense * s.units, s.sequence ? 0 : s.dense),
        W2(s.sequence ? nullptr : p + s.lstm_params() + s.dense * s.units + s.dense, s.sequence ? 0 : s.dense),
        wy(s.sequence ? p + s.lstm_params() : nullptr, s.sequence ? s.units : 0),
        out_bias(p + s.n_params() - 1) {}

  CMat W, U;
  CVec b;
  CMat W1;
  CVec b1;
  CRow W2;
  CRow wy;
  Scalar* out_bias;  // b2 or by
};

using Params = Layout<const double>;
using Grads = Layout<double>;

template <class D>
auto sigmoid(const Eigen::ArrayBase<D>& z) {
  return (1.0 + (-z).exp()).inverse();
}

// tanh written through exp so that it vectorises for double
template <class D>
auto fast_tanh(const Eigen::ArrayBase<D>& z) {
  return 1.0 - 2.0 / (1.0 + (2.0 * z).exp());
}

double bce(double p, std::uint8_t y) {
  const double pc = std::clamp(p, kBceEps, 1.0 - kBceEps);
  return y ? -std::log(pc) : -std::log(1.0 - pc);
}

void check(const NetShape& s, std::span<const double> theta, std::span<const Sample> batch) {
  if (s.inputs == 0 || s.units == 0 || s.steps == 0 || (!s.sequence && s.dense == 0))
    throw Error("lstm: empty layer");
  if (theta.size() != s.n_params())
    throw Error("lstm: expected " + std::to_string(s.n_params()) + " parameters, got " +
                std::to_string(theta.size()));
  for (const auto& x : batch)
    if (x.real < 1 || x.real > s.steps || !x.x) throw Error("lstm: bad sample");
}

// Per-sample reference in precision Real. Adds the gradient into g when given
// and returns the summed loss.
template <class Real>
Real sample_pass(const NetShape& s, const Params& p, const Sample& x, double scale, Grads* g,
                 double* prob, std::size_t& count) {
  using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
  using Arr = Eigen::Array<Real, Eigen::Dynamic, 1>;
  const auto H = static_cast<Eigen::Index>(s.units);
  const std::size_t m = s.inputs, T = x.real;
  const Mat W = p.W.cast<Real>(), U = p.U.cast<Real>();
  const Vec b = p.b.cast<Real>();
  const Real one(1);
  auto sig = [&](const auto& z) { return (one / (one + (-z.array()).exp())).matrix(); };
  auto input = [&](std::size_t t) { return Map<const VectorXd>(x.x + t * m, static_cast<Eigen::Index>(m)).cast<Real>(); };

  std::vector<Vec> hs(T + 1, Vec::Zero(H)), cs(T + 1, Vec::Zero(H)), gates(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Vec z = W * input(t) + U * hs[t] + b;
    Vec a(4 * H);
    a.segment(0, H) = sig(z.segment(0, H));
    a.segment(H, H) = sig(z.segment(H, H));
    a.segment(2 * H, H) = z.segment(2 * H, H).array().tanh().matrix();
    a.segment(3 * H, H) = sig(z.segment(3 * H, H));
    cs[t + 1] = (a.segment(H, H).array() * cs[t].array() + a.segment(0, H).array() * a.segment(2 * H, H).array()).matrix();
    hs[t + 1] = (a.segment(3 * H, H).array() * cs[t + 1].array().tanh()).matrix();
    gates[t] = std::move(a);
  }
  auto keep = [&](std::size_t t) {
    Vec k = Vec::Ones(H);
    if (x.keep)
      for (Eigen::Index j = 0; j < H; ++j) k[j] = x.keep[t * s.units + static_cast<std::size_t>(j)] ? Real(scale) : Real(0);
    return k;
  };
  auto bce_r = [](Real pr, std::uint8_t y) {
    const Real pc = std::clamp(pr, Real(kBceEps), Real(1) - Real(kBceEps));
    return y ? -std::log(pc) : -std::log(Real(1) - pc);
  };

  Real loss(0);
  std::vector<Vec> dh_direct(T, Vec::Zero(H));
  if (!s.sequence) {
    const Mat W1 = p.W1.cast<Real>();
    const Vec kp = keep(0);
    const Vec d = hs[T].cwiseProduct(kp);
    const Vec a1 = W1 * d + p.b1.cast<Real>();
    const Vec r = a1.cwiseMax(Real(0));
    const Real z = p.W2.cast<Real>().dot(r) + Real(*p.out_bias);
    const Real pr = one / (one + std::exp(-z));
    prob[0] = static_cast<double>(pr);
    const std::uint8_t y = x.y ? x.y[0] : 0;
    loss += bce_r(pr, y);
    ++count;
    if (g) {
      const Real dz = pr - Real(y);
      g->W2 += (dz * r.transpose()).template cast<double>();
      *g->out_bias += static_cast<double>(dz);
      const Vec da = (p.W2.cast<Real>().transpose() * dz).cwiseProduct((a1.array() > Real(0)).template cast<Real>().matrix());
      g->W1 += (da * d.transpose()).template cast<double>();
      g->b1 += da.template cast<double>();
      dh_direct[T - 1] = (W1.transpose() * da).cwiseProduct(kp);
    }
  } else {
    const Vec wy = p.wy.cast<Real>().transpose();
    for (std::size_t t = 0; t < T; ++t) {
      const Vec kp = keep(t);
      const Vec d = hs[t + 1].cwiseProduct(kp);
      const Real z = wy.dot(d) + Real(*p.out_bias);
      const Real pr = one / (one + std::exp(-z));
      prob[t] = static_cast<double>(pr);
      const std::uint8_t y = x.y ? x.y[t] : 0;
      loss += bce_r(pr, y);
      ++count;
      if (g) {
        const Real dz = pr - Real(y);
        g->wy += (dz * d.transpose()).template cast<double>();
        *g->out_bias += static_cast<double>(dz);
        dh_direct[t] = (wy * dz).cwiseProduct(kp);
      }
    }
  }
  if (!g) return loss;

  Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H);
  for (std::size_t t = T; t-- > 0;) {
    const auto& a = gates[t];
    const Arr i = a.segment(0, H).array(), f = a.segment(H, H).array(), gg = a.segment(2 * H, H).array(),
              o = a.segment(3 * H, H).array();
    const Arr tc = cs[t + 1].array().tanh();
    const Arr dh = (dh_direct[t] + dh_next).array();
    const Arr dc = dh * o * (one - tc * tc) + dc_next.array();
    Vec dz(4 * H);
    dz.segment(0, H) = (dc * gg * i * (one - i)).matrix();
    dz.segment(H, H) = (dc * cs[t].array() * f * (one - f)).matrix();
    dz.segment(2 * H, H) = (dc * i * (one - gg * gg)).matrix();
    dz.segment(3 * H, H) = (dh * tc * o * (one - o)).matrix();
    dc_next = (dc * f).matrix();
    g->W += (dz * input(t).transpose()).template cast<double>();
    g->U += (dz * hs[t].transpose()).template cast<double>();
    g->b += dz.template cast<double>();
    dh_next = U.transpose() * dz;
  }
  return loss;
}

struct ChunkResult {
  double loss = 0.0;
  std::size_t count = 0;
};

// Batched pass over one chunk; columns of time block t are t * B + sample.
ChunkResult chunk_pass(const NetShape& s, const Params& p, std::span<const Sample> xs, double scale,
                       Grads* g, double* prob) {
  const std::size_t H = s.units, m = s.inputs, B = xs.size();
  std::size_t T = 0;
  for (const auto& x : xs) T = std::max(T, x.real);
  const auto TB = static_cast<Eigen::Index>(T * B);
  const auto Bi = static_cast<Eigen::Index>(B);
  const auto Hi = static_cast<Eigen::Index>(H);

  MatrixXd X(m, TB);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b) {
      const auto col = static_cast<Eigen::Index>(t * B + b);
      if (t < xs[b].real)
        X.col(col) = Map<const VectorXd>(xs[b].x + t * m, m);
      else
        X.col(col).setZero();
    }

  MatrixXd A = p.W * X;
  A.colwise() += p.b;
  MatrixXd Hs = MatrixXd::Zero(Hi, TB + Bi), Cs = MatrixXd::Zero(Hi, TB + Bi);
  MatrixXd& G = A;  // gate activations overwrite the pre-activations
  for (std::size_t t = 0; t < T; ++t) {
    const auto c0 = static_cast<Eigen::Index>(t * B);
    auto z = G.middleCols(c0, Bi);
    z.noalias() += p.U * Hs.middleCols(c0, Bi);
    z.topRows(Hi) = sigmoid(z.topRows(Hi).array()).matrix();
    z.middleRows(Hi, Hi) = sigmoid(z.middleRows(Hi, Hi).array()).matrix();
    z.middleRows(2 * Hi, Hi) = fast_tanh(z.middleRows(2 * Hi, Hi).array()).matrix();
    z.bottomRows(Hi) = sigmoid(z.bottomRows(Hi).array()).matrix();
    Cs.middleCols(c0 + Bi, Bi) = (z.middleRows(Hi, Hi).array() * Cs.middleCols(c0, Bi).array() +
                                  z.topRows(Hi).array() * z.middleRows(2 * Hi, Hi).array()).matrix();
    Hs.middleCols(c0 + Bi, Bi) = (z.bottomRows(Hi).array() * fast_tanh(Cs.middleCols(c0 + Bi, Bi).array())).matrix();
  }

  ChunkResult res;
  MatrixXd dH;
  if (g) dH = MatrixXd::Zero(Hi, TB);
  const std::size_t n_out = s.outputs();
  if (!s.sequence) {
    MatrixXd D(Hi, Bi);
    MatrixXd K = MatrixXd::Ones(Hi, Bi);
    for (std::size_t b = 0; b < B; ++b) {
      if (xs[b].keep)
        for (std::size_t j = 0; j < H; ++j) K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b)) = xs[b].keep[j] ? scale : 0.0;
      D.col(static_cast<Eigen::Index>(b)) = Hs.col(static_cast<Eigen::Index>(xs[b].real * B + b));
    }
    D = D.cwiseProduct(K);
    MatrixXd A1 = p.W1 * D;
    A1.colwise() += p.b1;
    const MatrixXd R = A1.cwiseMax(0.0);
    const RowVectorXd z = (p.W2 * R).array() + *p.out_bias;
    RowVectorXd dz(Bi);
    for (std::size_t b = 0; b < B; ++b) {
      const double pr = 1.0 / (1.0 + std::exp(-z[static_cast<Eigen::Index>(b)]));
      prob[b] = pr;
      const std::uint8_t y = xs[b].y ? xs[b].y[0] : 0;
      res.loss += bce(pr, y);
      dz[static_cast<Eigen::Index>(b)] = pr - y;
    }
    res.count = B;
    if (g) {
      g->W2 += dz * R.transpose();
      for (Eigen::Index c = 0; c < dz.size(); ++c) *g->out_bias += dz[c];
      const MatrixXd dA = (p.W2.transpose() * dz).cwiseProduct((A1.array() > 0.0).cast<double>().matrix());
      g->W1 += dA * D.transpose();
      for (Eigen::Index c = 0; c < Bi; ++c) g->b1 += dA.col(c);
      const MatrixXd dD = (p.W1.transpose() * dA).cwiseProduct(K);
      for (std::size_t b = 0; b < B; ++b)
        dH.col(static_cast<Eigen::Index>((xs[b].real - 1) * B + b)) = dD.col(static_cast<Eigen::Index>(b));
    }
  } else {
    MatrixXd K = MatrixXd::Ones(Hi, TB);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t b = 0; b < B; ++b)
        if (xs[b].keep)
          for (std::size_t j = 0; j < H; ++j)
            K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t * B + b)) = xs[b].keep[t * H + j] ? scale : 0.0;
    const MatrixXd D = Hs.rightCols(TB).cwiseProduct(K);
    const RowVectorXd z = (p.wy * D).array() + *p.out_bias;
    RowVectorXd dz = RowVectorXd::Zero(TB);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < xs[b].real; ++t) {
        const auto col = static_cast<Eigen::Index>(t * B + b);
        const double pr = 1.0 / (1.0 + std::exp(-z[col]));
        prob[b * n_out + t] = pr;
        const std::uint8_t y = xs[b].y ? xs[b].y[t] : 0;
        res.loss += bce(pr, y);
        dz[col] = pr - y;
        ++res.count;
      }
    if (g) {
      g->wy += dz * D.transpose();
      for (Eigen::Index c = 0; c < dz.size(); ++c) *g->out_bias += dz[c];
      dH = (p.wy.transpose() * dz).cwiseProduct(K);
    }
  }
  if (!g) return res;

  MatrixXd dZ(4 * Hi, TB);
  MatrixXd dh_next = MatrixXd::Zero(Hi, Bi), dc_next = MatrixXd::Zero(Hi, Bi);
  for (std::size_t t = T; t-- > 0;) {
    const auto c0 = static_cast<Eigen::Index>(t * B);
    const auto a = G.middleCols(c0, Bi).array();
    const auto i = a.topRows(Hi), f = a.middleRows(Hi, Hi), gg = a.middleRows(2 * Hi, Hi), o = a.bottomRows(Hi);
    const ArrayXXd tc = fast_tanh(Cs.middleCols(c0 + Bi, Bi).array());
    const ArrayXXd dh = dH.middleCols(c0, Bi).array() + dh_next.array();
    const ArrayXXd dc = dh * o * (1.0 - tc * tc) + dc_next.array();
    auto dz = dZ.middleCols(c0, Bi);
    dz.topRows(Hi) = (dc * gg * i * (1.0 - i)).matrix();
    dz.middleRows(Hi, Hi) = (dc * Cs.middleCols(c0, Bi).array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * Hi, Hi) = (dc * i * (1.0 - gg * gg)).matrix();
    dz.bottomRows(Hi) = (dh * tc * o * (1.0 - o)).matrix();
    dc_next = (dc * f).matrix();
    dh_next.noalias() = p.U.transpose() * dz;
  }
  g->W.noalias() += dZ * X.transpose();
  g->U.noalias() += dZ * Hs.leftCols(TB).transpose();
  for (Eigen::Index c = 0; c < TB; ++c) g->b += dZ.col(c);
  return res;
}

}  // namespace

BatchResult loss_grad_serial(const NetShape& shape, std::span<const double> theta,
                             std::span<const Sample> batch, double keep_scale) {
  check(shape, theta, batch);
  const Params p(shape, theta.data());
  BatchResult out;
  out.grad.assign(shape.n_params(), 0.0);
  out.prob.assign(batch.size() * shape.outputs(), 0.0);
  Grads g(shape, out.grad.data());
  for (std::size_t n = 0; n < batch.size(); ++n)
    out.loss += sample_pass<double>(shape, p, batch[n], keep_scale, &g, out.prob.data() + n * shape.outputs(), out.count);
  return out;
}

BatchResult loss_grad_omp(const NetShape& shape, std::span<const double> theta,
                          std::span<const Sample> batch, double keep_scale) {
  check(shape, theta, batch);
  const Params p(shape, theta.data());
  const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> grads(n_chunks, std::vector<double>(shape.n_params(), 0.0));
  std::vector<ChunkResult> parts(n_chunks);
  BatchResult out;
  out.prob.assign(batch.size() * shape.outputs(), 0.0);
  const auto nc = static_cast<std::ptrdiff_t>(n_chunks);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::size_t lo = ci * kChunk, hi = std::min(batch.size(), lo + kChunk);
    Grads g(shape, grads[ci].data());
    parts[ci] = chunk_pass(shape, p, batch.subspan(lo, hi - lo), keep_scale, &g,
                           out.prob.data() + lo * shape.outputs());
  }
  out.grad.assign(shape.n_params(), 0.0);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    out.loss += parts[c].loss;
    out.count += parts[c].count;
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += grads[c][k];
  }
  return out;
}

std::vector<double> forward_serial(const NetShape& shape, std::span<const double> theta,
                                   std::span<const Sample> batch) {
  check(shape, theta, batch);
  const Params p(shape, theta.data());
  std::vector<double> prob(batch.size() * shape.outputs(), 0.0);
  std::size_t count = 0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    Sample x = batch[n];
    x.keep = nullptr;
    sample_pass<double>(shape, p, x, 1.0, nullptr, prob.data() + n * shape.outputs(), count);
  }
  return prob;
}

long double loss_extended(const NetShape& shape, std::span<const double> theta, std::span<const Sample> batch,
                          std::size_t& count) {
  check(shape, theta, batch);
  const Params p(shape, theta.data());
  std::vector<double> prob(shape.outputs());
  long double loss = 0.0L;
  count = 0;
  for (const auto& x : batch) {
    Sample plain = x;
    plain.keep = nullptr;
    loss += sample_pass<long double>(shape, p, plain, 1.0, nullptr, prob.data(), count);
  }
  return loss;
}

std::vector<double> forward_omp(const NetShape& shape, std::span<const double> theta,
                                std::span<const Sample> batch) {
  check(shape, theta, batch);
  const Params p(shape, theta.data());
  std::vector<Sample> plain(batch.begin(), batch.end());
  for (auto& x : plain) x.keep = nullptr;
  std::vector<double> prob(batch.size() * shape.outputs(), 0.0);
  const auto nc = static_cast<std::ptrdiff_t>((batch.size() + kChunk - 1) / kChunk);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk, hi = std::min(plain.size(), lo + kChunk);
    chunk_pass(shape, p, std::span(plain).subspan(lo, hi - lo), 1.0, nullptr, prob.data() + lo * shape.outputs());
  }
  return prob;
}

}  // namespace squeal::kernels
