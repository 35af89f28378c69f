// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "autodiff/tensor.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace proxlab::ad {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_tape_counter{1};

[[noreturn]] void shape_error(const std::string& op, const Shape& a,
                              const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) +
                              " vs " + shape_str(b));
}

enum class Bcast { kEqual, kScalarB, kSuffixB, kPrefixB };

Bcast classify(const std::string& op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::kEqual;
  if (numel(b) == 1) return Bcast::kScalarB;
  if (b.size() < a.size()) {
    bool suffix = std::equal(b.begin(), b.end(), a.end() - b.size());
    if (suffix) return Bcast::kSuffixB;
    bool prefix = std::equal(b.begin(), b.end(), a.begin());
    if (prefix) return Bcast::kPrefixB;
  }
  shape_error(op, a, b);
}

}  // namespace

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  if (numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("Tensor::constant: shape/data size mismatch");
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(data);
  return Tensor(std::move(d));
}

Tensor Tensor::constant_scalar(double v) { return constant({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> z(static_cast<std::size_t>(numel(shape)), 0.0);
  return constant(std::move(shape), std::move(z));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  Tensor t = constant(std::move(shape), std::move(data));
  t.d_->requires_grad = true;
  t.d_->ensure_grad();
  return t;
}

double Tensor::item() const {
  if (d_->value.size() != 1)
    throw std::invalid_argument("Tensor::item: tensor is not scalar");
  return d_->value[0];
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}
Tape::Tape(bool grad_enabled) : Tape() { grad_enabled_ = grad_enabled; }

Tensor Tape::make_output(Shape shape, bool any_input_grad) {
  auto d = std::make_shared<TensorData>();
  std::int64_t n = numel(shape);
  d->shape = std::move(shape);
  d->value.assign(static_cast<std::size_t>(n), 0.0);
  if (grad_enabled_ && any_input_grad) {
    d->requires_grad = true;
    d->tape_id = id_;
    d->ensure_grad();
  }
  return Tensor(std::move(d));
}

void Tape::record(std::function<void()> fn) {
  nodes_.push_back(Node{std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  auto* d = loss.data_ptr();
  if (!d->requires_grad || d->tape_id != id_)
    throw std::invalid_argument(
        "backward: loss is detached or was not produced by this tape");
  d->ensure_grad();
  d->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

// ---------------------------------------------------------------------------
// elementwise binary

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  Bcast bc = classify("add", a.shape(), b.shape());
  bool needs = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(a.shape(), needs);
  auto av = a.value();
  auto bv = b.value();
  auto ov = out.mutable_value();
  std::size_t na = av.size(), nb = bv.size();
  switch (bc) {
    case Bcast::kEqual:
      for (std::size_t i = 0; i < na; ++i) ov[i] = av[i] + bv[i];
      break;
    case Bcast::kScalarB:
      for (std::size_t i = 0; i < na; ++i) ov[i] = av[i] + bv[0];
      break;
    case Bcast::kSuffixB:
      for (std::size_t i = 0; i < na; ++i) ov[i] = av[i] + bv[i % nb];
      break;
    case Bcast::kPrefixB: {
      std::size_t rep = na / nb;
      for (std::size_t i = 0; i < na; ++i) ov[i] = av[i] + bv[i / rep];
      break;
    }
  }
  if (out.requires_grad()) {
    auto ad = a.handle(), bd = b.handle(), od = out.handle();
    record([ad, bd, od, bc, na, nb] {
      const auto& g = od->grad;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < na; ++i) ad->grad[i] += g[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        switch (bc) {
          case Bcast::kEqual:
            for (std::size_t i = 0; i < na; ++i) bd->grad[i] += g[i];
            break;
          case Bcast::kScalarB:
            for (std::size_t i = 0; i < na; ++i) bd->grad[0] += g[i];
            break;
          case Bcast::kSuffixB:
            for (std::size_t i = 0; i < na; ++i) bd->grad[i % nb] += g[i];
            break;
          case Bcast::kPrefixB: {
            std::size_t rep = na / nb;
            for (std::size_t i = 0; i < na; ++i) bd->grad[i / rep] += g[i];
            break;
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  return add(a, scale(b, -1.0));
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  Bcast bc = classify("mul", a.shape(), b.shape());
  bool needs = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(a.shape(), needs);
  auto av = a.value();
  auto bv = b.value();
  auto ov = out.mutable_value();
  std::size_t na = av.size(), nb = bv.size();
  auto bidx = [bc, na, nb](std::size_t i) -> std::size_t {
    switch (bc) {
      case Bcast::kEqual: return i;
      case Bcast::kScalarB: return 0;
      case Bcast::kSuffixB: return i % nb;
      case Bcast::kPrefixB: return i / (na / nb);
    }
    return 0;
  };
  for (std::size_t i = 0; i < na; ++i) ov[i] = av[i] * bv[bidx(i)];
  if (out.requires_grad()) {
    auto ad = a.handle(), bd = b.handle(), od = out.handle();
    record([ad, bd, od, bidx, na] {
      const auto& g = od->grad;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < na; ++i)
          ad->grad[i] += g[i] * bd->value[bidx(i)];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < na; ++i)
          bd->grad[bidx(i)] += g[i] * ad->value[i];
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * c;
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od, c] {
      ad->ensure_grad();
      for (std::size_t i = 0; i < ad->grad.size(); ++i)
        ad->grad[i] += od->grad[i] * c;
    });
  }
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + c;
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od] {
      ad->ensure_grad();
      for (std::size_t i = 0; i < ad->grad.size(); ++i)
        ad->grad[i] += od->grad[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul

Tensor Tape::matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) shape_error("matmul", as, bs);
  std::int64_t M = as[as.size() - 2], K = as[as.size() - 1];
  std::int64_t bk = transpose_b ? bs[bs.size() - 1] : bs[bs.size() - 2];
  std::int64_t N = transpose_b ? bs[bs.size() - 2] : bs[bs.size() - 1];
  if (bk != K) shape_error("matmul", as, bs);
  bool shared_b = (bs.size() == 2);
  std::int64_t batch = 1;
  for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  if (!shared_b) {
    if (bs.size() != as.size()) shape_error("matmul", as, bs);
    for (std::size_t i = 0; i + 2 < as.size(); ++i)
      if (bs[i] != as[i]) shape_error("matmul", as, bs);
  }
  Shape os(as.begin(), as.end() - 1);
  os.push_back(N);
  bool needs = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(std::move(os), needs);

  const double* ap = a.value().data();
  const double* bp = b.value().data();
  double* op = out.mutable_value().data();
  std::int64_t bstride = shared_b ? 0 : K * N;
  for (std::int64_t i = 0; i < batch; ++i) {
    CMapMat A(ap + i * M * K, M, K);
    double* o = op + i * M * N;
    MapMat O(o, M, N);
    if (transpose_b) {
      CMapMat B(bp + i * bstride, N, K);
      O.noalias() = A * B.transpose();
    } else {
      CMapMat B(bp + i * bstride, K, N);
      O.noalias() = A * B;
    }
  }
  if (out.requires_grad()) {
    auto ad = a.handle(), bd = b.handle(), od = out.handle();
    record([ad, bd, od, M, K, N, batch, shared_b, transpose_b, bstride] {
      const double* gp = od->grad.data();
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::int64_t i = 0; i < batch; ++i) {
          CMapMat G(gp + i * M * N, M, N);
          MapMat dA(ad->grad.data() + i * M * K, M, K);
          if (transpose_b) {
            CMapMat B(bd->value.data() + i * bstride, N, K);
            dA.noalias() += G * B;
          } else {
            CMapMat B(bd->value.data() + i * bstride, K, N);
            dA.noalias() += G * B.transpose();
          }
        }
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::int64_t i = 0; i < batch; ++i) {
          CMapMat G(gp + i * M * N, M, N);
          CMapMat A(ad->value.data() + i * M * K, M, K);
          double* dbp = bd->grad.data() + (shared_b ? 0 : i * bstride);
          if (transpose_b) {
            MapMat dB(dbp, N, K);
            dB.noalias() += G.transpose() * A;
          } else {
            MapMat dB(dbp, K, N);
            dB.noalias() += A.transpose() * G;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// unary maps

Tensor Tape::unary_map(const Tensor& a, const std::function<double(double)>& f,
                       const std::function<double(double, double)>& df_yx) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = f(av[i]);
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od, df_yx] {
      ad->ensure_grad();
      for (std::size_t i = 0; i < ad->grad.size(); ++i)
        ad->grad[i] += od->grad[i] * df_yx(od->value[i], ad->value[i]);
    });
  }
  return out;
}

Tensor Tape::exp(const Tensor& a) {
  return unary_map(
      a, [](double x) { return std::exp(x); },
      [](double y, double) { return y; });
}

Tensor Tape::log(const Tensor& a) {
  return unary_map(
      a, [](double x) { return std::log(x); },
      [](double, double x) { return 1.0 / x; });
}

Tensor Tape::gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_map(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double, double x) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor Tape::logsigmoid(const Tensor& a) {
  return unary_map(
      a,
      [](double x) {
        return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
      },
      [](double, double x) {
        // sigma(-x), computed stably on both tails
        return x > 0.0 ? std::exp(-x) / (1.0 + std::exp(-x))
                       : 1.0 / (1.0 + std::exp(x));
      });
}

Tensor Tape::log_softmax(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.empty() || s.back() < 1)
    throw std::invalid_argument("log_softmax: empty last dimension");
  std::int64_t V = s.back();
  std::int64_t rows = numel(s) / V;
  Tensor out = make_output(s, a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * V;
    double* y = ov.data() + r * V;
    double m = x[0];
    for (std::int64_t j = 1; j < V; ++j) m = std::max(m, x[j]);
    double acc = 0.0;
    for (std::int64_t j = 0; j < V; ++j) acc += std::exp(x[j] - m);
    double lse = m + std::log(acc);
    for (std::int64_t j = 0; j < V; ++j) y[j] = x[j] - lse;
  }
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od, rows, V] {
      ad->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* g = od->grad.data() + r * V;
        const double* y = od->value.data() + r * V;
        double* dx = ad->grad.data() + r * V;
        double gsum = 0.0;
        for (std::int64_t j = 0; j < V; ++j) gsum += g[j];
        for (std::int64_t j = 0; j < V; ++j)
          dx[j] += g[j] - std::exp(y[j]) * gsum;
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps) {
  const Shape& s = x.shape();
  std::int64_t D = s.back();
  if (gain.size() != D || bias.size() != D)
    throw std::invalid_argument("layer_norm: gain/bias must have last-dim size");
  std::int64_t rows = numel(s) / D;
  bool needs = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  Tensor out = make_output(s, needs);
  auto saved = std::make_shared<std::vector<double>>();  // xhat rows + inv_std
  saved->resize(static_cast<std::size_t>(rows * D + rows));
  auto xv = x.value();
  auto gv = gain.value();
  auto bv = bias.value();
  auto ov = out.mutable_value();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * D;
    double mu = 0.0;
    for (std::int64_t j = 0; j < D; ++j) mu += xr[j];
    mu /= D;
    double var = 0.0;
    for (std::int64_t j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= D;
    double inv_std = 1.0 / std::sqrt(var + eps);
    (*saved)[static_cast<std::size_t>(rows * D + r)] = inv_std;
    for (std::int64_t j = 0; j < D; ++j) {
      double xhat = (xr[j] - mu) * inv_std;
      (*saved)[static_cast<std::size_t>(r * D + j)] = xhat;
      ov[r * D + j] = xhat * gv[j] + bv[j];
    }
  }
  if (out.requires_grad()) {
    auto xd = x.handle(), gd = gain.handle(), bd = bias.handle(),
         od = out.handle();
    record([xd, gd, bd, od, saved, rows, D] {
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* g = od->grad.data() + r * D;
        const double* xhat = saved->data() + r * D;
        double inv_std = (*saved)[static_cast<std::size_t>(rows * D + r)];
        if (gd->requires_grad) {
          gd->ensure_grad();
          for (std::int64_t j = 0; j < D; ++j) gd->grad[j] += g[j] * xhat[j];
        }
        if (bd->requires_grad) {
          bd->ensure_grad();
          for (std::int64_t j = 0; j < D; ++j) bd->grad[j] += g[j];
        }
        if (xd->requires_grad) {
          xd->ensure_grad();
          double* dx = xd->grad.data() + r * D;
          double m1 = 0.0, m2 = 0.0;
          for (std::int64_t j = 0; j < D; ++j) {
            double dh = g[j] * gd->value[j];
            m1 += dh;
            m2 += dh * xhat[j];
          }
          m1 /= D;
          m2 /= D;
          for (std::int64_t j = 0; j < D; ++j) {
            double dh = g[j] * gd->value[j];
            dx[j] += inv_std * (dh - m1 - xhat[j] * m2);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// indexing

Tensor Tape::embed(const Tensor& table, const std::vector<int>& ids,
                   Shape ids_shape) {
  const Shape& ts = table.shape();
  if (ts.size() != 2) throw std::invalid_argument("embed: table must be 2-D");
  std::int64_t V = ts[0], D = ts[1];
  if (numel(ids_shape) != static_cast<std::int64_t>(ids.size()))
    throw std::invalid_argument("embed: ids shape mismatch");
  for (int id : ids)
    if (id < 0 || id >= V) throw std::out_of_range("embed: id out of range");
  Shape os = ids_shape;
  os.push_back(D);
  Tensor out = make_output(std::move(os), table.requires_grad());
  auto tv = table.value();
  auto ov = out.mutable_value();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * D, D,
                ov.data() + i * D);
  if (out.requires_grad()) {
    auto td = table.handle(), od = out.handle();
    record([td, od, ids, D] {
      td->ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* g = od->grad.data() + i * D;
        double* dst = td->grad.data() + static_cast<std::size_t>(ids[i]) * D;
        for (std::int64_t j = 0; j < D; ++j) dst[j] += g[j];
      }
    });
  }
  return out;
}

Tensor Tape::gather(const Tensor& x, const std::vector<int>& ids) {
  const Shape& s = x.shape();
  if (s.empty()) throw std::invalid_argument("gather: x must have >=1 dim");
  std::int64_t V = s.back();
  std::int64_t rows = numel(s) / V;
  if (static_cast<std::int64_t>(ids.size()) != rows)
    throw std::invalid_argument("gather: ids size must equal leading numel");
  for (int id : ids)
    if (id < 0 || id >= V) throw std::out_of_range("gather: index out of range");
  Shape os(s.begin(), s.end() - 1);
  Tensor out = make_output(std::move(os), x.requires_grad());
  auto xv = x.value();
  auto ov = out.mutable_value();
  for (std::int64_t r = 0; r < rows; ++r) ov[r] = xv[r * V + ids[r]];
  if (out.requires_grad()) {
    auto xd = x.handle(), od = out.handle();
    record([xd, od, ids, V, rows] {
      xd->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        xd->grad[r * V + ids[r]] += od->grad[r];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions

Tensor Tape::sum(const Tensor& a) {
  Tensor out = make_output({}, a.requires_grad());
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  out.mutable_value()[0] = acc;
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od] {
      ad->ensure_grad();
      double g = od->grad[0];
      for (auto& dg : ad->grad) dg += g;
    });
  }
  return out;
}

Tensor Tape::mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor Tape::row_sum(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw std::invalid_argument("row_sum: needs >=1 dim");
  std::int64_t V = s.back();
  std::int64_t rows = numel(s) / V;
  Shape os(s.begin(), s.end() - 1);
  Tensor out = make_output(std::move(os), a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  for (std::int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < V; ++j) acc += av[r * V + j];
    ov[r] = acc;
  }
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od, rows, V] {
      ad->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < V; ++j)
          ad->grad[r * V + j] += od->grad[r];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// clip / min / detach

Tensor Tape::clip(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip: lo > hi");
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  for (std::size_t i = 0; i < av.size(); ++i)
    ov[i] = std::min(std::max(av[i], lo), hi);
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od, lo, hi] {
      ad->ensure_grad();
      for (std::size_t i = 0; i < ad->grad.size(); ++i) {
        double x = ad->value[i];
        if (x >= lo && x <= hi) ad->grad[i] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor Tape::minimum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("minimum", a.shape(), b.shape());
  bool needs = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(a.shape(), needs);
  auto av = a.value();
  auto bv = b.value();
  auto ov = out.mutable_value();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = std::min(av[i], bv[i]);
  if (out.requires_grad()) {
    auto ad = a.handle(), bd = b.handle(), od = out.handle();
    record([ad, bd, od] {
      // tie (a == b): gradient routed to the first operand
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        bool first = ad->value[i] <= bd->value[i];
        if (first && ad->requires_grad) {
          ad->ensure_grad();
          ad->grad[i] += od->grad[i];
        } else if (!first && bd->requires_grad) {
          bd->ensure_grad();
          bd->grad[i] += od->grad[i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::detach(const Tensor& a) {
  return Tensor::constant(a.shape(),
                          std::vector<double>(a.value().begin(), a.value().end()));
}

// ---------------------------------------------------------------------------
// layout

Tensor Tape::reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = make_output(std::move(shape), a.requires_grad());
  auto av = a.value();
  std::copy(av.begin(), av.end(), out.mutable_value().begin());
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od] {
      ad->ensure_grad();
      for (std::size_t i = 0; i < ad->grad.size(); ++i)
        ad->grad[i] += od->grad[i];
    });
  }
  return out;
}

Tensor Tape::transpose_12(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() != 4) throw std::invalid_argument("transpose_12: needs 4-D");
  std::int64_t A = s[0], B = s[1], C = s[2], D = s[3];
  Tensor out = make_output({A, C, B, D}, a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  auto src_index = [B, C, D](std::int64_t i, std::int64_t c, std::int64_t b,
                             std::int64_t d) {
    return ((i * B + b) * C + c) * D + d;
  };
  std::size_t o = 0;
  for (std::int64_t i = 0; i < A; ++i)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t d = 0; d < D; ++d)
          ov[o++] = av[src_index(i, c, b, d)];
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od, A, B, C, D, src_index] {
      ad->ensure_grad();
      std::size_t o = 0;
      for (std::int64_t i = 0; i < A; ++i)
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t d = 0; d < D; ++d)
              ad->grad[src_index(i, c, b, d)] += od->grad[o++];
    });
  }
  return out;
}

Tensor Tape::pad_front_zero(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw std::invalid_argument("pad_front_zero: needs >=1 dim");
  std::int64_t L = s.back();
  std::int64_t rows = numel(s) / L;
  Shape os = s;
  os.back() = L + 1;
  Tensor out = make_output(std::move(os), a.requires_grad());
  auto av = a.value();
  auto ov = out.mutable_value();
  for (std::int64_t r = 0; r < rows; ++r) {
    ov[r * (L + 1)] = 0.0;
    for (std::int64_t j = 0; j < L; ++j) ov[r * (L + 1) + 1 + j] = av[r * L + j];
  }
  if (out.requires_grad()) {
    auto ad = a.handle(), od = out.handle();
    record([ad, od, rows, L] {
      ad->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < L; ++j)
          ad->grad[r * L + j] += od->grad[r * (L + 1) + 1 + j];
    });
  }
  return out;
}

}  // namespace proxlab::ad
