#include "ghost/autograd/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "ghost/error.hpp"

namespace ghost::ag {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

/// Wraps a freshly computed value. The node joins the active tape only when
/// a tape is active and some input requires a gradient.
Tensor make_result_n(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                     std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  Tape* tape = active_tape();
  const bool needs =
      tape != nullptr && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->parents.push_back(t.ptr());
    node->backward = std::move(bw);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> bw) {
  return make_result_n(std::move(shape), std::move(data), std::vector<Tensor>(inputs), std::move(bw));
}

std::vector<double>* grad_of(Node& parent) { return parent.requires_grad ? &parent.ensure_grad() : nullptr; }

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

// C[m,n] (+)= op(A)·op(B), row-major.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          double beta) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (beta == 0.0) std::fill(c, c + m * n, 0.0);
    return;
  }
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a, ta ? static_cast<int>(m) : static_cast<int>(k), b,
              tb ? static_cast<int>(k) : static_cast<int>(n), beta, c, static_cast<int>(n));
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? r + axis : axis;
  if (a < 0 || a >= r) shape_error(op, "axis out of range");
  return static_cast<std::size_t>(a);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) shape_error("matmul", "operands need rank >= 2");
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) shape_error("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  const std::size_t batch = a.numel() / (m * k);

  if (b.rank() == 2) {
    // shared right operand: fold the batch into rows
    const std::size_t rows = batch * m;
    std::vector<double> out(rows * n);
    gemm(false, false, rows, n, k, a.data().data(), b.data().data(), out.data(), 0.0);
    return make_result(std::move(out_shape), std::move(out), {a, b}, [rows, n, k](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (auto* ga = grad_of(pa)) gemm(false, true, rows, k, n, self.grad.data(), pb.data.data(), ga->data(), 1.0);
      if (auto* gb = grad_of(pb)) gemm(true, false, k, n, rows, pa.data.data(), self.grad.data(), gb->data(), 1.0);
    });
  }

  if (!std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin(), b.shape().end() - 2) ||
      a.rank() != b.rank()) {
    shape_error("matmul", "batch dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(false, false, m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n, 0.0);
  }
  return make_result(std::move(out_shape), std::move(out), {a, b}, [batch, m, n, k](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto* ga = grad_of(pa);
    auto* gb = grad_of(pb);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* g = self.grad.data() + i * m * n;
      if (ga) gemm(false, true, m, k, n, g, pb.data.data() + i * k * n, ga->data() + i * m * k, 1.0);
      if (gb) gemm(true, false, k, n, m, pa.data.data() + i * m * k, g, gb->data() + i * k * n, 1.0);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) shape_error("add", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  const std::size_t inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % inner];
  return make_result(a.shape(), std::move(out), {a, b}, [inner](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (auto* gb = grad_of(*self.parents[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % inner] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", shape_str(a.shape()) + " * " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (auto* ga = grad_of(pa)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * pb.data[i];
    }
    if (auto* gb = grad_of(pb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += s * self.grad[i];
    }
  });
}

namespace {

// Swap of axes d0 < d1 viewed as [pre, A, mid, B, post] -> [pre, B, mid, A, post].
// Accumulates src into dst (dst must be sized; set accumulate=false to overwrite).
void swap_axes(const double* src, double* dst, std::size_t pre, std::size_t A, std::size_t mid, std::size_t B,
               std::size_t post, bool accumulate) {
  for (std::size_t p = 0; p < pre; ++p)
    for (std::size_t i = 0; i < A; ++i)
      for (std::size_t m = 0; m < mid; ++m)
        for (std::size_t j = 0; j < B; ++j) {
          const double* s = src + ((((p * A + i) * mid + m) * B + j) * post);
          double* d = dst + ((((p * B + j) * mid + m) * A + i) * post);
          if (accumulate) {
            for (std::size_t q = 0; q < post; ++q) d[q] += s[q];
          } else {
            std::copy(s, s + post, d);
          }
        }
}

}  // namespace

Tensor transpose(const Tensor& a, int dim0, int dim1) {
  std::size_t d0 = normalize_axis(dim0, a.rank(), "transpose");
  std::size_t d1 = normalize_axis(dim1, a.rank(), "transpose");
  if (d0 == d1) return reshape(a, a.shape());
  if (d0 > d1) std::swap(d0, d1);
  const Shape& s = a.shape();
  std::size_t pre = 1, mid = 1, post = 1;
  for (std::size_t i = 0; i < d0; ++i) pre *= s[i];
  for (std::size_t i = d0 + 1; i < d1; ++i) mid *= s[i];
  for (std::size_t i = d1 + 1; i < s.size(); ++i) post *= s[i];
  const std::size_t A = s[d0], B = s[d1];

  Shape out_shape = s;
  std::swap(out_shape[d0], out_shape[d1]);
  std::vector<double> out(a.numel());
  swap_axes(a.data().data(), out.data(), pre, A, mid, B, post, false);
  return make_result(std::move(out_shape), std::move(out), {a}, [=](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) swap_axes(self.grad.data(), ga->data(), pre, B, mid, A, post, true);
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) shape_error("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const Shape& s0 = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, s0.size(), "concat");
  std::size_t pre = 1, post = 1, total = 0;
  for (std::size_t i = 0; i < ax; ++i) pre *= s0[i];
  for (std::size_t i = ax + 1; i < s0.size(); ++i) post *= s0[i];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) shape_error("concat", "rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != s0[i]) shape_error("concat", shape_str(s) + " vs " + shape_str(s0));
    }
    widths.push_back(s[ax] * post);
    total += s[ax];
  }
  Shape out_shape = s0;
  out_shape[ax] = total;
  const std::size_t row = total * post;
  std::vector<double> out(pre * row);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].data().data();
    for (std::size_t p = 0; p < pre; ++p) std::copy(src + p * widths[k], src + (p + 1) * widths[k], out.data() + p * row + off);
    off += widths[k];
  }
  return make_result_n(std::move(out_shape), std::move(out), parts, [pre, row, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (auto* g = grad_of(*self.parents[k])) {
        for (std::size_t p = 0; p < pre; ++p)
          for (std::size_t q = 0; q < widths[k]; ++q) (*g)[p * widths[k] + q] += self.grad[p * row + off + q];
      }
      off += widths[k];
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, Shape prefix) {
  if (table.rank() != 2) shape_error("embedding", "table must be [V, d]");
  if (numel(prefix) != ids.size()) shape_error("embedding", "id count does not match prefix " + shape_str(prefix));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw Error(ErrorCode::TokenOutOfRange, "embedding id " + std::to_string(ids[i]) + " outside vocabulary");
    }
    const double* row = table.data().data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(row, row + d, out.data() + i * d);
  }
  prefix.push_back(d);
  std::vector<std::int64_t> saved(ids.begin(), ids.end());
  return make_result(std::move(prefix), std::move(out), {table}, [saved = std::move(saved), d](Node& self) {
    if (auto* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < saved.size(); ++i) {
        double* row = g->data() + static_cast<std::size_t>(saved[i]) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
      }
    }
  });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, const Shape& mask_shape, double value) {
  if (!is_suffix(a.shape(), mask_shape) || numel(mask_shape) != mask.size()) {
    shape_error("masked_fill", "mask " + shape_str(mask_shape) + " does not cover " + shape_str(a.shape()));
  }
  const std::size_t inner = mask.size();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i % inner]) out[i] = value;
  }
  std::vector<std::uint8_t> saved(mask.begin(), mask.end());
  return make_result(a.shape(), std::move(out), {a}, [saved = std::move(saved)](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) {
      const std::size_t inner = saved.size();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (!saved[i % inner]) (*ga)[i] += self.grad[i];
      }
    }
  });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() < 1) shape_error("softmax", "scalar input");
  const std::size_t n = a.dim(-1);
  const std::size_t rows = n ? a.numel() / n : 0;
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    if (mx == kNegInf) {
      std::fill(y, y + n, 0.0);
      continue;
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return make_result(a.shape(), std::move(out), {a}, [rows, n](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * n;
        const double* dy = self.grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
        double* dx = ga->data() + r * n;
        for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.dim(-1);
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) shape_error("layer_norm", "gain/bias must be [" + std::to_string(n) + "]");
  const std::size_t rows = x.numel() / n;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const double nd = static_cast<double>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xi[j];
    mean /= nd;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= nd;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xi[j] - mean) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = gain.data()[j] * h + bias.data()[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [rows, n, xhat, inv_std](Node& self) {
    Node& pg = *self.parents[1];
    auto* gx = grad_of(*self.parents[0]);
    auto* gg = grad_of(pg);
    auto* gb = grad_of(*self.parents[2]);
    const double nd = static_cast<double>(n);
    std::vector<double> dxhat(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = self.grad.data() + r * n;
      const double* h = xhat->data() + r * n;
      if (gg)
        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += dy[j] * h[j];
      if (gb)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += dy[j];
      if (gx) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dxhat[j] = dy[j] * pg.data[j];
          mean_d += dxhat[j];
          mean_dh += dxhat[j] * h[j];
        }
        mean_d /= nd;
        mean_dh /= nd;
        const double is = (*inv_std)[r];
        for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += is * (dxhat[j] - mean_d - h[j] * mean_dh);
      }
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (self.data[i] > 0.0) (*ga)[i] += self.grad[i];
      }
    }
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(0) || b.shape() != Shape{w.dim(1)}) {
    shape_error("affine", shape_str(x.shape()) + " . " + shape_str(w.shape()) + " + " + shape_str(b.shape()));
  }
  const std::size_t in = w.dim(0), outn = w.dim(1), rows = x.numel() / in;
  std::vector<double> out(rows * outn);
  for (std::size_t r = 0; r < rows; ++r) std::copy(b.data().begin(), b.data().end(), out.begin() + r * outn);
  gemm(false, false, rows, outn, in, x.data().data(), w.data().data(), out.data(), 1.0);
  Shape shape = x.shape();
  shape.back() = outn;
  return make_result(std::move(shape), std::move(out), {x, w, b}, [rows, in, outn](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    if (auto* gx = grad_of(px)) gemm(false, true, rows, in, outn, self.grad.data(), pw.data.data(), gx->data(), 1.0);
    if (auto* gw = grad_of(pw)) gemm(true, false, in, outn, rows, px.data.data(), self.grad.data(), gw->data(), 1.0);
    if (auto* gb = grad_of(*self.parents[2])) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < outn; ++j) (*gb)[j] += self.grad[r * outn + j];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s}, {a}, [](Node& self) {
    if (auto* ga = grad_of(*self.parents[0])) {
      for (double& g : *ga) g += self.grad[0];
    }
  });
}

Tensor cross_entropy_masked(const Tensor& logits, std::span<const std::int64_t> targets, std::int64_t ignore_id) {
  if (logits.rank() < 1) shape_error("cross_entropy", "scalar logits");
  const std::size_t vocab = logits.dim(-1);
  const std::size_t rows = vocab ? logits.numel() / vocab : 0;
  if (targets.size() != rows) {
    shape_error("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_id) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw Error(ErrorCode::TokenOutOfRange, "target " + std::to_string(targets[r]) + " outside vocabulary");
    }
    const double* x = logits.data().data() + r * vocab;
    const double mx = *std::max_element(x, x + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(x[j] - mx);
    total += mx + std::log(z) - x[targets[r]];
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::AllPositionsIgnored, "every target equals the ignore id");
  std::vector<std::int64_t> saved(targets.begin(), targets.end());
  const double inv = 1.0 / static_cast<double>(count);
  return make_result({}, {total * inv}, {logits},
                     [saved = std::move(saved), ignore_id, vocab, inv](Node& self) {
                       Node& pl = *self.parents[0];
                       auto* gl = grad_of(pl);
                       if (!gl) return;
                       const double g = self.grad[0] * inv;
                       for (std::size_t r = 0; r < saved.size(); ++r) {
                         if (saved[r] == ignore_id) continue;
                         const double* x = pl.data.data() + r * vocab;
                         double* dx = gl->data() + r * vocab;
                         const double mx = *std::max_element(x, x + vocab);
                         double z = 0.0;
                         for (std::size_t j = 0; j < vocab; ++j) z += std::exp(x[j] - mx);
                         for (std::size_t j = 0; j < vocab; ++j) dx[j] += g * std::exp(x[j] - mx) / z;
                         dx[saved[r]] -= g;
                       }
                     });
}

}  // namespace ghost::ag
