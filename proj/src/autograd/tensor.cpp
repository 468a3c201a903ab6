#include "ghost/autograd/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ghost/error.hpp"

namespace ghost::ag {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(ag::numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != ag::numel(shape)) {
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(values.size()) + " values do not fill shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::dim(int i) const {
  const auto r = static_cast<int>(rank());
  const int idx = i < 0 ? r + i : i;
  if (idx < 0 || idx >= r) throw Error(ErrorCode::ShapeMismatch, "dim index out of range for " + shape_str(shape()));
  return shape()[static_cast<std::size_t>(idx)];
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::NonScalarLoss, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

Tape* active_tape() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::NonScalarLoss, "backward needs a scalar loss");
  }
  Tape* tape = active_tape();
  if (tape == nullptr) throw Error(ErrorCode::NoTape, "no active tape");
  const auto& nodes = tape->nodes();
  auto it = std::find(nodes.rbegin(), nodes.rend(), loss.ptr());
  if (it == nodes.rend()) throw Error(ErrorCode::NoTape, "loss was not recorded on the active tape");

  loss.node()->ensure_grad()[0] += 1.0;
  for (; it != nodes.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n);
  }
}

}  // namespace ghost::ag
