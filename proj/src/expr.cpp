#include "nclopf/expr.hpp"

#include <cmath>
#include <unordered_map>

namespace nclopf {

namespace {

bool node_is_const(const ExprRef& n, double v) {
  return n && n->op == ExprOp::constant && n->value == v;
}

ExprRef make_node(ExprOp op, ExprRef a, ExprRef b, double v, int slot) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  n->value = v;
  n->slot = slot;
  return n;
}

}  // namespace

Expr Expr::constant(double v) { return Expr(make_node(ExprOp::constant, nullptr, nullptr, v, -1)); }
Expr Expr::var(int slot) {
  if (slot < 0) throw std::invalid_argument("Expr::var: negative slot");
  return Expr(make_node(ExprOp::var, nullptr, nullptr, 0.0, slot));
}
Expr Expr::param(int slot) {
  if (slot < 0) throw std::invalid_argument("Expr::param: negative slot");
  return Expr(make_node(ExprOp::param, nullptr, nullptr, 0.0, slot));
}

bool Expr::is_constant(double v) const { return node_is_const(node_, v); }

Expr Expr::make(ExprOp op, Expr a, Expr b, double v) {
  const bool ca = a.node_ && a.node_->op == ExprOp::constant;
  const bool cb = b.node_ && b.node_->op == ExprOp::constant;
  switch (op) {
    case ExprOp::add:
      if (ca && cb) return constant(a.node_->value + b.node_->value);
      if (a.is_zero()) return b;
      if (b.is_zero()) return a;
      break;
    case ExprOp::sub:
      if (ca && cb) return constant(a.node_->value - b.node_->value);
      if (b.is_zero()) return a;
      if (a.is_zero()) return Expr(make_node(ExprOp::neg, b.node_, nullptr, 0.0, -1));
      break;
    case ExprOp::mul:
      if (ca && cb) return constant(a.node_->value * b.node_->value);
      if (a.is_zero() || b.is_zero()) return constant(0.0);
      if (a.is_constant(1.0)) return b;
      if (b.is_constant(1.0)) return a;
      if (a.is_constant(-1.0)) return -b;
      if (b.is_constant(-1.0)) return -a;
      break;
    case ExprOp::div:
      if (a.is_zero()) return constant(0.0);
      if (b.is_constant(1.0)) return a;
      if (ca && cb && b.node_->value != 0.0) return constant(a.node_->value / b.node_->value);
      break;
    case ExprOp::pow:
      if (v == 0.0) return constant(1.0);
      if (v == 1.0) return a;
      if (ca) return constant(std::pow(a.node_->value, v));
      break;
    case ExprOp::neg:
      if (ca) return constant(-a.node_->value);
      if (a.node_ && a.node_->op == ExprOp::neg) return Expr(a.node_->a);
      break;
    case ExprOp::sin_:
      if (ca) return constant(std::sin(a.node_->value));
      break;
    case ExprOp::cos_:
      if (ca) return constant(std::cos(a.node_->value));
      break;
    default:
      break;
  }
  return Expr(make_node(op, a.node_, b.node_, v, -1));
}

Expr operator+(const Expr& x, const Expr& y) { return Expr::make(ExprOp::add, x, y); }
Expr operator-(const Expr& x, const Expr& y) { return Expr::make(ExprOp::sub, x, y); }
Expr operator*(const Expr& x, const Expr& y) { return Expr::make(ExprOp::mul, x, y); }
Expr operator/(const Expr& x, const Expr& y) { return Expr::make(ExprOp::div, x, y); }
Expr operator-(const Expr& x) { return Expr::make(ExprOp::neg, x, Expr()); }
Expr pow(const Expr& x, double e) { return Expr::make(ExprOp::pow, x, Expr(), e); }
Expr sin(const Expr& x) { return Expr::make(ExprOp::sin_, x, Expr()); }
Expr cos(const Expr& x) { return Expr::make(ExprOp::cos_, x, Expr()); }

Expr Expr::diff(int var_slot) const {
  if (!node_) throw std::logic_error("Expr::diff: empty expression");
  const ExprNode& n = *node_;
  const Expr a = n.a ? Expr(n.a) : Expr();
  const Expr b = n.b ? Expr(n.b) : Expr();
  switch (n.op) {
    case ExprOp::constant:
    case ExprOp::param:
      return constant(0.0);
    case ExprOp::var:
      return constant(n.slot == var_slot ? 1.0 : 0.0);
    case ExprOp::add:
      return a.diff(var_slot) + b.diff(var_slot);
    case ExprOp::sub:
      return a.diff(var_slot) - b.diff(var_slot);
    case ExprOp::mul:
      return a.diff(var_slot) * b + a * b.diff(var_slot);
    case ExprOp::div: {
      // (a/b)' = a'/b - a b' / b^2
      const Expr da = a.diff(var_slot), db = b.diff(var_slot);
      return da / b - (a * db) / (b * b);
    }
    case ExprOp::pow:
      return constant(n.value) * pow(a, n.value - 1.0) * a.diff(var_slot);
    case ExprOp::neg:
      return -a.diff(var_slot);
    case ExprOp::sin_:
      return cos(a) * a.diff(var_slot);
    case ExprOp::cos_:
      return -sin(a) * a.diff(var_slot);
  }
  throw std::logic_error("Expr::diff: unknown op");
}

// ---------------------------------------------------------------------------
// Tape compilation: postorder over the DAG with node memoization.
// ---------------------------------------------------------------------------

Tape::Tape(const Expr& e) {
  if (!e.node()) throw std::logic_error("Tape: empty expression");
  if (e.node()->op == ExprOp::constant) {
    constant_result_ = true;
    constant_value_ = e.node()->value;
    return;
  }
  std::unordered_map<const ExprNode*, int> reg_of;
  // iterative postorder
  struct Frame {
    const ExprNode* node;
    bool expanded;
  };
  std::vector<Frame> stack{{e.node().get(), false}};
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (reg_of.count(node)) continue;
    if (!expanded) {
      stack.push_back({node, true});
      if (node->a) stack.push_back({node->a.get(), false});
      if (node->b) stack.push_back({node->b.get(), false});
      continue;
    }
    Instr ins;
    ins.op = node->op;
    ins.value = node->value;
    ins.slot = node->slot;
    if (node->a) ins.a = reg_of.at(node->a.get());
    if (node->b) ins.b = reg_of.at(node->b.get());
    reg_of[node] = static_cast<int>(code_.size());
    code_.push_back(ins);
  }
}

double Tape::eval(std::span<const double> vars, std::span<const double> params) const {
  if (constant_result_) return constant_value_;
  thread_local std::vector<double> scratch;
  if (scratch.size() < code_.size()) scratch.resize(code_.size());
  double* r = scratch.data();
  for (std::size_t k = 0; k < code_.size(); ++k) {
    const Instr& ins = code_[k];
    switch (ins.op) {
      case ExprOp::constant:
        r[k] = ins.value;
        break;
      case ExprOp::var:
        r[k] = vars[ins.slot];
        break;
      case ExprOp::param:
        r[k] = params[ins.slot];
        break;
      case ExprOp::add:
        r[k] = r[ins.a] + r[ins.b];
        break;
      case ExprOp::sub:
        r[k] = r[ins.a] - r[ins.b];
        break;
      case ExprOp::mul:
        r[k] = r[ins.a] * r[ins.b];
        break;
      case ExprOp::div: {
        const double den = r[ins.b];
        if (std::abs(den) < 1e-300) throw DomainError("division by ~0");
        r[k] = r[ins.a] / den;
        break;
      }
      case ExprOp::pow: {
        const double base = r[ins.a];
        const double ex = ins.value;
        if (base < 0.0 && ex != std::floor(ex)) throw DomainError("fractional power of negative base");
        if (base == 0.0 && ex < 0.0) throw DomainError("negative power of zero");
        r[k] = std::pow(base, ex);
        break;
      }
      case ExprOp::neg:
        r[k] = -r[ins.a];
        break;
      case ExprOp::sin_:
        r[k] = std::sin(r[ins.a]);
        break;
      case ExprOp::cos_:
        r[k] = std::cos(r[ins.a]);
        break;
    }
  }
  return r[code_.size() - 1];
}

ExpressionTemplate::ExpressionTemplate(Expr f, int num_var_slots, std::string name)
    : name_(std::move(name)), num_var_slots_(num_var_slots), value_(f) {
  std::vector<Expr> first(num_var_slots);
  for (int i = 0; i < num_var_slots; ++i) {
    first[i] = f.diff(i);
    if (!first[i].is_zero()) grad_.push_back({i, Tape(first[i])});
  }
  for (int i = 0; i < num_var_slots; ++i) {
    if (first[i].is_zero()) continue;
    for (int j = 0; j <= i; ++j) {
      Expr second = first[i].diff(j);
      if (!second.is_zero()) hess_.push_back({i, j, Tape(second)});
    }
  }
}

double ExpressionTemplate::value(std::span<const double> v, std::span<const double> p) const {
  return value_.eval(v, p);
}

}  // namespace nclopf
