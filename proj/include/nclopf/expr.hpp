#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nclopf {

/// Raised when an evaluation leaves the smooth domain (division by ~0,
/// fractional power of a negative base). Carries the offending context so
/// model-level callers can name the template instance.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

enum class ExprOp : std::uint8_t {
  constant,
  var,    // variable slot
  param,  // parameter slot
  add,
  sub,
  mul,
  div,
  pow,  // base ^ constant exponent
  neg,
  sin_,
  cos_,
};

struct ExprNode;
using ExprRef = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprOp op;
  double value = 0.0;  // constant value or pow exponent
  int slot = -1;
  ExprRef a, b;
};

/// Value-semantic handle over an immutable expression DAG. Smart
/// constructors fold constants and drop neutral elements so symbolic
/// derivatives stay compact.
class Expr {
 public:
  Expr() : node_(nullptr) {}
  static Expr constant(double v);
  static Expr var(int slot);
  static Expr param(int slot);

  bool is_constant(double v) const;
  bool is_zero() const { return is_constant(0.0); }
  const ExprRef& node() const { return node_; }

  /// Symbolic derivative with respect to a variable slot.
  Expr diff(int var_slot) const;

  friend Expr operator+(const Expr& x, const Expr& y);
  friend Expr operator-(const Expr& x, const Expr& y);
  friend Expr operator*(const Expr& x, const Expr& y);
  friend Expr operator/(const Expr& x, const Expr& y);
  friend Expr operator-(const Expr& x);
  friend Expr pow(const Expr& x, double e);
  friend Expr sin(const Expr& x);
  friend Expr cos(const Expr& x);

  friend Expr operator+(const Expr& x, double c) { return x + Expr::constant(c); }
  friend Expr operator+(double c, const Expr& x) { return Expr::constant(c) + x; }
  friend Expr operator-(const Expr& x, double c) { return x - Expr::constant(c); }
  friend Expr operator-(double c, const Expr& x) { return Expr::constant(c) - x; }
  friend Expr operator*(const Expr& x, double c) { return x * Expr::constant(c); }
  friend Expr operator*(double c, const Expr& x) { return Expr::constant(c) * x; }
  friend Expr operator/(const Expr& x, double c) { return x / Expr::constant(c); }

 private:
  explicit Expr(ExprRef n) : node_(std::move(n)) {}
  static Expr make(ExprOp op, Expr a, Expr b, double v = 0.0);
  ExprRef node_;
};

/// Expression compiled to a flat register program. Shared subexpressions
/// evaluate once; one compiled tape serves every instance of a template.
class Tape {
 public:
  Tape() = default;
  explicit Tape(const Expr& e);

  bool empty() const { return code_.empty() && !constant_result_; }
  double eval(std::span<const double> vars, std::span<const double> params) const;

 private:
  struct Instr {
    ExprOp op;
    int a = -1, b = -1;
    double value = 0.0;
    int slot = -1;
  };
  std::vector<Instr> code_;
  bool constant_result_ = false;
  double constant_value_ = 0.0;
};

/// A twice-differentiable scalar template over variable and parameter
/// slots, with its first and second derivatives compiled once. Instances
/// bind slots to model variables and parameter values.
class ExpressionTemplate {
 public:
  ExpressionTemplate() = default;
  ExpressionTemplate(Expr f, int num_var_slots, std::string name);

  const std::string& name() const { return name_; }
  int num_var_slots() const { return num_var_slots_; }

  double value(std::span<const double> v, std::span<const double> p) const;

  struct GradEntry {
    int slot;
    Tape tape;
  };
  struct HessEntry {
    int slot_hi, slot_lo;  // slot_hi >= slot_lo
    Tape tape;
  };
  const std::vector<GradEntry>& grad() const { return grad_; }
  const std::vector<HessEntry>& hess() const { return hess_; }

 private:
  std::string name_;
  int num_var_slots_ = 0;
  Tape value_;
  std::vector<GradEntry> grad_;
  std::vector<HessEntry> hess_;
};

}  // namespace nclopf
