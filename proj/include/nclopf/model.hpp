#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nclopf/expr.hpp"
#include "nclopf/sparse_sym.hpp"

namespace nclopf {

/// One binding of a template: variable slots to global indices, parameter
/// slots to values, and the constraint row the value accumulates into
/// (ignored for objective instances).
struct Instance {
  std::vector<int> vars;
  std::vector<double> params;
  int row = -1;
};

class ModelBuilder;

/// Immutable objective/constraint stack with exact sparse first and second
/// derivatives. Constraint rows are sums of template-instance values, so the
/// Jacobian and Hessian sparsity patterns are fixed unions over instances and
/// never change between evaluation points. Evaluations at distinct points may
/// run concurrently; accumulation order is fixed by construction.
class ModelFunctions {
 public:
  int num_vars() const { return n_; }
  int num_cons() const { return m_; }

  double eval_objective(std::span<const double> w) const;
  void eval_grad_objective(std::span<const double> w, std::span<double> grad) const;
  void eval_constraints(std::span<const double> w, std::span<double> c) const;

  /// Sorted unique (row, col) coordinates of the constraint Jacobian.
  const std::vector<std::pair<int, int>>& jac_coords() const { return jac_coords_; }
  void eval_jacobian(std::span<const double> w, std::span<double> vals) const;

  /// Lower-triangle (i >= j) coordinates of sigma*∇²φ + Σ λ_k ∇²c_k.
  const std::vector<std::pair<int, int>>& hess_coords() const { return hess_coords_; }
  void eval_hessian_lag(std::span<const double> w, double sigma, std::span<const double> lam,
                        std::span<double> vals) const;
  SparseSym hessian_lag(std::span<const double> w, double sigma,
                        std::span<const double> lam) const;

  /// J v and Jᵀ y products through the fixed sparsity.
  void jac_times(std::span<const double> jac_vals, std::span<const double> v,
                 std::span<double> out) const;
  void jac_trans_times(std::span<const double> jac_vals, std::span<const double> y,
                       std::span<double> out) const;

 private:
  friend class ModelBuilder;
  struct Family {
    ExpressionTemplate tmpl;
    std::vector<Instance> instances;
    bool objective = false;
    // per instance * grad entry -> jacobian value slot (constraints only)
    std::vector<int> jac_slot;
    // per instance * hess entry -> hessian value slot and multiplier
    std::vector<int> hess_slot;
    std::vector<double> hess_mult;
  };
  std::vector<Family> families_;
  int n_ = 0, m_ = 0;
  std::vector<std::pair<int, int>> jac_coords_;
  std::vector<std::pair<int, int>> hess_coords_;
};

/// Incremental assembly of a ModelFunctions.
class ModelBuilder {
 public:
  explicit ModelBuilder(int num_vars) : n_(num_vars) {}

  int num_vars() const { return n_; }
  int num_rows() const { return m_; }

  /// Registers a template; returns its id.
  int add_template(ExpressionTemplate t);

  int add_rows(int count);

  void add_objective_term(int tmpl_id, std::vector<int> vars, std::vector<double> params = {});
  void add_constraint_term(int tmpl_id, int row, std::vector<int> vars,
                           std::vector<double> params = {});

  ModelFunctions build() &&;

 private:
  int n_ = 0, m_ = 0;
  std::vector<ModelFunctions::Family> families_;
  std::vector<int> family_of_template_;
  void check_instance(const ModelFunctions::Family& f, const Instance& inst) const;
};

/// Finite-difference cross-check of gradient, Jacobian and Hessian-vector
/// products at a point strictly inside the domain.
struct FdReport {
  double grad_err = 0.0;
  double jac_err = 0.0;
  double hess_err = 0.0;
  bool pass = false;
};

FdReport fd_check(const ModelFunctions& m, std::span<const double> w, unsigned seed,
                  double tol = 1e-6);

}  // namespace nclopf
