#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nclopf {

/// Sparse symmetric matrix stored as its lower triangle.
///
/// Assembly is coordinate-based: callers push (row, col, value) entries with
/// row >= col in any order, possibly with duplicates; finalize() sorts and
/// merges them deterministically. After finalize() the matrix is immutable
/// except through refill(), which reuses the recorded duplicate map so the
/// same assembly loop can update values without changing the pattern.
class SparseSym {
 public:
  explicit SparseSym(int n) : n_(n) {}

  int dim() const { return n_; }
  bool finalized() const { return finalized_; }

  void add(int row, int col, double value);
  void finalize();

  /// Restart triplet accumulation for a refill with the identical pattern.
  void begin_refill();
  /// Re-merge triplets into the finalized value array. The triplet
  /// coordinates must match the original assembly exactly.
  void refill();

  int nnz() const { return static_cast<int>(rowind_.size()); }
  const std::vector<int>& col_ptr() const { return colptr_; }
  const std::vector<int>& row_ind() const { return rowind_; }
  const std::vector<double>& values() const { return vals_; }

  double max_abs_diag() const;
  double norm_inf() const;
  double frobenius_norm() const;

  /// y = M x treating the stored lower triangle as a symmetric operator.
  void multiply(std::span<const double> x, std::span<double> y) const;

  bool same_pattern(const SparseSym& other) const;

  /// MatrixMarket symmetric coordinate dump (1-based indices).
  void write_matrix_market(std::ostream& os) const;

 private:
  struct Trip {
    int row, col;
    double val;
  };

  int n_ = 0;
  bool finalized_ = false;
  std::vector<Trip> trips_;
  std::vector<int> trip_slot_;  // triplet k -> index into vals_
  std::vector<int> colptr_, rowind_;
  std::vector<double> vals_;
  std::size_t refill_cursor_ = 0;
};

/// Deterministic minimum-degree fill-reducing ordering of the adjacency
/// graph. Returns perm with perm[k] = original index eliminated k-th.
std::vector<int> symbolic_order(const SparseSym& pattern);

/// Symbolic analysis: ordering plus the elimination structure reused by
/// every numeric factorization with the same pattern.
struct SymbolicFactor {
  int n = 0;
  std::vector<int> perm;    // perm[k] = original index of k-th pivot
  std::vector<int> iperm;   // iperm[original] = pivot position
  std::vector<int> parent;  // elimination tree on permuted indices
  // Permuted matrix in upper-triangular CSC (column k holds rows <= k).
  std::vector<int> up_colptr, up_rowind;
  // Map from the source matrix's finalized entry order into up_* slots.
  std::vector<int> entry_map;
  std::vector<int> l_colcount;  // column counts of L
  std::int64_t l_nnz = 0;
};

SymbolicFactor analyze(const SparseSym& M);
SymbolicFactor analyze(const SparseSym& M, std::vector<int> perm);

enum class FactorizeStatus : std::uint8_t { ok, zero_pivot };

struct Inertia {
  int n_pos = 0, n_neg = 0, n_zero = 0;
  bool operator==(const Inertia&) const = default;
};

/// P M Pᵀ = L D Lᵀ with unit lower L and 1x1 diagonal pivots taken strictly
/// in symbolic order. No pivoting for stability: a too-small pivot is
/// reported as zero_pivot and the caller is expected to regularize and retry.
class Factorization {
 public:
  FactorizeStatus status = FactorizeStatus::ok;
  int zero_pivot_index = -1;  // original (unpermuted) index
  Inertia inertia;

  bool ok() const { return status == FactorizeStatus::ok; }

  void solve_in_place(std::span<double> x) const;
  std::vector<double> solve(std::span<const double> b) const;

  const std::vector<double>& diagonal() const { return d_; }
  const SymbolicFactor* symbolic() const { return symb_; }

 private:
  friend Factorization factorize(const SparseSym&, const SymbolicFactor&, double);
  friend Factorization factorize(const SparseSym&, double);
  const SymbolicFactor* symb_ = nullptr;
  std::shared_ptr<const SymbolicFactor> owned_symb_;  // set by the convenience overload
  std::vector<int> lp_, li_;
  std::vector<double> lx_, d_;
};

/// Numeric factorization. pivot_tol is relative to max(1, |diag|_max) of M.
Factorization factorize(const SparseSym& M, const SymbolicFactor& symb,
                        double pivot_tol = 1e-12);
Factorization factorize(const SparseSym& M, double pivot_tol = 1e-12);

struct RefinedSolve {
  std::vector<double> x;
  double residual = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  bool converged = false;
};

/// Solve M x = b with iterative refinement until the scaled residual
/// |Mx-b|_inf / max(1, |b|_inf) drops below target (at most max_sweeps).
RefinedSolve solve_refined(const Factorization& F, const SparseSym& M,
                           std::span<const double> b, double target = 1e-8,
                           int max_sweeps = 5);

}  // namespace nclopf
