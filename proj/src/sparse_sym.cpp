#include "nclopf/sparse_sym.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <stdexcept>

namespace nclopf {

void SparseSym::add(int row, int col, double value) {
  if (row < col) throw std::invalid_argument("SparseSym::add: row < col (store lower triangle)");
  if (col < 0 || row >= n_) throw std::invalid_argument("SparseSym::add: index out of range");
  if (!finalized_) {
    trips_.push_back({row, col, value});
    return;
  }
  // refill mode: coordinates must replay the original assembly order
  if (refill_cursor_ >= trips_.size() || trips_[refill_cursor_].row != row ||
      trips_[refill_cursor_].col != col) {
    throw std::logic_error("SparseSym::add: refill coordinates do not match original assembly");
  }
  trips_[refill_cursor_].val = value;
  ++refill_cursor_;
}

void SparseSym::finalize() {
  if (finalized_) throw std::logic_error("SparseSym::finalize: already finalized");
  const std::size_t nt = trips_.size();
  // sort coordinate identity (col-major, then row), stable w.r.t. input order
  std::vector<int> order(nt);
  for (std::size_t k = 0; k < nt; ++k) order[k] = static_cast<int>(k);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (trips_[a].col != trips_[b].col) return trips_[a].col < trips_[b].col;
    return trips_[a].row < trips_[b].row;
  });

  colptr_.assign(n_ + 1, 0);
  rowind_.clear();
  trip_slot_.assign(nt, -1);
  int prev_row = -1, prev_col = -1;
  for (std::size_t s = 0; s < nt; ++s) {
    const Trip& t = trips_[order[s]];
    if (t.row != prev_row || t.col != prev_col) {
      rowind_.push_back(t.row);
      colptr_[t.col + 1]++;
      prev_row = t.row;
      prev_col = t.col;
    }
    trip_slot_[order[s]] = static_cast<int>(rowind_.size()) - 1;
  }
  for (int c = 0; c < n_; ++c) colptr_[c + 1] += colptr_[c];
  finalized_ = true;
  refill();  // accumulate values in triplet order
}

void SparseSym::begin_refill() {
  if (!finalized_) throw std::logic_error("SparseSym::begin_refill: not finalized");
  refill_cursor_ = 0;
}

void SparseSym::refill() {
  if (!finalized_) throw std::logic_error("SparseSym::refill: not finalized");
  vals_.assign(rowind_.size(), 0.0);
  for (std::size_t k = 0; k < trips_.size(); ++k) vals_[trip_slot_[k]] += trips_[k].val;
}

double SparseSym::max_abs_diag() const {
  double m = 0.0;
  for (int c = 0; c < n_; ++c) {
    for (int p = colptr_[c]; p < colptr_[c + 1]; ++p) {
      if (rowind_[p] == c) m = std::max(m, std::abs(vals_[p]));
    }
  }
  return m;
}

double SparseSym::norm_inf() const {
  std::vector<double> rowsum(n_, 0.0);
  for (int c = 0; c < n_; ++c) {
    for (int p = colptr_[c]; p < colptr_[c + 1]; ++p) {
      const int r = rowind_[p];
      const double a = std::abs(vals_[p]);
      rowsum[r] += a;
      if (r != c) rowsum[c] += a;
    }
  }
  double m = 0.0;
  for (double v : rowsum) m = std::max(m, v);
  return m;
}

double SparseSym::frobenius_norm() const {
  double s = 0.0;
  for (int c = 0; c < n_; ++c) {
    for (int p = colptr_[c]; p < colptr_[c + 1]; ++p) {
      const double v = vals_[p] * vals_[p];
      s += (rowind_[p] == c) ? v : 2.0 * v;
    }
  }
  return std::sqrt(s);
}

void SparseSym::multiply(std::span<const double> x, std::span<double> y) const {
  std::fill(y.begin(), y.end(), 0.0);
  for (int c = 0; c < n_; ++c) {
    for (int p = colptr_[c]; p < colptr_[c + 1]; ++p) {
      const int r = rowind_[p];
      const double v = vals_[p];
      y[r] += v * x[c];
      if (r != c) y[c] += v * x[r];
    }
  }
}

bool SparseSym::same_pattern(const SparseSym& other) const {
  return n_ == other.n_ && colptr_ == other.colptr_ && rowind_ == other.rowind_;
}

void SparseSym::write_matrix_market(std::ostream& os) const {
  os << "%%MatrixMarket matrix coordinate real symmetric\n";
  os << n_ << " " << n_ << " " << nnz() << "\n";
  char buf[64];
  for (int c = 0; c < n_; ++c) {
    for (int p = colptr_[c]; p < colptr_[c + 1]; ++p) {
      std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", rowind_[p] + 1, c + 1, vals_[p]);
      os << buf;
    }
  }
}

// ---------------------------------------------------------------------------
// Fill-reducing ordering: minimum degree on the adjacency graph, smallest
// index breaking ties. Elimination updates neighbor lists explicitly; fine at
// the problem sizes this solver targets.
// ---------------------------------------------------------------------------

std::vector<int> symbolic_order(const SparseSym& pattern) {
  if (!pattern.finalized()) throw std::logic_error("symbolic_order: pattern not finalized");
  const int n = pattern.dim();
  std::vector<std::vector<int>> adj(n);
  const auto& cp = pattern.col_ptr();
  const auto& ri = pattern.row_ind();
  for (int c = 0; c < n; ++c) {
    for (int p = cp[c]; p < cp[c + 1]; ++p) {
      const int r = ri[p];
      if (r != c) {
        adj[r].push_back(c);
        adj[c].push_back(r);
      }
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  std::set<std::pair<int, int>> queue;  // (degree, node)
  for (int i = 0; i < n; ++i) queue.insert({static_cast<int>(adj[i].size()), i});
  std::vector<char> dead(n, 0);
  std::vector<int> perm;
  perm.reserve(n);

  std::vector<int> clique, merged;
  while (!queue.empty()) {
    const auto [deg, v] = *queue.begin();
    queue.erase(queue.begin());
    (void)deg;
    perm.push_back(v);
    dead[v] = 1;

    clique = adj[v];
    for (int u : clique) {
      queue.erase({static_cast<int>(adj[u].size()), u});
      // adj[u] := (adj[u] \ {v}) ∪ (clique \ {u})
      merged.clear();
      auto it = std::lower_bound(adj[u].begin(), adj[u].end(), v);
      if (it != adj[u].end() && *it == v) adj[u].erase(it);
      std::set_union(adj[u].begin(), adj[u].end(), clique.begin(), clique.end(),
                     std::back_inserter(merged));
      auto self = std::lower_bound(merged.begin(), merged.end(), u);
      if (self != merged.end() && *self == u) merged.erase(self);
      adj[u].swap(merged);
      queue.insert({static_cast<int>(adj[u].size()), u});
    }
    adj[v].clear();
    adj[v].shrink_to_fit();
  }
  return perm;
}

// ---------------------------------------------------------------------------
// Symbolic analysis: permuted upper-CSC pattern, elimination tree, column
// counts of L (row-oriented up-looking LDL).
// ---------------------------------------------------------------------------

SymbolicFactor analyze(const SparseSym& M, std::vector<int> perm) {
  if (!M.finalized()) throw std::logic_error("analyze: matrix not finalized");
  const int n = M.dim();
  if (static_cast<int>(perm.size()) != n) throw std::invalid_argument("analyze: bad permutation");

  SymbolicFactor S;
  S.n = n;
  S.perm = std::move(perm);
  S.iperm.assign(n, -1);
  for (int k = 0; k < n; ++k) {
    if (S.perm[k] < 0 || S.perm[k] >= n || S.iperm[S.perm[k]] != -1)
      throw std::invalid_argument("analyze: permutation is not a bijection");
    S.iperm[S.perm[k]] = k;
  }

  // Permuted upper CSC: entry (i,j), i>=j lower  ->  (min(pi,pj), max(pi,pj)).
  const auto& cp = M.col_ptr();
  const auto& ri = M.row_ind();
  const int nnz = M.nnz();
  struct Rec {
    int col, row, src;
  };
  std::vector<Rec> recs;
  recs.reserve(nnz);
  for (int c = 0; c < n; ++c) {
    for (int p = cp[c]; p < cp[c + 1]; ++p) {
      const int pi = S.iperm[ri[p]], pj = S.iperm[c];
      recs.push_back({std::max(pi, pj), std::min(pi, pj), p});
    }
  }
  std::sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  S.up_colptr.assign(n + 1, 0);
  S.up_rowind.resize(nnz);
  S.entry_map.resize(nnz);
  for (int k = 0; k < nnz; ++k) {
    S.up_colptr[recs[k].col + 1]++;
    S.up_rowind[k] = recs[k].row;
    S.entry_map[recs[k].src] = k;
  }
  for (int c = 0; c < n; ++c) S.up_colptr[c + 1] += S.up_colptr[c];

  // Elimination tree and column counts.
  S.parent.assign(n, -1);
  S.l_colcount.assign(n, 0);
  std::vector<int> flag(n, -1);
  for (int k = 0; k < n; ++k) {
    flag[k] = k;
    for (int p = S.up_colptr[k]; p < S.up_colptr[k + 1]; ++p) {
      int i = S.up_rowind[p];
      while (i < k && flag[i] != k) {
        if (S.parent[i] == -1) S.parent[i] = k;
        S.l_colcount[i]++;
        flag[i] = k;
        i = S.parent[i];
      }
    }
  }
  S.l_nnz = 0;
  for (int c = 0; c < n; ++c) S.l_nnz += S.l_colcount[c];
  return S;
}

SymbolicFactor analyze(const SparseSym& M) { return analyze(M, symbolic_order(M)); }

// ---------------------------------------------------------------------------
// Numeric LDLᵀ, 1x1 pivots in symbolic order (up-looking, row by row).
// ---------------------------------------------------------------------------

Factorization factorize(const SparseSym& M, const SymbolicFactor& symb, double pivot_tol) {
  const int n = symb.n;
  if (M.dim() != n || M.nnz() != static_cast<int>(symb.entry_map.size()))
    throw std::invalid_argument("factorize: matrix does not match symbolic analysis");

  Factorization F;
  F.symb_ = &symb;
  F.lp_.assign(n + 1, 0);
  for (int c = 0; c < n; ++c) F.lp_[c + 1] = F.lp_[c] + symb.l_colcount[c];
  F.li_.assign(static_cast<std::size_t>(symb.l_nnz), 0);
  F.lx_.assign(static_cast<std::size_t>(symb.l_nnz), 0.0);
  F.d_.assign(n, 0.0);

  // Permuted upper values via the entry map.
  std::vector<double> ax(M.nnz());
  const auto& mv = M.values();
  for (int e = 0; e < M.nnz(); ++e) ax[symb.entry_map[e]] = mv[e];

  const double thresh = pivot_tol * std::max(1.0, M.max_abs_diag());

  std::vector<double> y(n, 0.0);
  std::vector<int> pattern(n), flag(n, -1), lnz(n, 0);
  const auto& up = symb.up_colptr;
  const auto& ui = symb.up_rowind;

  for (int k = 0; k < n; ++k) {
    int top = n;
    flag[k] = k;
    for (int p = up[k]; p < up[k + 1]; ++p) {
      int i = ui[p];
      y[i] += ax[p];
      int len = 0;
      for (; flag[i] != k; i = symb.parent[i]) {
        pattern[len++] = i;
        flag[i] = k;
      }
      while (len > 0) pattern[--top] = pattern[--len];
    }
    double d = y[k];
    y[k] = 0.0;
    for (; top < n; ++top) {
      const int i = pattern[top];
      const double yi = y[i];
      y[i] = 0.0;
      const int p2 = F.lp_[i] + lnz[i];
      for (int p = F.lp_[i]; p < p2; ++p) y[F.li_[p]] -= F.lx_[p] * yi;
      const double lki = yi / F.d_[i];
      d -= lki * yi;
      F.li_[p2] = k;
      F.lx_[p2] = lki;
      lnz[i]++;
    }
    if (std::abs(d) <= thresh) {
      F.status = FactorizeStatus::zero_pivot;
      F.zero_pivot_index = symb.perm[k];
      return F;
    }
    F.d_[k] = d;
  }

  for (int k = 0; k < n; ++k) {
    if (std::abs(F.d_[k]) <= thresh)
      F.inertia.n_zero++;
    else if (F.d_[k] > 0.0)
      F.inertia.n_pos++;
    else
      F.inertia.n_neg++;
  }
  return F;
}

Factorization factorize(const SparseSym& M, double pivot_tol) {
  auto symb = std::make_shared<SymbolicFactor>(analyze(M));
  Factorization F = factorize(M, *symb, pivot_tol);
  F.owned_symb_ = std::move(symb);
  return F;
}

void Factorization::solve_in_place(std::span<double> x) const {
  const int n = symb_->n;
  std::vector<double> px(n);
  for (int k = 0; k < n; ++k) px[k] = x[symb_->perm[k]];
  // L z = px (unit lower, stored by column)
  for (int j = 0; j < n; ++j) {
    const double xj = px[j];
    for (int p = lp_[j]; p < lp_[j + 1]; ++p) px[li_[p]] -= lx_[p] * xj;
  }
  for (int j = 0; j < n; ++j) px[j] /= d_[j];
  // Lᵀ w = z
  for (int j = n - 1; j >= 0; --j) {
    double xj = px[j];
    for (int p = lp_[j]; p < lp_[j + 1]; ++p) xj -= lx_[p] * px[li_[p]];
    px[j] = xj;
  }
  for (int k = 0; k < n; ++k) x[symb_->perm[k]] = px[k];
}

std::vector<double> Factorization::solve(std::span<const double> b) const {
  std::vector<double> x(b.begin(), b.end());
  solve_in_place(x);
  return x;
}

RefinedSolve solve_refined(const Factorization& F, const SparseSym& M, std::span<const double> b,
                           double target, int max_sweeps) {
  if (!F.ok()) throw std::logic_error("solve_refined: factorization not usable");
  const int n = M.dim();
  RefinedSolve out;
  out.x = F.solve(b);

  double bnorm = 0.0;
  for (double v : b) bnorm = std::max(bnorm, std::abs(v));
  const double scale = std::max(1.0, bnorm);

  std::vector<double> mx(n), resid(n);
  for (int sweep = 0; sweep <= max_sweeps; ++sweep) {
    M.multiply(out.x, mx);
    double rnorm = 0.0;
    for (int i = 0; i < n; ++i) {
      resid[i] = b[i] - mx[i];
      rnorm = std::max(rnorm, std::abs(resid[i]));
    }
    out.residual = rnorm / scale;
    out.sweeps = sweep;
    if (out.residual <= target) {
      out.converged = true;
      return out;
    }
    if (sweep == max_sweeps) break;
    F.solve_in_place(resid);
    for (int i = 0; i < n; ++i) out.x[i] += resid[i];
  }
  return out;
}

}  // namespace nclopf
