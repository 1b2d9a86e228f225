#include "nclopf/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace nclopf {

namespace {

constexpr int kMaxSlots = 40;

struct SlotBuffer {
  double v[kMaxSlots];
  std::span<const double> gather(std::span<const double> w, const std::vector<int>& vars) {
    for (std::size_t i = 0; i < vars.size(); ++i) v[i] = w[vars[i]];
    return {v, vars.size()};
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// ModelBuilder
// ---------------------------------------------------------------------------

int ModelBuilder::add_template(ExpressionTemplate t) {
  if (t.num_var_slots() > kMaxSlots)
    throw std::invalid_argument("ModelBuilder: template has too many variable slots");
  ModelFunctions::Family f;
  f.tmpl = std::move(t);
  families_.push_back(std::move(f));
  return static_cast<int>(families_.size()) - 1;
}

int ModelBuilder::add_rows(int count) {
  const int first = m_;
  m_ += count;
  return first;
}

void ModelBuilder::check_instance(const ModelFunctions::Family& f, const Instance& inst) const {
  if (static_cast<int>(inst.vars.size()) != f.tmpl.num_var_slots())
    throw std::invalid_argument("ModelBuilder: instance variable count mismatch for template " +
                                f.tmpl.name());
  for (int g : inst.vars)
    if (g < 0 || g >= n_)
      throw std::invalid_argument("ModelBuilder: variable index out of range in template " +
                                  f.tmpl.name());
}

void ModelBuilder::add_objective_term(int tmpl_id, std::vector<int> vars,
                                      std::vector<double> params) {
  auto& f = families_.at(tmpl_id);
  if (!f.instances.empty() && !f.objective)
    throw std::logic_error("ModelBuilder: template already used for constraints");
  f.objective = true;
  Instance inst{std::move(vars), std::move(params), -1};
  check_instance(f, inst);
  f.instances.push_back(std::move(inst));
}

void ModelBuilder::add_constraint_term(int tmpl_id, int row, std::vector<int> vars,
                                       std::vector<double> params) {
  auto& f = families_.at(tmpl_id);
  if (!f.instances.empty() && f.objective)
    throw std::logic_error("ModelBuilder: template already used for the objective");
  if (row < 0 || row >= m_) throw std::invalid_argument("ModelBuilder: row out of range");
  Instance inst{std::move(vars), std::move(params), row};
  check_instance(f, inst);
  f.instances.push_back(std::move(inst));
}

ModelFunctions ModelBuilder::build() && {
  ModelFunctions mf;
  mf.n_ = n_;
  mf.m_ = m_;
  mf.families_ = std::move(families_);

  // Jacobian sparsity: union over constraint instances of (row, var[slot]).
  std::map<std::pair<int, int>, int> jmap;
  for (auto& f : mf.families_) {
    if (f.objective) continue;
    for (const auto& inst : f.instances)
      for (const auto& ge : f.tmpl.grad()) jmap.emplace(std::pair{inst.row, inst.vars[ge.slot]}, 0);
  }
  mf.jac_coords_.reserve(jmap.size());
  for (auto& [coord, idx] : jmap) {
    idx = static_cast<int>(mf.jac_coords_.size());
    mf.jac_coords_.push_back(coord);
  }

  // Hessian sparsity: lower-triangle union over all instances.
  std::map<std::pair<int, int>, int> hmap;
  auto hess_coord = [](int gi, int gj) {
    return gi >= gj ? std::pair{gi, gj} : std::pair{gj, gi};
  };
  for (auto& f : mf.families_) {
    for (const auto& inst : f.instances)
      for (const auto& he : f.tmpl.hess())
        hmap.emplace(hess_coord(inst.vars[he.slot_hi], inst.vars[he.slot_lo]), 0);
  }
  mf.hess_coords_.reserve(hmap.size());
  for (auto& [coord, idx] : hmap) {
    idx = static_cast<int>(mf.hess_coords_.size());
    mf.hess_coords_.push_back(coord);
  }

  for (auto& f : mf.families_) {
    f.jac_slot.clear();
    f.hess_slot.clear();
    f.hess_mult.clear();
    for (const auto& inst : f.instances) {
      if (!f.objective)
        for (const auto& ge : f.tmpl.grad())
          f.jac_slot.push_back(jmap.at({inst.row, inst.vars[ge.slot]}));
      for (const auto& he : f.tmpl.hess()) {
        const int gi = inst.vars[he.slot_hi], gj = inst.vars[he.slot_lo];
        f.hess_slot.push_back(hmap.at(hess_coord(gi, gj)));
        // An off-diagonal template entry collapsing onto the diagonal picks up
        // both symmetric halves.
        f.hess_mult.push_back(gi == gj && he.slot_hi != he.slot_lo ? 2.0 : 1.0);
      }
    }
  }
  return mf;
}

// ---------------------------------------------------------------------------
// ModelFunctions evaluation
// ---------------------------------------------------------------------------

double ModelFunctions::eval_objective(std::span<const double> w) const {
  SlotBuffer buf;
  double obj = 0.0;
  for (const auto& f : families_) {
    if (!f.objective) continue;
    for (const auto& inst : f.instances) obj += f.tmpl.value(buf.gather(w, inst.vars), inst.params);
  }
  return obj;
}

void ModelFunctions::eval_grad_objective(std::span<const double> w, std::span<double> grad) const {
  SlotBuffer buf;
  std::fill(grad.begin(), grad.end(), 0.0);
  for (const auto& f : families_) {
    if (!f.objective) continue;
    for (const auto& inst : f.instances) {
      auto vs = buf.gather(w, inst.vars);
      for (const auto& ge : f.tmpl.grad()) grad[inst.vars[ge.slot]] += ge.tape.eval(vs, inst.params);
    }
  }
}

void ModelFunctions::eval_constraints(std::span<const double> w, std::span<double> c) const {
  SlotBuffer buf;
  std::fill(c.begin(), c.end(), 0.0);
  for (const auto& f : families_) {
    if (f.objective) continue;
    for (const auto& inst : f.instances)
      c[inst.row] += f.tmpl.value(buf.gather(w, inst.vars), inst.params);
  }
}

void ModelFunctions::eval_jacobian(std::span<const double> w, std::span<double> vals) const {
  SlotBuffer buf;
  std::fill(vals.begin(), vals.end(), 0.0);
  for (const auto& f : families_) {
    if (f.objective) continue;
    std::size_t cursor = 0;
    for (const auto& inst : f.instances) {
      auto vs = buf.gather(w, inst.vars);
      for (const auto& ge : f.tmpl.grad()) vals[f.jac_slot[cursor++]] += ge.tape.eval(vs, inst.params);
    }
  }
}

void ModelFunctions::eval_hessian_lag(std::span<const double> w, double sigma,
                                      std::span<const double> lam, std::span<double> vals) const {
  SlotBuffer buf;
  std::fill(vals.begin(), vals.end(), 0.0);
  for (const auto& f : families_) {
    std::size_t cursor = 0;
    for (const auto& inst : f.instances) {
      const double weight = f.objective ? sigma : lam[inst.row];
      if (weight == 0.0) {
        cursor += f.tmpl.hess().size();
        continue;
      }
      auto vs = buf.gather(w, inst.vars);
      for (const auto& he : f.tmpl.hess()) {
        vals[f.hess_slot[cursor]] += weight * f.hess_mult[cursor] * he.tape.eval(vs, inst.params);
        ++cursor;
      }
    }
  }
}

SparseSym ModelFunctions::hessian_lag(std::span<const double> w, double sigma,
                                      std::span<const double> lam) const {
  std::vector<double> vals(hess_coords_.size());
  eval_hessian_lag(w, sigma, lam, vals);
  SparseSym H(n_);
  for (std::size_t k = 0; k < hess_coords_.size(); ++k)
    H.add(hess_coords_[k].first, hess_coords_[k].second, vals[k]);
  H.finalize();
  return H;
}

void ModelFunctions::jac_times(std::span<const double> jac_vals, std::span<const double> v,
                               std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < jac_coords_.size(); ++k)
    out[jac_coords_[k].first] += jac_vals[k] * v[jac_coords_[k].second];
}

void ModelFunctions::jac_trans_times(std::span<const double> jac_vals, std::span<const double> y,
                                     std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < jac_coords_.size(); ++k)
    out[jac_coords_[k].second] += jac_vals[k] * y[jac_coords_[k].first];
}

// ---------------------------------------------------------------------------
// Finite-difference check
// ---------------------------------------------------------------------------

FdReport fd_check(const ModelFunctions& m, std::span<const double> w, unsigned seed, double tol) {
  const int n = m.num_vars(), mm = m.num_cons();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  double winf = 0.0;
  for (double x : w) winf = std::max(winf, std::abs(x));
  const double h = 1e-6 * std::max(1.0, winf);

  std::vector<double> dir(n), wp(w.begin(), w.end()), wm(w.begin(), w.end());
  std::vector<double> lam(mm);
  for (auto& l : lam) l = unit(rng);

  std::vector<double> grad(n), jl(m.jac_coords().size()), hv(n), cp(mm), cm(mm);
  std::vector<double> hvals(m.hess_coords().size());
  std::vector<double> gl_p(n), gl_m(n), jp(m.jac_coords().size()), jm(m.jac_coords().size());

  auto rel = [](double err, double ref) { return err / std::max(1.0, ref); };

  FdReport rep;
  const int probes = 4;
  for (int probe = 0; probe < probes; ++probe) {
    double dnorm = 0.0;
    for (int i = 0; i < n; ++i) {
      dir[i] = unit(rng);
      dnorm += dir[i] * dir[i];
    }
    dnorm = std::sqrt(dnorm);
    for (int i = 0; i < n; ++i) {
      dir[i] /= dnorm;
      wp[i] = w[i] + h * dir[i];
      wm[i] = w[i] - h * dir[i];
    }

    // gradient: ∇φ·d vs (φ(w+hd) - φ(w-hd)) / 2h
    m.eval_grad_objective(w, grad);
    double gd = 0.0, gref = 0.0;
    for (int i = 0; i < n; ++i) {
      gd += grad[i] * dir[i];
      gref = std::max(gref, std::abs(grad[i]));
    }
    const double fd_g = (m.eval_objective(wp) - m.eval_objective(wm)) / (2.0 * h);
    rep.grad_err = std::max(rep.grad_err, rel(std::abs(gd - fd_g), std::max(gref, std::abs(fd_g))));

    // Jacobian: J d vs central difference of c
    m.eval_jacobian(w, jl);
    std::vector<double> jd(mm);
    m.jac_times(jl, dir, jd);
    m.eval_constraints(wp, cp);
    m.eval_constraints(wm, cm);
    double jerr = 0.0, jref = 0.0;
    for (int r = 0; r < mm; ++r) {
      const double fd = (cp[r] - cm[r]) / (2.0 * h);
      jerr = std::max(jerr, std::abs(jd[r] - fd));
      jref = std::max({jref, std::abs(jd[r]), std::abs(fd)});
    }
    rep.jac_err = std::max(rep.jac_err, rel(jerr, jref));

    // Hessian-vector: H(σ=1, λ) d vs central difference of ∇L = ∇φ + Jᵀλ
    m.eval_hessian_lag(w, 1.0, lam, hvals);
    std::fill(hv.begin(), hv.end(), 0.0);
    const auto& hc = m.hess_coords();
    for (std::size_t k = 0; k < hc.size(); ++k) {
      hv[hc[k].first] += hvals[k] * dir[hc[k].second];
      if (hc[k].first != hc[k].second) hv[hc[k].second] += hvals[k] * dir[hc[k].first];
    }
    auto grad_lag = [&](std::span<const double> x, std::vector<double>& out,
                        std::vector<double>& jbuf) {
      m.eval_grad_objective(x, out);
      m.eval_jacobian(x, jbuf);
      for (std::size_t k = 0; k < m.jac_coords().size(); ++k)
        out[m.jac_coords()[k].second] += jbuf[k] * lam[m.jac_coords()[k].first];
    };
    grad_lag(wp, gl_p, jp);
    grad_lag(wm, gl_m, jm);
    double herr = 0.0, href = 0.0;
    for (int i = 0; i < n; ++i) {
      const double fd = (gl_p[i] - gl_m[i]) / (2.0 * h);
      herr = std::max(herr, std::abs(hv[i] - fd));
      href = std::max({href, std::abs(hv[i]), std::abs(fd)});
    }
    rep.hess_err = std::max(rep.hess_err, rel(herr, href));
  }

  rep.pass = rep.grad_err <= tol && rep.jac_err <= tol && rep.hess_err <= tol;
  return rep;
}

}  // namespace nclopf
