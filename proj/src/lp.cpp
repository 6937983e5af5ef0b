#include "fisher/lp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace fisher::lp {

Problem Problem::with_vars(Index nvars) {
  Problem p;
  p.A.resize(0, nvars);
  p.c = Vector::Zero(nvars);
  p.lb = Vector::Zero(nvars);
  p.ub = Vector::Constant(nvars, kInf);
  p.row_lb.resize(0);
  p.row_ub.resize(0);
  return p;
}

void Problem::add_row(const Vector& coeffs, double lo, double hi) {
  const Index r = A.rows();
  A.conservativeResize(r + 1, Eigen::NoChange);
  A.row(r) = coeffs.transpose();
  row_lb.conservativeResize(r + 1);
  row_ub.conservativeResize(r + 1);
  row_lb(r) = lo;
  row_ub(r) = hi;
}

namespace {

enum class VarState { basic, at_lower, at_upper, free_zero };

// Internal solver over the augmented system [A -I](z; w) = 0 with bounds on
// both structural variables z and row slacks w.
struct Simplex {
  Index nrows, nstruct, ntotal;  // ntotal = nstruct + nrows (+ artificials)
  Matrix A;                      // original constraint matrix
  Vector lb, ub;                 // bounds for all ntotal variables
  Vector cost;                   // phase-2 costs (0 for slacks)
  double tol;

  std::vector<Index> basis;      // nrows basic variable ids
  std::vector<VarState> state;   // per variable
  Vector value;                  // current value per variable
  Matrix binv;                   // basis inverse
  long pivots = 0, degenerate_streak = 0;
  long max_pivots;

  // column of variable v in the augmented system
  Vector column(Index v) const {
    if (v < nstruct) return A.col(v);
    Vector e = Vector::Zero(nrows);
    e(v - nstruct) = -1.0;
    return e;
  }

  double col_entry(Index row, Index v) const {
    if (v < nstruct) return A(row, v);
    return (v - nstruct) == row ? -1.0 : 0.0;
  }

  void refactor() {
    Matrix B(nrows, nrows);
    for (Index k = 0; k < nrows; ++k) B.col(k) = column(basis[static_cast<size_t>(k)]);
    binv = B.partialPivLu().inverse();
  }

  void recompute_basics() {
    Vector rhs = Vector::Zero(nrows);
    for (Index v = 0; v < ntotal; ++v) {
      if (state[static_cast<size_t>(v)] == VarState::basic) continue;
      if (value(v) != 0.0) rhs -= column(v) * value(v);
    }
    Vector xb = binv * rhs;
    for (Index k = 0; k < nrows; ++k) value(basis[static_cast<size_t>(k)]) = xb(k);
  }

  // One simplex phase on the given costs. Returns status.
  Status run(const Vector& c) {
    while (true) {
      if (pivots >= max_pivots) return Status::iteration_limit;

      Vector cb(nrows);
      for (Index k = 0; k < nrows; ++k) cb(k) = c(basis[static_cast<size_t>(k)]);
      Vector lambda = binv.transpose() * cb;

      const bool bland = degenerate_streak > 4 * (nrows + 8);
      Index enter = -1;
      double best_score = tol;
      int dir = 0;
      for (Index v = 0; v < ntotal; ++v) {
        const VarState st = state[static_cast<size_t>(v)];
        if (st == VarState::basic) continue;
        double d = c(v);
        if (v < nstruct)
          d -= lambda.dot(A.col(v));
        else
          d += lambda(v - nstruct);
        int want = 0;
        if ((st == VarState::at_lower || st == VarState::free_zero) && d < -tol) want = 1;
        if ((st == VarState::at_upper || st == VarState::free_zero) && d > tol) want = -1;
        if (want == 0) continue;
        if (bland) { enter = v; dir = want; break; }
        if (std::abs(d) > best_score) {
          best_score = std::abs(d);
          enter = v;
          dir = want;
        }
      }
      if (enter < 0) return Status::optimal;

      const Vector w = binv * column(enter);  // basic movement per unit entering
      // entering moves by dir * t, basics move by -w * dir * t
      double t_max = kInf;
      Index leave_k = -1;       // index into basis
      int leave_to = 0;         // -1 -> lower, +1 -> upper
      const double span = ub(enter) - lb(enter);
      if (std::isfinite(span)) t_max = span;  // bound flip
      for (Index k = 0; k < nrows; ++k) {
        const double g = -w(k) * dir;
        const Index bv = basis[static_cast<size_t>(k)];
        if (g > tol) {
          if (std::isfinite(ub(bv))) {
            const double t = (ub(bv) - value(bv)) / g;
            if (t < t_max - 1e-15 || (t <= t_max && leave_k >= 0 && bv < basis[static_cast<size_t>(leave_k)])) {
              t_max = std::max(t, 0.0);
              leave_k = k;
              leave_to = +1;
            }
          }
        } else if (g < -tol) {
          if (std::isfinite(lb(bv))) {
            const double t = (value(bv) - lb(bv)) / (-g);
            if (t < t_max - 1e-15 || (t <= t_max && leave_k >= 0 && bv < basis[static_cast<size_t>(leave_k)])) {
              t_max = std::max(t, 0.0);
              leave_k = k;
              leave_to = -1;
            }
          }
        }
      }
      if (!std::isfinite(t_max)) return Status::unbounded;

      degenerate_streak = (t_max <= tol) ? degenerate_streak + 1 : 0;

      // apply movement
      value(enter) += dir * t_max;
      for (Index k = 0; k < nrows; ++k) {
        const Index bv = basis[static_cast<size_t>(k)];
        value(bv) -= w(k) * dir * t_max;
      }

      if (leave_k < 0) {
        // entering flipped to its opposite bound, basis unchanged
        state[static_cast<size_t>(enter)] =
            dir > 0 ? VarState::at_upper : VarState::at_lower;
        ++pivots;
        continue;
      }

      const Index leave_v = basis[static_cast<size_t>(leave_k)];
      state[static_cast<size_t>(leave_v)] =
          leave_to > 0 ? VarState::at_upper : VarState::at_lower;
      value(leave_v) = leave_to > 0 ? ub(leave_v) : lb(leave_v);
      state[static_cast<size_t>(enter)] = VarState::basic;
      basis[static_cast<size_t>(leave_k)] = enter;

      // product-form update of the basis inverse
      const double piv = w(leave_k);
      Vector brow = binv.row(leave_k) / piv;
      for (Index r = 0; r < nrows; ++r) {
        if (r == leave_k) continue;
        binv.row(r) -= w(r) * brow.transpose();
      }
      binv.row(leave_k) = brow.transpose();

      ++pivots;
      if (pivots % 64 == 0) {
        refactor();
        recompute_basics();
      }
    }
  }
};

}  // namespace

Solution solve(const Problem& p, double tol, long max_pivots) {
  const Index nrows = p.A.rows();
  const Index nstruct = p.A.cols();
  Solution out;

  if (nrows == 0) {
    // bound-only problem
    out.z = Vector::Zero(nstruct);
    for (Index v = 0; v < nstruct; ++v) {
      if (p.c(v) > 0)
        out.z(v) = p.lb(v);
      else if (p.c(v) < 0)
        out.z(v) = p.ub(v);
      else
        out.z(v) = std::isfinite(p.lb(v)) ? p.lb(v) : 0.0;
      if (!std::isfinite(out.z(v))) {
        out.status = Status::unbounded;
        return out;
      }
    }
    out.status = Status::optimal;
    out.objective = p.c.dot(out.z);
    out.duals = Vector::Zero(0);
    out.reduced_costs = p.c;
    return out;
  }

  Simplex s;
  s.nrows = nrows;
  s.nstruct = nstruct;
  s.ntotal = nstruct + nrows;
  s.A = p.A;
  s.tol = tol;
  s.lb.resize(s.ntotal);
  s.ub.resize(s.ntotal);
  s.lb.head(nstruct) = p.lb;
  s.ub.head(nstruct) = p.ub;
  s.lb.tail(nrows) = p.row_lb;
  s.ub.tail(nrows) = p.row_ub;
  s.max_pivots = max_pivots > 0 ? max_pivots : 200 * (nrows + nstruct + 16);

  // start: structural vars at the finite bound nearest zero (0 if free)
  s.state.assign(static_cast<size_t>(s.ntotal), VarState::at_lower);
  s.value = Vector::Zero(s.ntotal);
  for (Index v = 0; v < s.ntotal; ++v) {
    const bool lo = std::isfinite(s.lb(v)), hi = std::isfinite(s.ub(v));
    if (lo && (!hi || std::abs(s.lb(v)) <= std::abs(s.ub(v)))) {
      s.state[static_cast<size_t>(v)] = VarState::at_lower;
      s.value(v) = s.lb(v);
    } else if (hi) {
      s.state[static_cast<size_t>(v)] = VarState::at_upper;
      s.value(v) = s.ub(v);
    } else {
      s.state[static_cast<size_t>(v)] = VarState::free_zero;
      s.value(v) = 0.0;
    }
  }

  // slack basis: w_r basic with value (A z)_r; clamp into bounds and absorb
  // the violation with artificials as needed
  Vector az = Vector::Zero(nrows);
  for (Index v = 0; v < nstruct; ++v)
    if (s.value(v) != 0.0) az += p.A.col(v) * s.value(v);

  Vector viol = Vector::Zero(nrows);
  for (Index r = 0; r < nrows; ++r) {
    double w = az(r);
    if (w < s.lb(nstruct + r)) {
      viol(r) = w - s.lb(nstruct + r);  // negative
      w = s.lb(nstruct + r);
    } else if (w > s.ub(nstruct + r)) {
      viol(r) = w - s.ub(nstruct + r);  // positive
      w = s.ub(nstruct + r);
    }
    s.value(nstruct + r) = w;
  }

  const bool need_phase1 = (viol.array().abs() > tol).any();
  if (need_phase1) {
    // Crash basis: satisfied rows keep their slack basic; each violated row
    // gets a basic artificial a_r with column -sign(viol) e_r so the system
    // A z + D a - w = 0 holds with a_r = |viol_r| >= 0 and w at the nearer
    // row bound.
    Matrix A2(nrows, nstruct + nrows);
    A2.leftCols(nstruct) = p.A;
    A2.rightCols(nrows).setZero();
    for (Index r = 0; r < nrows; ++r)
      A2(r, nstruct + r) = viol(r) >= 0 ? -1.0 : 1.0;
    s.A = A2;
    s.nstruct = nstruct + nrows;
    s.ntotal = s.nstruct + nrows;
    Vector lb2(s.ntotal), ub2(s.ntotal), val2(s.ntotal);
    lb2 << s.lb.head(nstruct), Vector::Zero(nrows), s.lb.tail(nrows);
    ub2 << s.ub.head(nstruct), Vector::Zero(nrows), s.ub.tail(nrows);
    val2 << s.value.head(nstruct), viol.array().abs().matrix(), s.value.tail(nrows);
    s.lb = lb2;
    s.ub = ub2;
    s.value = val2;
    std::vector<VarState> st2(static_cast<size_t>(s.ntotal));
    for (Index v = 0; v < nstruct; ++v)
      st2[static_cast<size_t>(v)] = s.state[static_cast<size_t>(v)];
    s.basis.resize(static_cast<size_t>(nrows));
    for (Index r = 0; r < nrows; ++r) {
      const Index art = nstruct + r;
      const Index slack = s.nstruct + r;
      if (std::abs(viol(r)) > tol) {
        s.ub(art) = kInf;
        st2[static_cast<size_t>(art)] = VarState::basic;
        st2[static_cast<size_t>(slack)] =
            viol(r) > 0 ? VarState::at_upper : VarState::at_lower;
        s.basis[static_cast<size_t>(r)] = art;
      } else {
        st2[static_cast<size_t>(art)] = VarState::at_lower;
        s.value(art) = 0.0;
        st2[static_cast<size_t>(slack)] = VarState::basic;
        s.basis[static_cast<size_t>(r)] = slack;
      }
    }
    s.state = st2;
    s.refactor();

    Vector c1 = Vector::Zero(s.ntotal);
    c1.segment(nstruct, nrows).setOnes();
    const Status st = s.run(c1);
    double infeas = 0.0;
    for (Index r = 0; r < nrows; ++r) infeas += s.value(nstruct + r);
    if (st == Status::iteration_limit) {
      out.status = Status::iteration_limit;
      return out;
    }
    if (infeas > 1e-7 * std::max(1.0, s.value.head(nstruct).cwiseAbs().maxCoeff())) {
      out.status = Status::infeasible;
      return out;
    }
    // pin artificials to zero for phase 2
    for (Index r = 0; r < nrows; ++r) s.ub(nstruct + r) = 0.0;
  } else {
    s.basis.resize(static_cast<size_t>(nrows));
    for (Index r = 0; r < nrows; ++r) {
      s.basis[static_cast<size_t>(r)] = nstruct + r;
      s.state[static_cast<size_t>(nstruct + r)] = VarState::basic;
    }
    s.refactor();
  }

  Vector c2 = Vector::Zero(s.ntotal);
  c2.head(nstruct) = p.c;
  s.degenerate_streak = 0;
  const Status st = s.run(c2);
  if (st == Status::unbounded || st == Status::iteration_limit) {
    out.status = st;
    return out;
  }

  s.refactor();
  s.recompute_basics();

  out.status = Status::optimal;
  out.z = s.value.head(nstruct);
  out.objective = p.c.dot(out.z);

  Vector cb(nrows);
  for (Index k = 0; k < nrows; ++k) cb(k) = c2(s.basis[static_cast<size_t>(k)]);
  Vector lambda = s.binv.transpose() * cb;
  // duals for the rows: cost change per unit of row activity; slack column is
  // -e_r so the row multiplier is -lambda_r for the slack convention used here
  out.duals = -lambda;
  out.reduced_costs.resize(nstruct);
  for (Index v = 0; v < nstruct; ++v)
    out.reduced_costs(v) = p.c(v) - lambda.dot(p.A.col(v));
  return out;
}

}  // namespace fisher::lp
