#include "mgmpc/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mgmpc/error.hpp"
#include "mgmpc/qp.hpp"

namespace mgmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kProbTol = 1e-12;

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("risk level alpha must lie in [0, 1]");
}

double max_supported(const DiscreteRandomVariable& X) {
  double m = -kInf;
  for (std::size_t i = 0; i < X.values.size(); ++i)
    if (X.probs[i] > 0.0) m = std::max(m, X.values[i]);
  return m;
}

}  // namespace

void DiscreteRandomVariable::check() const {
  if (values.size() != probs.size()) throw InputError("random variable: values and probs differ in length");
  if (values.empty()) throw InputError("random variable: empty support");
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw InputError("random variable: negative probability");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw InputError("random variable: probabilities do not sum to 1");
}

double var_value(const DiscreteRandomVariable& X, double alpha) {
  X.check();
  check_alpha(alpha);
  std::vector<std::size_t> order(X.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return X.values[a] < X.values[b]; });
  // Tail mass strictly above each candidate threshold.
  double above = 1.0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = X.values[order[k]];
    double at_t = 0.0;
    while (k < order.size() && X.values[order[k]] == t) at_t += X.probs[order[k++]];
    above -= at_t;
    if (at_t > 0.0 && above <= alpha + kProbTol) return t;
  }
  return max_supported(X);
}

double avar_rockafellar(const DiscreteRandomVariable& X, double alpha) {
  X.check();
  check_alpha(alpha);
  if (alpha == 0.0) throw InputError("avar_rockafellar needs alpha > 0; use avar_primal_sup");
  double best = kInf;
  for (std::size_t k = 0; k < X.values.size(); ++k) {
    const double t = X.values[k];
    double excess = 0.0;
    for (std::size_t i = 0; i < X.values.size(); ++i) excess += X.probs[i] * std::max(X.values[i] - t, 0.0);
    best = std::min(best, t + excess / alpha);
  }
  return best;
}

double avar_primal_sup(const DiscreteRandomVariable& X, double alpha) {
  X.check();
  check_alpha(alpha);
  if (alpha == 0.0) return max_supported(X);
  std::vector<std::size_t> order(X.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return X.values[a] > X.values[b]; });
  double mass = 1.0, value = 0.0;
  for (std::size_t i : order) {
    if (mass <= 0.0) break;
    const double mu = std::min(X.probs[i] / alpha, mass);
    value += mu * X.values[i];
    mass -= mu;
  }
  return value;
}

void AmbiguityConicRep::check() const {
  int total = 0;
  for (const auto& c : cones) {
    if (c.dim < 0) throw InputError("conic rep: negative cone dimension");
    total += c.dim;
  }
  if (total != rows()) throw InputError("conic rep: cone dimensions do not sum to the row count");
  if (E.rows() != rows()) throw InputError("conic rep: E row count");
  if (F.rows() != rows() && F.cols() > 0) throw InputError("conic rep: F row count");
}

AmbiguityConicRep avar_conic_rep(const std::vector<double>& pi, double alpha) {
  check_alpha(alpha);
  if (alpha == 0.0) throw InputError("avar_conic_rep needs alpha > 0; alpha = 0 is the max and handled directly");
  const int n = static_cast<int>(pi.size());
  AmbiguityConicRep rep;
  rep.E.resize(2 * n + 1, n);
  rep.E << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n), Eigen::RowVectorXd::Ones(n);
  rep.F.resize(2 * n + 1, 0);
  rep.b = Eigen::VectorXd::Zero(2 * n + 1);
  for (int i = 0; i < n; ++i) rep.b[i] = pi[static_cast<std::size_t>(i)] / alpha;
  rep.b[2 * n] = 1.0;
  rep.cones = {{ConeKind::nonnegative, 2 * n}, {ConeKind::zero, 1}};
  return rep;
}

ConeKind dual_cone(ConeKind k) {
  switch (k) {
    case ConeKind::nonnegative: return ConeKind::nonnegative;
    case ConeKind::zero: return ConeKind::free;
    case ConeKind::free: return ConeKind::zero;
  }
  return k;
}

namespace {

// Bounds on s = b - E mu - F nu implied by the cone, as [lo, hi] per row.
void cone_bounds(const AmbiguityConicRep& rep, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  lo.resize(rep.rows());
  hi.resize(rep.rows());
  int r = 0;
  for (const auto& c : rep.cones)
    for (int k = 0; k < c.dim; ++k, ++r) {
      switch (c.kind) {
        case ConeKind::nonnegative: lo[r] = 0.0; hi[r] = kInf; break;
        case ConeKind::zero: lo[r] = 0.0; hi[r] = 0.0; break;
        case ConeKind::free: lo[r] = -kInf; hi[r] = kInf; break;
      }
    }
}

}  // namespace

bool in_ambiguity_set(const AmbiguityConicRep& rep, const Eigen::VectorXd& mu, double tol) {
  rep.check();
  if (mu.size() != rep.outcomes()) throw InputError("ambiguity membership: mu has wrong size");
  Eigen::VectorXd lo, hi;
  cone_bounds(rep, lo, hi);
  const Eigen::VectorXd s = rep.b - rep.E * mu;
  if (rep.extra() == 0) {
    for (int i = 0; i < s.size(); ++i)
      if (s[i] < lo[i] - tol || s[i] > hi[i] + tol) return false;
    return true;
  }
  // Feasibility in nu: lo <= s - F nu <= hi  <=>  s - hi <= F nu <= s - lo.
  QpData d;
  const int r = rep.extra();
  d.P.resize(r, r);
  d.q = Eigen::VectorXd::Zero(r);
  d.G = rep.F.sparseView();
  d.g_lo = s - hi;
  d.g_hi = s - lo;
  d.lb = Eigen::VectorXd::Constant(r, -kInf);
  d.ub = Eigen::VectorXd::Constant(r, kInf);
  QpSettings set;
  set.eps_abs = set.eps_rel = 1e-10;
  return solve_convex_qp(d, set).status == SolveStatus::optimal;
}

double risk_value_dual(const AmbiguityConicRep& rep, const Eigen::VectorXd& C) {
  rep.check();
  if (C.size() != rep.outcomes()) throw InputError("risk_value_dual: C has wrong size");
  const int k = rep.rows();
  QpData d;
  d.P.resize(k, k);
  d.q = rep.b;
  const int r = rep.extra();
  Eigen::MatrixXd eq(rep.outcomes() + r, k);
  eq.topRows(rep.outcomes()) = rep.E.transpose();
  if (r > 0) eq.bottomRows(r) = rep.F.transpose();
  d.A_eq = eq.sparseView();
  d.b_eq = Eigen::VectorXd::Zero(rep.outcomes() + r);
  d.b_eq.head(rep.outcomes()) = C;
  d.lb.resize(k);
  d.ub.resize(k);
  int row = 0;
  for (const auto& c : rep.cones)
    for (int i = 0; i < c.dim; ++i, ++row) {
      switch (dual_cone(c.kind)) {
        case ConeKind::nonnegative: d.lb[row] = 0.0; d.ub[row] = kInf; break;
        case ConeKind::free: d.lb[row] = -kInf; d.ub[row] = kInf; break;
        case ConeKind::zero: d.lb[row] = 0.0; d.ub[row] = 0.0; break;
      }
    }
  QpSettings set;
  set.eps_abs = set.eps_rel = 1e-9;
  set.max_iter = 50000;
  const auto sol = solve_convex_qp(d, set);
  if (sol.status != SolveStatus::optimal)
    throw ModelError("risk_value_dual: dual program is " + to_string(sol.status) + " (invalid ambiguity set?)");
  return sol.objective;
}

}  // namespace mgmpc
