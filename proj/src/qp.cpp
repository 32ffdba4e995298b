#include "mgmpc/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/SparseCholesky>

#include "mgmpc/error.hpp"

namespace mgmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kPolishWindow = 1e3;  // polish is self-validating, so it may be tried this far from convergence
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// [A_eq; G; I]
SparseMatrix stack_rows(const QpData& d) {
  const int n = d.num_vars();
  const auto m_eq = static_cast<int>(d.A_eq.rows());
  const auto m_g = static_cast<int>(d.G.rows());
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(d.A_eq.nonZeros() + d.G.nonZeros() + n));
  for (int k = 0; k < d.A_eq.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d.A_eq, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < d.G.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d.G, k); it; ++it) t.emplace_back(m_eq + it.row(), it.col(), it.value());
  for (int i = 0; i < n; ++i) t.emplace_back(m_eq + m_g + i, i, 1.0);
  SparseMatrix A(m_eq + m_g + n, n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

void scale_matrix(SparseMatrix& M, const Eigen::VectorXd& row, const Eigen::VectorXd& col) {
  for (int k = 0; k < M.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(M, k); it; ++it) it.valueRef() *= row[it.row()] * col[it.col()];
}

double clamp_scale(double norm) {
  if (norm < kMinScaling) return 1.0;
  return std::min(norm, kMaxScaling);
}

}  // namespace

double QpData::objective(const Eigen::VectorXd& z) const {
  double v = q.dot(z) + constant;
  if (P.nonZeros() > 0) v += 0.5 * z.dot(P * z);
  return v;
}

double QpData::max_violation(const Eigen::VectorXd& z) const {
  double worst = 0.0;
  if (A_eq.rows() > 0) worst = std::max(worst, inf_norm(A_eq * z - b_eq));
  if (G.rows() > 0) {
    const Eigen::VectorXd gz = G * z;
    for (int i = 0; i < gz.size(); ++i) worst = std::max({worst, g_lo[i] - gz[i], gz[i] - g_hi[i]});
  }
  for (int i = 0; i < z.size(); ++i) worst = std::max({worst, lb[i] - z[i], z[i] - ub[i]});
  return worst;
}

void QpData::check_dimensions() const {
  const int n = num_vars();
  auto fail = [](const char* what) { throw InputError(std::string("qp dimensions: ") + what); };
  if (P.nonZeros() > 0 && (P.rows() != n || P.cols() != n)) fail("P must be n x n");
  if (A_eq.rows() > 0 && A_eq.cols() != n) fail("A_eq columns");
  if (A_eq.rows() != b_eq.size()) fail("b_eq size");
  if (G.rows() > 0 && G.cols() != n) fail("G columns");
  if (G.rows() != g_lo.size() || G.rows() != g_hi.size()) fail("g_lo/g_hi size");
  if (lb.size() != n || ub.size() != n) fail("lb/ub size");
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::gap_limit: return "gap_limit";
    case SolveStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

struct QpEngine::Impl {
  QpData data;
  QpSettings set;
  int n = 0, m = 0, m_eq = 0, m_g = 0;

  SparseMatrix A, P;          // unscaled, A stacked
  SparseMatrix As, AsT, Ps;   // scaled
  Eigen::VectorXd qs;
  Eigen::VectorXd D, E, Dinv, Einv;
  double c = 1.0;

  Eigen::SimplicialLDLT<SparseMatrix> kkt;
  bool analysed = false;

  Impl(const QpData& d, QpSettings s) : data(d), set(s) {
    n = data.num_vars();
    if (data.P.rows() == 0) data.P.resize(n, n);
    if (data.A_eq.rows() == 0) {
      data.A_eq.resize(0, n);
      data.b_eq.resize(0);
    }
    if (data.G.rows() == 0) {
      data.G.resize(0, n);
      data.g_lo.resize(0);
      data.g_hi.resize(0);
    }
    data.check_dimensions();
    m_eq = static_cast<int>(data.A_eq.rows());
    m_g = static_cast<int>(data.G.rows());
    A = stack_rows(data);
    m = static_cast<int>(A.rows());
    P = data.P;
    equilibrate();
  }

  void equilibrate() {
    Ps = P;
    As = A;
    qs = data.q;
    D = Eigen::VectorXd::Ones(n);
    E = Eigen::VectorXd::Ones(m);
    c = 1.0;
    Eigen::VectorXd d(n), e(m);
    for (int iter = 0; iter < set.scaling_iter; ++iter) {
      Eigen::VectorXd col = Eigen::VectorXd::Zero(n), row = Eigen::VectorXd::Zero(m);
      for (int k = 0; k < Ps.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(Ps, k); it; ++it) col[k] = std::max(col[k], std::abs(it.value()));
      for (int k = 0; k < As.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(As, k); it; ++it) {
          col[k] = std::max(col[k], std::abs(it.value()));
          row[it.row()] = std::max(row[it.row()], std::abs(it.value()));
        }
      for (int j = 0; j < n; ++j) d[j] = 1.0 / std::sqrt(clamp_scale(col[j]));
      for (int i = 0; i < m; ++i) e[i] = 1.0 / std::sqrt(clamp_scale(row[i]));
      scale_matrix(Ps, d, d);
      scale_matrix(As, e, d);
      qs = qs.cwiseProduct(d);
      D = D.cwiseProduct(d);
      E = E.cwiseProduct(e);

      double mean_col = 0.0;
      if (n > 0) {
        Eigen::VectorXd pc = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < Ps.outerSize(); ++k)
          for (SparseMatrix::InnerIterator it(Ps, k); it; ++it) pc[k] = std::max(pc[k], std::abs(it.value()));
        mean_col = pc.mean();
      }
      const double cost_norm = std::max(mean_col, inf_norm(qs));
      const double gamma = 1.0 / clamp_scale(cost_norm);
      Ps *= gamma;
      qs *= gamma;
      c *= gamma;
    }
    Dinv = D.cwiseInverse();
    Einv = E.cwiseInverse();
    AsT = As.transpose();
  }

  Eigen::VectorXd rho_vector(const Eigen::VectorXd& l, const Eigen::VectorXd& u, double rho) const {
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) {
      if (l[i] == -kInf && u[i] == kInf)
        r[i] = kRhoMin;
      else if (u[i] - l[i] < 1e-12)
        r[i] = std::min(kRhoEqScale * rho, kRhoMax);
      else
        r[i] = rho;
    }
    return r;
  }

  bool factor(const Eigen::VectorXd& rho_vec) {
    SparseMatrix I(n, n);
    I.setIdentity();
    SparseMatrix K = Ps + set.sigma * I + SparseMatrix(AsT * rho_vec.asDiagonal() * As);
    if (!analysed) {
      kkt.analyzePattern(K);
      analysed = true;
    }
    kkt.factorize(K);
    return kkt.info() == Eigen::Success;
  }

  // Active-set polish in the unscaled space.
  std::optional<QpSolution> polish(const Eigen::VectorXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& l, const Eigen::VectorXd& u) const {
    std::vector<int> rows;
    std::vector<double> rhs_b;
    std::vector<int> side;  // -1 lower, +1 upper, 0 equality
    for (int i = 0; i < m; ++i) {
      if (u[i] - l[i] < 1e-12) {
        rows.push_back(i);
        rhs_b.push_back(u[i]);
        side.push_back(0);
      } else if (l[i] > -kInf && z[i] - l[i] < -y[i]) {
        rows.push_back(i);
        rhs_b.push_back(l[i]);
        side.push_back(-1);
      } else if (u[i] < kInf && u[i] - z[i] < y[i]) {
        rows.push_back(i);
        rhs_b.push_back(u[i]);
        side.push_back(+1);
      }
    }
    const int na = static_cast<int>(rows.size());
    const double delta = set.polish_delta;

    std::vector<Triplet> tr, t0;
    for (int k = 0; k < P.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(P, k); it; ++it) {
        tr.emplace_back(it.row(), it.col(), it.value());
        t0.emplace_back(it.row(), it.col(), it.value());
      }
    for (int j = 0; j < n; ++j) tr.emplace_back(j, j, delta);
    std::vector<int> pos(static_cast<std::size_t>(m), -1);
    for (int a = 0; a < na; ++a) pos[static_cast<std::size_t>(rows[static_cast<std::size_t>(a)])] = a;
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
        const int a = pos[static_cast<std::size_t>(it.row())];
        if (a < 0) continue;
        tr.emplace_back(n + a, it.col(), it.value());
        tr.emplace_back(it.col(), n + a, it.value());
        t0.emplace_back(n + a, it.col(), it.value());
        t0.emplace_back(it.col(), n + a, it.value());
      }
    for (int a = 0; a < na; ++a) tr.emplace_back(n + a, n + a, -delta);
    SparseMatrix K(n + na, n + na), K0(n + na, n + na);
    K.setFromTriplets(tr.begin(), tr.end());
    K0.setFromTriplets(t0.begin(), t0.end());

    Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = -data.q;
    for (int a = 0; a < na; ++a) rhs[n + a] = rhs_b[static_cast<std::size_t>(a)];
    // Proximal refinement from the ADMM point, so directions the active set
    // leaves free keep their ADMM values.
    Eigen::VectorXd sol(n + na);
    sol.head(n) = x;
    for (int a = 0; a < na; ++a) sol[n + a] = y[rows[static_cast<std::size_t>(a)]];
    for (int r = 0; r < 25; ++r) {
      const Eigen::VectorXd res = rhs - K0 * sol;
      if (inf_norm(res) < 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += ldlt.solve(res);
    }
    if (!sol.allFinite()) return std::nullopt;

    QpSolution out;
    out.z = sol.head(n);
    out.y = Eigen::VectorXd::Zero(m);
    for (int a = 0; a < na; ++a) out.y[rows[static_cast<std::size_t>(a)]] = sol[n + a];

    const Eigen::VectorXd Az = A * out.z;
    const double scale_p = 1.0 + inf_norm(Az);
    double prim = 0.0;
    for (int i = 0; i < m; ++i) prim = std::max({prim, l[i] - Az[i], Az[i] - u[i]});
    if (prim > set.polish_tol * scale_p) return std::nullopt;

    const double scale_y = 1.0 + inf_norm(out.y);
    for (int a = 0; a < na; ++a) {
      const double ya = sol[n + a];
      const int s = side[static_cast<std::size_t>(a)];
      if (s < 0 && ya > set.polish_tol * scale_y) return std::nullopt;
      if (s > 0 && ya < -set.polish_tol * scale_y) return std::nullopt;
    }
    const Eigen::VectorXd Pz = P * out.z;
    const Eigen::VectorXd Aty = A.transpose() * out.y;
    const double dual = inf_norm(Pz + data.q + Aty);
    if (dual > set.polish_tol * (1.0 + inf_norm(data.q) + inf_norm(Pz) + inf_norm(Aty))) return std::nullopt;

    out.status = SolveStatus::optimal;
    out.primal_residual = std::max(prim, 0.0);
    out.dual_residual = dual;
    out.polished = true;
    out.objective = data.objective(out.z);
    return out;
  }

  QpSolution run(const Eigen::VectorXd& lb, const Eigen::VectorXd& ub, const QpWarmStart* warm) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&](QpSolution s) {
      s.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return s;
    };

    Eigen::VectorXd l(m), u(m);
    l << data.b_eq, data.g_lo, lb;
    u << data.b_eq, data.g_hi, ub;
    for (int i = 0; i < m; ++i)
      if (l[i] > u[i] + 1e-12 || std::isnan(l[i]) || std::isnan(u[i])) {
        QpSolution s;
        s.status = SolveStatus::infeasible;
        s.z = Eigen::VectorXd::Zero(n);
        return finish(s);
      }
    for (int i = 0; i < m; ++i)
      if (l[i] > u[i]) l[i] = u[i];

    if (n == 0) {
      QpSolution s;
      s.status = SolveStatus::optimal;
      s.z.resize(0);
      s.y = Eigen::VectorXd::Zero(m);
      s.objective = data.constant;
      return finish(s);
    }

    Eigen::VectorXd ls = E.cwiseProduct(l), us = E.cwiseProduct(u);
    for (int i = 0; i < m; ++i) {
      if (l[i] == -kInf) ls[i] = -kInf;
      if (u[i] == kInf) us[i] = kInf;
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n), z = Eigen::VectorXd::Zero(m), y = Eigen::VectorXd::Zero(m);
    if (warm && warm->z.size() == n) {
      x = Dinv.cwiseProduct(warm->z);
      z = (As * x).cwiseMax(ls).cwiseMin(us);
      if (warm->y.size() == m) y = c * Einv.cwiseProduct(warm->y);
    }

    double rho = set.rho;
    Eigen::VectorXd rho_vec = rho_vector(l, u, rho);
    Eigen::VectorXd rho_inv = rho_vec.cwiseInverse();
    if (!factor(rho_vec)) {
      QpSolution s;
      s.status = SolveStatus::iteration_limit;
      s.z = D.cwiseProduct(x);
      return finish(s);
    }

    std::vector<signed char> last_active;
    int rho_gap = set.check_interval;
    int next_rho_update = 0;
    QpSolution best;
    best.status = SolveStatus::iteration_limit;

    Eigen::VectorXd x_prev, y_prev, rhs, xt, zt, z_relax;
    for (int iter = 1; iter <= set.max_iter; ++iter) {
      x_prev = x;
      y_prev = y;
      rhs = set.sigma * x - qs + AsT * (rho_vec.cwiseProduct(z) - y);
      xt = kkt.solve(rhs);
      zt = As * xt;
      x = set.alpha * xt + (1.0 - set.alpha) * x_prev;
      z_relax = set.alpha * zt + (1.0 - set.alpha) * z;
      const Eigen::VectorXd z_new = (z_relax + rho_inv.cwiseProduct(y)).cwiseMax(ls).cwiseMin(us);
      y = y + rho_vec.cwiseProduct(z_relax - z_new);
      z = z_new;

      if (iter % set.check_interval != 0 && iter != set.max_iter) continue;

      const Eigen::VectorXd Ax = As * x;
      const Eigen::VectorXd Px = Ps * x;
      const Eigen::VectorXd Aty = AsT * y;
      const double prim = inf_norm(Einv.cwiseProduct(Ax - z));
      const double dual = inf_norm(Dinv.cwiseProduct(Px + qs + Aty)) / c;
      const double eps_p =
          set.eps_abs + set.eps_rel * std::max(inf_norm(Einv.cwiseProduct(Ax)), inf_norm(Einv.cwiseProduct(z)));
      const double eps_d = set.eps_abs + set.eps_rel / c *
                                             std::max({inf_norm(Dinv.cwiseProduct(Px)),
                                                       inf_norm(Dinv.cwiseProduct(Aty)),
                                                       inf_norm(Dinv.cwiseProduct(qs))});

      // Primal infeasibility certificate from the dual increment.
      const Eigen::VectorXd dy = y - y_prev;
      const double dy_norm = inf_norm(E.cwiseProduct(dy));
      if (dy_norm > 1e-12) {
        const double tol = set.eps_prim_inf * dy_norm;
        const double aty = inf_norm(Dinv.cwiseProduct(AsT * dy));
        bool cert = aty <= tol;
        double support = 0.0;
        for (int i = 0; cert && i < m; ++i) {
          if (dy[i] > 0) {
            if (us[i] == kInf) {
              if (E[i] * dy[i] > tol) cert = false;
            } else {
              support += us[i] * dy[i];
            }
          } else if (dy[i] < 0) {
            if (ls[i] == -kInf) {
              if (-E[i] * dy[i] > tol) cert = false;
            } else {
              support += ls[i] * dy[i];
            }
          }
        }
        // A feasible point x* bounds the support below by -|x*|_1 |A'dy|, so
        // with |A'dy| > 0 the margin has to beat that for points near x.
        if (cert && support < -tol - D.cwiseProduct(x).lpNorm<1>() * aty) {
          QpSolution s;
          s.status = SolveStatus::infeasible;
          s.z = D.cwiseProduct(x);
          s.iterations = iter;
          return finish(s);
        }
      }

      const Eigen::VectorXd xu = D.cwiseProduct(x);
      const Eigen::VectorXd zu = Einv.cwiseProduct(z);
      const Eigen::VectorXd yu = E.cwiseProduct(y) / c;
      const bool converged = prim <= eps_p && dual <= eps_d;

      if (set.polish && (converged || (prim <= kPolishWindow * eps_p && dual <= kPolishWindow * eps_d))) {
        std::vector<signed char> active(static_cast<std::size_t>(m), 0);
        for (int i = 0; i < m; ++i) {
          if (l[i] > -kInf && zu[i] - l[i] < -yu[i]) active[static_cast<std::size_t>(i)] = -1;
          else if (u[i] < kInf && u[i] - zu[i] < yu[i]) active[static_cast<std::size_t>(i)] = 1;
        }
        if (active != last_active) {
          last_active = active;
          if (auto pol = polish(xu, zu, yu, l, u)) {
            pol->iterations = iter;
            return finish(*pol);
          }
        }
      }

      if (converged) {
        QpSolution s;
        s.status = SolveStatus::optimal;
        s.z = xu;
        s.y = yu;
        s.objective = data.objective(xu);
        s.primal_residual = prim;
        s.dual_residual = dual;
        s.iterations = iter;
        return finish(s);
      }

      best.z = xu;
      best.y = yu;
      best.primal_residual = prim;
      best.dual_residual = dual;
      best.iterations = iter;

      if (set.adaptive_rho && iter >= next_rho_update) {
        const double pn = std::max(inf_norm(Ax), inf_norm(z));
        const double dn = std::max({inf_norm(Px), inf_norm(Aty), inf_norm(qs)});
        const double prim_s = inf_norm(Ax - z) / (pn + 1e-30);
        const double dual_s = inf_norm(Px + qs + Aty) / (dn + 1e-30);
        double new_rho = rho * std::sqrt(prim_s / (dual_s + 1e-30));
        new_rho = std::clamp(new_rho, kRhoMin, kRhoMax);
        if (new_rho > 5.0 * rho || new_rho < 0.2 * rho) {
          rho = new_rho;
          rho_vec = rho_vector(l, u, rho);
          rho_inv = rho_vec.cwiseInverse();
          factor(rho_vec);
          // Doubling gaps between updates: rho settles, so ADMM converges.
          rho_gap *= 2;
          next_rho_update = iter + rho_gap;
        }
      }
    }
    best.status = SolveStatus::iteration_limit;
    best.objective = data.objective(best.z);
    return finish(best);
  }
};

QpEngine::QpEngine(const QpData& data, QpSettings settings)
    : impl_(std::make_unique<Impl>(data, settings)) {}
QpEngine::~QpEngine() = default;
QpEngine::QpEngine(QpEngine&&) noexcept = default;
QpEngine& QpEngine::operator=(QpEngine&&) noexcept = default;

QpSolution QpEngine::solve(const QpWarmStart* warm) { return impl_->run(impl_->data.lb, impl_->data.ub, warm); }

QpSolution QpEngine::solve(const Eigen::VectorXd& lb, const Eigen::VectorXd& ub, const QpWarmStart* warm) {
  if (lb.size() != impl_->n || ub.size() != impl_->n) throw InputError("qp solve: bound vector size");
  return impl_->run(lb, ub, warm);
}

const QpData& QpEngine::data() const { return impl_->data; }
const QpSettings& QpEngine::settings() const { return impl_->set; }
void QpEngine::set_max_iter(int max_iter) { impl_->set.max_iter = max_iter; }

QpSolution solve_convex_qp(const QpData& data, const QpSettings& settings, const QpWarmStart* warm) {
  QpEngine engine(data, settings);
  return engine.solve(warm);
}

}  // namespace mgmpc
