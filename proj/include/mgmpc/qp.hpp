#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mgmpc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using Triplet = Eigen::Triplet<double>;

/// Convex QP in the canonical form
///
///   minimize    1/2 z'Pz + q'z + constant
///   subject to  A_eq z = b_eq
///               g_lo <= G z <= g_hi
///               lb <= z <= ub
///
/// P is stored with both triangles. Infinite bounds are allowed on the
/// inequality rows and variable bounds.
struct QpData {
  SparseMatrix P;
  Eigen::VectorXd q;
  double constant = 0.0;

  SparseMatrix A_eq;
  Eigen::VectorXd b_eq;

  SparseMatrix G;
  Eigen::VectorXd g_lo, g_hi;

  Eigen::VectorXd lb, ub;

  int num_vars() const { return static_cast<int>(q.size()); }
  int num_rows() const { return static_cast<int>(A_eq.rows() + G.rows()) + num_vars(); }
  double objective(const Eigen::VectorXd& z) const;

  /// Largest violation of any equality, inequality or bound at z.
  double max_violation(const Eigen::VectorXd& z) const;

  /// Throws InputError on inconsistent dimensions.
  void check_dimensions() const;
};

enum class SolveStatus { optimal, infeasible, gap_limit, iteration_limit };

std::string to_string(SolveStatus s);

struct QpSettings {
  int max_iter = 20000;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_prim_inf = 1e-4;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int check_interval = 25;
  int scaling_iter = 10;
  bool polish = true;
  double polish_delta = 1e-7;
  double polish_tol = 1e-9;
};

/// Initial iterate in the unscaled space. `y` holds one multiplier per
/// stacked row [A_eq; G; I] and may be left empty.
struct QpWarmStart {
  Eigen::VectorXd z;
  Eigen::VectorXd y;
};

struct QpSolution {
  SolveStatus status = SolveStatus::iteration_limit;
  Eigen::VectorXd z;
  Eigen::VectorXd y;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  bool polished = false;
  double solve_time_s = 0.0;
};

/// Operator-splitting (ADMM) QP engine. The matrices are equilibrated and
/// symbolically analysed once; repeated solves may change only the variable
/// bounds, which is what branch-and-bound needs.
///
/// Solutions are refined by an active-set polish: the KKT system of the
/// guessed active set is solved directly and accepted only if it is primal
/// feasible with correctly signed multipliers.
class QpEngine {
 public:
  explicit QpEngine(const QpData& data, QpSettings settings = {});
  ~QpEngine();
  QpEngine(QpEngine&&) noexcept;
  QpEngine& operator=(QpEngine&&) noexcept;
  QpEngine(const QpEngine&) = delete;
  QpEngine& operator=(const QpEngine&) = delete;

  QpSolution solve(const QpWarmStart* warm = nullptr);
  QpSolution solve(const Eigen::VectorXd& lb, const Eigen::VectorXd& ub, const QpWarmStart* warm = nullptr);

  const QpData& data() const;
  const QpSettings& settings() const;
  void set_max_iter(int max_iter);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

QpSolution solve_convex_qp(const QpData& data, const QpSettings& settings = {},
                           const QpWarmStart* warm = nullptr);

}  // namespace mgmpc
