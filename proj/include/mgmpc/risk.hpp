#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mgmpc {

/// A random cost on a finite probability space.
struct DiscreteRandomVariable {
  std::vector<double> values;
  std::vector<double> probs;

  /// Throws InputError unless sizes match, probs >= 0 and sum to 1 (1e-9).
  void check() const;
};

/// Value-at-risk inf{t : P[X > t] <= alpha}, exact on finite spaces.
double var_value(const DiscreteRandomVariable& X, double alpha);

/// AV@R via the minimisation formula min_t t + E[max(X - t, 0)] / alpha,
/// scanned over the support. Requires alpha in (0, 1].
double avar_rockafellar(const DiscreteRandomVariable& X, double alpha);

/// AV@R as the worst expectation over {mu : sum mu = 1, 0 <= alpha mu <= pi},
/// solved greedily. alpha = 0 gives the essential supremum.
double avar_primal_sup(const DiscreteRandomVariable& X, double alpha);

enum class ConeKind { nonnegative, zero, free };

struct ConeBlock {
  ConeKind kind = ConeKind::nonnegative;
  int dim = 0;
};

/// Ambiguity set {mu : exists nu, b - E mu - F nu in K} with K the product of
/// `cones` in order.
struct AmbiguityConicRep {
  Eigen::MatrixXd E;
  Eigen::MatrixXd F;
  Eigen::VectorXd b;
  std::vector<ConeBlock> cones;

  int rows() const { return static_cast<int>(b.size()); }
  int outcomes() const { return static_cast<int>(E.cols()); }
  int extra() const { return static_cast<int>(F.cols()); }

  /// Throws InputError if block dimensions do not add up.
  void check() const;
};

/// Conic form of the AV@R ambiguity polytope: E = [I; -I; 1'], no nu,
/// b = [pi/alpha; 0; 1], K = R+^{2n} x {0}.
AmbiguityConicRep avar_conic_rep(const std::vector<double>& pi, double alpha);

/// Membership test mu in A (tolerance on the cone residual).
bool in_ambiguity_set(const AmbiguityConicRep& rep, const Eigen::VectorXd& mu, double tol = 1e-9);

/// Risk value through the conic dual: min b'y s.t. E'y = C, F'y = 0, y in K*.
/// Throws ModelError if the dual program has no finite optimum.
double risk_value_dual(const AmbiguityConicRep& rep, const Eigen::VectorXd& C);

/// Dual cone block of a cone block (R+ is self-dual, {0} and R swap).
ConeKind dual_cone(ConeKind k);

}  // namespace mgmpc
