#pragma once

#include "otbb/amg.hpp"
#include "otbb/state.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace otbb {

enum class PrecondKind { hss, primal_schur, simple, bb };

std::string to_string(PrecondKind kind);
/// Accepts hss, primal (or primal_schur), simple, bb; throws InputError.
PrecondKind parse_precond_kind(const std::string& name);

struct PrecondOptions {
  double hss_alpha = 0.5;
  double hss_inner_tol = 1e-1;
  double primal_inner_tol = 1e-1;
  double simple_inner_tol = 1e-1;
  double bb_schur_tol = 1e-1;
  int bb_schur_stall_window = 20;  // 0 disables the stall exit of the Q solve
  double bb_block_tol = 1e-3;  // looser tolerances stall the outer solve at small mu
  int inner_max_iterations = 200;
  // Ã_k built from (rho^k + rho^{k-1}) / 2 instead of rho^k.
  bool bb_time_averaged_laplacian = false;
};

/// One Newton linear system in the formulation a preconditioner works with:
/// the outer FGMRES runs on `apply_operator` with right-hand side `rhs()`,
/// and `recover` maps its solution back to (dphi, drho) of the saddle system
/// [[A, B^T], [B, -C]] (dphi; drho) = (f; g~).
class SaddlePreconditioner {
 public:
  virtual ~SaddlePreconditioner() = default;

  virtual PrecondKind kind() const = 0;
  virtual VecX rhs() const = 0;
  virtual void apply_operator(const VecX& x, VecX& y) const = 0;
  virtual void apply(const VecX& r, VecX& z) = 0;
  virtual void recover(const VecX& x, VecX& dphi, VecX& drho) = 0;

  /// Ratio ||rhs()|| / ||(f; g~)||, so that outer tolerances stay relative to
  /// the unscaled system when the formulation rescales it.
  virtual double rhs_scale() const { return 1.0; }

  long inner_iterations() const { return inner_iterations_; }
  int applications() const { return applications_; }
  int flagged_events() const { return flagged_events_; }
  double setup_seconds() const { return setup_seconds_; }
  void reset_counters() {
    inner_iterations_ = 0;
    applications_ = 0;
    flagged_events_ = 0;
  }

 protected:
  long inner_iterations_ = 0;
  int applications_ = 0;
  int flagged_events_ = 0;
  double setup_seconds_ = 0.0;
};

std::unique_ptr<SaddlePreconditioner> make_preconditioner(
    PrecondKind kind, const SaddleSystem& sys, const PrimalDualState& st,
    const Discretization& d, const PrecondOptions& opt = {});

/// Removes the mass-weighted mean over all slices (kernel of the Jacobian).
void remove_global_mean(VecX& dphi, const Discretization& d);

/// Original saddle formulation shared by HSS-free preconditioners.
class SaddleFormulation : public SaddlePreconditioner {
 public:
  SaddleFormulation(const SaddleSystem& sys, const Discretization& d);
  VecX rhs() const override;
  void apply_operator(const VecX& x, VecX& y) const override;
  void recover(const VecX& x, VecX& dphi, VecX& drho) override;

 protected:
  const SaddleSystem& sys_;
  const Discretization& d_;
  SpMat Bt_;
  long n_, m_;
};

class PrimalSchurPreconditioner : public SaddleFormulation {
 public:
  PrimalSchurPreconditioner(const SaddleSystem& sys, const Discretization& d,
                            const PrecondOptions& opt);
  PrecondKind kind() const override { return PrecondKind::primal_schur; }
  void apply(const VecX& r, VecX& z) override;
  const SpMat& S() const { return S_; }

 private:
  PrecondOptions opt_;
  SpMat S_;
  VecX inv_C_;
  AmgHierarchy<double> amg_;
};

class SimplePreconditioner : public SaddleFormulation {
 public:
  SimplePreconditioner(const SaddleSystem& sys, const Discretization& d,
                       const PrecondOptions& opt);
  PrecondKind kind() const override { return PrecondKind::simple; }
  void apply(const VecX& r, VecX& z) override;
  const SpMat& S_tilde() const { return S_tilde_; }

 private:
  PrecondOptions opt_;
  VecX inv_diag_A_;
  SpMat S_tilde_;
  AmgHierarchy<double> amg_;
};

/// Swapped-factor HSS on the symmetrically diagonal-scaled skew form
/// [[A, B^T], [-B, C]].
class HssPreconditioner : public SaddlePreconditioner {
 public:
  HssPreconditioner(const SaddleSystem& sys, const Discretization& d,
                    const PrecondOptions& opt);
  PrecondKind kind() const override { return PrecondKind::hss; }
  VecX rhs() const override;
  void apply_operator(const VecX& x, VecX& y) const override;
  void apply(const VecX& r, VecX& z) override;
  void recover(const VecX& x, VecX& dphi, VecX& drho) override;
  double rhs_scale() const override;

  /// Scaled skew-form matrix and the two HSS factors, for inspection.
  SpMat scaled_matrix() const;
  SpMat H_alpha() const;
  SpMat K_alpha() const;
  const SpMat& dual_matrix() const { return dual_; }

 private:
  const SaddleSystem& sys_;
  const Discretization& d_;
  PrecondOptions opt_;
  long n_, m_;
  VecX D1_, D2_;
  std::vector<SpMat> A_hat_blocks_;
  SpMat A_hat_, B_hat_, Bt_hat_;
  VecX C_hat_;
  SpMat dual_;  // alpha I + B^ B^T / alpha
  std::vector<AmgHierarchy<double>> block_amg_;
  AmgHierarchy<double> dual_amg_;
};

/// Block-triangular preconditioner of the projected shifted system.
class BbPreconditioner : public SaddlePreconditioner {
 public:
  BbPreconditioner(const SaddleSystem& sys, const PrimalDualState& st,
                   const Discretization& d, const PrecondOptions& opt);
  PrecondKind kind() const override { return PrecondKind::bb; }
  VecX rhs() const override;
  void apply_operator(const VecX& x, VecX& y) const override;
  void apply(const VecX& r, VecX& z) override;
  void recover(const VecX& x, VecX& dphi, VecX& drho) override;

  const SpMat& A_tilde() const { return L_coarse_; }
  const SpMat& B_tilde() const { return B_tilde_; }
  const SpMat& schur_matrix() const { return Q_; }
  const VecX& last_dlambda() const { return dlambda_; }

 private:
  const SaddleSystem& sys_;
  const Discretization& d_;
  PrecondOptions opt_;
  long n_, m_;
  SpMat Bt_;
  SpMat L_coarse_;  // blockdiag(-divbar diag(Rbar rho^k) gradbar), K blocks
  SpMat B_tilde_;
  SpMat Q_;         // C Mbar^{-1} Ã + B M^{-1} B~
  VecX mbar_, inv_mbar_;
  std::vector<AmgHierarchy<double>> block_amg_;
  AmgHierarchy<double> schur_amg_;
  VecX dlambda_;
};

/// Coarse weighted Laplacians -divbar diag(Rbar rho^k) gradbar, k = 1..K.
SpMat assemble_coarse_laplacian(const PrimalDualState& st,
                                const Discretization& d, bool time_averaged);

/// B~ = M It (Dt^T - blockdiag_j(Mbar^{-1} Rbar^T diag(|w||e| dn phi^j) gradbar) H^T),
/// with dn phi^j on a coarse edge the mean fine gradient over its two halves.
SpMat assemble_B_tilde(const PrimalDualState& st, const Discretization& d);

/// Pieces of B^T C^{-1} B split by the time part T = Dt It^T M and the
/// transport part X = H G Dx of B.
struct PrimalSchurTerms {
  SpMat S_tt;  // T^T C^{-1} T
  SpMat S_xx;  // -Divx Ghat^T H^T C^{-1} H G Dx, the anisotropic spatial part
  SpMat S_tx;  // T^T C^{-1} X
};
PrimalSchurTerms primal_schur_terms(const SaddleSystem& sys,
                                    const PrimalDualState& st,
                                    const Discretization& d);

using SpaceTimeField = std::function<double(double t, const Point& x)>;

struct CommutatorLevel {
  int refine = 0;
  int K = 0;
  double residual = 0.0;        // weak norm of LHS - RHS, relative to LHS
  double correction = 0.0;      // weak norm of the discretized corrections
  double mismatch = 0.0;        // weak norm of LHS - RHS - corrections,
                                // relative to the corrections
};

/// Evaluates the discrete commutation identity B^T Mbar^{-1} Ã z versus
/// A M^{-1} B~ z on smooth fields over a refinement sequence, where z samples
/// a compactly supported test function. Weak norms pair the residual with
/// fixed smooth test functions.
std::vector<CommutatorLevel> commutator_residual(
    const SpaceTimeField& rho, const SpaceTimeField& phi,
    const CoarseMesh& base, const std::vector<std::pair<int, int>>& levels);

}  // namespace otbb
