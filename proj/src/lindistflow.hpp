#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "feeder.hpp"

namespace vg {

/// Reduced branch-bus incidence: row n carries +1 at the parent column and -1
/// at the child column; parents equal to the feeder bus land in a0 instead.
struct IncidencePair {
    Eigen::MatrixXd A;   // N x N, lower triangular under canonical ordering
    Eigen::VectorXd a0;  // feeder column of the full incidence [a0 A]
};

struct EigenSummary {
    double lambda_min = 0.0;      // extreme eigenvalues of the symmetric part of X
    double lambda_max = 0.0;
    double kappa = 0.0;           // sigma_max / sigma_min
    double lambda_max_xtx = 0.0;  // largest eigenvalue of X^T X
    double prop3_bound = 0.0;     // 2 lambda_min / lambda_max^2
    double lmax_bound = 0.0;      // 1 / sigma_max
    double prop5_bound = 0.0;     // 2 lambda_min(Xx) / lambda_max(X^T X)
    double prop6_bound = 0.0;     // lambda_min(L^-1/2 U^T (X+X^T) U L^-1/2), X X^T = U L U^T
};

/// Immutable linear-model matrices for one feeder.
///
/// Single-phase: dim == N and X, R are symmetric positive-definite.
/// Multiphase: dim == number of served (bus, phase) pairs, bus-major; rows
/// and columns of non-served pairs are removed, `mask` maps compact indices
/// back to (bus, phase).
struct GridMatrices {
    bool multiphase = false;
    int n_buses = 0;
    IncidencePair inc;
    Eigen::MatrixXd F;       // N x N, -A^-1
    Eigen::MatrixXd R, X;    // dim x dim
    Eigen::MatrixXd Xx, Xr;  // symmetric / anti-symmetric split (multiphase)
    std::vector<std::pair<int, Phase>> mask;   // compact index -> (bus, phase)
    std::vector<int> compact_of;               // 3N lookup (bus, phase) -> compact index or -1
    Eigen::VectorXd r, x;                      // single-phase line parameters
    std::vector<Eigen::Matrix3d> im_ztilde;    // per line, zeros on unserved phases (multiphase)
    EigenSummary eig;
    std::vector<std::string> warnings;

    int dim() const { return static_cast<int>(X.rows()); }
    int index_of(int bus, Phase phase) const;  // -1 when the pair is not served
};

IncidencePair build_incidence(const Feeder& feeder);

/// F = -A^-1 by forward substitution. Checks F >= 0 and F a0 = 1 to 1e-12.
Eigen::MatrixXd build_F(const IncidencePair& inc);

/// Permutation from phase-major stacking (all phase-a entries, then b, then c)
/// to bus-major stacking (three phases of bus 1, then bus 2, ...).
Eigen::MatrixXd build_T(int n_buses);

/// Similarity-transformed impedance diag(alpha*) Z diag(alpha) for one line,
/// with the imaginary part split into its symmetric reactance carrier and
/// anti-symmetric resistance carrier.
struct ZtildeDecomp {
    Eigen::Matrix3cd ztilde;
    Eigen::Matrix3d xt;  // symmetric:      diag x^ii, off-diag -x^ij/2
    Eigen::Matrix3d rt;  // anti-symmetric: +-(sqrt(3)/2) r^ij
};
ZtildeDecomp build_ztilde(const Line& line);

GridMatrices build_single_phase(const IncidencePair& inc, const Eigen::VectorXd& r,
                                const Eigen::VectorXd& x);
/// Single-phase matrices for a feeder; multiphase feeders are collapsed via
/// to_single_phase first.
GridMatrices build_single_phase(const Feeder& feeder);

GridMatrices build_multiphase(const Feeder& feeder);

/// Analytic inverse of R (or X) per the closed form (1/2) A^T diag^-1(w) A.
Eigen::MatrixXd remark2_inverse(const IncidencePair& inc, const Eigen::VectorXd& w);

EigenSummary eigen_summary(const Eigen::MatrixXd& X);

/// Largest singular value.
double spectral_norm(const Eigen::MatrixXd& m);

/// Inter-phase coupling cases for an entry of the phase-major matrix.
enum class CouplingCase { SamePhase, PrecedingPhase, FollowingPhase };  // c1 / c2 / c3

const char* coupling_case_name(CouplingCase c);
CouplingCase classify_phase_pair(Phase pi, Phase pj);

/// Entry of the phase-major coupling matrix (T^T X T) evaluated through the
/// per-line summation over shared path lines, with its case tag.
struct CouplingValue {
    double value = 0.0;
    CouplingCase tag = CouplingCase::SamePhase;
};
CouplingValue coupling_entry(const GridMatrices& mats, std::pair<int, Phase> i,
                             std::pair<int, Phase> j);

/// Sign classification of every ordered phase-pair block of T^T X T.
struct CouplingBlock {
    Phase phase_i = Phase::A, phase_j = Phase::A;
    CouplingCase tag = CouplingCase::SamePhase;
    std::string classification;  // positive | negative | indefinite | empty
    double min_entry = 0.0, max_entry = 0.0;
    int n_entries = 0;
    int n_sign_violations = 0;   // entries violating the expected c1/c2 sign
};
struct CouplingReport {
    std::vector<CouplingBlock> blocks;
    std::string to_csv() const;
};
CouplingReport build_coupling_report(const GridMatrices& mats);

/// Phase-major compact coupling matrix (T^T X T with unserved pairs removed)
/// together with its index labels.
struct PhaseMajorView {
    Eigen::MatrixXd xcheck;
    std::vector<std::pair<int, Phase>> mask;  // phase-major order
};
PhaseMajorView phase_major_coupling(const GridMatrices& mats);

}  // namespace vg
