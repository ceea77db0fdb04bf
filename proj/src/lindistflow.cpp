#include "lindistflow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vg {

namespace {

constexpr double kProp1Tol = 1e-12;

Eigen::MatrixXd symmetric_part(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solve_symmetric(const Eigen::MatrixXd& m,
                                                               const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success)
        throw NumericError(std::string("eigen solver failed on ") + what);
    return es;
}

}  // namespace

int GridMatrices::index_of(int bus, Phase phase) const {
    const int flat = 3 * (bus - 1) + static_cast<int>(phase);
    if (flat < 0 || flat >= static_cast<int>(compact_of.size())) return -1;
    return compact_of[flat];
}

namespace {

std::vector<int> build_compact_lookup(int n_buses, const std::vector<std::pair<int, Phase>>& mask) {
    std::vector<int> lookup(3 * n_buses, -1);
    for (int k = 0; k < static_cast<int>(mask.size()); ++k)
        lookup[3 * (mask[k].first - 1) + static_cast<int>(mask[k].second)] = k;
    return lookup;
}

}  // namespace

IncidencePair build_incidence(const Feeder& feeder) {
    const int n = feeder.n_buses();
    IncidencePair inc;
    inc.A = Eigen::MatrixXd::Zero(n, n);
    inc.a0 = Eigen::VectorXd::Zero(n);
    for (int bus = 1; bus <= n; ++bus) {
        const int parent = feeder.parent_of(bus);
        const int row = bus - 1;
        inc.A(row, bus - 1) = -1.0;
        if (parent == 0)
            inc.a0(row) = 1.0;
        else
            inc.A(row, parent - 1) = 1.0;
    }
    return inc;
}

Eigen::MatrixXd build_F(const IncidencePair& inc) {
    const int n = static_cast<int>(inc.A.rows());
    // -A is unit lower triangular, so the inverse is a forward substitution
    Eigen::MatrixXd neg_a = -inc.A;
    Eigen::MatrixXd f = neg_a.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    if (f.minCoeff() < -kProp1Tol)
        throw NumericError("F has a negative entry; incidence matrix is not tree-structured");
    Eigen::VectorXd ones_check = f * inc.a0;
    if ((ones_check.array() - 1.0).abs().maxCoeff() > kProp1Tol)
        throw NumericError("F a0 != 1; incidence matrix is not tree-structured");
    return f;
}

Eigen::MatrixXd build_T(int n_buses) {
    if (n_buses < 1) throw ValidationError("build_T: bus count must be >= 1");
    const int n = n_buses;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    // bus-major row (n, phi) picks the phase-major entry (phi, n)
    for (int bus = 0; bus < n; ++bus)
        for (int ph = 0; ph < 3; ++ph) t(3 * bus + ph, ph * n + bus) = 1.0;
    return t;
}

ZtildeDecomp build_ztilde(const Line& line) {
    const std::complex<double> alpha = std::polar(1.0, -2.0 * M_PI / 3.0);
    const Eigen::Vector3cd avec(1.0, alpha, alpha * alpha);

    ZtildeDecomp d;
    d.ztilde = avec.conjugate().asDiagonal() * line.z * avec.asDiagonal();
    d.xt.setZero();
    d.rt.setZero();
    const double s32 = std::sqrt(3.0) / 2.0;
    // sign pattern of the anti-symmetric carrier: [[0,-,+],[+,0,-],[-,+,0]]
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (!has_phase(line.phases, i) || !has_phase(line.phases, j)) continue;
            const double r = line.z(i, j).real();
            const double x = line.z(i, j).imag();
            if (i == j) {
                d.xt(i, i) = x;
            } else {
                d.xt(i, j) = -0.5 * x;
                const int sign = ((j - i + 3) % 3 == 1) ? -1 : +1;
                d.rt(i, j) = sign * s32 * r;
            }
        }
    }
    // zero out rows/cols of unserved phases in ztilde as well
    for (int i = 0; i < 3; ++i)
        if (!has_phase(line.phases, i)) {
            d.ztilde.row(i).setZero();
            d.ztilde.col(i).setZero();
        }
    return d;
}

EigenSummary eigen_summary(const Eigen::MatrixXd& x) {
    EigenSummary s;
    const auto es_sym = solve_symmetric(symmetric_part(x), "the symmetric part of X");
    s.lambda_min = es_sym.eigenvalues().minCoeff();
    s.lambda_max = es_sym.eigenvalues().maxCoeff();

    const Eigen::MatrixXd xxt = x * x.transpose();
    const auto es_xxt = solve_symmetric(xxt, "X X^T");
    const Eigen::VectorXd lam = es_xxt.eigenvalues();
    if (lam.minCoeff() <= 0.0) throw NumericError("X X^T is numerically singular");
    s.lambda_max_xtx = lam.maxCoeff();
    s.kappa = std::sqrt(lam.maxCoeff() / lam.minCoeff());
    s.lmax_bound = 1.0 / std::sqrt(lam.maxCoeff());
    s.prop3_bound = 2.0 * s.lambda_min / (s.lambda_max * s.lambda_max);
    s.prop5_bound = 2.0 * s.lambda_min / s.lambda_max_xtx;

    const Eigen::VectorXd lam_isqrt = lam.array().rsqrt();
    const Eigen::MatrixXd b = lam_isqrt.asDiagonal() * es_xxt.eigenvectors().transpose() *
                              (x + x.transpose()) * es_xxt.eigenvectors() * lam_isqrt.asDiagonal();
    s.prop6_bound = solve_symmetric(symmetric_part(b), "the Prop-6 pencil").eigenvalues().minCoeff();
    return s;
}

double spectral_norm(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m);
    if (es.info() != Eigen::Success) throw NumericError("spectral norm: eigen solver failed");
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

GridMatrices build_single_phase(const IncidencePair& inc, const Eigen::VectorXd& r,
                                const Eigen::VectorXd& x) {
    const int n = static_cast<int>(inc.A.rows());
    if (r.size() != n || x.size() != n)
        throw ValidationError("single-phase build: r and x must have one entry per line");
    if (r.minCoeff() <= 0.0 || x.minCoeff() <= 0.0)
        throw ValidationError("single-phase build: r and x must be strictly positive");

    GridMatrices m;
    m.multiphase = false;
    m.n_buses = n;
    m.inc = inc;
    m.F = build_F(inc);
    m.R = 2.0 * m.F * r.asDiagonal() * m.F.transpose();
    m.X = 2.0 * m.F * x.asDiagonal() * m.F.transpose();
    m.r = r;
    m.x = x;
    m.mask.reserve(n);
    for (int bus = 1; bus <= n; ++bus) m.mask.emplace_back(bus, Phase::A);
    m.compact_of = build_compact_lookup(n, m.mask);
    m.eig = eigen_summary(m.X);
    return m;
}

GridMatrices build_single_phase(const Feeder& feeder) {
    if (!is_single_phase(feeder)) return build_single_phase(to_single_phase(feeder));
    const int n = feeder.n_buses();
    Eigen::VectorXd r(n), x(n);
    for (int bus = 1; bus <= n; ++bus) {
        r(bus - 1) = feeder.line_to(bus).z(0, 0).real();
        x(bus - 1) = feeder.line_to(bus).z(0, 0).imag();
    }
    return build_single_phase(build_incidence(feeder), r, x);
}

GridMatrices build_multiphase(const Feeder& feeder) {
    const int n = feeder.n_buses();
    GridMatrices m;
    m.multiphase = true;
    m.n_buses = n;
    m.inc = build_incidence(feeder);
    m.F = build_F(m.inc);

    // M = T (I3 (x) F) T^T has entries M[(n,phi),(k,psi)] = F(n,k) delta(phi,psi)
    Eigen::MatrixXd big_m = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (int bi = 0; bi < n; ++bi)
        for (int bj = 0; bj < n; ++bj)
            for (int ph = 0; ph < 3; ++ph) big_m(3 * bi + ph, 3 * bj + ph) = m.F(bi, bj);

    Eigen::MatrixXd bre = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    Eigen::MatrixXd bxt = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    Eigen::MatrixXd brt = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    m.im_ztilde.resize(n);
    for (int k = 0; k < n; ++k) {
        const ZtildeDecomp d = build_ztilde(feeder.lines[k]);
        bre.block<3, 3>(3 * k, 3 * k) = d.ztilde.real();
        bxt.block<3, 3>(3 * k, 3 * k) = d.xt;
        brt.block<3, 3>(3 * k, 3 * k) = d.rt;
        m.im_ztilde[k] = d.xt + d.rt;
    }

    const Eigen::MatrixXd r_full = 2.0 * big_m * bre * big_m.transpose();
    const Eigen::MatrixXd xx_full = 2.0 * big_m * bxt * big_m.transpose();
    const Eigen::MatrixXd xr_full = 2.0 * big_m * brt * big_m.transpose();

    // drop rows/columns of non-served (bus, phase) pairs
    m.mask = feeder.served_pairs();
    m.compact_of = build_compact_lookup(n, m.mask);
    const int dim = static_cast<int>(m.mask.size());
    std::vector<int> keep(dim);
    for (int i = 0; i < dim; ++i)
        keep[i] = 3 * (m.mask[i].first - 1) + static_cast<int>(m.mask[i].second);
    m.R.resize(dim, dim);
    m.Xx.resize(dim, dim);
    m.Xr.resize(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            m.R(i, j) = r_full(keep[i], keep[j]);
            m.Xx(i, j) = xx_full(keep[i], keep[j]);
            m.Xr(i, j) = xr_full(keep[i], keep[j]);
        }
    }
    m.X = m.Xx + m.Xr;
    m.eig = eigen_summary(m.X);

    const auto es_xx = solve_symmetric(m.Xx, "Xx");
    if (es_xx.eigenvalues().minCoeff() <= 0.0)
        m.warnings.push_back("Xx is not positive-definite; diagonal-dominance hypothesis violated");
    return m;
}

Eigen::MatrixXd remark2_inverse(const IncidencePair& inc, const Eigen::VectorXd& w) {
    if (w.minCoeff() <= 0.0) throw ValidationError("analytic inverse needs strictly positive line parameters");
    return 0.5 * inc.A.transpose() * w.cwiseInverse().asDiagonal() * inc.A;
}

const char* coupling_case_name(CouplingCase c) {
    switch (c) {
        case CouplingCase::SamePhase: return "c1";
        case CouplingCase::PrecedingPhase: return "c2";
        case CouplingCase::FollowingPhase: return "c3";
    }
    return "?";
}

CouplingCase classify_phase_pair(Phase pi, Phase pj) {
    if (pi == pj) return CouplingCase::SamePhase;
    // (a,b), (b,c), (c,a): phase_i precedes phase_j in positive-sequence order
    const int d = (static_cast<int>(pj) - static_cast<int>(pi) + 3) % 3;
    return d == 1 ? CouplingCase::PrecedingPhase : CouplingCase::FollowingPhase;
}

CouplingValue coupling_entry(const GridMatrices& mats, std::pair<int, Phase> i,
                             std::pair<int, Phase> j) {
    if (!mats.multiphase) throw ConfigError("coupling_entry: multiphase matrices required");
    if (mats.index_of(i.first, i.second) < 0 || mats.index_of(j.first, j.second) < 0)
        throw ValidationError("coupling_entry: (bus, phase) pair is not served");
    const int pi = static_cast<int>(i.second), pj = static_cast<int>(j.second);
    const int upto = std::min(i.first, j.first);
    double sum = 0.0;
    for (int k = 1; k <= upto; ++k)
        sum += mats.im_ztilde[k - 1](pi, pj) * mats.F(i.first - 1, k - 1) * mats.F(j.first - 1, k - 1);
    return CouplingValue{2.0 * sum, classify_phase_pair(i.second, j.second)};
}

PhaseMajorView phase_major_coupling(const GridMatrices& mats) {
    if (!mats.multiphase) throw ConfigError("phase-major coupling requires multiphase matrices");
    PhaseMajorView view;
    for (int ph = 0; ph < 3; ++ph)
        for (const auto& pair : mats.mask)
            if (static_cast<int>(pair.second) == ph) view.mask.push_back(pair);
    const int dim = static_cast<int>(view.mask.size());
    view.xcheck.resize(dim, dim);
    for (int a = 0; a < dim; ++a) {
        const int ia = mats.index_of(view.mask[a].first, view.mask[a].second);
        for (int b = 0; b < dim; ++b) {
            const int ib = mats.index_of(view.mask[b].first, view.mask[b].second);
            view.xcheck(a, b) = mats.X(ia, ib);
        }
    }
    return view;
}

CouplingReport build_coupling_report(const GridMatrices& mats) {
    const PhaseMajorView view = phase_major_coupling(mats);
    CouplingReport report;
    for (int pi = 0; pi < 3; ++pi) {
        for (int pj = 0; pj < 3; ++pj) {
            CouplingBlock blk;
            blk.phase_i = static_cast<Phase>(pi);
            blk.phase_j = static_cast<Phase>(pj);
            blk.tag = classify_phase_pair(blk.phase_i, blk.phase_j);
            double lo = 0.0, hi = 0.0;
            bool first = true;
            for (int a = 0; a < static_cast<int>(view.mask.size()); ++a) {
                if (static_cast<int>(view.mask[a].second) != pi) continue;
                for (int b = 0; b < static_cast<int>(view.mask.size()); ++b) {
                    if (static_cast<int>(view.mask[b].second) != pj) continue;
                    const double v = view.xcheck(a, b);
                    if (first) {
                        lo = hi = v;
                        first = false;
                    } else {
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                    ++blk.n_entries;
                    if (blk.tag == CouplingCase::SamePhase && v <= 0.0) ++blk.n_sign_violations;
                    if (blk.tag == CouplingCase::PrecedingPhase && v >= 0.0) ++blk.n_sign_violations;
                }
            }
            blk.min_entry = lo;
            blk.max_entry = hi;
            if (blk.n_entries == 0)
                blk.classification = "empty";
            else if (lo > 0.0)
                blk.classification = "positive";
            else if (hi < 0.0)
                blk.classification = "negative";
            else
                blk.classification = "indefinite";
            report.blocks.push_back(blk);
        }
    }
    return report;
}

std::string CouplingReport::to_csv() const {
    std::ostringstream out;
    out << "phase_i,phase_j,case,classification,min_entry,max_entry,n_entries,n_sign_violations\n";
    char buf[64];
    for (const CouplingBlock& b : blocks) {
        out << phase_letter(b.phase_i) << ',' << phase_letter(b.phase_j) << ','
            << coupling_case_name(b.tag) << ',' << b.classification << ',';
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g", b.min_entry, b.max_entry);
        out << buf << ',' << b.n_entries << ',' << b.n_sign_violations << '\n';
    }
    return out.str();
}

}  // namespace vg
