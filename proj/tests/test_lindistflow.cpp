#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lindistflow.hpp"
#include "oracles.hpp"

using namespace vg;

namespace {

Feeder chain_rx_11() {
    return parse_feeder(R"({
      "base_kva": 1000, "base_kv": 1, "v0_squared": 1.0,
      "buses": [{"id": "f", "phases": "a"}, {"id": "b1", "phases": "a"}, {"id": "b2", "phases": "a"}],
      "lines": [
        {"id": "l1", "from": "f",  "to": "b1", "z": {"aa": [1.0, 1.0]}},
        {"id": "l2", "from": "b1", "to": "b2", "z": {"aa": [1.0, 1.0]}}
      ]
    })");
}

// two-phase single-line grid from the worked coupling example:
// x_aa = x_bb = 1, z_ab = 0.3 + j0.5
Feeder two_phase_line() {
    return parse_feeder(R"({
      "base_kva": 1000, "base_kv": 1, "v0_squared": 1.0,
      "buses": [{"id": "f", "phases": "ab"}, {"id": "b1", "phases": "ab"}],
      "lines": [{"id": "l1", "from": "f", "to": "b1",
                 "z": {"aa": [0.1, 1.0], "bb": [0.1, 1.0], "ab": [0.3, 0.5]}}]
    })");
}

}  // namespace

TEST_CASE("incidence of the chain matches the worked example") {
    const IncidencePair inc = build_incidence(chain_rx_11());
    CHECK(inc.a0(0) == 1.0);
    CHECK(inc.a0(1) == 0.0);
    CHECK(inc.A(0, 0) == -1.0);
    CHECK(inc.A(0, 1) == 0.0);
    CHECK(inc.A(1, 0) == 1.0);
    CHECK(inc.A(1, 1) == -1.0);
    // rows of the full incidence [a0 A] sum to zero
    CHECK((inc.A.rowwise().sum() + inc.a0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single line and star incidence") {
    std::mt19937_64 rng(3);
    const Feeder single = oracle::random_tree(rng, 1);
    const IncidencePair inc1 = build_incidence(single);
    CHECK(inc1.A(0, 0) == -1.0);
    CHECK(inc1.a0(0) == 1.0);
    CHECK(build_F(inc1)(0, 0) == 1.0);
}

TEST_CASE("F of the chain is the path indicator") {
    const Eigen::MatrixXd f = build_F(build_incidence(chain_rx_11()));
    CHECK(f(0, 0) == 1.0);
    CHECK(f(0, 1) == 0.0);
    CHECK(f(1, 0) == 1.0);
    CHECK(f(1, 1) == 1.0);
}

TEST_CASE("F equals brute-force path enumeration on random trees") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Feeder tree = oracle::random_tree(rng, 10);
        const Eigen::MatrixXd f = build_F(build_incidence(tree));
        CHECK((f - oracle::path_matrix(tree)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("triangular-structure property suite on 200 random trees") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 50);
        const Feeder tree = oracle::random_tree(rng, n, false, true);
        const IncidencePair inc = build_incidence(tree);
        const Eigen::MatrixXd f = build_F(inc);
        if (n > 1) {
            CHECK(inc.A.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() ==
                  0.0);
            CHECK(f.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() ==
                  0.0);
        }
        CHECK(f.minCoeff() >= 0.0);
        CHECK((f * inc.a0 - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff() <= 1e-12);
        // triangular with unit-magnitude eigenvalues: all diagonal entries
        CHECK((inc.A.diagonal().array() + 1.0).abs().maxCoeff() == 0.0);
        CHECK((f.diagonal().array() - 1.0).abs().maxCoeff() == 0.0);
    }
}

TEST_CASE("chain with unit r = x freezes R, X and the eigen summary") {
    const GridMatrices m = build_single_phase(chain_rx_11());
    Eigen::Matrix2d expected;
    expected << 2.0, 2.0, 2.0, 4.0;
    CHECK((m.R - expected).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((m.X - expected).cwiseAbs().maxCoeff() <= 1e-14);

    const double s5 = std::sqrt(5.0);
    CHECK(m.eig.lambda_min == doctest::Approx(3.0 - s5).epsilon(1e-12));
    CHECK(m.eig.lambda_max == doctest::Approx(3.0 + s5).epsilon(1e-12));
    CHECK(m.eig.kappa == doctest::Approx((3.0 + s5) / (3.0 - s5)).epsilon(1e-12));
    CHECK(m.eig.prop3_bound ==
          doctest::Approx(2.0 * (3.0 - s5) / ((3.0 + s5) * (3.0 + s5))).epsilon(1e-12));
}

TEST_CASE("identity X has unit condition number and bound 2") {
    const EigenSummary eig = eigen_summary(Eigen::MatrixXd::Identity(4, 4));
    CHECK(eig.kappa == doctest::Approx(1.0));
    CHECK(eig.prop3_bound == doctest::Approx(2.0));
    CHECK(eig.prop6_bound == doctest::Approx(2.0));
    CHECK(eig.lmax_bound == doctest::Approx(1.0));
}

TEST_CASE("prop6 bound reduces to 2/lambda_max for symmetric matrices") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Feeder tree = oracle::random_tree(rng, 2 + static_cast<int>(rng() % 15));
        const GridMatrices m = build_single_phase(tree);
        CHECK(m.eig.prop6_bound == doctest::Approx(2.0 / m.eig.lambda_max).epsilon(1e-9));
        CHECK(m.eig.prop5_bound == doctest::Approx(m.eig.prop3_bound).epsilon(1e-9));
    }
}

TEST_CASE("scalar case and positivity validation") {
    IncidencePair inc;
    inc.A = -Eigen::MatrixXd::Identity(1, 1);
    inc.a0 = Eigen::VectorXd::Ones(1);
    Eigen::VectorXd r(1), x(1);
    r << 0.25;
    x << 0.5;
    const GridMatrices m = build_single_phase(inc, r, x);
    CHECK(m.R(0, 0) == doctest::Approx(0.5));
    CHECK(m.X(0, 0) == doctest::Approx(1.0));

    x << -0.5;
    CHECK_THROWS_AS(build_single_phase(inc, r, x), ValidationError);
}

TEST_CASE("analytic inverses from the incidence factorization") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Feeder tree = oracle::random_tree(rng, 2 + static_cast<int>(rng() % 30));
        const GridMatrices m = build_single_phase(tree);
        const int n = m.dim();
        const double err_r = (m.R * remark2_inverse(m.inc, m.r) -
                              Eigen::MatrixXd::Identity(n, n))
                                 .norm() /
                             std::sqrt(n);
        const double err_x = (m.X * remark2_inverse(m.inc, m.x) -
                              Eigen::MatrixXd::Identity(n, n))
                                 .norm() /
                             std::sqrt(n);
        CHECK(err_r < 1e-10);
        CHECK(err_x < 1e-10);
        // entrywise nonnegativity of R and X
        CHECK(m.R.minCoeff() >= 0.0);
        CHECK(m.X.minCoeff() >= 0.0);
    }
}

TEST_CASE("T permutes phase-major stacks to bus-major stacks") {
    CHECK((build_T(1) - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd t = build_T(2);
    Eigen::VectorXd phase_major(6);
    phase_major << 11, 12, 21, 22, 31, 32;  // (a1, a2, b1, b2, c1, c2)
    Eigen::VectorXd bus_major(6);
    bus_major << 11, 21, 31, 12, 22, 32;  // (a1, b1, c1, a2, b2, c2)
    CHECK((t * phase_major - bus_major).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd t13 = build_T(13);
    CHECK((t13 * t13.transpose() - Eigen::MatrixXd::Identity(39, 39)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("similarity-transformed impedance: diagonal blocks pass through") {
    Line line;
    line.phases = 0b111;
    line.z = Eigen::Matrix3cd::Zero();
    line.z(0, 0) = {0.1, 0.5};
    line.z(1, 1) = {0.2, 0.6};
    line.z(2, 2) = {0.3, 0.7};
    const ZtildeDecomp d = build_ztilde(line);
    CHECK((d.ztilde - line.z).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(d.rt.cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.xt(0, 0) == doctest::Approx(0.5));
    CHECK(d.xt(1, 1) == doctest::Approx(0.6));
    CHECK(d.xt(2, 2) == doctest::Approx(0.7));
}

TEST_CASE("worked mutual-coupling entries of Im Ztilde") {
    Line line;
    line.phases = 0b011;  // a, b
    line.z = Eigen::Matrix3cd::Zero();
    line.z(0, 0) = {0.0, 1.0};
    line.z(1, 1) = {0.0, 1.0};
    line.z(0, 1) = line.z(1, 0) = {0.3, 0.5};
    const ZtildeDecomp d = build_ztilde(line);
    const double s32 = std::sqrt(3.0) / 2.0;
    const double im_ab = d.xt(0, 1) + d.rt(0, 1);
    const double im_ba = d.xt(1, 0) + d.rt(1, 0);
    CHECK(im_ab == doctest::Approx(-0.25 - s32 * 0.3).epsilon(1e-12));  // ~ -0.5098
    CHECK(im_ba == doctest::Approx(-0.25 + s32 * 0.3).epsilon(1e-12));  // ~ +0.0098
}

TEST_CASE("Xt + Rt reproduces Im(diag(a*) Z diag(a)) for random symmetric blocks") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::complex<double> alpha = std::polar(1.0, -2.0 * M_PI / 3.0);
    const Eigen::Vector3cd avec(1.0, alpha, alpha * alpha);
    for (int trial = 0; trial < 100; ++trial) {
        Line line;
        line.phases = 0b111;
        Eigen::Matrix3cd z;
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                z(i, j) = {u(rng), i == j ? std::abs(u(rng)) + 0.1 : u(rng)};
                z(j, i) = z(i, j);
            }
        line.z = z;
        const ZtildeDecomp d = build_ztilde(line);
        const Eigen::Matrix3cd direct = avec.conjugate().asDiagonal() * z * avec.asDiagonal();
        CHECK(((d.xt + d.rt) - direct.imag()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((d.xt - d.xt.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((d.rt + d.rt.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    }
}

TEST_CASE("decoupled identical phases block-diagonalize into single-phase copies") {
    // every bus abc, every line the same diagonal impedance on each phase
    std::mt19937_64 rng(31);
    nlohmann::json doc = oracle::random_tree_json(rng, 6, false);
    for (auto& jl : doc["lines"]) {
        const auto aa = jl["z"]["aa"];
        jl["z"] = {{"aa", aa}, {"bb", aa}, {"cc", aa}};
    }
    for (auto& jb : doc["buses"]) jb["phases"] = "abc";
    const Feeder mp = parse_feeder(doc.dump());
    const GridMatrices m3 = build_multiphase(mp);
    const GridMatrices m1 = build_single_phase(to_single_phase(mp));

    const PhaseMajorView view = phase_major_coupling(m3);
    const int n = m1.dim();
    REQUIRE(view.xcheck.rows() == 3 * n);
    for (int blk = 0; blk < 3; ++blk) {
        CHECK((view.xcheck.block(blk * n, blk * n, n, n) - m1.X).cwiseAbs().maxCoeff() <= 1e-12);
        for (int other = 0; other < 3; ++other)
            if (other != blk)
                CHECK(view.xcheck.block(blk * n, other * n, n, n).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("anti-symmetric carrier vanishes without mutual resistance") {
    std::mt19937_64 rng(37);
    nlohmann::json doc = oracle::random_tree_json(rng, 5, true);
    for (auto& jl : doc["lines"])
        for (auto& [key, val] : jl["z"].items())
            if (key[0] != key[1]) val[0] = 0.0;  // kill mutual r, keep mutual x
    const Feeder mp = parse_feeder(doc.dump());
    const GridMatrices m = build_multiphase(mp);
    CHECK(m.Xr.cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((m.X - m.X.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("multiphase split: symmetric plus anti-symmetric") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const Feeder mp = oracle::random_tree(rng, 2 + static_cast<int>(rng() % 12), true);
        const GridMatrices m = build_multiphase(mp);
        CHECK((m.Xx - m.Xx.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((m.Xr + m.Xr.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((m.X - m.Xx - m.Xr).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("entrywise assembly matches the matrix route on random multiphase feeders") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const Feeder mp = oracle::random_tree(rng, 2 + static_cast<int>(rng() % 10), true);
        const GridMatrices m = build_multiphase(mp);
        const PhaseMajorView view = phase_major_coupling(m);
        for (int a = 0; a < static_cast<int>(view.mask.size()); ++a) {
            for (int b = 0; b < static_cast<int>(view.mask.size()); ++b) {
                const CouplingValue cv = coupling_entry(m, view.mask[a], view.mask[b]);
                CHECK(std::abs(cv.value - view.xcheck(a, b)) <= 1e-10);
            }
        }
    }
}

TEST_CASE("worked coupling entries on the two-phase line") {
    const GridMatrices m = build_multiphase(two_phase_line());
    const auto ab = coupling_entry(m, {1, Phase::A}, {1, Phase::B});
    const auto ba = coupling_entry(m, {1, Phase::B}, {1, Phase::A});
    const double s32 = std::sqrt(3.0) / 2.0;
    CHECK(ab.value == doctest::Approx(2.0 * (-0.25 - s32 * 0.3)).epsilon(1e-9));  // ~ -1.0196
    CHECK(ab.tag == CouplingCase::PrecedingPhase);
    CHECK(ba.value == doctest::Approx(2.0 * (-0.25 + s32 * 0.3)).epsilon(1e-9));  // ~ +0.0196
    CHECK(ba.tag == CouplingCase::FollowingPhase);

    const auto same = coupling_entry(m, {1, Phase::A}, {1, Phase::A});
    CHECK(same.value > 0.0);
    CHECK(same.tag == CouplingCase::SamePhase);

    CHECK_THROWS_AS(coupling_entry(m, {1, Phase::C}, {1, Phase::A}), ValidationError);
}

TEST_CASE("diagonally dominant reactance blocks give positive-definite Xx") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 15; ++trial) {
        const Feeder mp = oracle::random_tree(rng, 2 + static_cast<int>(rng() % 10), true);
        bool dominant = true;
        for (const Line& l : mp.lines) {
            for (int i = 0; i < 3 && dominant; ++i) {
                if (!has_phase(l.phases, i)) continue;
                double off = 0.0;
                for (int j = 0; j < 3; ++j)
                    if (j != i) off += std::abs(l.z(i, j).imag());
                if (2.0 * l.z(i, i).imag() <= off) dominant = false;
            }
        }
        const GridMatrices m = build_multiphase(mp);
        if (dominant) {
            CHECK(m.warnings.empty());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.Xx);
            CHECK(es.eigenvalues().minCoeff() > 0.0);
        }
    }
}

TEST_CASE("preceding-phase entries are non-positive for non-negative line parameters") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 10; ++trial) {
        nlohmann::json doc = oracle::random_tree_json(rng, 2 + static_cast<int>(rng() % 10), true);
        // the generator already draws non-negative r and x
        const Feeder mp = parse_feeder(doc.dump());
        const GridMatrices m = build_multiphase(mp);
        const CouplingReport rep = build_coupling_report(m);
        for (const CouplingBlock& blk : rep.blocks) {
            if (blk.tag != CouplingCase::PrecedingPhase || blk.n_entries == 0) continue;
            CHECK(blk.max_entry <= 1e-15);
        }
    }
}

TEST_CASE("IEEE 13-bus coupling reproduces the checkerboard sign pattern") {
    const Feeder mp = load_feeder(oracle::data_path("ieee13.json"));
    const GridMatrices m = build_multiphase(mp);
    const CouplingReport rep = build_coupling_report(m);
    for (const CouplingBlock& blk : rep.blocks) {
        REQUIRE(blk.n_entries > 0);
        if (blk.tag == CouplingCase::SamePhase) {
            CHECK(blk.classification == "positive");
            CHECK(blk.n_sign_violations == 0);
        } else if (blk.tag == CouplingCase::PrecedingPhase) {
            CHECK(blk.classification == "negative");
            CHECK(blk.n_sign_violations == 0);
        }
    }
    const std::string csv = rep.to_csv();
    CHECK(csv.find("phase_i,phase_j,case,classification") == 0);
}

TEST_CASE("contraction bound certifies the operator norm on the 13-bus model") {
    const Feeder mp = load_feeder(oracle::data_path("ieee13.json"));
    const GridMatrices m = build_multiphase(mp);
    const int dim = m.dim();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
    const double mu_ok = 0.99 * m.eig.prop6_bound;
    const double mu_bad = 1.5 * m.eig.prop6_bound;
    CHECK(spectral_norm(eye - mu_ok * m.X) < 1.0);
    CHECK(spectral_norm(eye - mu_bad * m.X) >= 1.0);
}

TEST_CASE("condition number is invariant under uniform impedance scaling") {
    std::mt19937_64 rng(59);
    nlohmann::json doc = oracle::random_tree_json(rng, 8, true);
    const Feeder f1 = parse_feeder(doc.dump());
    for (auto& jl : doc["lines"])
        for (auto& [key, val] : jl["z"].items()) {
            val[0] = val[0].get<double>() * 3.7;
            val[1] = val[1].get<double>() * 3.7;
        }
    const Feeder f2 = parse_feeder(doc.dump());
    const GridMatrices m1 = build_multiphase(f1);
    const GridMatrices m2 = build_multiphase(f2);
    CHECK(m2.eig.kappa == doctest::Approx(m1.eig.kappa).epsilon(1e-9));
}
