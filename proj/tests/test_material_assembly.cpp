#include "ndtns/assembly.hpp"
#include "ndtns/material.hpp"
#include "ndtns/ndtns_problem.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace ndtns;
using ndtns::support::relative_difference;

namespace {

std::mt19937 rng(7);

double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

Mat2 random_f(double jmin = 0.2, double jmax = 3.0)
{
    for (;;) {
        Mat2 f;
        f << uniform(0.3, 2.0), uniform(-0.8, 0.8), uniform(-0.8, 0.8), uniform(0.3, 2.0);
        double j = f.determinant();
        if (j >= jmin && j <= jmax)
            return f;
    }
}

/// Lagrangian density W - p C(J).
double density(const Mat2& f, double p, const MaterialParams& m)
{
    return strain_energy(f, m) - p * constraint(f.determinant(), m.kind).c;
}

Mat4 spd_with_eigenvalues(const Vec4& ev)
{
    Eigen::HouseholderQR<Mat4> qr(Mat4::Random());
    Mat4 q = qr.householderQ();
    return q * ev.asDiagonal() * q.transpose();
}

} // namespace

// ---------------------------------------------------------------- material

TEST(Material, StrainEnergy)
{
    MaterialParams m;
    EXPECT_DOUBLE_EQ(strain_energy(Mat2::Identity(), m), 0.0);
    EXPECT_DOUBLE_EQ(strain_energy(2.0 * Mat2::Identity(), m), 3.0);
    Mat2 shear;
    shear << 1, 1, 0, 1;
    m.mu = 2.0;
    EXPECT_DOUBLE_EQ(strain_energy(shear, m), 1.0);
}

TEST(Material, Constraints)
{
    for (auto kind : {ConstraintKind::Jminus1, ConstraintKind::LogJ}) {
        auto c = constraint(1.0, kind);
        EXPECT_DOUBLE_EQ(c.c, 0.0);
        EXPECT_DOUBLE_EQ(c.dc, 1.0);
    }
    auto a = constraint(2.0, ConstraintKind::Jminus1);
    EXPECT_DOUBLE_EQ(a.c, 1.0);
    EXPECT_DOUBLE_EQ(a.dc, 1.0);
    EXPECT_DOUBLE_EQ(a.ddc, 0.0);
    const double e = std::numbers::e;
    auto b = constraint(e, ConstraintKind::LogJ);
    EXPECT_NEAR(b.c, 1.0, 1e-15);
    EXPECT_NEAR(b.dc, 1.0 / e, 1e-15);
    EXPECT_NEAR(b.ddc, -1.0 / (e * e), 1e-15);
    EXPECT_THROW(constraint(0.0, ConstraintKind::LogJ), ConstitutiveDomainError);
    EXPECT_THROW(constraint(-1.0, ConstraintKind::LogJ), ConstitutiveDomainError);
    EXPECT_NO_THROW(constraint(-1.0, ConstraintKind::Jminus1));
}

TEST(Material, Cofactor2D)
{
    Mat2 f, expected;
    f << 1, 2, 3, 4;
    expected << 4, -3, -2, 1;
    auto [c, dc] = cof_and_derivative(f, Mat2(Mat2::Identity()));
    EXPECT_TRUE(c.isApprox(expected));
    EXPECT_TRUE(dc.isApprox(Mat2::Identity()));
    EXPECT_TRUE(c.isApprox(f.determinant() * f.inverse().transpose()));
    for (int trial = 0; trial < 20; ++trial) {
        Mat2 a = Mat2::Random(), b = Mat2::Random();
        double al = uniform(-2, 2), be = uniform(-2, 2);
        EXPECT_LT((cof(Mat2(al * a + be * b)) - al * cof(a) - be * cof(b)).norm(), 1e-14);
        EXPECT_LT((a * cof(a).transpose() - a.determinant() * Mat2::Identity()).norm(), 1e-14);
        EXPECT_TRUE(flatten(cof(a)).isApprox(cof_operator() * flatten(a)));
    }
}

TEST(Material, Cofactor3D)
{
    using M3 = Eigen::Matrix3d;
    auto [c, d] = cof_and_derivative(M3(M3::Identity()), M3(M3::Identity()));
    EXPECT_TRUE(c.isApprox(M3::Identity()));
    EXPECT_TRUE(d.isApprox(2.0 * M3::Identity()));
    for (int trial = 0; trial < 10; ++trial) {
        M3 f = M3::Random(), df = M3::Random();
        EXPECT_LT((f * cof(f).transpose() - f.determinant() * M3::Identity()).norm(), 1e-13);
        const double h = 1e-6;
        M3 fd = (cof(M3(f + h * df)) - cof(M3(f - h * df))) / (2 * h);
        EXPECT_LT((fd - cof_and_derivative(f, df).second).norm(), 1e-8);
    }
}

TEST(Material, PiolaStressExamples)
{
    MaterialParams m;
    m.mu = 1.7;
    EXPECT_LT(piola_stress({Mat2::Identity(), m.mu}, m).norm(), 1e-15);
    EXPECT_TRUE(piola_stress({Mat2::Identity(), 0.0}, m).isApprox(m.mu * Mat2::Identity()));
    m.mu = 1.0;
    Mat2 f = Vec2(2.0, 0.5).asDiagonal();
    Mat2 expected = Vec2(1.5, -1.5).asDiagonal();
    EXPECT_LT((piola_stress({f, 1.0}, m) - expected).norm(), 1e-15);
}

TEST(Material, StressIsDerivativeOfDensity)
{
    for (auto kind : {ConstraintKind::Jminus1, ConstraintKind::LogJ}) {
        MaterialParams m;
        m.mu = 1.3;
        m.kind = kind;
        for (int trial = 0; trial < 100; ++trial) {
            Mat2 f = random_f();
            double p = uniform(-2, 2);
            Mat2 fd;
            const double h = 1e-6;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    Mat2 e = Mat2::Zero();
                    e(i, j) = h;
                    fd(i, j) = (density(Mat2(f + e), p, m) - density(Mat2(f - e), p, m)) / (2 * h);
                }
            Mat2 pk = piola_stress({f, p}, m);
            EXPECT_LT((fd - pk).norm() / std::max(1.0, pk.norm()), 1e-5);
        }
    }
}

TEST(Material, TangentAtZeroPressure)
{
    MaterialParams m;
    m.mu = 2.5;
    Tangent4 a = material_tangent({random_f(), 0.0}, m);
    EXPECT_TRUE(a.isApprox(2.5 * Mat4::Identity()));
    Eigen::SelfAdjointEigenSolver<Mat4> es(a);
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(es.eigenvalues()(i), 2.5, 1e-14);
}

TEST(Material, TangentMatchesFiniteDifferences)
{
    for (auto kind : {ConstraintKind::Jminus1, ConstraintKind::LogJ}) {
        MaterialParams m;
        m.kind = kind;
        for (int trial = 0; trial < 100; ++trial) {
            Mat2 f = trial == 0 ? Mat2(Mat2::Identity()) : random_f();
            double p = trial == 0 ? m.mu : uniform(-2, 2);
            Tangent4 a = material_tangent({f, p}, m);
            EXPECT_LT((a - a.transpose()).norm(), 1e-14);
            Mat4 fd;
            const double h = 1e-6;
            for (int c = 0; c < 4; ++c) {
                Vec4 e = Vec4::Zero();
                e(c) = h;
                fd.col(c) = (flatten(piola_stress({f + unflatten(e), p}, m)) -
                             flatten(piola_stress({f - unflatten(e), p}, m))) /
                            (2 * h);
            }
            EXPECT_LT((fd - a).norm() / a.norm(), 1e-5);
        }
    }
}

TEST(Material, TangentFiniteDifferenceOrder)
{
    MaterialParams m;
    m.kind = ConstraintKind::LogJ;
    for (int trial = 0; trial < 10; ++trial) {
        Mat2 f = random_f(0.5, 2.0), df = Mat2::Random();
        double p = uniform(0.5, 2.0);
        Vec4 exact = material_tangent({f, p}, m) * flatten(df);
        auto err = [&](double h) {
            return (exact - (flatten(piola_stress({f + h * df, p}, m)) - flatten(piola_stress({f - h * df, p}, m))) /
                                (2 * h))
                .norm();
        };
        double e1 = err(1e-3), e2 = err(1e-4);
        EXPECT_GT(e1 / e2, 50.0);
        EXPECT_LT(e1, 1e-4);
    }
}

TEST(Material, ShiftedTangent)
{
    MaterialParams m;
    m.eps_lambda = 1e-8;
    auto s = shifted_tangent(Mat4::Identity(), m);
    EXPECT_DOUBLE_EQ(s.shift, 1e-8);
    EXPECT_LT((s.a - Mat4::Identity()).norm(), 1e-7);

    Mat4 a = spd_with_eigenvalues(Vec4(-2, 1, 1, 3));
    m.eps_lambda = 0.0;
    s = shifted_tangent(a, m);
    EXPECT_NEAR(s.shift, 2.0, 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat4> es(s.a);
    EXPECT_NEAR(es.eigenvalues()(0), 0.0, 1e-12);
    EXPECT_NEAR(es.eigenvalues()(3), 5.0, 1e-12);

    m.eps_lambda = 5.0;
    s = shifted_tangent(a, m);
    EXPECT_DOUBLE_EQ(s.shift, 5.0);
    es.compute(s.a);
    EXPECT_NEAR(es.eigenvalues()(0), 3.0, 1e-12);
}

TEST(Material, ShiftNeverDecreasesEigenvalues)
{
    MaterialParams m;
    m.eps_lambda = 1e-3;
    for (int trial = 0; trial < 50; ++trial) {
        Vec4 ev = Vec4::Random() * 3.0;
        Mat4 a = spd_with_eigenvalues(ev);
        auto s = shifted_tangent(a, m);
        Eigen::SelfAdjointEigenSolver<Mat4> before(a), after(s.a);
        for (int i = 0; i < 4; ++i)
            EXPECT_GE(after.eigenvalues()(i), before.eigenvalues()(i) - 1e-12);
        EXPECT_GE(after.eigenvalues()(0), std::min(m.eps_lambda, before.eigenvalues()(0)) - 1e-12);
        // the max rule lifts the smallest eigenvalue to max(lambda_min + eps, 0)
        EXPECT_NEAR(after.eigenvalues()(0), std::max(before.eigenvalues()(0) + m.eps_lambda, 0.0), 1e-12);
    }
}

TEST(Material, ParameterValidation)
{
    MaterialParams m;
    m.mu = 0.0;
    EXPECT_THROW(m.validate(), InvalidInput);
    m.mu = 1.0;
    m.eps_lambda = -1.0;
    EXPECT_THROW(m.validate(), InvalidInput);
}

// ---------------------------------------------------------------- duality pairing

TEST(DualityPairing, IdentityStressAndPositionField)
{
    auto mesh = support::single_triangle(Vec2(0.1, 0.2), Vec2(1.3, 0.4), Vec2(0.5, 1.1));
    const int k = 2;
    auto vps = volume_points(mesh, 0, LocalLayout::make(k, false), 6);
    VecX p = support::fit_stress(vps, [](const Vec2&) { return Mat2::Identity(); });
    VecX u = support::fit_rt(vps, [](const Vec2& x) { return x; });
    double area = 0.0;
    for (const auto& vp : vps)
        area += vp.w;
    auto d = duality_pairing_element(mesh, 0, k, p, u);
    EXPECT_NEAR(d.facet_tn, 0.0, 1e-13);
    EXPECT_NEAR(d.element_grad, 2.0 * area, 1e-13);
    EXPECT_NEAR(d.divergence_form(), d.gradient_form(), 1e-13);
}

TEST(DualityPairing, FormsAgreeForRandomCoefficients)
{
    std::vector<std::array<Vec2, 3>> shapes{{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)},
                                            {Vec2(0.1, 0.2), Vec2(1.3, 0.4), Vec2(0.5, 1.1)},
                                            {Vec2(-2, 1), Vec2(3, -0.5), Vec2(0.4, 0.8)}};
    for (int k : {1, 2})
        for (const auto& s : shapes) {
            auto mesh = support::single_triangle(s[0], s[1], s[2]);
            const int np = reference_basis({SpaceKind::SigmaTN, k, false}).size();
            const int nu = reference_basis({SpaceKind::RT, k}).size();
            for (int trial = 0; trial < 10; ++trial) {
                VecX p = VecX::Random(np), u = VecX::Random(nu);
                auto d = duality_pairing_element(mesh, 0, k, p, u);
                double scale = std::max(1.0, std::abs(d.element_div) + std::abs(d.element_grad));
                EXPECT_LT(std::abs(d.divergence_form() - d.gradient_form()) / scale, 1e-11);
            }
        }
}

TEST(DualityPairing, FacetTermMeasuresTangentialJump)
{
    auto mesh = support::single_triangle(Vec2(0.1, 0.2), Vec2(1.3, 0.4), Vec2(0.5, 1.1));
    const int k = 2;
    ElementGeometry geo(mesh, 0);
    Vec2 tau = geo.jacobian(Vec2(0.3, 0.3)) * ElementGeometry::edge_tangent(0);
    // facet function (edge 0, moment 0) has t^T P n = 1/|tau|^2 on edge 0 and zero elsewhere
    VecX p = VecX::Zero(reference_basis({SpaceKind::SigmaTN, k, false}).size());
    p(0) = tau.squaredNorm();
    auto vps = volume_points(mesh, 0, LocalLayout::make(k, false), 6);
    Vec2 t = tau.normalized();
    VecX u = support::fit_rt(vps, [t](const Vec2&) { return t; });
    auto d = duality_pairing_element(mesh, 0, k, p, u);
    // u_t jumps by one against a zero neighbour: the jump term is -|F|
    EXPECT_NEAR(-d.facet_tn, -tau.norm(), 1e-12);
}

// ---------------------------------------------------------------- element residual and tangent

namespace {

struct ElementFixture {
    Triangulation mesh;
    LocalLayout l;
    ElementOperators op;
};

ElementFixture make_element(int k, bool reduced, std::array<double, 3> tau = {0, 0, 0}, bool curved = false)
{
    ElementFixture f;
    if (curved) {
        f.mesh = build_quarter_annulus(0.5, 1.0, 0, 2);
    } else {
        f.mesh = support::single_triangle(Vec2(0.1, 0.2), Vec2(1.3, 0.4), Vec2(0.5, 1.1));
    }
    f.l = LocalLayout::make(k, reduced);
    int e = 0;
    if (curved)
        e = f.mesh.facets[f.mesh.curved_edges.begin()->first].elements[0];
    f.op = build_element_operators(f.mesh, e, f.l, tau);
    return f;
}

VecX reference_coefficients(const ElementFixture& f, double p)
{
    VecX c = VecX::Zero(f.l.total);
    c.segment(f.l.p, f.l.n_p) = constant_pressure(f.op, p);
    return c;
}

} // namespace

TEST(ElementResidual, StressFreeReference)
{
    MaterialParams m;
    m.mu = 1.4;
    for (bool reduced : {true, false}) {
        auto f = make_element(2, reduced, {1.0, 2.0, 3.0});
        VecX r = element_residual(f.op, f.l, reference_coefficients(f, m.mu), m, 0.0);
        EXPECT_LT(r.norm(), 1e-10);
    }
}

TEST(ElementResidual, ZeroPressureGivesShearModulusMoment)
{
    MaterialParams m;
    m.mu = 1.4;
    for (bool reduced : {true, false}) {
        auto f = make_element(2, reduced);
        VecX r = element_residual(f.op, f.l, VecX::Zero(f.l.total), m, 0.0);
        // independent quadrature of int mu I : dF over the F test functions (and div u / 2 I when reduced)
        VecX expected = VecX::Zero(f.l.total);
        for (const auto& vp : volume_points(f.mesh, 0, f.l, 8)) {
            for (int i = 0; i < f.l.n_F; ++i)
                expected(f.l.F + i) += vp.w * m.mu * (vp.F(i, 0) + vp.F(i, 3));
            if (reduced)
                for (int i = 0; i < f.l.n_rt(); ++i)
                    expected(f.l.rt_index(i)) += vp.w * m.mu * vp.div_u(i);
        }
        EXPECT_LT((r - expected).norm(), 1e-12);
        EXPECT_GT(r.norm(), 1e-3);
    }
}

TEST(ElementResidual, StabilizationIsFacetMassTimesMismatch)
{
    const int k = 2;
    std::array<double, 3> tau{1.0, 1.0, 1.0};
    auto f0 = make_element(k, true);
    auto f1 = make_element(k, true, tau);
    MaterialParams m;
    VecX c = support::random_state(f0.l, rng, 0.05);
    VecX diff = element_residual(f1.op, f1.l, c, m, 0.0) - element_residual(f0.op, f0.l, c, m, 0.0);

    // (u - u~)_t against (du - du~)_t with the unit tangent, on physical facets
    const auto& rt = reference_basis({SpaceKind::RT, k});
    ElementGeometry geo(f0.mesh, 0);
    auto q = edge_rule(2 * k + 4);
    VecX expected = VecX::Zero(f0.l.total);
    for (int le = 0; le < 3; ++le)
        for (std::size_t i = 0; i < q.size(); ++i) {
            double s = q.points[i].x();
            Vec2 xh = ElementGeometry::edge_point(le, s);
            Mat2 g = geo.jacobian(xh);
            Vec2 tv = g * ElementGeometry::edge_tangent(le);
            Vec2 t = tv.normalized();
            VecX row = VecX::Zero(f0.l.total);
            MatX v = rt.poly.values(xh);
            for (int a = 0; a < rt.size(); ++a)
                row(f0.l.rt_index(a)) = push_rt(g, g.determinant(), v.row(a).transpose()).dot(t);
            auto lam = eval_lambda_basis(k, le, s);
            for (int j = 0; j <= k; ++j)
                row(f0.l.lam + le * (k + 1) + j) = -push_covariant(g, lam[j]).dot(t);
            expected += q.weights[i] * tv.norm() * tau[le] * row * row.dot(c);
        }
    EXPECT_LT((diff - expected).norm(), 1e-12 * std::max(1.0, expected.norm()));
    EXPECT_GT(expected.norm(), 1e-6);
}

TEST(ElementTangent, MatchesFiniteDifferences)
{
    MaterialParams m;
    for (int k : {1, 2})
        for (bool reduced : {true, false})
            for (bool curved : {false, true}) {
                auto f = make_element(k, reduced, {0.5, 1.0, 2.0}, curved);
                for (int trial = 0; trial < 5; ++trial) {
                    VecX c = support::random_state(f.l, rng, 0.1);
                    MatX kt = element_tangent(f.op, f.l, c, m, 0.7, {false, 0.0}).tangent;
                    VecX dir = VecX::Random(f.l.total);
                    const double h = 1e-6;
                    VecX fd = (element_residual(f.op, f.l, c + h * dir, m, 0.7) -
                               element_residual(f.op, f.l, c - h * dir, m, 0.7)) /
                              (2 * h);
                    VecX an = kt * dir;
                    EXPECT_LT((fd - an).norm() / an.norm(), 1e-5) << "k=" << k << " reduced=" << reduced;
                    EXPECT_LT(relative_difference(kt, kt.transpose()), 1e-12);
                }
            }
}

TEST(ElementTangent, ReferenceFBlockIsScaledMass)
{
    MaterialParams m;
    m.mu = 1.9;
    auto f = make_element(2, false);
    MatX kt = element_tangent(f.op, f.l, VecX::Zero(f.l.total), m, 0.0, {false, 0.0}).tangent;
    MatX mass = MatX::Zero(f.l.n_F, f.l.n_F);
    for (const auto& vp : volume_points(f.mesh, 0, f.l, 8))
        mass += vp.w * vp.F * vp.F.transpose();
    EXPECT_LT(relative_difference(kt.block(f.l.F, f.l.F, f.l.n_F, f.l.n_F), m.mu * mass), 1e-12);
}

TEST(ElementTangent, PressureRegularizationBlock)
{
    MaterialParams m;
    auto f = make_element(2, true);
    VecX c = reference_coefficients(f, m.mu);
    const double eps = 1e-7 * m.mu;
    MatX k0 = element_tangent(f.op, f.l, c, m, 0.0, {true, 0.0}).tangent;
    MatX k1 = element_tangent(f.op, f.l, c, m, 0.0, {true, eps}).tangent;
    MatX block = (k1 - k0).block(f.l.p, f.l.p, f.l.n_p, f.l.n_p);
    MatX mass = MatX::Zero(f.l.n_p, f.l.n_p);
    for (const auto& vp : volume_points(f.mesh, 0, f.l, 8))
        mass += vp.w * vp.p * vp.p.transpose();
    EXPECT_LT((block + eps * mass).norm(), 1e-18);
    Eigen::SelfAdjointEigenSolver<MatX> es(k1.block(f.l.p, f.l.p, f.l.n_p, f.l.n_p));
    EXPECT_LT(es.eigenvalues().maxCoeff(), 0.0);
    // the residual is unaffected
    EXPECT_EQ((evaluate_element(f.op, f.l, c, m, 0.0, true, {true, eps}).residual -
               element_residual(f.op, f.l, c, m, 0.0))
                  .norm(),
              0.0);
}

TEST(ElementTangent, SymmetricWithShift)
{
    MaterialParams m;
    auto f = make_element(2, true, {1, 1, 1}, true);
    for (int trial = 0; trial < 5; ++trial) {
        VecX c = support::random_state(f.l, rng, 0.3, 3.0);
        MatX kt = element_tangent(f.op, f.l, c, m, 0.0, {true, 1e-7}).tangent;
        EXPECT_LT(relative_difference(kt, kt.transpose()), 1e-12);
    }
}

TEST(ElementResidual, ReportsConstitutiveDomainWithElement)
{
    MaterialParams m;
    m.kind = ConstraintKind::LogJ;
    auto f = make_element(2, false);
    VecX c = VecX::Zero(f.l.total);
    // F = I - 2 e1 e1^T via the spherical-free least squares fit of a constant matrix
    auto vps = volume_points(f.mesh, 0, f.l, 6);
    MatX a(4 * vps.size(), f.l.n_F);
    VecX b(4 * vps.size());
    Mat2 target = Vec2(-2.0, 0.0).asDiagonal();
    for (std::size_t q = 0; q < vps.size(); ++q) {
        a.middleRows(4 * q, 4) = vps[q].F.transpose();
        b.segment(4 * q, 4) = flatten(target);
    }
    c.segment(f.l.F, f.l.n_F) = a.colPivHouseholderQr().solve(b);
    try {
        element_residual(f.op, f.l, c, m, 0.0, 17);
        FAIL() << "expected a constitutive-domain error";
    } catch (const ConstitutiveDomainError& ex) {
        EXPECT_EQ(ex.element(), 17);
    }
    EXPECT_LT(element_jacobian(f.op, c).mean, 0.0);
}

// ---------------------------------------------------------------- static condensation

TEST(StaticCondensation, BlockDiagonal)
{
    MatX k = MatX::Zero(4, 4);
    k.topLeftCorner(2, 2) << 3, 1, 1, 2;
    k.bottomRightCorner(2, 2) << 5, 0, 0, 7;
    VecX b(4);
    b << 1, 2, 3, 4;
    auto c = static_condense(k, b, 2);
    EXPECT_TRUE(c.s.isApprox(k.topLeftCorner(2, 2)));
    EXPECT_TRUE(c.rhs.isApprox(b.head(2)));
}

TEST(StaticCondensation, ScalarExample)
{
    MatX k(2, 2);
    k << 4, 2, 2, 2;
    VecX b(2);
    b << 1, 1;
    auto c = static_condense(k, b, 1);
    EXPECT_DOUBLE_EQ(c.s(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(c.rhs(0), 0.0);
    VecX zero = VecX::Zero(1);
    EXPECT_DOUBLE_EQ(recover_internal(c, zero)(0), 0.5);

    auto none = static_condense(k, VecX::Zero(2), 1);
    EXPECT_DOUBLE_EQ(recover_internal(none, zero)(0), 0.0);
}

TEST(StaticCondensation, SingularInternalBlockReportsElement)
{
    MatX k = MatX::Identity(3, 3);
    k(2, 2) = 0.0;
    try {
        static_condense(k, VecX::Zero(3), 1, 5);
        FAIL() << "expected a condensation failure";
    } catch (const CondensationFailure& ex) {
        EXPECT_EQ(ex.element(), 5);
    }
}

TEST(StaticCondensation, NdtnsElementMatchesDenseSolve)
{
    MaterialParams m;
    for (bool reduced : {true, false}) {
        auto f = make_element(2, reduced, {1.0, 1.0, 1.0});
        VecX c = reference_coefficients(f, m.mu);
        // a larger pressure regularization keeps the dense reference solve well conditioned
        MatX kt = element_tangent(f.op, f.l, c, m, 0.0, {true, 1e-2}).tangent;
        // clamp the coupling DoFs of local edge 0 to remove rigid motions
        std::vector<int> keep;
        for (int i = 0; i < f.l.total; ++i) {
            bool edge0 = (i >= f.l.rt_facet && i < f.l.rt_facet + 3) || (i >= f.l.lam && i < f.l.lam + 3);
            if (!edge0)
                keep.push_back(i);
        }
        const int n = static_cast<int>(keep.size()), nc = f.l.coupling - 6;
        MatX k(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                k(i, j) = kt(keep[i], keep[j]);
        VecX b = VecX::Random(n);
        VecX direct = k.fullPivLu().solve(b);
        ASSERT_LT((k * direct - b).norm(), 1e-8 * b.norm());
        auto cs = static_condense(k, b, nc);
        VecX xc = cs.s.fullPivLu().solve(cs.rhs);
        VecX xi = recover_internal(cs, xc);
        VecX x(n);
        x << xc, xi;
        EXPECT_LT((x - direct).norm() / direct.norm(), 1e-10);
        EXPECT_LT((k * x - b).norm() / b.norm(), 1e-10);
        EXPECT_LT(relative_difference(cs.s, cs.s.transpose()), 1e-10);
    }
}

// ---------------------------------------------------------------- global assembly

namespace {

// Every element keeps at most one traction edge: with tau = 0 an element with two free edges
// is only eps_lambda-definite at the stress-free reference state.
BoundaryConditions two_element_conditions(double traction)
{
    BoundaryConditions bc;
    bc.normal_dirichlet = {"left", "top"};
    bc.tangential_dirichlet = {"left", "top"};
    bc.traction["right"] = [traction](const Vec2&) { return Vec2(0.3 * traction, traction); };
    bc.traction["bottom"] = [traction](const Vec2&) { return Vec2(0.0, -0.5 * traction); };
    return bc;
}

NewtonConfig tight_newton()
{
    NewtonConfig cfg;
    cfg.tol_residual = 1e-11;
    return cfg;
}

} // namespace

TEST(GlobalAssembly, ReferenceStateHasZeroResidual)
{
    auto mesh = build_quarter_annulus(0.5, 1.0, 0, 2);
    BoundaryConditions bc;
    bc.normal_dirichlet = {"outer", "sym_x", "sym_y"};
    bc.tangential_dirichlet = {"outer"};
    bc.displacement = [](const Vec2& x) { return x; };
    NdtnsProblem prob(mesh, {}, bc);
    auto s = prob.initial_state();
    NewtonConfig cfg;
    EXPECT_LT(prob.assemble(s, 0.0, cfg), 1e-10);
    EXPECT_TRUE(prob.dirichlet_satisfied(s, 0.0));
    EXPECT_FALSE(prob.dirichlet_satisfied(s, 0.5));
}

TEST(GlobalAssembly, SymmetricWithFacetSparsity)
{
    auto mesh = build_quarter_annulus(0.5, 1.0, 0, 2);
    NdtnsProblem prob(mesh, {}, {}, constant_tau(1.0));
    auto s = prob.initial_state();
    NewtonConfig cfg;
    prob.assemble(s, 0.0, cfg);
    MatX a = MatX(prob.global_matrix());
    EXPECT_LT(relative_difference(a, a.transpose()), 1e-12);
    const auto& dm = prob.dofmap();
    std::vector<std::set<int>> elements_of(dm.num_global);
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (int g : dm.global[e])
            elements_of[g].insert(e);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            if (a(i, j) != 0.0) {
                bool shared = false;
                for (int e : elements_of[i])
                    shared = shared || elements_of[j].count(e);
                EXPECT_TRUE(shared) << i << ' ' << j;
            }
}

TEST(GlobalAssembly, FullyClampedElementHasEmptySystem)
{
    auto mesh = support::single_triangle(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1));
    BoundaryConditions bc;
    bc.normal_dirichlet = {"bottom", "diag", "left"};
    bc.tangential_dirichlet = {"bottom", "diag", "left"};
    bc.displacement = [](const Vec2& x) { return Vec2(0.01 * x.y(), 0.0); };
    NdtnsProblem prob(mesh, {}, bc);
    auto s = prob.initial_state();
    NewtonConfig cfg;
    prob.assemble(s, 1.0, cfg);
    EXPECT_EQ(prob.free_matrix().rows(), 0);
    auto res = quasi_newton(prob, s, 1.0, cfg);
    EXPECT_TRUE(res.converged);
    EXPECT_TRUE(prob.dirichlet_satisfied(s, 1.0));
}

TEST(GlobalAssembly, HybridizedMatchesMonolithic)
{
    auto mesh = support::two_triangles();
    for (bool reduced : {false, true}) {
        NdtnsOptions opt;
        opt.reduced = reduced;
        auto bc = two_element_conditions(0.02);
        NdtnsProblem prob(mesh, opt, bc);
        auto s = prob.initial_state();
        auto res = quasi_newton(prob, s, 1.0, tight_newton());
        ASSERT_TRUE(res.converged) << res.failure;
        auto mono = solve_monolithic(mesh, opt, bc, 1.0);
        ASSERT_TRUE(mono.converged);
        const auto& l = prob.layout();
        double diff = 0.0, scale = 0.0;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            VecX h = prob.local_coefficients(s, e), m = mono.local[e];
            // compare everything but the facet multiplier, which the monolithic form does not carry
            h.segment(l.lam, l.n_lam).setZero();
            m.segment(l.lam, l.n_lam).setZero();
            diff = std::max(diff, (h - m).cwiseAbs().maxCoeff());
            scale = std::max(scale, h.cwiseAbs().maxCoeff());
        }
        EXPECT_LT(diff, 1e-9 * std::max(1.0, scale)) << "reduced=" << reduced;
    }
}

TEST(GlobalAssembly, ConvergedSolutionHasNoStressJump)
{
    auto mesh = uniform_refine(support::two_triangles());
    NdtnsProblem prob(mesh, {}, two_element_conditions(0.05));
    auto s = prob.initial_state();
    auto res = quasi_newton(prob, s, 1.0, tight_newton());
    ASSERT_TRUE(res.converged) << res.failure;
    VecX jump = prob.tn_jump_moments(s);
    EXPECT_GT(jump.size(), 0);
    EXPECT_LT(jump.cwiseAbs().maxCoeff(), 1e-9);
}
