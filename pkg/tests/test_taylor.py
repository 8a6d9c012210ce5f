import math

import numpy as np
import pytest

from tlid.errors import DomainError, EmptyInputError, NoSolutionError, SingularMeanError, UnsupportedOperationError
from tlid.families import CPGeo, FamilyKind, Gamma, NegBin, PolyaAeppli, TweBLE
from tlid.mcstats import fit_taylor
from tlid.taylor import (
    Branch, FamilyTemplate, b_curve, critical_points, iid_summand, polya_aeppli_unit_alpha_comparison,
    rescale, rescaled_llt, solve_iso_b, tl_coefficient_iid, tl_coefficient_thinned, tl_exponent, tl_report,
)

GOLDEN_P0 = (3.0 - math.sqrt(5.0)) / 2.0


def _grid(kind, n=200, seed=3):
    """Admissible parameter points away from mu = 1."""
    gen = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        if kind is FamilyKind.TWEBLE:
            alpha = gen.uniform(-10.0, 2.0)
            if abs(alpha - 1.0) < 1e-3:
                continue
            theta = gen.uniform(0.05, 5.0) * (1.0 if alpha < 1.0 else -1.0)
            fam = TweBLE(alpha, theta)
        elif kind is FamilyKind.GAMMA:
            fam = Gamma(gen.uniform(0.05, 10.0), gen.uniform(0.05, 10.0))
        else:
            cls = {FamilyKind.NEGBIN: NegBin, FamilyKind.CPGEO: CPGeo, FamilyKind.POLYA_AEPPLI: PolyaAeppli}[kind]
            fam = cls(gen.uniform(0.05, 10.0), gen.uniform(0.02, 0.98))
        if abs(math.log(fam.moments().mu)) > 1e-2:
            out.append(fam)
    return out


class TestExponent:
    @pytest.mark.parametrize("kind", list(FamilyKind))
    def test_closed_form_matches_log_ratio(self, kind):
        for fam in _grid(kind):
            m = fam.moments()
            generic = math.log(m.sigma2) / math.log(m.mu)
            assert abs(tl_exponent(fam) - generic) <= 1e-12 * max(1.0, abs(generic)), fam.label

    @pytest.mark.parametrize("fam, b", [
        (TweBLE(0.0, 1.0), 2.0),
        (TweBLE(2.0, -1.0), 0.0),
        (TweBLE(-math.inf, 1.0), 1.0),
        (Gamma(2.0, 2.0), 1.5),
    ])
    def test_named_values(self, fam, b):
        assert tl_exponent(fam) == pytest.approx(b, abs=1e-12)

    def test_negbin_golden_zero(self):
        assert tl_exponent(NegBin(1.0, GOLDEN_P0)) == pytest.approx(0.0, abs=1e-10)

    def test_cpgeo_zero(self):
        fam = CPGeo(1.0, 1.0 - 1.0 / math.sqrt(2.0))
        assert fam.moments().sigma2 == pytest.approx(1.0, abs=1e-10)
        assert tl_exponent(fam) == pytest.approx(0.0, abs=1e-10)

    def test_polya_aeppli_zero(self):
        q0 = (math.sqrt(4.25) - 0.5) / 2.0
        fam = PolyaAeppli(0.5, 1.0 - q0)
        assert fam.moments().sigma2 == pytest.approx(1.0, abs=1e-10)
        assert tl_exponent(fam) == pytest.approx(0.0, abs=1e-10)

    def test_singular_mean(self):
        with pytest.raises(SingularMeanError):
            tl_exponent(NegBin(1.0, 0.5))

    def test_gamma_unit_scale_is_equidispersed(self):
        assert tl_exponent(Gamma(1.0, 1.0)) == 1.0
        for alpha in (0.1, 0.5, 3.0, 40.0):
            assert tl_exponent(Gamma(alpha, 1.0)) == pytest.approx(1.0, abs=1e-12)

    def test_gamma_unit_shape_is_fixed_point(self):
        for beta in (0.2, 0.7, 3.0, 11.0):
            assert tl_exponent(Gamma(1.0, beta)) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("free,fixed,b", [("alpha", {"beta": 0.9999999999999999}, 1.0),
                                              ("beta", {"alpha": 1.0000000000000002}, 2.0)])
    def test_gamma_fixed_point_survives_rounding(self, free, fixed, b):
        template = FamilyTemplate.of("gamma", free, **fixed)
        assert template.constant_b() == b
        assert critical_points(template) == {}
        assert solve_iso_b(template, b).fixed_point


class TestCriticalPoints:
    def test_negbin_unit_alpha(self):
        crit = critical_points(FamilyTemplate.of("negbin", "p", alpha=1.0))
        assert crit["p_c"] == pytest.approx(0.5)
        assert crit["p_0"] == pytest.approx(GOLDEN_P0, abs=1e-12)
        assert crit["b_min"] == 2.0
        assert crit["b_min_attained"] is False

    def test_negbin_b_min_attained_above_unit_alpha(self):
        template = FamilyTemplate.of("negbin", "p", alpha=4.0)
        crit = critical_points(template)
        assert crit["b_min_attained"] is True
        assert 1.0 < crit["b_min"] < 2.0
        b_at = tl_exponent(template.family_at(crit["p_bmin"]))
        assert b_at == pytest.approx(crit["b_min"], abs=1e-8)
        # a minimum: neighbours on the upper branch are not lower
        for dp in (-1e-3, 1e-3):
            assert tl_exponent(template.family_at(crit["p_bmin"] + dp)) >= crit["b_min"] - 1e-12

    def test_cpgeo_unit_alpha(self):
        crit = critical_points(FamilyTemplate.of("cpgeo", "q", alpha=1.0))
        assert crit["q_c"] == pytest.approx(0.5)
        assert crit["q_0"] == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_gamma_scale_two(self):
        crit = critical_points(FamilyTemplate.of("gamma", "alpha", beta=2.0))
        assert crit["alpha_c"] == pytest.approx(0.5)
        assert crit["alpha_0"] == pytest.approx(0.25)

    @pytest.mark.parametrize("template", [
        FamilyTemplate.of("negbin", "q", alpha=0.7),
        FamilyTemplate.of("cpgeo", "q", alpha=2.5),
        FamilyTemplate.of("polya-aeppli", "q", alpha=0.5),
        FamilyTemplate.of("negbin", "alpha", p=0.3),
        FamilyTemplate.of("cpgeo", "alpha", p=0.6),
        FamilyTemplate.of("polya-aeppli", "alpha", p=0.4),
        FamilyTemplate.of("gamma", "alpha", beta=3.0),
        FamilyTemplate.of("gamma", "beta", alpha=2.0),
    ], ids=lambda t: t.label)
    def test_defining_equations(self, template):
        crit = critical_points(template)
        free = template.free
        assert math.log(template.family_at(crit[f"{free}_c"]).moments().mu) == pytest.approx(0.0, abs=1e-10)
        assert math.log(template.family_at(crit[f"{free}_0"]).moments().sigma2) == pytest.approx(0.0, abs=1e-10)

    def test_polya_aeppli_has_no_divergence_for_large_alpha(self):
        assert critical_points(FamilyTemplate.of("polya-aeppli", "q", alpha=1.5)) == {}


class TestTemplate:
    def test_fixed_parameter_count(self):
        with pytest.raises(DomainError, match="fixed"):
            FamilyTemplate.of("negbin", "p")

    def test_unknown_free_parameter(self):
        with pytest.raises(DomainError):
            FamilyTemplate.of("gamma", "theta", alpha=1.0)

    def test_tweble_alpha_sweep_flips_theta_sign(self):
        template = FamilyTemplate.of("tweble", "alpha", theta=2.0)
        assert template.family_at(0.5).theta == 2.0
        assert template.family_at(1.5).theta == -2.0


class TestCurve:
    def test_tweble_hyperbola(self):
        curve = b_curve(FamilyTemplate.of("tweble", "alpha", theta=1.0), [-2.0, -1.0, 0.0, 0.5])
        np.testing.assert_allclose([r.b for r in curve.rows], [4 / 3, 3 / 2, 2, 3], atol=1e-12)

    def test_tweble_pole_at_unit_alpha(self):
        curve = b_curve(FamilyTemplate.of("tweble", "alpha", theta=1.0), [0.5, 0.9, 1.5, 2.0])
        (sing,) = curve.singularities
        assert sing.value == 1.0
        assert (sing.left_sign, sing.right_sign) == (1, -1)
        assert [r.branch for r in curve.rows] == [Branch.LOWER, Branch.LOWER, Branch.UPPER, Branch.UPPER]

    def test_negbin_sign_pattern(self):
        curve = b_curve(FamilyTemplate.of("negbin", "p", alpha=1.0), [0.1, GOLDEN_P0, 0.45])
        b = [r.b for r in curve.rows]
        assert b[0] > 0.0
        assert b[1] == pytest.approx(0.0, abs=1e-10)
        assert b[2] < 0.0

    def test_negbin_singular_point_flagged(self):
        curve = b_curve(FamilyTemplate.of("negbin", "p", alpha=1.0), [0.4, 0.5, 0.6])
        middle = curve.rows[1]
        assert middle.branch is Branch.SINGULAR
        assert middle.excluded and math.isnan(middle.b)
        (sing,) = curve.singularities
        assert sing.name == "p_c" and sing.value == pytest.approx(0.5)
        assert sing.left_sign == -1 and sing.right_sign == 1

    def test_gamma_unit_scale_constant(self):
        curve = b_curve(FamilyTemplate.of("gamma", "alpha", beta=1.0), np.linspace(0.2, 5.0, 25))
        assert all(r.branch is Branch.FIXED_POINT for r in curve.rows if not r.excluded)
        np.testing.assert_allclose([r.b for r in curve.rows if not r.excluded], 1.0, atol=1e-12)

    def test_polya_aeppli_unit_alpha_limits(self):
        curve = b_curve(FamilyTemplate.of("polya-aeppli", "q", alpha=1.0), [1e-6, 1e-12, 1.0 - 1e-6])
        near_zero, nearer_zero, near_one = (r.b for r in curve.rows)
        # b - 2 decays like log 2 / log(1/q)
        assert 2.0 < nearer_zero < near_zero < 2.06
        assert near_one == pytest.approx(3.0, abs=1e-4)

    def test_empty_sweep(self):
        with pytest.raises(EmptyInputError):
            b_curve(FamilyTemplate.of("negbin", "p", alpha=1.0), [])


class TestExclusions:
    def test_tweble_never_in_unit_interval(self):
        template = FamilyTemplate.of("tweble", "alpha", theta=1.0)
        alphas = np.concatenate([np.linspace(-40.0, 0.999, 4000), np.linspace(1.001, 2.0, 1000)])
        b = np.array([tl_exponent(template.family_at(a)) for a in alphas])
        assert not np.any((b > 0.0) & (b < 1.0))

    def test_negbin_unit_alpha_never_between_one_and_two(self):
        p = np.linspace(0.001, 0.999, 5000)
        p = p[np.abs(p - 0.5) > 1e-9]
        b = np.array([tl_exponent(NegBin(1.0, x)) for x in p])
        assert not np.any((b > 1.0) & (b < 2.0))

    @pytest.mark.parametrize("alpha", [0.3, 1.0, 4.0])
    def test_cpgeo_never_between_one_and_two(self, alpha):
        template = FamilyTemplate.of("cpgeo", "q", alpha=alpha)
        q_c = critical_points(template)["q_c"]
        q = np.linspace(0.001, 0.999, 5000)
        q = q[np.abs(q - q_c) > 1e-9]
        b = np.array([tl_exponent(template.family_at(x)) for x in q])
        assert not np.any((b > 1.0) & (b < 2.0))

    def test_iso_b_reports_excluded_ranges(self):
        with pytest.raises(NoSolutionError) as exc:
            solve_iso_b(FamilyTemplate.of("cpgeo", "q", alpha=1.0), 1.5)
        assert exc.value.excluded == (1.0, 2.0)

        with pytest.raises(NoSolutionError) as exc:
            solve_iso_b(FamilyTemplate.of("negbin", "p", alpha=1.0), 1.5)
        assert exc.value.excluded == (1.0, 2.0)

        with pytest.raises(NoSolutionError) as exc:
            solve_iso_b(FamilyTemplate.of("tweble", "alpha", theta=1.0), 0.5)
        assert exc.value.excluded == (0.0, 1.0)
        assert exc.value.code == "NO_SOLUTION"

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_negbin_convexity(self, alpha):
        p = np.linspace(0.05, 0.95, 181)
        m = [NegBin(alpha, x).moments() for x in p]
        x = np.log([v.mu for v in m])
        y = np.log([v.sigma2 for v in m])
        slopes = np.diff(y) / np.diff(x)
        second = np.diff(slopes) / (x[2:] - x[:-2])
        assert np.all(second > 0.0)

    def test_sign_structure(self):
        template = FamilyTemplate.of("negbin", "p", alpha=2.0)
        crit = critical_points(template)
        p0 = crit["p_0"]
        # b < 0 only happens on the lower branch
        for p in np.linspace(0.02, crit["p_c"] - 0.01, 97):
            fam = NegBin(2.0, p)
            if abs(math.log(fam.moments().mu)) < 1e-9:
                continue
            assert (tl_exponent(fam) < 0.0) == (p > p0)

        template = FamilyTemplate.of("cpgeo", "q", alpha=0.8)
        q_c = critical_points(template)["q_c"]
        for q in np.linspace(0.02, 0.98, 97):
            if abs(q - q_c) < 1e-9:
                continue
            assert (tl_exponent(template.family_at(q)) > 2.0) == (q < q_c)


class TestIsoB:
    def test_negbin_golden(self):
        sol = solve_iso_b(FamilyTemplate.of("negbin", "p", alpha=1.0), 0.0)
        assert sol.values == pytest.approx((GOLDEN_P0,), abs=1e-10)

    def test_gamma_fixed_point(self):
        sol = solve_iso_b(FamilyTemplate.of("gamma", "alpha", beta=1.0), 1.0)
        assert sol.fixed_point and sol.values == ()

    def test_solution_hits_target(self):
        template = FamilyTemplate.of("polya-aeppli", "q", alpha=0.5)
        sol = solve_iso_b(template, 4.0)
        assert sol.values
        for q in sol.values:
            assert tl_exponent(template.family_at(q)) == pytest.approx(4.0, abs=1e-10)

    @pytest.mark.parametrize("alpha,b,p", [
        (3.0, 40.0, 0.251394617),
        (1.0, -200.0, 0.499140015),
        (0.3, 40.0, 0.775969514),
    ])
    def test_targets_close_to_divergence(self, alpha, b, p):
        template = FamilyTemplate.of("negbin", "p", alpha=alpha)
        sol = solve_iso_b(template, b)
        assert any(v == pytest.approx(p, abs=1e-8) for v in sol.values)
        for v in sol.values:
            assert tl_exponent(template.family_at(v)) == pytest.approx(b, abs=1e-10)

    def test_large_target_on_tweble_alpha(self):
        template = FamilyTemplate.of("tweble", "alpha", theta=1.0)
        sol = solve_iso_b(template, 100.0)
        assert sol.values == pytest.approx((98.0 / 99.0,), abs=1e-12)

    def test_attained_b_min(self):
        template = FamilyTemplate.of("negbin", "p", alpha=3.0)
        crit = critical_points(template)
        sol = solve_iso_b(template, crit["b_min"], branch=Branch.UPPER)
        assert any(v == pytest.approx(crit["p_bmin"], abs=1e-6) for v in sol.values)

    def test_unreached_b_min(self):
        with pytest.raises(NoSolutionError, match="infimum") as err:
            solve_iso_b(FamilyTemplate.of("negbin", "p", alpha=1.0), 2.0)
        assert err.value.excluded == (1.0, 2.0)

    def test_branch_restriction(self):
        template = FamilyTemplate.of("negbin", "p", alpha=1.0)
        sol = solve_iso_b(template, 3.0, branch=Branch.UPPER)
        assert all(p > 0.5 for p in sol.values)
        with pytest.raises(NoSolutionError):
            solve_iso_b(template, 3.0, branch=Branch.LOWER)


class TestReport:
    def test_pointwise_intercept_is_zero(self):
        report = tl_report(NegBin(2.0, 0.5))
        assert report.a == 0.0
        assert report.b == pytest.approx(2.0)
        assert math.log(report.sigma2) == pytest.approx(report.b * math.log(report.mu))

    def test_singular_report(self):
        report = tl_report(NegBin(1.0, 0.5))
        assert report.branch is Branch.SINGULAR
        assert math.isnan(report.b)


class TestRescale:
    def test_identity(self):
        law = rescale(NegBin(2.0, 0.3), 1.0)
        assert law.a == 0.0
        assert (law.mu, law.sigma2) == pytest.approx((NegBin(2.0, 0.3).moments().mu, NegBin(2.0, 0.3).moments().sigma2))

    def test_gamma_family(self):
        law = rescale(Gamma(2.0, 1.0), 2.0)
        assert law.family == Gamma(1.0, 2.0)
        assert law.mu == pytest.approx(2.0)
        assert law.sigma2 == pytest.approx(4.0)
        assert law.family.moments().sigma2 == pytest.approx(law.sigma2)

    def test_negbin_by_e(self):
        law = rescale(NegBin(1.0, 0.5), math.e)
        assert law.a == pytest.approx(1.0)
        assert law.sigma2 == pytest.approx(2.0 * math.e)
        assert law.support_step == pytest.approx(math.e)

    def test_non_positive_factor(self):
        with pytest.raises(DomainError):
            rescale(Gamma(1.0, 1.0), 0.0)

    def test_rescaled_llt_preserves_mean(self):
        fam, A, h = PolyaAeppli(1.3, 0.4), 3.0, 1e-6
        slope = (rescaled_llt(fam, A, h) - rescaled_llt(fam, A, -h)) / (2 * h)
        assert slope == pytest.approx(fam.moments().mu, rel=1e-6)

    def test_fit_on_rescaled_tweble_sweep(self):
        A, alpha = 2.5, 0.3
        thetas = np.linspace(0.2, 3.0, 15)
        points = []
        for theta in thetas:
            law = rescale(TweBLE(alpha, theta), A)
            points.append((law.mu, law.sigma2))
        fit = fit_taylor(points)
        assert fit.a_hat == pytest.approx(math.log(A), abs=1e-10)
        assert fit.b_hat == pytest.approx((2 - alpha) / (1 - alpha), abs=1e-10)

    @pytest.mark.parametrize("template,values", [
        (FamilyTemplate.of("negbin", "p", alpha=1.5), np.linspace(0.05, 0.95, 12)),
        (FamilyTemplate.of("gamma", "alpha", beta=3.0), np.geomspace(0.1, 10.0, 12)),
    ])
    def test_fit_shift_under_rescale(self, template, values):
        A = 0.4
        base = [template.family_at(v).moments() for v in values]
        scaled = [rescale(template.family_at(v), A).moments for v in values]
        fit = fit_taylor([(m.mu, m.sigma2) for m in base])
        fit_scaled = fit_taylor([(m.mu, m.sigma2) for m in scaled])
        assert fit_scaled.b_hat == pytest.approx(fit.b_hat, abs=1e-10)
        assert fit_scaled.a_hat - fit.a_hat == pytest.approx(math.log(A), abs=1e-10)


class TestIid:
    def test_negbin_halves(self):
        part = iid_summand(NegBin(2.0, 0.5), 2)
        assert part == NegBin(1.0, 0.5)
        assert part.moments().mu == pytest.approx(1.0)
        assert part.moments().sigma2 == pytest.approx(2.0)

    def test_gamma_thirds(self):
        assert iid_summand(Gamma(3.0, 1.0), 3) == Gamma(1.0, 1.0)

    def test_unit_n_is_identity(self):
        fam = CPGeo(1.0, 0.4)
        assert iid_summand(fam, 1) is fam

    def test_unsupported_family(self):
        with pytest.raises(UnsupportedOperationError):
            iid_summand(CPGeo(1.0, 0.4), 2)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_negbin_convolution_power(self, n):
        fam = NegBin(1.7, 0.45)
        part = iid_summand(fam, n)
        conv = np.array([1.0])
        for _ in range(n):
            conv = np.convolve(conv, part.pmf_array(80))[:80]
        np.testing.assert_allclose(conv, fam.pmf_array(80), atol=1e-10)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_coefficient_identity(self, n):
        fam = NegBin(1.7, 0.45)
        part = iid_summand(fam, n)
        b = tl_exponent(fam)
        A = fam.moments().sigma2 / fam.moments().mu ** b
        m = part.moments()
        assert m.sigma2 / m.mu ** b == pytest.approx(tl_coefficient_iid(A, b, n), rel=1e-12)


def test_thinned_coefficient_identity():
    # continuous scaling of a gamma law: X = cX' + X_c
    fam, c = Gamma(2.0, 3.0), 0.4
    m = fam.moments()
    b = tl_exponent(fam)
    A = m.sigma2 / m.mu ** b
    mu_c, var_c = (1 - c) * m.mu, (1 - c * c) * m.sigma2
    assert var_c / mu_c ** b == pytest.approx(tl_coefficient_thinned(A, b, c), rel=1e-12)


def test_polya_aeppli_unit_alpha_comparison():
    rows = polya_aeppli_unit_alpha_comparison([0.1, 0.5, 0.9])
    for row in rows:
        assert row.b_formula == pytest.approx(tl_exponent(PolyaAeppli(1.0, 1.0 - row.q)))
        assert row.b_prose == pytest.approx(math.log(2.0 - row.q))
        assert abs(row.difference) > 0.5
