"""Truncated limit series: cut selection, sampling, and term diagnostics.

The truncation indices are frozen from an exhaustive norm-tail oracle; the
heavy-tail lemma diagnostics are pinned against closed-form exceedance
probabilities for the log-Cauchy ray sampler.
"""

import csv

import numpy as np
import pytest

from stablemix import laws, matalg, series
from stablemix.ecf import default_grid, estimate_ecf, sup_distance
from stablemix.errors import InvalidInputError

JORDAN = np.array([[0.5, 10.0], [0.0, 0.5]])

# Frozen: E log+ |C| for standard Cauchy C, by scipy quadrature (equals
# (2/pi) * Catalan's constant).
CAUCHY_LOG_MOMENT = 0.5831218080616385

# Frozen: 3 * hoeffding radius at 1e5 samples, delta 1e-3.
THRESHOLD_1E5 = 0.03698867992666911


def rotation_half():
    c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
    return 0.5 * np.array([[c, -s], [s, c]])


def exhaustive_r(P, tol, H=4000):
    """Oracle: smallest r whose literal norm tail is at most tol."""
    norms = [1.0]
    M = np.eye(len(P))
    for _ in range(H):
        M = M @ P
        norms.append(np.linalg.svd(M, compute_uv=False)[0])
    tails = np.cumsum(np.array(norms)[::-1])[::-1]
    return int(next(r for r in range(H) if tails[r + 1] <= tol))


class TestTruncationIndex:
    def test_scalar_frozen(self):
        plan = series.truncation_index(np.array([[0.5]]), 2.0**-10)
        assert plan.r == 10
        assert plan.tail_norm_bound == pytest.approx(2.0**-10, rel=1e-9)

    def test_jordan_frozen(self):
        plan = series.truncation_index(JORDAN, 1e-6)
        assert plan.r == 30

    def test_slow_diagonal_frozen(self):
        plan = series.truncation_index(np.diag([0.9, 0.1]), 1e-4)
        assert plan.r == 109

    def test_zero_matrix(self):
        plan = series.truncation_index(np.zeros((2, 2)), 1e-6)
        assert plan.r == 0

    @pytest.mark.parametrize(
        "P,tol",
        [
            (np.array([[0.5]]), 2.0**-10),
            (JORDAN, 1e-6),
            (np.diag([0.9, 0.1]), 1e-4),
        ],
    )
    def test_matches_exhaustive_oracle(self, P, tol):
        assert series.truncation_index(P, tol).r == exhaustive_r(P, tol)

    def test_tighter_tolerance_never_smaller_r(self):
        rs = [series.truncation_index(JORDAN, t).r for t in (1e-2, 1e-4, 1e-6, 1e-8)]
        assert rs == sorted(rs)

    def test_bound_actually_below_tol(self):
        plan = series.truncation_index(JORDAN, 1e-6)
        assert plan.tail_norm_bound <= 1e-6
        # And r is minimal: one step earlier the certified bound exceeds tol.
        assert series.recompute_tail_bound(JORDAN, plan.certificate, plan.r - 1) > 1e-6

    def test_rejects_bad_tol(self):
        with pytest.raises(InvalidInputError):
            series.truncation_index(JORDAN, 0.0)


class TestTruncationPlan:
    def test_json_roundtrip(self):
        plan = series.truncation_index(JORDAN, 1e-6)
        back = series.TruncationPlan.from_json(plan.to_json())
        assert back == plan

    def test_recompute_consistency(self):
        plan = series.truncation_index(JORDAN, 1e-6)
        again = series.recompute_tail_bound(JORDAN, plan.certificate, plan.r)
        assert again == pytest.approx(plan.tail_norm_bound, rel=1e-12)

    def test_rejects_negative_r(self):
        cert = matalg.gelfand_index(JORDAN)
        with pytest.raises(InvalidInputError):
            series.TruncationPlan(-1, 0.5, cert)


class TestSeriesSampling:
    def test_normal_series_matches_cf(self):
        P = rotation_half()
        law = laws.NormalLaw(np.eye(2))
        plan = series.truncation_index(P, 1e-4)
        rng = np.random.default_rng(12)
        samples = series.sample_limit_series_many(P, law, plan, rng, 100_000)
        grid = default_grid(2)
        est = estimate_ecf(samples, grid)
        ref = laws.series_cf_values(law, P, plan.r, grid.points)
        assert sup_distance(est, ref) <= THRESHOLD_1E5

    def test_cauchy_series_matches_cf(self):
        P = rotation_half()
        law = laws.CauchyLaw(2)
        plan = series.truncation_index(P, 1e-4)
        rng = np.random.default_rng(13)
        samples = series.sample_limit_series_many(P, law, plan, rng, 100_000)
        est = estimate_ecf(samples, default_grid(2))
        ref = laws.series_cf_values(law, P, plan.r, default_grid(2).points)
        assert sup_distance(est, ref) <= THRESHOLD_1E5

    def test_single_draw_shape(self):
        P = rotation_half()
        plan = series.truncation_index(P, 1e-3)
        z = series.sample_limit_series(
            P, laws.NormalLaw(np.eye(2)), plan, np.random.default_rng(0)
        )
        assert z.shape == (2,)

    def test_dimension_mismatch_rejected(self):
        plan = series.truncation_index(np.array([[0.5]]), 1e-3)
        with pytest.raises(InvalidInputError):
            series.sample_limit_series_many(
                np.array([[0.5]]), laws.NormalLaw(np.eye(2)), plan,
                np.random.default_rng(0), 4,
            )


class TestSeriesEnsemble:
    def test_sample_addressing_is_stable(self):
        # Sample i depends only on (seed, stream, i): growing the ensemble
        # must not move earlier samples.
        P = rotation_half()
        law = laws.NormalLaw(np.eye(2))
        small = series.series_ensemble(P, law, 6, seed=3, count=500)
        large = series.series_ensemble(P, law, 6, seed=3, count=9000)
        assert np.array_equal(small, large[:500])

    def test_worker_invariance_bitwise(self):
        P = rotation_half()
        law = laws.CauchyLaw(2)
        a = series.series_ensemble(P, law, 8, seed=5, count=10_000, workers=1)
        b = series.series_ensemble(P, law, 8, seed=5, count=10_000, workers=8)
        assert np.array_equal(a, b)

    def test_seed_and_stream_move_samples(self):
        P = rotation_half()
        law = laws.NormalLaw(np.eye(2))
        a = series.series_ensemble(P, law, 6, seed=3, count=100)
        b = series.series_ensemble(P, law, 6, seed=4, count=100)
        c = series.series_ensemble(P, law, 6, seed=3, count=100, stream=4)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestCouplingBound:
    def test_extension_bounded_by_tail_difference(self):
        # Same increments, two cuts: the extension is bounded by the largest
        # increment norm times the certified tail of the shorter cut.
        P = JORDAN
        law = laws.NormalLaw(np.eye(2))
        cert, norms = matalg.decay_certificate(P)
        r, k = 16, 30
        powers = matalg.power_sequence(P, r + k)
        rng = np.random.default_rng(21)
        z = law.sample_many(rng, r + k + 1)
        terms = np.einsum("jde,je->jd", powers, z)
        s_short = terms[: r + 1].sum(axis=0)
        s_long = terms.sum(axis=0)
        gap = np.linalg.norm(s_long - s_short)
        biggest = np.linalg.norm(z[r + 1 :], axis=1).max()
        assert gap <= biggest * matalg.tail_bound(norms, cert, r) + 1e-12


class TestLogMoment:
    def test_unit_ball_gives_zero(self):
        assert series.log_moment_estimate(np.full((10, 2), 0.1)) == 0.0

    def test_known_value(self):
        samples = np.full((5, 1), np.e**2)
        assert series.log_moment_estimate(samples) == pytest.approx(2.0, rel=1e-12)

    def test_cauchy_constant(self):
        # E log+ |C| = (2/pi) * Catalan, frozen from quadrature; one million
        # draws put the sample mean within five standard errors.
        rng = np.random.default_rng(1234)
        x = rng.standard_cauchy(1_000_000)
        est = series.log_moment_estimate(x[:, None])
        assert est == pytest.approx(CAUCHY_LOG_MOMENT, abs=0.005)

    def test_quadrature_cross_check(self):
        from scipy.integrate import quad

        val, err = quad(lambda x: 2.0 / np.pi * np.log(x) / (1.0 + x * x), 1.0, np.inf)
        assert err < 1e-8
        assert val == pytest.approx(CAUCHY_LOG_MOMENT, abs=1e-9)


class TestLemmaDiagnostics:
    def test_bounded_law_never_exceeds(self):
        pool = 0.5 * np.array([[1.0, 0.0], [0.0, 1.0], [-0.6, 0.8]])
        law = laws.EmpiricalLaw(pool)
        diag = series.lemma_diagnostics(0.5 * np.eye(2), law, J=32, n_paths=400, seed=6)
        assert diag.late_exceedance_fraction == 0.0
        assert (diag.exceedance_count == 0).all()
        assert (diag.last_exceedance_index == -1).all()
        assert (diag.per_index_exceedance_freq == 0.0).all()

    def test_light_tail_late_fraction_decays(self):
        law = laws.NormalLaw(np.eye(1))
        P = np.array([[0.5]])
        late = [
            series.lemma_diagnostics(P, law, J=J, n_paths=4000, seed=7).late_exceedance_fraction
            for J in (8, 32)
        ]
        assert late[1] <= late[0]
        assert late[1] <= 0.01

    def test_heavy_tail_closed_form_frozen(self):
        # exp(Cauchy) * 2^-j exceeds 1 iff the Cauchy variate exceeds
        # j ln 2; at j = 64 that probability is 0.5 - arctan(64 ln 2)/pi.
        J, n_paths = 64, 20_000
        p_closed = 0.5 - np.arctan(J * np.log(2.0)) / np.pi
        diag = series.lemma_diagnostics(
            np.array([[0.5]]), laws.LogCauchyRay(1), J=J, n_paths=n_paths, seed=8
        )
        freq = diag.per_index_exceedance_freq[J]
        sd = np.sqrt(p_closed * (1 - p_closed) / n_paths)
        assert abs(freq - p_closed) <= 5 * sd
        # Late exceedances persist: the limiting fraction is 1 - e^{-1/pi}.
        assert abs(diag.late_exceedance_fraction - 0.27262265070478353) <= 0.02

    def test_reports_structure(self):
        diag = series.lemma_diagnostics(
            np.array([[0.5]]), laws.NormalLaw(np.eye(1)), J=16, n_paths=100,
            seed=9, detail_paths=5,
        )
        assert len(diag.reports) == 5
        for i, rep in enumerate(diag.reports):
            assert rep.path_id == i
            assert rep.J == 16
            assert rep.partial_sums.shape == (17,)
            assert (np.diff(rep.partial_sums) >= 0).all()
            assert rep.exceedance_count == diag.exceedance_count[i]
            assert -1 <= rep.last_exceedance_index <= 16

    def test_worker_invariance_bitwise(self):
        kwargs = dict(
            P=np.array([[0.5]]), law=laws.LogCauchyRay(1), J=32, n_paths=10_000, seed=10
        )
        a = series.lemma_diagnostics(workers=1, **kwargs)
        b = series.lemma_diagnostics(workers=6, **kwargs)
        assert np.array_equal(a.per_index_exceedance_freq, b.per_index_exceedance_freq)
        assert np.array_equal(a.final_partial_sum, b.final_partial_sum)
        assert a.late_exceedance_fraction == b.late_exceedance_fraction

    def test_csv_output(self, tmp_path):
        diag = series.lemma_diagnostics(
            np.array([[0.5]]), laws.NormalLaw(np.eye(1)), J=8, n_paths=37, seed=11
        )
        path = tmp_path / "lemma.csv"
        series.write_lemma_csv(path, diag)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(series.LEMMA_CSV_COLUMNS)
        assert len(rows) == 38
        assert int(rows[1][0]) == 0 and int(rows[1][1]) == 8

    def test_rejects_bad_args(self):
        law = laws.NormalLaw(np.eye(1))
        with pytest.raises(InvalidInputError):
            series.lemma_diagnostics(np.array([[0.5]]), law, J=-1, n_paths=10, seed=0)
        with pytest.raises(InvalidInputError):
            series.lemma_diagnostics(np.array([[0.5]]), law, J=4, n_paths=0, seed=0)
