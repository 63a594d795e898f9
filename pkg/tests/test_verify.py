"""Convergence checkers: event families, condition checks, the two
statistics, and end-to-end verdicts.

Key dual-route checks: with the trivial family the mixing statistic must
reproduce the plain ecf sup-distance bit for bit, and the scaled variant's
closed-form factorization gap must pin down where the unscaled statistic
lands.
"""

import dataclasses
import json

import numpy as np
import pytest

from stablemix import ecf, laws, verify
from stablemix.errors import InsufficientDataError, InvalidInputError
from stablemix.processes import (
    DiscreteFactor,
    ExplosiveVar,
    RandomScaled,
    SyntheticCanonical,
    simulate_ensemble,
)

# Closed-form factorization gap for lam ~ uniform{1, 2} over the default
# 2-d grid; stable near its r -> inf value already at small r.
GAP_HALF_HALF = 0.22196683390489547


def rotation_half():
    c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
    return 0.5 * np.array([[c, -s], [s, c]])


def canonical_spec():
    return SyntheticCanonical(rotation_half(), laws.NormalLaw(np.eye(2)))


def scaled_spec(perturbation=0.0):
    return RandomScaled(
        rotation_half(), laws.NormalLaw(np.eye(2)), [1.0, 2.0], [0.5, 0.5],
        perturbation=perturbation,
    )


class TestFamilies:
    def test_omega(self):
        fam = verify.omega_family()
        assert fam.labels == ("all",)
        ens = simulate_ensemble(canonical_spec(), [3], 16, seed=0)
        assert fam.indicator_matrix(ens).all()

    def test_single_feature_adds_no_atoms(self):
        feat = verify.PathEvent("f", lambda e: e.noise_prefix[:, 0, 0] >= 0)
        fam = verify.family_from_features([feat])
        assert fam.labels == ("all", "f")

    def test_two_features_full_partition(self):
        a = verify.PathEvent("a", lambda e: e.noise_prefix[:, 0, 0] >= 0)
        b = verify.PathEvent("b", lambda e: e.noise_prefix[:, 0, 1] >= 0)
        fam = verify.family_from_features([a, b])
        assert len(fam) == 7
        assert "a&b" in fam.labels and "not-a&not-b" in fam.labels
        ens = simulate_ensemble(canonical_spec(), [3], 512, seed=1)
        inds = fam.indicator_matrix(ens)
        # The four atoms tile the path set exactly once.
        assert np.array_equal(inds[3:].sum(axis=0), np.ones(512, dtype=np.int64))

    def test_default_family_shapes(self):
        can = simulate_ensemble(canonical_spec(), [3], 64, seed=2)
        assert verify.default_family(can).labels == ("all", "noise0-nonneg")
        rs = simulate_ensemble(scaled_spec(), [3], 64, seed=2)
        fam = verify.default_family(rs)
        assert len(fam) == 7 and "lam-is-1" in fam.labels
        df = simulate_ensemble(
            DiscreteFactor(
                rotation_half(), laws.NormalLaw(np.eye(2)),
                [np.eye(2), 2 * np.eye(2)], [0.5, 0.5],
            ),
            [3], 64, seed=2,
        )
        assert "factor-is-0" in verify.default_family(df).labels

    def test_family_must_start_with_sure_event(self):
        ev = verify.PathEvent("f", lambda e: np.ones(e.n_paths, bool))
        with pytest.raises(InvalidInputError):
            verify.EventFamily((ev,))
        with pytest.raises(InvalidInputError):
            verify.EventFamily(())

    def test_event_shape_validated(self):
        ev = verify.PathEvent("bad", lambda e: np.ones(3, bool))
        ens = simulate_ensemble(canonical_spec(), [3], 16, seed=0)
        with pytest.raises(InvalidInputError):
            ev.evaluate(ens)


class TestConditions:
    def test_exact_variants_report_zero(self):
        for spec in (canonical_spec(), scaled_spec()):
            ens = simulate_ensemble(spec, [5, 10, 20], 2000, seed=3)
            v1 = verify.check_condition_i(ens)
            v3 = verify.check_condition_iii(ens)
            assert max(v1.statistics) <= 1e-10 and v1.passed
            assert max(v3.statistics) <= 1e-10 and v3.passed

    def test_perturbed_scale_decays_like_inverse_n(self):
        ens = simulate_ensemble(scaled_spec(0.5), [5, 10, 20], 2000, seed=9)
        v = verify.check_condition_i(ens)
        assert v.statistics == pytest.approx((0.1, 0.05, 0.025), rel=1e-9)
        assert not v.passed  # final deviation still above the strict default
        assert verify.check_condition_i(ens, tol=0.03).passed

    def test_boundedness_passes_and_reports_levels(self):
        ens = simulate_ensemble(canonical_spec(), [5, 10, 20], 5000, seed=4)
        v = verify.check_condition_ii(ens)
        assert v.passed
        assert v.detail["levels"] == [2.0, 4.0, 8.0, 16.0]
        assert len(v.detail["exceedance"]) == 3

    def test_boundedness_fails_at_absurd_level(self):
        ens = simulate_ensemble(canonical_spec(), [5, 10], 5000, seed=4)
        v = verify.check_condition_ii(ens, levels=(0.1,), bound=0.05)
        assert not v.passed and max(v.statistics) > 0.5

    def test_boundedness_validation(self):
        ens = simulate_ensemble(canonical_spec(), [5], 100, seed=0)
        with pytest.raises(InvalidInputError):
            verify.check_condition_ii(ens, levels=())
        with pytest.raises(InvalidInputError):
            verify.check_condition_ii(ens, levels=(-1.0,))

    def test_ratio_lag_guard(self):
        ens = simulate_ensemble(canonical_spec(), [4, 8], 200, seed=5)
        with pytest.raises(InvalidInputError):
            verify.check_condition_iii(ens, r_list=(4,))
        with pytest.raises(InvalidInputError):
            verify.check_condition_iii(ens, r_list=(0,))

    def test_empty_conditioning_event(self):
        ens = simulate_ensemble(canonical_spec(), [5], 100, seed=0)
        starved = dataclasses.replace(ens, in_g=np.zeros(100, dtype=bool))
        for checker in (
            verify.check_condition_i,
            verify.check_condition_ii,
            verify.check_condition_iii,
        ):
            with pytest.raises(InsufficientDataError):
                checker(starved)


class TestReferences:
    def test_factor_variant_has_no_mixing_reference(self):
        spec = DiscreteFactor(
            rotation_half(), laws.NormalLaw(np.eye(2)),
            [np.eye(2), 2 * np.eye(2)], [0.5, 0.5],
        )
        with pytest.raises(InvalidInputError):
            verify.mixing_reference(spec, 5, ecf.default_grid(2))

    def test_explosive_reference_starts_at_lag_one(self):
        # d=1, A=2: the limit sums 2^-k eps_k from k=1, so the cf is the
        # product of normal factors at t/2, t/4, ...
        spec = ExplosiveVar(np.array([[2.0]]), laws.NormalLaw(np.eye(1)))
        grid = ecf.default_grid(1)
        t = grid.points[:, 0]
        r = 5
        expected = np.ones_like(t, dtype=complex)
        for k in range(1, r + 2):
            expected *= np.exp(-0.5 * (0.5**k * t) ** 2)
        got = verify.mixing_reference(spec, r, grid)
        assert np.allclose(got, expected, atol=1e-14)

    def test_conditional_scaled_dilates_grid(self):
        spec = RandomScaled(
            np.array([[0.5]]), laws.NormalLaw(np.eye(1)), [1.0, 2.0], [0.5, 0.5]
        )
        grid = ecf.default_grid(1)
        t = grid.points[:, 0]
        cond = verify.conditional_reference(spec, 4)
        expected = np.exp(
            -0.5 * sum((2.0 * 0.5**j * t) ** 2 for j in range(5))
        )
        assert np.allclose(cond(2.0, grid), expected, atol=1e-14)

    def test_conditional_factor_applies_factor_each_term(self):
        spec = DiscreteFactor(
            np.array([[0.5]]), laws.NormalLaw(np.eye(1)),
            [np.eye(1), 2 * np.eye(1)], [0.5, 0.5],
        )
        grid = ecf.default_grid(1)
        t = grid.points[:, 0]
        cond = verify.conditional_reference(spec, 4)
        expected = np.exp(
            -0.5 * sum((2.0 * 0.5**j * t) ** 2 for j in range(5))
        )
        assert np.allclose(cond(1, grid), expected, atol=1e-14)
        assert np.allclose(
            cond(0, grid),
            np.exp(-0.5 * sum((0.5**j * t) ** 2 for j in range(5))),
            atol=1e-14,
        )

    def test_conditional_canonical_ignores_latent(self):
        spec = canonical_spec()
        grid = ecf.default_grid(2)
        cond = verify.conditional_reference(spec, 6)
        assert np.array_equal(
            cond(None, grid), verify.mixing_reference(spec, 6, grid)
        )


class TestStatistics:
    def test_omega_reduces_to_ecf_distance_bitwise(self):
        ens = simulate_ensemble(canonical_spec(), [6, 12], 20_000, seed=77)
        grid = ecf.default_grid(2)
        ref = verify.mixing_reference(ens.spec, 11, grid)
        stat = verify.mixing_statistic(
            ens, 12, verify.omega_family(), grid, ref
        )
        est = ecf.estimate_ecf(ens.bu[12], grid)
        assert stat == ecf.sup_distance(est, ref)

    def test_stable_equals_mixing_without_latent(self):
        # No latent atom means the conditional reference is constant; the
        # two statistics collapse to the same number.
        ens = simulate_ensemble(canonical_spec(), [6, 12], 20_000, seed=77)
        grid = ecf.default_grid(2)
        fam = verify.default_family(ens)
        ref = verify.mixing_reference(ens.spec, 11, grid)
        cond = verify.conditional_reference(ens.spec, 11)
        st = verify.stable_statistic(ens, 12, fam, grid, cond)
        mx = verify.mixing_statistic(ens, 12, fam, grid, ref, which="qu")
        assert st == mx

    def test_stable_statistic_atom_grouping_oracle(self):
        # Recompute the statistic with a direct per-path loop (single chunk,
        # so the phase sums share the reduction order).
        ens = simulate_ensemble(scaled_spec(), [8], 2000, seed=13)
        grid = ecf.default_grid(2)
        fam = verify.default_family(ens)
        cond = verify.conditional_reference(ens.spec, 7)
        got = verify.stable_statistic(ens, 8, fam, grid, cond)

        mask = ens.in_g & ens.eta_invertible
        values = ens.qu[8][mask]
        inds = fam.indicator_matrix(ens)[:, mask]
        phases = np.exp(1j * (values @ grid.points.T))
        atoms, inverse_idx = np.unique(ens.lam[mask], return_inverse=True)
        per_atom = np.stack([cond(a, grid) for a in atoms])
        per_path = per_atom[inverse_idx]
        total = values.shape[0]
        worst = 0.0
        for e in range(len(inds)):
            term1 = phases[inds[e]].sum(axis=0) / total
            term2 = per_path[inds[e]].sum(axis=0) / total
            worst = max(worst, float(np.abs(term1 - term2).max()))
        assert got == pytest.approx(worst, abs=1e-12)

    def test_checkpoint_membership(self):
        ens = simulate_ensemble(canonical_spec(), [6, 12], 2000, seed=0)
        grid = ecf.default_grid(2)
        ref = verify.mixing_reference(ens.spec, 5, grid)
        with pytest.raises(InvalidInputError):
            verify.mixing_statistic(ens, 7, verify.omega_family(), grid, ref)

    def test_reference_shape_checked(self):
        ens = simulate_ensemble(canonical_spec(), [6], 2000, seed=0)
        grid = ecf.default_grid(2)
        with pytest.raises(InvalidInputError):
            verify.mixing_statistic(
                ens, 6, verify.omega_family(), grid, np.ones(5)
            )

    def test_min_paths_enforced(self):
        ens = simulate_ensemble(canonical_spec(), [6], 500, seed=0)
        grid = ecf.default_grid(2)
        ref = verify.mixing_reference(ens.spec, 5, grid)
        with pytest.raises(InsufficientDataError):
            verify.mixing_statistic(ens, 6, verify.omega_family(), grid, ref)


class TestScaleMixtureGap:
    def test_frozen_value(self):
        spec = scaled_spec()
        best, gaps = verify.scale_mixture_gap(spec, ecf.default_grid(2), 23)
        assert best == pytest.approx(GAP_HALF_HALF, rel=1e-12)
        assert set(gaps) == {"all", "lam-is-1", "lam-is-2"}
        # Conditioning on the unit atom reproduces the reference exactly, so
        # that event carries no gap.
        assert gaps["lam-is-1"] == 0.0

    def test_degenerate_atom_has_no_gap(self):
        spec = RandomScaled(
            rotation_half(), laws.NormalLaw(np.eye(2)), [1.0], [1.0]
        )
        best, gaps = verify.scale_mixture_gap(spec, ecf.default_grid(2), 23)
        assert best == 0.0 and all(v == 0.0 for v in gaps.values())

    def test_requires_scaled_variant(self):
        with pytest.raises(InvalidInputError):
            verify.scale_mixture_gap(canonical_spec(), ecf.default_grid(2), 5)


class TestVerdicts:
    def test_canonical_mixing_passes(self):
        ens = simulate_ensemble(canonical_spec(), [6, 12], 20_000, seed=21)
        v = verify.verify_mixing(ens)
        assert v.passed and v.condition == "mixing"
        assert v.checkpoints == (6, 12)
        assert v.thresholds[0] == pytest.approx(
            3.0 * ecf.hoeffding_radius(20_000, 1e-3), rel=1e-12
        )
        assert v.detail["r"] == 11 and v.detail["statistic_of"] == "bu"
        obj = json.loads(json.dumps(v.to_json()))
        assert obj["pass"] is True and obj["n_paths"] == 20_000

    def test_scaled_variant_stable_but_not_mixing(self):
        # The heart of the package: the unscaled value converges stably with
        # a latent-dependent limit, so the conditional check passes while
        # the factorized check fails by the closed-form gap.
        ens = simulate_ensemble(scaled_spec(), [6, 12], 20_000, seed=29)
        assert verify.verify_stable(ens).passed
        v = verify.verify_mixing(ens, which="qu")
        assert not v.passed
        assert v.statistics[-1] == pytest.approx(GAP_HALF_HALF, abs=0.05)
        assert v.statistics[-1] > v.thresholds[-1]

    def test_explosive_stable_but_not_mixing_for_prefix_events(self):
        # The scaled explosive sum converges almost surely: prefix events
        # stay correlated with the limit forever, so mixing fails on the
        # default family yet the sure-event distributional check passes.
        spec = ExplosiveVar(np.array([[2.0]]), laws.NormalLaw(np.eye(1)))
        ens = simulate_ensemble(spec, [6, 12], 20_000, seed=55)
        v_prefix = verify.verify_mixing(ens)
        v_omega = verify.verify_mixing(ens, family=verify.omega_family())
        assert not v_prefix.passed
        assert v_prefix.statistics[-1] > 2.0 * v_prefix.thresholds[-1]
        assert v_omega.passed

    def test_factor_variant_stable_verdict(self):
        spec = DiscreteFactor(
            rotation_half(), laws.NormalLaw(np.eye(2)),
            [np.eye(2), 2 * np.eye(2)], [0.5, 0.5],
        )
        ens = simulate_ensemble(spec, [6, 12], 20_000, seed=31)
        assert verify.verify_stable(ens).passed

    def test_insufficient_paths_propagates(self):
        ens = simulate_ensemble(canonical_spec(), [6, 12], 200, seed=0)
        with pytest.raises(InsufficientDataError):
            verify.verify_mixing(ens)
        assert verify.verify_mixing(ens, min_paths=100).n_paths == 200

    def test_worker_invariance(self):
        ens = simulate_ensemble(scaled_spec(), [6, 12], 20_000, seed=33)
        a = verify.verify_stable(ens, workers=1)
        b = verify.verify_stable(ens, workers=8)
        assert a.statistics == b.statistics
