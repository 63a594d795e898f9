"""Truncated matrix-geometric series and convergence diagnostics.

The central object is the random series ``sum_j P^j Z_j`` for a contraction
``P`` and iid increments ``Z_j``.  This module decides where to cut the
series (:func:`truncation_index`), draws from the truncated law
(:func:`sample_limit_series`), and probes the convergence/divergence
dichotomy on simulated paths (:func:`lemma_diagnostics`): with a finite
log-moment the terms ``|P^j Z_j|`` die out geometrically and exceedances of
any fixed threshold stop early; with an infinite log-moment exceedances keep
recurring at arbitrarily late indices.

Singular ``P`` is fine everywhere here; only powers of ``P`` are formed,
never inverses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import matalg, streams
from .errors import HorizonExceededError, InvalidInputError
from .laws import IncrementLaw
from .matalg import GelfandCertificate

# Exceedance threshold used by the diagnostics; the dichotomy being probed
# concerns the events |P^j Z_j| > 1.
EXCEEDANCE_LEVEL = 1.0


@dataclass(frozen=True)
class TruncationPlan:
    """A cut index ``r`` together with the certified bound on what the cut
    discards: ``tail_norm_bound >= sum_{j>r} |P^j|``."""

    r: int
    tail_norm_bound: float
    certificate: GelfandCertificate

    def __post_init__(self):
        if self.r < 0:
            raise InvalidInputError("truncation index must be nonnegative")
        if not (np.isfinite(self.tail_norm_bound) and self.tail_norm_bound >= 0.0):
            raise InvalidInputError("tail_norm_bound must be finite and nonnegative")

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "tail_norm_bound": self.tail_norm_bound,
            "certificate": self.certificate.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "TruncationPlan":
        return TruncationPlan(
            r=int(obj["r"]),
            tail_norm_bound=float(obj["tail_norm_bound"]),
            certificate=GelfandCertificate.from_json(obj["certificate"]),
        )


def recompute_tail_bound(P, certificate: GelfandCertificate, r: int) -> float:
    """Re-derive the tail bound a plan stored, from scratch."""
    norms = matalg.norm_table(P, certificate.horizon)
    return matalg.tail_bound(norms, certificate, r)


def truncation_index(
    P, tol: float, min_horizon: int = 256, max_horizon: int = 1 << 15
) -> TruncationPlan:
    """Smallest ``r`` whose certified tail bound is at most ``tol``.

    The norm table is extended until the geometric continuation past the
    horizon is negligible relative to ``tol``, so the reported ``r`` is
    governed by actual power norms rather than by the looser geometric
    envelope.
    """
    if not (np.isfinite(tol) and tol > 0.0):
        raise InvalidInputError(f"tol must be a positive finite number, got {tol}")
    horizon = min_horizon
    while True:
        cert, norms = matalg.decay_certificate(P, min_horizon=horizon)
        rate = cert.ratio
        past = rate ** (cert.horizon + 1) / (1.0 - rate)
        if past <= 1e-12 * tol or past == 0.0:
            break
        if cert.horizon >= max_horizon:
            raise HorizonExceededError(
                f"cannot certify a tail below tol={tol:.3e} within horizon "
                f"{max_horizon}; norm decay is too slow"
            )
        horizon = min(max(2 * cert.horizon, min_horizon), max_horizon)

    # Suffix sums give the bound for every candidate r in one pass.
    suffix = np.concatenate([np.cumsum(norms[::-1])[::-1][1:], [0.0]])
    candidates = np.flatnonzero(suffix + past <= tol)
    if candidates.size == 0:
        raise HorizonExceededError(
            f"no truncation index up to {cert.horizon} meets tol={tol:.3e}"
        )
    r = int(candidates[0])
    # Settle boundary cases with the canonical bound evaluation itself.
    while r > 0 and matalg.tail_bound(norms, cert, r - 1) <= tol:
        r -= 1
    while matalg.tail_bound(norms, cert, r) > tol:
        r += 1
    return TruncationPlan(
        r=r, tail_norm_bound=matalg.tail_bound(norms, cert, r), certificate=cert
    )


def _series_from_uniforms(powers: np.ndarray, law: IncrementLaw, u: np.ndarray):
    """Map per-sample uniform rows to truncated-series draws.

    ``u`` has shape (count, (r+1) * law.uniforms_per_draw); sample ``i``
    consumes row ``i`` only, term ``j`` the ``j``-th slice of that row.
    """
    count = u.shape[0]
    terms = powers.shape[0]
    z = law.from_uniforms(u.reshape(count, terms, law.uniforms_per_draw))
    return np.einsum("jde,cje->cd", powers, z)


def sample_limit_series_many(
    P, law: IncrementLaw, plan: TruncationPlan, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Draw ``count`` samples of ``sum_{j<=r} P^j Z_j`` with fresh increments."""
    arr = matalg.as_square(P)
    if arr.shape[0] != law.dim:
        raise InvalidInputError("P dimension does not match law dimension")
    powers = matalg.power_sequence(arr, plan.r)
    u = rng.random((count, (plan.r + 1) * law.uniforms_per_draw))
    return _series_from_uniforms(powers, law, u)


def sample_limit_series(
    P, law: IncrementLaw, plan: TruncationPlan, rng: np.random.Generator
) -> np.ndarray:
    """Single draw of the truncated series."""
    return sample_limit_series_many(P, law, plan, rng, 1)[0]


def series_ensemble(
    P,
    law: IncrementLaw,
    r: int,
    seed: int,
    count: int,
    workers: int = 1,
    stream: int = streams.STREAM_SERIES,
) -> np.ndarray:
    """Stream-addressed batch of truncated-series draws.

    Sample ``i`` is a pure function of ``(seed, stream, i)``; chunking and
    worker count cannot change any value.
    """
    arr = matalg.as_square(P)
    if arr.shape[0] != law.dim:
        raise InvalidInputError("P dimension does not match law dimension")
    if count < 1:
        raise InvalidInputError("count must be positive")
    powers = matalg.power_sequence(arr, r)
    per_path = (r + 1) * law.uniforms_per_draw

    def chunk(start, n):
        u = streams.uniform_block(seed, stream, start, n, per_path)
        return _series_from_uniforms(powers, law, u)

    parts = streams.map_chunks(chunk, count, workers)
    return np.concatenate(parts, axis=0)


def log_moment_estimate(samples) -> float:
    """Mean of ``log+ |z|`` over sample rows: the empirical version of the
    moment whose finiteness separates convergent from divergent series."""
    arr = np.atleast_2d(np.asarray(samples, dtype=float))
    if arr.size == 0:
        raise InvalidInputError("log_moment_estimate needs at least one sample")
    norms = np.linalg.norm(arr, axis=-1)
    return float(np.mean(np.log(np.maximum(norms, 1.0))))


@dataclass(frozen=True)
class LemmaReport:
    """Per-path summary of the term sequence ``|P^j Z_j|``, j = 0..J."""

    path_id: int
    J: int
    exceedance_count: int
    last_exceedance_index: int  # -1 when the path never exceeds the level
    partial_sums: np.ndarray  # cumulative sums of |P^j Z_j|, non-decreasing
    last_term_norm: float
    log_moment_estimate: float


@dataclass(frozen=True)
class LemmaDiagnostics:
    """Ensemble view of the convergence/divergence dichotomy.

    ``late_exceedance_fraction`` is the share of paths whose last exceedance
    of the unit level lands beyond ``J/2``: near zero when the log-moment is
    finite, bounded away from zero when it is not.  ``reports`` carries fully
    detailed term trajectories for the first few paths only; the per-path
    arrays cover the whole ensemble.
    """

    J: int
    n_paths: int
    per_index_exceedance_freq: np.ndarray  # shape (J+1,)
    late_exceedance_fraction: float
    exceedance_count: np.ndarray  # int, shape (n_paths,)
    last_exceedance_index: np.ndarray  # int, shape (n_paths,)
    final_partial_sum: np.ndarray  # shape (n_paths,)
    last_term_norm: np.ndarray  # shape (n_paths,)
    log_moment: np.ndarray  # shape (n_paths,)
    reports: tuple[LemmaReport, ...]


def lemma_diagnostics(
    P,
    law: IncrementLaw,
    J: int,
    n_paths: int,
    seed: int,
    workers: int = 1,
    detail_paths: int = 8,
) -> LemmaDiagnostics:
    """Simulate iid term sequences and summarize their exceedance behavior.

    Accepts any sampler with the :class:`IncrementLaw` interface, including
    diagnostic laws without characteristic functions.  Heavy-tailed samplers
    may produce ``inf`` draws; exceedance counting stays exact because such
    draws genuinely exceed the unit level at every index simulated here.
    """
    arr = matalg.as_square(P)
    if arr.shape[0] != law.dim:
        raise InvalidInputError("P dimension does not match law dimension")
    if J < 0:
        raise InvalidInputError("J must be nonnegative")
    if n_paths < 1:
        raise InvalidInputError("n_paths must be positive")
    powers = matalg.power_sequence(arr, J)
    per_path = (J + 1) * law.uniforms_per_draw
    detail = min(detail_paths, n_paths)

    def chunk(start, count):
        u = streams.uniform_block(seed, streams.STREAM_LEMMA, start, count, per_path)
        z = law.from_uniforms(u.reshape(count, J + 1, law.uniforms_per_draw))
        with np.errstate(invalid="ignore", over="ignore"):
            term = np.einsum("jde,cje->cjd", powers, z)
            term_norms = np.linalg.norm(term, axis=2)
        # 0 * inf inside the einsum leaves NaNs exactly when a draw
        # overflowed; the true magnitude there is astronomically large, so
        # record it as infinite rather than dropping the exceedance.
        term_norms = np.where(np.isnan(term_norms), np.inf, term_norms)
        exceed = term_norms > EXCEEDANCE_LEVEL
        counts = exceed.sum(axis=1)
        # Last exceedance index, -1 for paths that never exceed.
        rev_arg = np.argmax(exceed[:, ::-1], axis=1)
        last_idx = np.where(counts > 0, J - rev_arg, -1)
        with np.errstate(over="ignore"):
            z_norms = np.linalg.norm(z, axis=2)
        log_mom = np.mean(np.log(np.maximum(z_norms, 1.0)), axis=1)
        details = []
        for i in range(start, min(start + count, detail)):
            row = i - start
            details.append(
                LemmaReport(
                    path_id=i,
                    J=J,
                    exceedance_count=int(counts[row]),
                    last_exceedance_index=int(last_idx[row]),
                    partial_sums=np.cumsum(term_norms[row]),
                    last_term_norm=float(term_norms[row, J]),
                    log_moment_estimate=float(log_mom[row]),
                )
            )
        return {
            "exceed_totals": exceed.sum(axis=0, dtype=np.int64),
            "late": int((last_idx > J / 2).sum()),
            "counts": counts.astype(np.int64),
            "last_idx": last_idx.astype(np.int64),
            "final_sum": term_norms.sum(axis=1),
            "last_norm": term_norms[:, J],
            "log_mom": log_mom,
            "reports": details,
        }

    parts = streams.map_chunks(chunk, n_paths, workers)
    exceed_totals = np.sum([p["exceed_totals"] for p in parts], axis=0)
    late = sum(p["late"] for p in parts)
    reports = [rep for p in parts for rep in p["reports"]]
    return LemmaDiagnostics(
        J=J,
        n_paths=n_paths,
        per_index_exceedance_freq=exceed_totals / n_paths,
        late_exceedance_fraction=late / n_paths,
        exceedance_count=np.concatenate([p["counts"] for p in parts]),
        last_exceedance_index=np.concatenate([p["last_idx"] for p in parts]),
        final_partial_sum=np.concatenate([p["final_sum"] for p in parts]),
        last_term_norm=np.concatenate([p["last_norm"] for p in parts]),
        log_moment=np.concatenate([p["log_mom"] for p in parts]),
        reports=tuple(reports),
    )


LEMMA_CSV_COLUMNS = (
    "path_id",
    "J",
    "exceedance_count",
    "last_exceedance_index",
    "final_partial_sum",
    "last_term_norm",
)


def write_lemma_csv(path, diag: LemmaDiagnostics) -> None:
    """Dump one row per simulated path."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEMMA_CSV_COLUMNS)
        for i in range(diag.n_paths):
            writer.writerow(
                [
                    i,
                    diag.J,
                    int(diag.exceedance_count[i]),
                    int(diag.last_exceedance_index[i]),
                    repr(float(diag.final_partial_sum[i])),
                    repr(float(diag.last_term_norm[i])),
                ]
            )
