"""Synthetic adapted processes with two normalizing matrix sequences.

Each variant builds a cumulative process ``U_n`` from iid noise together
with two rescalings: a possibly path-dependent one (``B``) that strips all
randomness shared along the path, and a deterministic one (``Q``) that does
not.  The interesting object is the pair ``(B_n U_n, Q_n U_n)`` at chosen
checkpoints: the first converges to a fixed matrix-geometric series law for
every path, the second drags the path-level latent scale along with it.

Variants
--------
``SyntheticCanonical``
    ``dU_n = P^-n W_n``, ``B_n = Q_n = P^n``.  Then ``B_n U_n`` equals
    ``sum_k P^{n-k} W_k`` exactly; the cleanest test bench.
``RandomScaled``
    A scalar ``lam`` drawn once at time zero scales every increment, and
    ``B_n = (lam + perturbation/n)^-1 P^n`` undoes it (the optional
    perturbation makes the ``Q_n B_n^-1`` limit approximate instead of
    exact, for exercising the condition checkers).  ``Q_n = P^n`` stays
    deterministic, so ``Q_n U_n`` keeps the factor ``lam``.
``DiscreteFactor``
    A matrix factor drawn once at time zero multiplies every increment
    inside the normalization: ``dU_n = P^-n S W_n``, ``B_n = Q_n = P^n``.
``ExplosiveVar``
    ``U_n = A U_{n-1} + eps_n`` with every eigenvalue of ``A`` outside the
    unit circle, normalized by ``B_n = A^-n``.  Provided for the series
    diagnostics; its ``B_n U_n`` is the partial sum ``sum_k A^-k eps_k``.

Determinism: path ``i`` of an ensemble is a pure function of
``(seed, stream, i)``; see :mod:`stablemix.streams`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import laws, matalg, streams
from .errors import (
    HypothesisViolationError,
    InvalidInputError,
    RangeOverflowError,
)
from .laws import IncrementLaw

# How many leading raw noise increments ensembles retain for event features.
PREFIX_KEEP = 2


def _check_discrete(values: np.ndarray, probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (len(values),):
        raise InvalidInputError("probabilities do not match the number of atoms")
    if not np.isfinite(probs).all() or probs.min() <= 0.0:
        raise InvalidInputError("atom probabilities must be positive and finite")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"atom probabilities sum to {probs.sum()}, not 1")
    return probs / probs.sum()


class ProcessSpec:
    """Shared construction/validation for the contraction-driven variants."""

    noise_law: IncrementLaw
    dim: int
    latent_uniforms: int = 0

    def __init__(self, P, noise_law: IncrementLaw):
        self.P = matalg.as_square(P, "P")
        rho = matalg.spectral_radius(self.P)
        if rho >= 1.0:
            raise HypothesisViolationError(
                f"P must be a strict contraction in spectral radius, got rho={rho:.6g}"
            )
        self.P_inv = matalg.inverse(self.P)
        self.noise_law = noise_law
        self.dim = self.P.shape[0]
        if noise_law.dim != self.dim:
            raise InvalidInputError("noise law dimension does not match P")

    # Latent structure; overridden by variants that draw one.
    def latent_from_uniform(self, u: np.ndarray) -> dict:
        n = len(u)
        return {
            "lam": None,
            "s_index": None,
            "in_g": np.ones(n, dtype=bool),
            "eta_scale": np.ones(n),
            "eta_invertible": np.ones(n, dtype=bool),
        }

    # Increment transform: V_k entering sum_k P^{n-k} V_k.  W has shape
    # (count, n, d); latent is the dict above restricted to the chunk.
    def transformed_increments(self, W: np.ndarray, latent: dict) -> np.ndarray:
        return W

    # Path-level scale of B_n relative to P^n; shape (count,).
    def b_scale(self, latent: dict, n: int) -> np.ndarray:
        return np.ones(len(latent["in_g"]))

    def b_base(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.P, n)

    def q_base(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.P, n)

    # Scaled checkpoint values from the noise-side partial sums
    # wsum_n = sum_k P^{n-k} V_k; shape (count, d).
    def scaled_from_wsum(self, wsum: np.ndarray, latent: dict, n: int):
        return wsum, wsum  # (B_n U_n, Q_n U_n)

    def increment_scale(self, latent: dict, step: int) -> np.ndarray:
        """Scalar factor on ``P^-step W_step``; shape (count,)."""
        return np.ones(len(latent["in_g"]))

    def to_json(self) -> dict:
        raise NotImplementedError

    @property
    def uses_factor(self) -> bool:
        return False


class SyntheticCanonical(ProcessSpec):
    """Exact-normalization bench: ``B_n U_n = sum_k P^{n-k} W_k`` identically."""

    def to_json(self) -> dict:
        return {
            "variant": "synthetic-canonical",
            "P": matalg.matrix_to_json(self.P),
            "noise": laws.law_to_json(self.noise_law),
        }


class RandomScaled(ProcessSpec):
    """One scalar latent ``lam`` from a finite law on nonzero reals scales
    the whole path; ``B`` undoes it, ``Q`` does not.

    ``event_values`` restricts attention to a sub-population of latent
    atoms (the conditioning event); it must have positive probability.
    ``perturbation`` shifts ``B_n`` to ``(lam + perturbation/n)^-1 P^n`` so
    the scale match is only asymptotic; leave at zero for exact
    normalization.
    """

    latent_uniforms = 1

    def __init__(
        self,
        P,
        noise_law: IncrementLaw,
        lam_values,
        lam_probs,
        event_values=None,
        perturbation: float = 0.0,
    ):
        super().__init__(P, noise_law)
        self.lam_values = np.atleast_1d(np.asarray(lam_values, dtype=float))
        if self.lam_values.ndim != 1 or len(self.lam_values) == 0:
            raise InvalidInputError("lam_values must be a nonempty vector")
        if not np.isfinite(self.lam_values).all() or (self.lam_values == 0.0).any():
            raise InvalidInputError("latent scale atoms must be finite and nonzero")
        self.lam_probs = _check_discrete(self.lam_values, lam_probs)
        if event_values is None:
            event_values = self.lam_values
        event_values = np.atleast_1d(np.asarray(event_values, dtype=float))
        self.event_mask = np.isin(self.lam_values, event_values)
        if not self.event_mask.any():
            raise InvalidInputError("conditioning event must contain at least one atom")
        missing = set(event_values.tolist()) - set(self.lam_values.tolist())
        if missing:
            raise InvalidInputError(f"event values {sorted(missing)} are not atoms")
        self.perturbation = float(perturbation)
        if not np.isfinite(self.perturbation) or self.perturbation < 0.0:
            raise InvalidInputError("perturbation must be a nonnegative float")
        self._cum = np.cumsum(self.lam_probs)

    def latent_from_uniform(self, u: np.ndarray) -> dict:
        idx = np.minimum(
            np.searchsorted(self._cum, u, side="right"), len(self.lam_values) - 1
        )
        lam = self.lam_values[idx]
        return {
            "lam": lam,
            "s_index": None,
            "in_g": self.event_mask[idx],
            "eta_scale": lam,
            "eta_invertible": np.ones(len(u), dtype=bool),
        }

    def increment_scale(self, latent: dict, step: int) -> np.ndarray:
        return latent["lam"] + self.perturbation / step

    def transformed_increments(self, W: np.ndarray, latent: dict) -> np.ndarray:
        steps = np.arange(1, W.shape[1] + 1)
        coeff = latent["lam"][:, None] + self.perturbation / steps[None, :]
        return W * coeff[:, :, None]

    def b_scale(self, latent: dict, n: int) -> np.ndarray:
        return 1.0 / (latent["lam"] + self.perturbation / n)

    def scaled_from_wsum(self, wsum: np.ndarray, latent: dict, n: int):
        bu = wsum / (latent["lam"] + self.perturbation / n)[:, None]
        return bu, wsum

    def to_json(self) -> dict:
        return {
            "variant": "random-scaled",
            "P": matalg.matrix_to_json(self.P),
            "noise": laws.law_to_json(self.noise_law),
            "lam_values": self.lam_values.tolist(),
            "lam_probs": self.lam_probs.tolist(),
            "event_values": self.lam_values[self.event_mask].tolist(),
            "perturbation": self.perturbation,
        }


class DiscreteFactor(ProcessSpec):
    """One matrix factor drawn at time zero multiplies every increment."""

    latent_uniforms = 1

    def __init__(self, P, noise_law: IncrementLaw, factors, factor_probs):
        super().__init__(P, noise_law)
        self.factors = np.stack([matalg.as_square(f, "factor") for f in factors])
        if self.factors.shape[1] != self.dim:
            raise InvalidInputError("factor matrices must match the process dimension")
        self.factor_probs = _check_discrete(self.factors, factor_probs)
        self._cum = np.cumsum(self.factor_probs)

    def latent_from_uniform(self, u: np.ndarray) -> dict:
        idx = np.minimum(
            np.searchsorted(self._cum, u, side="right"), len(self.factors) - 1
        )
        return {
            "lam": None,
            "s_index": idx,
            "in_g": np.ones(len(u), dtype=bool),
            "eta_scale": np.ones(len(u)),
            "eta_invertible": np.ones(len(u), dtype=bool),
        }

    def transformed_increments(self, W: np.ndarray, latent: dict) -> np.ndarray:
        out = np.empty_like(W)
        for k, factor in enumerate(self.factors):
            mask = latent["s_index"] == k
            if mask.any():
                out[mask] = W[mask] @ factor.T
        return out

    @property
    def uses_factor(self) -> bool:
        return True

    def to_json(self) -> dict:
        return {
            "variant": "discrete-factor",
            "P": matalg.matrix_to_json(self.P),
            "noise": laws.law_to_json(self.noise_law),
            "factors": [matalg.matrix_to_json(f) for f in self.factors],
            "factor_probs": self.factor_probs.tolist(),
        }


class ExplosiveVar(ProcessSpec):
    """First-order autoregression with an explosive coefficient matrix,
    normalized by inverse powers.  Diagnostics bench only."""

    def __init__(self, A, noise_law: IncrementLaw):
        arr = matalg.as_square(A, "A")
        moduli = np.abs(np.linalg.eigvals(arr))
        if moduli.min() <= 1.0:
            raise HypothesisViolationError(
                "every eigenvalue of A must lie outside the unit circle, "
                f"got moduli {np.sort(moduli)}"
            )
        # The contraction driving the series view is A^-1.
        super().__init__(matalg.inverse(arr), noise_law)
        self.A = arr

    def b_base(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.P, n)  # P = A^-1

    def q_base(self, n: int) -> np.ndarray:
        return self.b_base(n)

    def to_json(self) -> dict:
        return {
            "variant": "explosive-var",
            "A": matalg.matrix_to_json(self.A),
            "noise": laws.law_to_json(self.noise_law),
        }


def _field(obj: dict, key: str, tag: str):
    # Missing keys must surface as input errors, not raw KeyErrors.
    try:
        return obj[key]
    except KeyError:
        raise InvalidInputError(
            f"process variant {tag!r} requires key {key!r}"
        ) from None


def process_from_json(obj: dict) -> ProcessSpec:
    if not isinstance(obj, dict) or "variant" not in obj:
        raise InvalidInputError("process JSON must be an object with a 'variant' tag")
    tag = obj["variant"]
    if tag == "synthetic-canonical":
        return SyntheticCanonical(
            matalg.matrix_from_json(_field(obj, "P", tag)),
            laws.law_from_json(_field(obj, "noise", tag)),
        )
    if tag == "random-scaled":
        return RandomScaled(
            matalg.matrix_from_json(_field(obj, "P", tag)),
            laws.law_from_json(_field(obj, "noise", tag)),
            _field(obj, "lam_values", tag),
            _field(obj, "lam_probs", tag),
            obj.get("event_values"),
            float(obj.get("perturbation", 0.0)),
        )
    if tag == "discrete-factor":
        return DiscreteFactor(
            matalg.matrix_from_json(_field(obj, "P", tag)),
            laws.law_from_json(_field(obj, "noise", tag)),
            [matalg.matrix_from_json(f) for f in _field(obj, "factors", tag)],
            _field(obj, "factor_probs", tag),
        )
    if tag == "explosive-var":
        return ExplosiveVar(
            matalg.matrix_from_json(_field(obj, "A", tag)),
            laws.law_from_json(_field(obj, "noise", tag)),
        )
    raise InvalidInputError(f"unknown process variant {tag!r}")


def per_path_uniforms(spec: ProcessSpec, n: int) -> int:
    """Uniform budget of one path of length ``n`` (latent draw included)."""
    return spec.latent_uniforms + n * spec.noise_law.uniforms_per_draw


@dataclass(frozen=True)
class ProcessPath:
    """One fully materialized trajectory.

    ``U[k]`` is the state after ``k`` steps (``U[0] = 0``), ``increments[k]``
    the step taken at time ``k`` (``increments[0] = 0`` by convention).
    """

    spec: ProcessSpec
    n: int
    U: np.ndarray
    increments: np.ndarray
    lam: float | None
    s_index: int | None
    in_g: bool

    @property
    def dim(self) -> int:
        return self.spec.dim


def simulate_path(spec: ProcessSpec, n: int, rng: np.random.Generator) -> ProcessPath:
    """Draw one trajectory of length ``n``.

    Consumes exactly :func:`per_path_uniforms` uniforms in the ensemble
    layout (latent first, then per-step noise), so a generator positioned on
    a path's stream row reproduces that ensemble path.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    u = np.atleast_1d(rng.random(per_path_uniforms(spec, n)))
    latent_u = u[:1] if spec.latent_uniforms else np.zeros(1)
    latent = spec.latent_from_uniform(latent_u)
    upd = spec.noise_law.uniforms_per_draw
    W = spec.noise_law.from_uniforms(
        u[spec.latent_uniforms :].reshape(1, n, upd)
    )
    if isinstance(spec, ExplosiveVar):
        # Direct recursion U_k = A U_{k-1} + eps_k.
        U = np.zeros((n + 1, spec.dim))
        inc = np.zeros((n + 1, spec.dim))
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(1, n + 1):
                nxt = spec.A @ U[k - 1] + W[0, k - 1]
                inc[k] = nxt - U[k - 1]
                U[k] = nxt
        if not np.isfinite(U).all():
            raise RangeOverflowError(
                f"explosive state overflowed within {n} steps; "
                "shorten the horizon"
            )
    else:
        V = spec.transformed_increments(W, latent)[0]
        inv_powers = matalg.power_sequence(spec.P_inv, n)
        inc = np.zeros((n + 1, spec.dim))
        inc[1:] = np.einsum("kde,ke->kd", inv_powers[1:], V)
        U = np.concatenate([np.zeros((1, spec.dim)), np.cumsum(inc[1:], axis=0)])
    lam = latent["lam"]
    s_index = latent["s_index"]
    return ProcessPath(
        spec=spec,
        n=n,
        U=U,
        increments=inc,
        lam=None if lam is None else float(lam[0]),
        s_index=None if s_index is None else int(s_index[0]),
        in_g=bool(latent["in_g"][0]),
    )


def checkpoint_scaled(path: ProcessPath, checkpoints) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Literal ``(n, B_n U_n, Q_n U_n)`` for each requested checkpoint."""
    out = []
    spec = path.spec
    for n in checkpoints:
        n = int(n)
        if not (1 <= n <= path.n):
            raise InvalidInputError(
                f"checkpoint {n} outside the simulated range 1..{path.n}"
            )
        latent = {
            "lam": None if path.lam is None else np.array([path.lam]),
            "in_g": np.array([path.in_g]),
        }
        scale = spec.b_scale(latent, n)[0]
        bu = scale * (spec.b_base(n) @ path.U[n])
        qu = spec.q_base(n) @ path.U[n]
        out.append((n, bu, qu))
    return out


@dataclass(frozen=True)
class Ensemble:
    """Checkpointed scaled statistics for many independent paths.

    ``bu[n]`` and ``qu[n]`` hold ``B_n U_n`` and ``Q_n U_n`` as
    ``(n_paths, d)`` arrays.  ``noise_prefix`` keeps the first raw noise
    increments of every path so event families can evaluate prefix
    features without re-simulation.
    """

    spec: ProcessSpec
    seed: int
    n_paths: int
    checkpoints: tuple[int, ...]
    bu: dict
    qu: dict
    lam: np.ndarray | None
    s_index: np.ndarray | None
    in_g: np.ndarray
    eta_scale: np.ndarray
    eta_invertible: np.ndarray
    noise_prefix: np.ndarray

    @property
    def dim(self) -> int:
        return self.spec.dim


def simulate_ensemble(
    spec: ProcessSpec,
    checkpoints,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> Ensemble:
    """Simulate ``n_paths`` independent paths, keeping only checkpoint
    statistics and prefix features.

    The scaled values are accumulated as ``sum_k P^{n-k} V_k`` directly (the
    algebraic form of ``B_n U_n``), which avoids forming huge inverse powers
    and keeps every checkpoint numerically clean.
    """
    checkpoints = tuple(sorted({int(c) for c in np.atleast_1d(checkpoints)}))
    if not checkpoints or checkpoints[0] < 1:
        raise InvalidInputError("checkpoints must be positive integers")
    if n_paths < 1:
        raise InvalidInputError("n_paths must be positive")
    n = checkpoints[-1]
    upd = spec.noise_law.uniforms_per_draw
    per_path = per_path_uniforms(spec, n)
    explosive = isinstance(spec, ExplosiveVar)
    # Powers of the contraction: P^j, which for ExplosiveVar means A^-j.
    kernel = matalg.power_sequence(spec.P, n)

    def chunk(start, count):
        u = streams.uniform_block(seed, streams.STREAM_PROCESS, start, count, per_path)
        latent_u = u[:, 0] if spec.latent_uniforms else np.zeros(count)
        latent = spec.latent_from_uniform(latent_u)
        W = spec.noise_law.from_uniforms(
            u[:, spec.latent_uniforms :].reshape(count, n, upd)
        )
        bu_c, qu_c = {}, {}
        if explosive:
            # wsum_n = sum_{k<=n} A^-k eps_k accumulates once.
            terms = np.einsum("kde,cke->ckd", kernel[1:], W)
            csum = np.cumsum(terms, axis=1)
            for cp in checkpoints:
                val = csum[:, cp - 1]
                bu_c[cp], qu_c[cp] = val, val
        else:
            V = spec.transformed_increments(W, latent)
            for cp in checkpoints:
                # sum_{k=1..cp} P^{cp-k} V_k; kernel index cp-k.
                wsum = np.einsum("kde,cke->cd", kernel[cp - 1 :: -1], V[:, :cp])
                bu_c[cp], qu_c[cp] = spec.scaled_from_wsum(wsum, latent, cp)
        return {
            "bu": bu_c,
            "qu": qu_c,
            "latent": latent,
            "prefix": W[:, : min(PREFIX_KEEP, n)].copy(),
        }

    parts = streams.map_chunks(chunk, n_paths, workers)

    def cat(getter):
        return np.concatenate([getter(p) for p in parts], axis=0)

    first_latent = parts[0]["latent"]
    return Ensemble(
        spec=spec,
        seed=int(seed),
        n_paths=n_paths,
        checkpoints=checkpoints,
        bu={cp: cat(lambda p, c=cp: p["bu"][c]) for cp in checkpoints},
        qu={cp: cat(lambda p, c=cp: p["qu"][c]) for cp in checkpoints},
        lam=None if first_latent["lam"] is None else cat(lambda p: p["latent"]["lam"]),
        s_index=(
            None
            if first_latent["s_index"] is None
            else cat(lambda p: p["latent"]["s_index"])
        ),
        in_g=cat(lambda p: p["latent"]["in_g"]),
        eta_scale=cat(lambda p: p["latent"]["eta_scale"]),
        eta_invertible=cat(lambda p: p["latent"]["eta_invertible"]),
        noise_prefix=cat(lambda p: p["prefix"]),
    )


PATH_CSV_COLUMNS = ("path_id", "step", "in_g", "lam", "s_index")


def write_paths_csv(path, paths: list[ProcessPath]) -> None:
    """One row per (path, step) with the state vector spread over columns."""
    if not paths:
        raise InvalidInputError("no paths to write")
    dim = paths[0].dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(PATH_CSV_COLUMNS) + [f"u_{i}" for i in range(dim)])
        for pid, p in enumerate(paths):
            for k in range(p.n + 1):
                writer.writerow(
                    [
                        pid,
                        k,
                        int(p.in_g),
                        "" if p.lam is None else repr(p.lam),
                        "" if p.s_index is None else p.s_index,
                    ]
                    + [repr(float(x)) for x in p.U[k]]
                )
