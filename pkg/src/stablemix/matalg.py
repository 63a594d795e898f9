"""Dense matrix analysis helpers: spectral radius, certified norm decay,
matrix powers, and PSD square roots.

Everything here works on small dense square matrices (dimension up to a few
dozen; the accuracy contract is stated for d <= 16).  Matrices are plain
``numpy.ndarray`` objects; :func:`as_square` is the single validation
gate used by every public entry point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    HorizonExceededError,
    HypothesisViolationError,
    InvalidInputError,
    RangeOverflowError,
    SingularMatrixError,
)

# Condition-number threshold beyond which a matrix is treated as singular.
COND_LIMIT = 1e12

# Norms beyond this are treated as overflow when building power sequences.
POWER_OVERFLOW = 1e300


def as_square(matrix, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite square float matrix as a C-contiguous array."""
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise InvalidInputError(
            f"{name} must be a nonempty square matrix, got shape {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} has non-finite entries")
    return np.ascontiguousarray(arr)


def operator_norm(matrix) -> float:
    """Operator 2-norm (largest singular value)."""
    arr = as_square(matrix)
    return float(np.linalg.norm(arr, ord=2))


def spectral_radius(matrix) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    arr = as_square(matrix)
    return float(np.abs(np.linalg.eigvals(arr)).max())


def inverse(matrix) -> np.ndarray:
    """Matrix inverse, refusing inputs with 2-norm condition number above
    ``COND_LIMIT`` so downstream code never sees non-finite entries."""
    arr = as_square(matrix)
    cond = np.linalg.cond(arr, p=2)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(
            f"matrix is singular or too ill conditioned (cond={cond:.3e})"
        )
    return np.linalg.inv(arr)


def power_sequence(matrix, count: int) -> np.ndarray:
    """Stacked powers ``[I, P, P^2, ..., P^count]`` with shape (count+1, d, d).

    Raises :class:`RangeOverflowError` as soon as an intermediate power
    leaves the representable range, naming the largest supported exponent.
    """
    arr = as_square(matrix)
    if count < 0:
        raise InvalidInputError("power count must be nonnegative")
    d = arr.shape[0]
    out = np.empty((count + 1, d, d))
    out[0] = np.eye(d)
    for k in range(1, count + 1):
        out[k] = out[k - 1] @ arr
        if not np.isfinite(out[k]).all() or np.abs(out[k]).max() > POWER_OVERFLOW:
            raise RangeOverflowError(
                f"matrix power overflow at exponent {k}; max supported exponent "
                f"for this matrix is {k - 1}"
            )
    return out


def norm_table(matrix, horizon: int) -> np.ndarray:
    """Operator norms ``[1, |P|, |P^2|, ..., |P^horizon|]`` (length horizon+1).

    Powers that underflow to zero are recorded as zero; overflow raises.
    """
    powers = power_sequence(matrix, horizon)
    # One batched SVD; norms[0] == 1 exactly for the identity block.
    norms = np.linalg.svd(powers, compute_uv=False)[:, 0]
    norms[0] = 1.0
    return norms


@dataclass(frozen=True)
class GelfandCertificate:
    """Certified geometric decay of matrix power norms.

    Records a spectral radius ``rho < 1``, the midpoint ``ratio = (1+rho)/2``,
    and the smallest index ``k0`` such that ``|P^k|^(1/k) <= ratio`` for every
    ``k`` in ``[k0, horizon]``.  When ``horizon >= 2*k0`` submultiplicativity
    extends the bound to all ``k >= k0``, so geometric tail sums past the
    horizon are valid.
    """

    rho: float
    k0: int
    horizon: int

    @property
    def ratio(self) -> float:
        return 0.5 * (1.0 + self.rho)

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0):
            raise InvalidInputError(f"certificate requires 0 <= rho < 1, got {self.rho}")
        if not (1 <= self.k0 <= self.horizon):
            raise InvalidInputError(
                f"certificate requires 1 <= k0 <= horizon, got k0={self.k0}, "
                f"horizon={self.horizon}"
            )

    def to_json(self) -> dict:
        return {"rho": self.rho, "k0": self.k0, "horizon": self.horizon}

    @staticmethod
    def from_json(obj: dict) -> "GelfandCertificate":
        return GelfandCertificate(
            rho=float(obj["rho"]), k0=int(obj["k0"]), horizon=int(obj["horizon"])
        )


def _ratio_holds(norms: np.ndarray, ratio: float) -> np.ndarray:
    """Boolean table: ``|P^k|^(1/k) <= ratio`` for k = 1..len(norms)-1.

    Compared in log space so extreme powers neither overflow nor underflow.
    """
    k = np.arange(1, len(norms))
    with np.errstate(divide="ignore"):
        lhs = np.log(norms[1:])
    return lhs <= k * np.log(ratio)


def gelfand_index(matrix, horizon: int = 512) -> GelfandCertificate:
    """Smallest ``k0`` with ``|P^k|^(1/k) <= (1+rho)/2`` on ``[k0, horizon]``.

    Raises :class:`HypothesisViolationError` when ``rho(P) >= 1`` (no such
    certificate can exist) and :class:`HorizonExceededError` when the bound
    has not set in anywhere inside the horizon.
    """
    arr = as_square(matrix)
    if horizon < 1:
        raise InvalidInputError("horizon must be at least 1")
    rho = spectral_radius(arr)
    if rho >= 1.0:
        raise HypothesisViolationError(
            f"spectral radius {rho:.6g} >= 1; power norms cannot decay"
        )
    ratio = 0.5 * (1.0 + rho)
    ok = _ratio_holds(norm_table(arr, horizon), ratio)
    # Minimal k0 whose whole suffix satisfies the bound.
    suffix_ok = np.logical_and.accumulate(ok[::-1])[::-1]
    hits = np.flatnonzero(suffix_ok)
    if hits.size == 0:
        raise HorizonExceededError(
            f"norm ratio bound not reached within horizon {horizon} "
            f"(rho={rho:.6g}, ratio={ratio:.6g})"
        )
    return GelfandCertificate(rho=rho, k0=int(hits[0]) + 1, horizon=horizon)


def decay_certificate(
    matrix, min_horizon: int = 64
) -> tuple[GelfandCertificate, np.ndarray]:
    """Certificate plus its norm table, with the horizon grown until it is at
    least twice ``k0``.

    Past that point submultiplicativity gives ``|P^j| <= ratio^j`` for every
    ``j >= k0``, so geometric continuation beyond the horizon is sound.
    """
    arr = as_square(matrix)
    horizon = max(int(min_horizon), 2)
    for _ in range(40):
        cert = gelfand_index(arr, horizon)
        if cert.horizon >= 2 * cert.k0:
            return cert, norm_table(arr, cert.horizon)
        horizon = 2 * cert.k0
    raise HorizonExceededError("norm decay threshold did not stabilize")


def tail_bound(
    norms: np.ndarray, cert: GelfandCertificate, r: int, exponent: float = 1.0
) -> float:
    """Upper bound on ``sum_{j>r} |P^j|^exponent``.

    Exact powers of the tabulated norms are summed through the certified
    horizon; past it the certified geometric envelope takes over.  The
    certificate must satisfy ``horizon >= 2*k0`` so the envelope is valid
    beyond the table (see :func:`decay_certificate`).
    """
    if r < 0:
        raise InvalidInputError("truncation index r must be nonnegative")
    if exponent <= 0.0:
        raise InvalidInputError("exponent must be positive")
    if cert.horizon < 2 * cert.k0:
        raise InvalidInputError(
            "certificate horizon must be at least 2*k0 for tail bounds"
        )
    if len(norms) != cert.horizon + 1:
        raise InvalidInputError("norm table length does not match certificate horizon")
    head = float((norms[r + 1 : cert.horizon + 1] ** exponent).sum())
    rate = cert.ratio**exponent
    geo_start = max(r + 1, cert.horizon + 1)
    return head + rate**geo_start / (1.0 - rate)


def certificate_holds(matrix, cert: GelfandCertificate) -> bool:
    """Replay a certificate against a fresh norm table."""
    arr = as_square(matrix)
    if abs(cert.ratio - 0.5 * (1.0 + cert.rho)) > 1e-15:
        return False
    ok = _ratio_holds(norm_table(arr, cert.horizon), cert.ratio)
    return bool(ok[cert.k0 - 1 :].all())


def psd_sqrt(matrix, sym_tol: float = 1e-12, eig_tol: float = 1e-12) -> np.ndarray:
    """Symmetric PSD square root via an eigendecomposition.

    The input must be symmetric within ``sym_tol * |V|`` and have eigenvalues
    no smaller than ``-eig_tol * max(1, |V|)``; tiny negative eigenvalues are
    clipped to zero before the root is formed.
    """
    arr = as_square(matrix, "V")
    norm = float(np.linalg.norm(arr, ord=2))
    asym = float(np.linalg.norm(arr - arr.T, ord=2))
    if asym > sym_tol * max(norm, 1e-300):
        raise InvalidInputError(
            f"matrix is not symmetric: |V - V^T| = {asym:.3e} exceeds tolerance"
        )
    sym = 0.5 * (arr + arr.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.min() < -eig_tol * max(1.0, norm):
        raise InvalidInputError(
            f"matrix is not positive semidefinite: min eigenvalue {eigvals.min():.3e}"
        )
    root = (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    return 0.5 * (root + root.T)


def matrix_to_json(matrix) -> dict:
    """Serialize to ``{"dim": d, "rows": [[...], ...]}``.

    Values stay Python floats; the JSON writer renders them with shortest
    round-trip precision, so serialization is lossless.
    """
    arr = as_square(matrix)
    return {"dim": int(arr.shape[0]), "rows": arr.tolist()}


def matrix_from_json(obj: dict) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`, with shape validation."""
    if not isinstance(obj, dict) or "dim" not in obj or "rows" not in obj:
        raise InvalidInputError("matrix JSON must have 'dim' and 'rows' fields")
    arr = as_square(obj["rows"], "rows")
    if arr.shape[0] != int(obj["dim"]):
        raise InvalidInputError(
            f"declared dim {obj['dim']} does not match rows shape {arr.shape}"
        )
    return arr
