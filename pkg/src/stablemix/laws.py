"""Increment laws and limit characteristic functions.

A law here plays two roles at once: it is a sampler (consuming uniforms from
an explicit stream, so draws are reproducible and shardable) and it is a
characteristic function (the analytic reference that the empirical side is
checked against).  Four families are supported as limit increment laws:

* ``NormalLaw``    -- Gaussian with a fixed PSD covariance,
* ``CauchyLaw``    -- the standard isotropic multivariate Cauchy,
* ``StableLaw``    -- symmetric alpha-stable with a discrete spectral measure,
* ``EmpiricalLaw`` -- uniform draws from a finite sample pool.

``LogCauchyRay`` is a deliberately pathological extra sampler with an
infinite log-moment.  It exists only to exercise the divergence diagnostics
and is not a member of the limit-law family (it has no usable
characteristic-function closed form and violates the moment requirement the
four families share).

Sampling transforms are built from fixed numbers of uniforms per draw
(inverse-CDF for normals, the Chambers-Mallows-Stuck map for stable
variates), which is what lets path-indexed streams replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import matalg
from .errors import InvalidInputError
from .matalg import GelfandCertificate

# Floor applied to raw uniforms before inverse transforms; keeps ndtri and
# log finite without measurably perturbing the distribution.
_U_FLOOR = 1e-300

# Smallest magnitude allowed for the Cauchy denominator draw.
_W_FLOOR = 1e-16


def _clean_thetas(thetas, dim: int):
    """Return (array of shape (m, dim), was_single_vector)."""
    arr = np.asarray(thetas, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidInputError(
            f"theta must have dimension {dim}, got shape {np.shape(thetas)}"
        )
    if not np.isfinite(arr).all():
        raise InvalidInputError("theta has non-finite entries")
    return arr, single


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite discrete measure on the unit sphere, stored one atom per
    antipodal pair.

    ``atoms`` has shape (m, dim) with unit rows, ``weights`` is positive.
    The measure it represents is the symmetrized ``sum_k w_k/2 *
    (delta_{s_k} + delta_{-s_k})``, so total mass equals ``weights.sum()``
    and only one representative per pair is stored.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise InvalidInputError("spectral measure needs at least one atom")
        if weights.shape != (atoms.shape[0],):
            raise InvalidInputError(
                f"weights shape {weights.shape} does not match {atoms.shape[0]} atoms"
            )
        if not (np.isfinite(atoms).all() and np.isfinite(weights).all()):
            raise InvalidInputError("spectral measure has non-finite entries")
        lengths = np.linalg.norm(atoms, axis=1)
        if np.abs(lengths - 1.0).max() > 1e-12:
            raise InvalidInputError("spectral measure atoms must be unit vectors")
        if weights.min() <= 0.0:
            raise InvalidInputError("spectral measure weights must be positive")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def to_json(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @staticmethod
    def from_json(obj: dict) -> "SpectralMeasure":
        return SpectralMeasure(
            atoms=np.asarray(obj["atoms"], dtype=float),
            weights=np.asarray(obj["weights"], dtype=float),
        )


class IncrementLaw:
    """Common sampler/characteristic-function interface.

    Subclasses fix ``dim`` and ``uniforms_per_draw`` and implement
    ``from_uniforms`` (a pure map from uniform variates to one increment,
    vectorized over leading axes) and ``cf``.
    """

    dim: int
    uniforms_per_draw: int

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cf(self, thetas) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.from_uniforms(rng.random(self.uniforms_per_draw))

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.from_uniforms(rng.random((count, self.uniforms_per_draw)))


class NormalLaw(IncrementLaw):
    """Centered Gaussian with covariance ``cov`` (symmetric PSD)."""

    def __init__(self, cov):
        self.cov = matalg.as_square(cov, "cov")
        # Raises on asymmetric or indefinite input.
        self.factor = matalg.psd_sqrt(self.cov)
        self.dim = self.cov.shape[0]
        self.uniforms_per_draw = self.dim

    def from_uniforms(self, u):
        z = ndtri(np.maximum(u, _U_FLOOR))
        return z @ self.factor.T

    def cf(self, thetas):
        arr, single = _clean_thetas(thetas, self.dim)
        quad = np.einsum("md,de,me->m", arr, self.cov, arr)
        out = np.exp(-0.5 * quad).astype(complex)
        return out[0] if single else out


class CauchyLaw(IncrementLaw):
    """Standard isotropic multivariate Cauchy (characteristic function
    ``exp(-|theta|)``), realized as a Gaussian vector divided by the modulus
    of an independent scalar Gaussian."""

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidInputError("dim must be positive")
        self.dim = int(dim)
        self.uniforms_per_draw = self.dim + 1

    def from_uniforms(self, u):
        z = ndtri(np.maximum(u[..., : self.dim], _U_FLOOR))
        w = ndtri(np.maximum(u[..., self.dim], _U_FLOOR))
        denom = np.maximum(np.abs(w), _W_FLOOR)
        return z / denom[..., None]

    def cf(self, thetas):
        arr, single = _clean_thetas(thetas, self.dim)
        out = np.exp(-np.linalg.norm(arr, axis=1)).astype(complex)
        return out[0] if single else out


def sas_from_uniforms(alpha: float, u_angle, u_exp):
    """Chambers-Mallows-Stuck map for symmetric alpha-stable variates.

    Sends independent uniforms to a variate with characteristic function
    ``exp(-|t|^alpha)``.  Valid for ``alpha`` in (0, 2]; at ``alpha=1`` it
    degenerates to ``tan`` (standard Cauchy), at ``alpha=2`` to a centered
    normal with variance 2.
    """
    if not (0.0 < alpha <= 2.0):
        raise InvalidInputError(f"alpha must lie in (0, 2], got {alpha}")
    u_angle = np.asarray(u_angle, dtype=float)
    u_exp = np.asarray(u_exp, dtype=float)
    angle = np.pi * (u_angle - 0.5)
    w = np.maximum(-np.log(np.maximum(1.0 - u_exp, _U_FLOOR)), _U_FLOOR)
    if alpha == 1.0:
        return np.tan(angle)
    cos_angle = np.maximum(np.cos(angle), _U_FLOOR)
    lead = np.sin(alpha * angle) / cos_angle ** (1.0 / alpha)
    rest = (np.cos((1.0 - alpha) * angle) / w) ** ((1.0 - alpha) / alpha)
    return lead * rest


def sample_1d_sas(
    alpha: float, rng: np.random.Generator, size: int | tuple | None = None
):
    """Draw scalar symmetric alpha-stable variates, cf ``exp(-|t|^alpha)``."""
    shape = () if size is None else size
    u = rng.random(np.append(np.atleast_1d(shape), 2).astype(int) if size is not None else 2)
    if size is None:
        return float(sas_from_uniforms(alpha, u[0], u[1]))
    return sas_from_uniforms(alpha, u[..., 0], u[..., 1])


class StableLaw(IncrementLaw):
    """Symmetric alpha-stable law with discrete spectral measure.

    ``alpha`` must lie strictly inside (0, 2): the Gaussian endpoint has its
    own law class and the scalar sampler, not this one.  A draw superposes
    one antipodal pair of rays per atom,

        sum_k (w_k/2)^(1/alpha) * (s_k * zeta_k - s_k * zeta_k'),

    with iid scalar variates from :func:`sas_from_uniforms`, which matches
    the characteristic function ``exp(-sum_k w_k |<theta, s_k>|^alpha)``.
    """

    def __init__(self, alpha: float, measure: SpectralMeasure):
        if not (0.0 < alpha < 2.0):
            raise InvalidInputError(
                f"alpha must lie in the open interval (0, 2), got {alpha}"
            )
        self.alpha = float(alpha)
        self.measure = measure
        self.dim = measure.dim
        self.uniforms_per_draw = 4 * measure.atoms.shape[0]

    def from_uniforms(self, u):
        m = self.measure.atoms.shape[0]
        u = np.asarray(u, dtype=float)
        quads = u.reshape(u.shape[:-1] + (m, 4))
        zeta = sas_from_uniforms(self.alpha, quads[..., 0], quads[..., 1])
        zeta_minus = sas_from_uniforms(self.alpha, quads[..., 2], quads[..., 3])
        scale = (0.5 * self.measure.weights) ** (1.0 / self.alpha)
        coeff = scale * (zeta - zeta_minus)
        return coeff @ self.measure.atoms

    def cf(self, thetas):
        arr, single = _clean_thetas(thetas, self.dim)
        proj = np.abs(arr @ self.measure.atoms.T) ** self.alpha
        out = np.exp(-(proj * self.measure.weights).sum(axis=1)).astype(complex)
        return out[0] if single else out


class EmpiricalLaw(IncrementLaw):
    """Uniform draws from a finite pool of d-vectors."""

    def __init__(self, pool):
        arr = np.atleast_2d(np.asarray(pool, dtype=float))
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise InvalidInputError("empirical pool must be a nonempty (n, d) array")
        if not np.isfinite(arr).all():
            raise InvalidInputError("empirical pool has non-finite entries")
        self.pool = arr
        self.dim = arr.shape[1]
        self.uniforms_per_draw = 1

    def from_uniforms(self, u):
        u = np.asarray(u, dtype=float)
        scalar_u = u[..., 0] if u.shape and u.shape[-1] == 1 else u
        idx = np.minimum((scalar_u * len(self.pool)).astype(int), len(self.pool) - 1)
        return self.pool[idx]

    def cf(self, thetas):
        arr, single = _clean_thetas(thetas, self.dim)
        phases = np.exp(1j * (arr @ self.pool.T))
        out = phases.mean(axis=1)
        return out[0] if single else out


def empirical_law_from_csv(path) -> EmpiricalLaw:
    """Load an empirical pool from a CSV file, one column per coordinate.

    A single non-numeric header line is tolerated, so sample files written
    by this package can be fed straight back in.
    """
    try:
        pool = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise InvalidInputError(f"cannot load empirical pool from {path}: {exc}") from exc
    except ValueError:
        try:
            pool = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
        except (OSError, ValueError) as exc:
            raise InvalidInputError(
                f"cannot load empirical pool from {path}: {exc}"
            ) from exc
    return EmpiricalLaw(pool)


class LogCauchyRay(IncrementLaw):
    """Diagnostic sampler ``exp(C) * e_1`` with C standard Cauchy.

    Its log-magnitude is Cauchy-tailed, so the log-moment is infinite; use it
    to demonstrate non-convergent series diagnostics.  Draws can overflow to
    ``inf``; that is honest here, since an overflowed draw genuinely exceeds
    every finite threshold the diagnostics compare against.  Not a limit law:
    no characteristic-function closed form is provided.
    """

    def __init__(self, dim: int = 1):
        if dim < 1:
            raise InvalidInputError("dim must be positive")
        self.dim = int(dim)
        self.uniforms_per_draw = 1

    def from_uniforms(self, u):
        u = np.asarray(u, dtype=float)
        scalar_u = u[..., 0] if u.shape and u.shape[-1] == 1 else u
        # Overflow to inf is a legitimate sample here: the tail is so heavy
        # that float64 cannot hold every draw.
        with np.errstate(over="ignore"):
            ray = np.exp(np.tan(np.pi * (scalar_u - 0.5)))
        out = np.zeros(np.shape(ray) + (self.dim,))
        out[..., 0] = ray
        return out

    def cf(self, thetas):
        raise InvalidInputError(
            "LogCauchyRay is a diagnostic sampler without a closed-form "
            "characteristic function"
        )


def cf_increment(law: IncrementLaw, thetas):
    """Characteristic function of one increment, scalar or grid evaluated.

    Thin named wrapper over ``law.cf`` that also enforces the modulus bound
    every characteristic function must satisfy.
    """
    values = law.cf(thetas)
    if np.abs(np.atleast_1d(values)).max() > 1.0 + 1e-12:
        raise InvalidInputError("characteristic function modulus exceeded 1")
    return values


def sample_increment(law: IncrementLaw, rng: np.random.Generator) -> np.ndarray:
    """Draw one increment from ``law`` using the supplied generator."""
    return law.sample(rng)


@dataclass(frozen=True)
class TruncatedCf:
    """Grid values of a truncated limit characteristic function.

    ``exponent_tail`` bounds, per grid point, how much the negative exponent
    can still grow if the series were continued past ``r``; the certificate
    records the norm-decay evidence the bound rests on.
    """

    values: np.ndarray
    exponent_tail: np.ndarray
    r: int
    certificate: GelfandCertificate


def _decay_data(P, r, certificate):
    arr = matalg.as_square(P)
    if r < 0:
        raise InvalidInputError("truncation index r must be nonnegative")
    if certificate is None:
        cert, norms = matalg.decay_certificate(arr)
    else:
        cert = certificate
        norms = matalg.norm_table(arr, cert.horizon)
    return arr, cert, norms


def cf_normal_limit(P, cov, thetas, r: int, certificate=None) -> TruncatedCf:
    """Gaussian limit characteristic function truncated at ``r``:
    ``exp(-theta' S_r theta / 2)`` with ``S_r = sum_{j<=r} P^j cov P^j'``.

    The tail bound per point is ``|theta|^2 |cov| sum_{j>r} |P^j|^2 / 2``.
    """
    arr, cert, norms = _decay_data(P, r, certificate)
    matalg.psd_sqrt(cov)  # rejects asymmetric or indefinite covariance
    cov = matalg.as_square(cov, "cov")
    grid, single = _clean_thetas(thetas, arr.shape[0])
    sigma = np.zeros_like(arr)
    pj = np.eye(arr.shape[0])
    for _ in range(r + 1):
        sigma += pj @ cov @ pj.T
        pj = pj @ arr
    quad = np.einsum("md,de,me->m", grid, sigma, grid)
    values = np.exp(-0.5 * quad).astype(complex)
    tail = matalg.tail_bound(norms, cert, r, exponent=2.0)
    cov_norm = float(np.linalg.norm(cov, ord=2))
    per_point = 0.5 * np.linalg.norm(grid, axis=1) ** 2 * cov_norm * tail
    if single:
        return TruncatedCf(values[0], per_point[0], r, cert)
    return TruncatedCf(values, per_point, r, cert)


def cf_cauchy_limit(P, thetas, r: int, certificate=None) -> TruncatedCf:
    """Cauchy limit characteristic function truncated at ``r``:
    ``exp(-sum_{j<=r} |P^j' theta|)`` with geometric tail ``|theta| *
    sum_{j>r}`` of certified power norms."""
    arr, cert, norms = _decay_data(P, r, certificate)
    grid, single = _clean_thetas(thetas, arr.shape[0])
    exponent = np.zeros(grid.shape[0])
    proj = grid.copy()
    for _ in range(r + 1):
        exponent += np.linalg.norm(proj, axis=1)
        proj = proj @ arr  # theta P^(j+1) rows are (P^(j+1))' theta
    values = np.exp(-exponent).astype(complex)
    per_point = np.linalg.norm(grid, axis=1) * matalg.tail_bound(norms, cert, r)
    if single:
        return TruncatedCf(values[0], per_point[0], r, cert)
    return TruncatedCf(values, per_point, r, cert)


def cf_stable_limit(
    P, alpha: float, measure: SpectralMeasure, thetas, r: int, certificate=None
) -> TruncatedCf:
    """Symmetric alpha-stable limit characteristic function truncated at ``r``:
    ``exp(-sum_{j<=r} sum_k w_k |<P^j' theta, s_k>|^alpha)``.

    Tail bound per point: ``|theta|^alpha * mass * sum_{j>r} |P^j|^alpha``.
    """
    if not (0.0 < alpha < 2.0):
        raise InvalidInputError(f"alpha must lie in (0, 2), got {alpha}")
    arr, cert, norms = _decay_data(P, r, certificate)
    if measure.dim != arr.shape[0]:
        raise InvalidInputError("spectral measure dimension does not match P")
    grid, single = _clean_thetas(thetas, arr.shape[0])
    exponent = np.zeros(grid.shape[0])
    proj = grid.copy()
    for _ in range(r + 1):
        inner = np.abs(proj @ measure.atoms.T) ** alpha
        exponent += (inner * measure.weights).sum(axis=1)
        proj = proj @ arr
    values = np.exp(-exponent).astype(complex)
    tail = matalg.tail_bound(norms, cert, r, exponent=alpha)
    per_point = np.linalg.norm(grid, axis=1) ** alpha * measure.total_mass * tail
    if single:
        return TruncatedCf(values[0], per_point[0], r, cert)
    return TruncatedCf(values, per_point, r, cert)


def series_cf_values(law: IncrementLaw, P, r: int, thetas) -> np.ndarray:
    """Characteristic function of ``sum_{j<=r} P^j Z_j`` on a theta grid,
    as the product of per-term increment characteristic functions."""
    arr = matalg.as_square(P)
    grid, single = _clean_thetas(thetas, law.dim)
    if arr.shape[0] != law.dim:
        raise InvalidInputError("P dimension does not match law dimension")
    values = np.ones(grid.shape[0], dtype=complex)
    proj = grid.copy()
    for _ in range(r + 1):
        values *= law.cf(proj)
        proj = proj @ arr
    return values[0] if single else values


_LAW_TAGS = {"normal", "cauchy", "stable", "empirical", "log-cauchy-ray"}


def law_to_json(law: IncrementLaw) -> dict:
    if isinstance(law, NormalLaw):
        return {"law": "normal", "cov": law.cov.tolist()}
    if isinstance(law, CauchyLaw):
        return {"law": "cauchy", "dim": law.dim}
    if isinstance(law, StableLaw):
        return {"law": "stable", "alpha": law.alpha, **law.measure.to_json()}
    if isinstance(law, EmpiricalLaw):
        return {"law": "empirical", "pool": law.pool.tolist()}
    if isinstance(law, LogCauchyRay):
        return {"law": "log-cauchy-ray", "dim": law.dim}
    raise InvalidInputError(f"cannot serialize law of type {type(law).__name__}")


def law_from_json(obj: dict, allow_diagnostic: bool = False) -> IncrementLaw:
    """Build a law from its JSON form.

    The diagnostic ``log-cauchy-ray`` tag is rejected unless explicitly
    allowed, so limit-law consumers cannot receive it by accident.
    """
    if not isinstance(obj, dict) or "law" not in obj:
        raise InvalidInputError("law JSON must be an object with a 'law' tag")
    tag = obj["law"]
    if tag not in _LAW_TAGS:
        raise InvalidInputError(f"unknown law tag {tag!r}")

    def field(key: str):
        # Missing keys must surface as input errors, not raw KeyErrors.
        try:
            return obj[key]
        except KeyError:
            raise InvalidInputError(
                f"law {tag!r} requires key {key!r}"
            ) from None

    if tag == "normal":
        return NormalLaw(np.asarray(field("cov"), dtype=float))
    if tag == "cauchy":
        return CauchyLaw(int(field("dim")))
    if tag == "stable":
        measure = SpectralMeasure(
            np.asarray(field("atoms"), dtype=float),
            np.asarray(field("weights"), dtype=float),
        )
        return StableLaw(float(field("alpha")), measure)
    if tag == "empirical":
        if "csv" in obj:
            return empirical_law_from_csv(obj["csv"])
        if "pool" in obj:
            return EmpiricalLaw(np.asarray(obj["pool"], dtype=float))
        raise InvalidInputError("empirical law JSON needs 'pool' or 'csv'")
    if not allow_diagnostic:
        raise InvalidInputError(
            "log-cauchy-ray is a diagnostic sampler, not a limit law"
        )
    return LogCauchyRay(int(obj.get("dim", 1)))
