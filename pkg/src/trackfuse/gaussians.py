"""Gaussian densities, mixtures, and the algebra used by the fusion rules.

Everything downstream (fusion, filtering, simulation) is built on the small
set of closed-form operations in this module: pointwise evaluation, products
and divisions of Gaussians (with their scalar normalization factors), fractional
powers, and moment matching of mixtures. Covariances are validated on entry
and re-symmetrized after every operation so that round-off never accumulates
into asymmetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDefiniteResult, NotPositiveDefinite, NotSymmetric

__all__ = [
    "GaussianDensity",
    "ScaledGaussian",
    "GaussianMixture",
    "assert_spd",
    "symmetrize",
    "spd_inv",
    "spd_sqrt",
    "gaussian_product",
    "gaussian_division",
    "scaled_power",
    "moment_match",
    "density_to_dict",
    "density_from_dict",
]

_SYM_RTOL = 1e-9
_EIG_FLOOR = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(M + M^T) / 2``."""
    return 0.5 * (mat + mat.T)


def assert_spd(cov: np.ndarray) -> np.ndarray:
    """Validate that ``cov`` is symmetric positive definite.

    Returns the Cholesky factor so callers can reuse it. Symmetry is checked
    to a relative tolerance of 1e-9; positive definiteness is established by
    Cholesky factorization, with matrices rejected as numerically singular
    when the smallest pivot falls below ``1e-12 * max(diag)``.

    Raises
    ------
    NotSymmetric
        If the matrix is not symmetric within tolerance.
    NotPositiveDefinite
        If factorization fails or the matrix is numerically singular.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise NotPositiveDefinite(f"expected a square matrix, got shape {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.T)) > _SYM_RTOL * scale:
        raise NotSymmetric("covariance is not symmetric within 1e-9 relative tolerance")
    try:
        chol = np.linalg.cholesky(symmetrize(cov))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance is not positive definite") from exc
    pivots = np.diag(chol) ** 2
    if np.min(pivots) <= _EIG_FLOOR * max(np.max(np.diag(cov)), np.finfo(float).tiny):
        raise NotPositiveDefinite("covariance is numerically singular")
    return chol


def spd_inv(mat: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix, symmetrized."""
    chol = assert_spd(mat)
    inv_chol = np.linalg.inv(chol)
    return symmetrize(inv_chol.T @ inv_chol)


def spd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix via eigendecomposition."""
    assert_spd(mat)
    eigval, eigvec = np.linalg.eigh(symmetrize(mat))
    return symmetrize((eigvec * np.sqrt(np.maximum(eigval, 0.0))) @ eigvec.T)


@dataclass(frozen=True)
class GaussianDensity:
    """A multivariate Gaussian with validated mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match state dimension {mean.size}"
            )
        assert_spd(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", symmetrize(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, x) -> np.ndarray:
        """Log density at ``x`` (shape ``(d,)`` or ``(n, d)``; ``(n,)`` if d=1)."""
        pts = _as_points(x, self.dim)
        chol = np.linalg.cholesky(self.cov)
        dev = np.linalg.solve(chol, (pts - self.mean).T)
        maha = np.sum(dev * dev, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out = -0.5 * (self.dim * _LOG_2PI + logdet + maha)
        return out[0] if np.ndim(x) <= 1 and pts.shape[0] == 1 else out

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def marginal(self, idx) -> "GaussianDensity":
        """Marginal over the state indices ``idx``."""
        idx = np.asarray(idx, dtype=int)
        return GaussianDensity(self.mean[idx], self.cov[np.ix_(idx, idx)])


@dataclass(frozen=True)
class ScaledGaussian:
    """A Gaussian density times a positive scalar.

    Products and divisions of Gaussians are Gaussians only up to a scalar
    factor; that factor is carried in log space so that widely separated
    operands do not underflow.
    """

    log_scale: float
    density: GaussianDensity

    @property
    def scale(self) -> float:
        return math.exp(self.log_scale)

    def eval(self, x) -> np.ndarray:
        return np.exp(self.log_scale + self.density.logpdf(x))


@dataclass(frozen=True)
class GaussianMixture:
    """A finite Gaussian mixture, optionally with a string tag per component.

    Tags identify the motion model a component originated from and survive
    fusion, which is what lets a fusion center route feedback back to the
    matching local filter mode.
    """

    weights: np.ndarray
    components: tuple[GaussianDensity, ...]
    tags: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        components = tuple(self.components)
        if weights.size != len(components):
            raise ValueError("one weight per component required")
        if weights.size == 0:
            raise ValueError("mixture must have at least one component")
        if np.any(weights < -1e-15) or not np.all(np.isfinite(weights)):
            raise ValueError("mixture weights must be finite and nonnegative")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError("mixture components must share one dimension")
        if self.tags is not None and len(self.tags) != len(components):
            raise ValueError("one tag per component required")
        object.__setattr__(self, "weights", np.maximum(weights, 0.0))
        object.__setattr__(self, "components", components)
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_components(self) -> int:
        return len(self.components)

    def normalized(self) -> "GaussianMixture":
        total = float(np.sum(self.weights))
        if total <= 0.0:
            raise ValueError("cannot normalize a mixture with zero total weight")
        return GaussianMixture(self.weights / total, self.components, self.tags)

    def pdf(self, x) -> np.ndarray:
        vals = [w * c.pdf(x) for w, c in zip(self.weights, self.components)]
        return np.sum(vals, axis=0)

    def logpdf(self, x) -> np.ndarray:
        logs = np.stack(
            [np.log(max(w, np.finfo(float).tiny)) + c.logpdf(x)
             for w, c in zip(self.weights, self.components)]
        )
        peak = np.max(logs, axis=0)
        return peak + np.log(np.sum(np.exp(logs - peak), axis=0))


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim == 1 else pts.reshape(1, -1)
    if pts.shape[-1] != dim:
        raise ValueError(f"points have dimension {pts.shape[-1]}, expected {dim}")
    return pts


def gaussian_product(a: GaussianDensity, b: GaussianDensity) -> ScaledGaussian:
    """Pointwise product of two Gaussians.

    ``N(x; a, A) N(x; b, B) = s N(x; c, C)`` with ``C = (A^-1 + B^-1)^-1``,
    ``c = C (A^-1 a + B^-1 b)`` and scale ``s = N(b; a, A + B)``. The scale is
    the normalization constant of the product and is returned in log space.
    """
    if a.dim != b.dim:
        raise ValueError("operands must share one dimension")
    sum_cov = a.cov + b.cov
    # C = A (A+B)^-1 B and c = a + A (A+B)^-1 (b - a): no explicit inverses.
    gain = np.linalg.solve(sum_cov, np.column_stack((b.mean - a.mean, b.cov)))
    mean = a.mean + a.cov @ gain[:, 0]
    cov = symmetrize(a.cov @ gain[:, 1:])
    log_scale = float(GaussianDensity(a.mean, sum_cov).logpdf(b.mean))
    return ScaledGaussian(log_scale, GaussianDensity(mean, cov))


def gaussian_division(num: GaussianDensity, den: GaussianDensity) -> ScaledGaussian:
    """Pointwise ratio ``N(x; n, N) / N(x; m, M)`` as a scaled Gaussian.

    Valid only when the numerator is strictly more informative, i.e.
    ``M - N`` is positive definite. Then ``F = (N^-1 - M^-1)^-1``,
    ``f = F (N^-1 n - M^-1 m)``, and the scale is ``1 / N(m; f, F + M)``.

    Raises
    ------
    NonPositiveDefiniteResult
        If ``den.cov - num.cov`` is not positive definite.
    """
    if num.dim != den.dim:
        raise ValueError("operands must share one dimension")
    gap = symmetrize(den.cov - num.cov)
    try:
        assert_spd(gap)
    except (NotSymmetric, NotPositiveDefinite) as exc:
        raise NonPositiveDefiniteResult(
            "division requires the numerator precision to exceed the denominator's"
        ) from exc
    # F = N + N (M - N)^-1 N stays SPD by construction.
    cov = symmetrize(num.cov + num.cov @ np.linalg.solve(gap, num.cov))
    info_mean = np.linalg.solve(num.cov, num.mean) - np.linalg.solve(den.cov, den.mean)
    mean = cov @ info_mean
    log_scale = -float(GaussianDensity(mean, cov + den.cov).logpdf(den.mean))
    return ScaledGaussian(log_scale, GaussianDensity(mean, cov))


def scaled_power(d: GaussianDensity, w: float) -> ScaledGaussian:
    """Fractional power ``N(x; m, C)^w`` for ``0 < w <= 1``.

    The result is ``s N(x; m, C / w)`` with
    ``s = sqrt(|2 pi C / w| / |2 pi C|^w)``.
    """
    if not 0.0 < w <= 1.0:
        raise ValueError("power weight must lie in (0, 1]")
    if w == 1.0:
        return ScaledGaussian(0.0, d)
    chol = np.linalg.cholesky(d.cov)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    log_scale = 0.5 * (1.0 - w) * (d.dim * _LOG_2PI + logdet) - 0.5 * d.dim * math.log(w)
    return ScaledGaussian(float(log_scale), GaussianDensity(d.mean, d.cov / w))


def moment_match(mixture: GaussianMixture) -> GaussianDensity:
    """Single Gaussian with the exact mean and covariance of the mixture.

    The covariance is the weighted within-component covariance plus the
    spread-of-means term, so it always dominates the weighted average of the
    component covariances.
    """
    mix = mixture.normalized()
    means = np.stack([c.mean for c in mix.components])
    mean = mix.weights @ means
    cov = np.zeros((mix.dim, mix.dim))
    for w, comp in zip(mix.weights, mix.components):
        dev = comp.mean - mean
        cov += w * (comp.cov + np.outer(dev, dev))
    return GaussianDensity(mean, symmetrize(cov))


def density_to_dict(density) -> dict:
    """JSON-ready dict for a Gaussian ({"mean","cov"}) or mixture ({"weights","components"})."""
    if isinstance(density, GaussianDensity):
        return {"mean": density.mean.tolist(), "cov": density.cov.tolist()}
    if isinstance(density, GaussianMixture):
        out = {
            "weights": density.weights.tolist(),
            "components": [density_to_dict(c) for c in density.components],
        }
        if density.tags is not None:
            out["tags"] = list(density.tags)
        return out
    raise TypeError(f"cannot serialize {type(density).__name__}")


def density_from_dict(data: dict):
    """Inverse of :func:`density_to_dict`. Raises ValueError on malformed input."""
    if not isinstance(data, dict):
        raise ValueError("density must be a JSON object")
    if "mean" in data and "cov" in data:
        return GaussianDensity(np.asarray(data["mean"], dtype=float),
                               np.asarray(data["cov"], dtype=float))
    if "weights" in data and "components" in data:
        comps = tuple(density_from_dict(c) for c in data["components"])
        if not all(isinstance(c, GaussianDensity) for c in comps):
            raise ValueError("mixture components must be plain Gaussians")
        tags = tuple(data["tags"]) if "tags" in data else None
        return GaussianMixture(np.asarray(data["weights"], dtype=float), comps, tags)
    raise ValueError('density JSON needs keys {"mean","cov"} or {"weights","components"}')
