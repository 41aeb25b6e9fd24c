"""Track-to-track fusion rules for Gaussian and Gaussian-mixture estimates.

Implemented strategies, all sharing the convention that the weight ``w``
multiplies the first operand in the underlying pool (so ``w = 1`` recovers the
operand that ``w`` points away from under division-style rules, see each
function):

- naive: product of densities, correct only for independent estimates;
- gmd: geometric mean density, the covariance-intersection rule;
- amd: arithmetic mean density, a mixture of the inputs;
- pcf: product of fractional powers applied component-wise to mixtures
  (a separated-component approximation of gmd for mixtures);
- hmd: harmonic mean density, approximated by dividing the naive product by
  a moment-matched Gaussian of the weighted input mixture.

The harmonic rule's division step is always well posed for a pair of
Gaussians: the moment-matched mixture covariance dominates the product
covariance, so the difference of precisions stays positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from .errors import (
    GateMatrixInvalid,
    NonPositiveDefiniteResult,
    NotPositiveDefinite,
    NotSymmetric,
)
from .gaussians import (
    GaussianDensity,
    GaussianMixture,
    gaussian_division,
    gaussian_product,
    moment_match,
    scaled_power,
    spd_inv,
    spd_sqrt,
    symmetrize,
)
from . import pooling

__all__ = [
    "FusionResult",
    "fuse_naive",
    "fuse_gmd",
    "fuse_amd",
    "fuse_pcf",
    "fuse_hmd",
    "fuse_hmd_mixture",
    "fuse_hmd_recursive",
    "fuse_ml_correlated",
    "hmd_norm_const",
    "association_gate",
    "fuse_pair",
    "fuse_many",
]

_WEIGHT_TOL = 1e-12


def _provenance(n_operands: int, position: int, model_tag: str) -> str:
    """Positional provenance tag for a fused-mixture component.

    The tag has one ``|``-separated field per fusion operand; field ``k``
    names the model of operand ``k`` that the component involves, empty when
    the component does not involve that operand. A cross product of mode i of
    operand 0 with mode j of operand 1 is tagged ``"i|j"``; a plain mixture
    component contributed by operand 0 alone is tagged ``"i|"``. Feedback
    routing reads the field at the recipient's own position.
    """
    fields = [""] * n_operands
    fields[position] = model_tag
    return "|".join(fields)


def _pair_tag(mix_a: GaussianMixture, i: int,
              mix_b: GaussianMixture, j: int) -> str | None:
    if mix_a.tags is None and mix_b.tags is None:
        return None
    ta = mix_a.tags[i] if mix_a.tags is not None else ""
    tb = mix_b.tags[j] if mix_b.tags is not None else ""
    return f"{ta}|{tb}"


@dataclass(frozen=True)
class FusionResult:
    """A fused density plus the strategy name and optional diagnostics."""

    density: GaussianDensity | GaussianMixture
    strategy: str
    diagnostics: dict = field(default_factory=dict)


def _check_weight(w: float) -> float:
    w = float(w)
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"fusion weight must lie in [0, 1], got {w}")
    return w


def fuse_naive(a: GaussianDensity, b: GaussianDensity) -> GaussianDensity:
    """Information-sum fusion: normalized product of the two densities.

    Optimal for independent estimates; double-counts common information
    otherwise, which is what the conservative rules below avoid.
    """
    return gaussian_product(a, b).density


def fuse_gmd(a: GaussianDensity, b: GaussianDensity, w: float = 0.5) -> GaussianDensity:
    """Geometric mean density (covariance intersection).

    ``cov = (w A^-1 + (1-w) B^-1)^-1`` with the matching information-weighted
    mean. ``w = 1`` returns ``a`` exactly, ``w = 0`` returns ``b``.
    """
    w = _check_weight(w)
    if w == 1.0:
        return a
    if w == 0.0:
        return b
    lam_a, lam_b = spd_inv(a.cov), spd_inv(b.cov)
    prec = w * lam_a + (1.0 - w) * lam_b
    cov = spd_inv(prec)
    mean = cov @ (w * (lam_a @ a.mean) + (1.0 - w) * (lam_b @ b.mean))
    return GaussianDensity(mean, cov)


def fuse_amd(inputs: Sequence[GaussianDensity | GaussianMixture],
             weights: Sequence[float]) -> GaussianMixture:
    """Arithmetic mean density: the weighted mixture of the inputs.

    Mixture inputs are flattened (their component weights scale by the input
    weight). Weights must sum to one; no pruning is performed.
    """
    weights = np.asarray(weights, dtype=float)
    if len(inputs) != weights.size:
        raise ValueError("one weight per input required")
    if abs(float(np.sum(weights)) - 1.0) > _WEIGHT_TOL:
        raise ValueError("input weights must sum to 1")
    n_inputs = len(inputs)
    out_w, out_c, out_t = [], [], []
    any_tags = False
    for pos, (wt, inp) in enumerate(zip(weights, inputs)):
        if isinstance(inp, GaussianDensity):
            out_w.append(wt)
            out_c.append(inp)
            out_t.append(_provenance(n_inputs, pos, ""))
        else:
            norm = inp.normalized()
            for k in range(norm.n_components):
                out_w.append(wt * norm.weights[k])
                out_c.append(norm.components[k])
                src = norm.tags[k] if norm.tags is not None else ""
                out_t.append(_provenance(n_inputs, pos, src))
                any_tags = any_tags or norm.tags is not None
    tags = tuple(out_t) if any_tags else None
    return GaussianMixture(np.asarray(out_w), tuple(out_c), tags)


def _as_mixture(d) -> GaussianMixture:
    if isinstance(d, GaussianMixture):
        return d.normalized()
    return GaussianMixture(np.array([1.0]), (d,))


def _mixture_product(a: GaussianMixture, b: GaussianMixture) -> GaussianMixture:
    """Term-by-term normalized product of two mixtures (naive rule for mixtures)."""
    log_w, comps, tags = [], [], []
    for i in range(a.n_components):
        for j in range(b.n_components):
            prod = gaussian_product(a.components[i], b.components[j])
            log_w.append(np.log(max(a.weights[i] * b.weights[j],
                                    np.finfo(float).tiny)) + prod.log_scale)
            comps.append(prod.density)
            tags.append(_pair_tag(a, i, b, j))
    log_w = np.asarray(log_w)
    wts = np.exp(log_w - np.max(log_w))
    return GaussianMixture(wts / np.sum(wts), tuple(comps),
                           tuple(tags) if tags[0] is not None else None)


def fuse_pcf(a, b, w: float = 0.5) -> GaussianMixture:
    """Pseudo-Chernoff fusion: component-wise powers, then a term product.

    Approximates the geometric pool of two mixtures by raising each mixture to
    a power component by component (valid when components are well separated)
    and multiplying the results term by term. Plain Gaussians are treated as
    one-component mixtures, for which this collapses to covariance
    intersection exactly.
    """
    w = _check_weight(w)
    mix_a, mix_b = _as_mixture(a), _as_mixture(b)
    if w == 1.0:
        return mix_a
    if w == 0.0:
        return mix_b

    def powered(mix: GaussianMixture, p: float):
        terms = [scaled_power(c, p) for c in mix.components]
        log_w = [p * np.log(max(wt, np.finfo(float).tiny)) + t.log_scale
                 for wt, t in zip(mix.weights, terms)]
        return log_w, [t.density for t in terms]

    lw_a, comp_a = powered(mix_a, w)
    lw_b, comp_b = powered(mix_b, 1.0 - w)
    log_w, comps, tags = [], [], []
    for i in range(len(comp_a)):
        for j in range(len(comp_b)):
            prod = gaussian_product(comp_a[i], comp_b[j])
            log_w.append(lw_a[i] + lw_b[j] + prod.log_scale)
            comps.append(prod.density)
            tags.append(_pair_tag(mix_a, i, mix_b, j))
    log_w = np.asarray(log_w)
    wts = np.exp(log_w - np.max(log_w))
    return GaussianMixture(wts / np.sum(wts), tuple(comps),
                           tuple(tags) if tags[0] is not None else None)


def fuse_hmd(a: GaussianDensity, b: GaussianDensity, w: float = 0.5,
             with_diagnostics: bool = False) -> FusionResult:
    """Harmonic mean density fusion of two Gaussians.

    The harmonic pool ``p_a p_b / (w p_a + (1-w) p_b)`` is approximated by
    moment matching the denominator mixture to a Gaussian ``N(m_eq, C_eq)``
    and dividing the exact product by it:

    ``cov = (A^-1 + B^-1 - C_eq^-1)^-1``

    with the analogous information-vector combination for the mean. ``w = 1``
    returns ``b`` exactly and ``w = 0`` returns ``a`` (the denominator then
    cancels one factor).

    Diagnostics (opt-in, they cost an extra eigendecomposition): the smallest
    eigenvalue of ``C_eq - C_naive`` (positive in exact arithmetic) and the
    approximate mass of the unnormalized pool.
    """
    w = _check_weight(w)
    if w == 1.0:
        return FusionResult(b, "hmd", {"endpoint": True})
    if w == 0.0:
        return FusionResult(a, "hmd", {"endpoint": True})
    eq = moment_match(GaussianMixture(np.array([w, 1.0 - w]), (a, b)))
    lam_a, lam_b, lam_eq = spd_inv(a.cov), spd_inv(b.cov), spd_inv(eq.cov)
    prec = symmetrize(lam_a + lam_b - lam_eq)
    try:
        cov = spd_inv(prec)
    except (NotPositiveDefinite, NotSymmetric) as exc:
        raise NonPositiveDefiniteResult(
            "harmonic fusion produced a non-positive-definite covariance") from exc
    mean = cov @ (lam_a @ a.mean + lam_b @ b.mean - lam_eq @ eq.mean)
    fused = GaussianDensity(mean, cov)
    diagnostics: dict = {}
    if with_diagnostics:
        cov_naive = spd_inv(symmetrize(lam_a + lam_b))
        diagnostics["pd_margin"] = float(
            np.min(np.linalg.eigvalsh(symmetrize(eq.cov - cov_naive))))
        log_s = float(GaussianDensity(a.mean, a.cov + b.cov).logpdf(b.mean))
        log_d = -float(GaussianDensity(mean, cov + eq.cov).logpdf(eq.mean))
        diagnostics["norm_const"] = float(np.exp(log_s + log_d))
    return FusionResult(fused, "hmd", diagnostics)


_PAIR_GAP_RTOL = 1e-6


def _pair_quotient(num: GaussianDensity, eq: GaussianDensity,
                   mix_a: GaussianMixture, mix_b: GaussianMixture,
                   i: int, j: int, w: float):
    """Divide one cross-product component by the pool, locally if degenerate.

    The global pool serves whenever ``C_eq - C_num`` is comfortably positive
    definite; otherwise the pair's own two-component pool takes its place
    (always valid by the pairwise dominance argument).
    """
    gap_eigs = np.linalg.eigvalsh(symmetrize(eq.cov - num.cov))
    if gap_eigs[0] > _PAIR_GAP_RTOL * gap_eigs[-1]:
        return gaussian_division(num, eq)
    wa = w * float(mix_a.weights[i])
    wb = (1.0 - w) * float(mix_b.weights[j])
    local = moment_match(GaussianMixture(
        np.array([wa, wb]) / (wa + wb),
        (mix_a.components[i], mix_b.components[j])))
    return gaussian_division(num, local)


def fuse_hmd_mixture(a, b, w: float = 0.5) -> GaussianMixture:
    """Harmonic mean density fusion of two Gaussian mixtures.

    The denominator pool over all components of both operands (weights
    ``w alpha_i`` and ``(1-w) beta_j``) is moment matched to one Gaussian
    ``N(m_eq, C_eq)``; each cross product ``alpha_i beta_j p_i q_j`` is then
    divided by it in closed form. The resulting component weight is

    ``kappa_ij = alpha_i beta_j s_ij / N(m_eq; f_ij, F_ij + C_eq)``

    where ``s_ij`` is the Gaussian product scale and ``(f_ij, F_ij)`` the
    divided component; everything is accumulated in log space and the output
    weights renormalized. When either operand is tagged, each output
    component carries the pair provenance tag ``"i|j"`` naming the operand
    modes it involves.

    The matched pool covariance is guaranteed to dominate the product
    covariance only for single-component operands. A cross pair of tight
    components can defeat it when the pool is dominated by much tighter
    components elsewhere (mixed-dimension tracks with small padded variances
    are the typical case), and near that boundary the pair's weight diverges.
    Such pairs are divided by their own two-component pool instead, which the
    pair-level guarantee always covers.
    """
    w = _check_weight(w)
    mix_a, mix_b = _as_mixture(a), _as_mixture(b)
    if w == 1.0:
        return mix_b
    if w == 0.0:
        return mix_a
    pool_w = np.concatenate((w * mix_a.weights, (1.0 - w) * mix_b.weights))
    eq = moment_match(GaussianMixture(pool_w, mix_a.components + mix_b.components))
    log_w, comps, tags = [], [], []
    for i in range(mix_a.n_components):
        for j in range(mix_b.n_components):
            prod = gaussian_product(mix_a.components[i], mix_b.components[j])
            quot = _pair_quotient(prod.density, eq, mix_a, mix_b, i, j, w)
            log_w.append(np.log(max(mix_a.weights[i] * mix_b.weights[j],
                                    np.finfo(float).tiny))
                         + prod.log_scale + quot.log_scale)
            comps.append(quot.density)
            tags.append(_pair_tag(mix_a, i, mix_b, j))
    log_w = np.asarray(log_w)
    wts = np.exp(log_w - np.max(log_w))
    return GaussianMixture(wts / np.sum(wts), tuple(comps),
                           tuple(tags) if tags[0] is not None else None)


def fuse_hmd_recursive(inputs: Sequence[GaussianDensity],
                       weights: Sequence[float]) -> FusionResult:
    """Harmonic fusion of several Gaussians by nested pairwise fusion.

    The weighted harmonic pool satisfies a nesting identity: pooling
    ``p_1 .. p_k`` can be done by pooling the first ``k-1`` (with their
    weights renormalized) and then pooling the result with ``p_k`` using
    weight pair ``(nu_1 + .. + nu_{k-1}, nu_k)``. Applied left to right this
    reduces multi-input fusion to the two-input rule: step ``k`` uses
    ``w = nu_k / (nu_1 + .. + nu_k)`` as the second operand's weight.

    Weights must be positive and sum to one. Two inputs reduce exactly to
    ``fuse_hmd(a, b, w=weights[1])``.
    """
    weights = np.asarray(weights, dtype=float)
    if len(inputs) != weights.size or weights.size == 0:
        raise ValueError("one positive weight per input required")
    if np.any(weights <= 0.0):
        raise ValueError("recursive fusion weights must be positive")
    if abs(float(np.sum(weights)) - 1.0) > _WEIGHT_TOL:
        raise ValueError("input weights must sum to 1")
    acc = inputs[0]
    running = float(weights[0])
    for k in range(1, weights.size):
        running += float(weights[k])
        acc = fuse_hmd(acc, inputs[k], w=float(weights[k]) / running).density
    return FusionResult(acc, "hmd", {"steps": int(weights.size) - 1})


def fuse_ml_correlated(a: GaussianDensity, b: GaussianDensity,
                       cross: np.ndarray) -> GaussianDensity:
    """Maximum-likelihood fusion of two estimates with known cross-covariance.

    Equivalent to generalized least squares on the stacked pair with joint
    error covariance ``[[A, X], [X^T, B]]``. Used as the non-conservative
    benchmark when the cross term is actually known. The joint covariance
    must be positive semidefinite; the fully redundant case (``X = A = B``)
    is handled through the pseudo-inverse and returns ``a`` unchanged.
    """
    cross = np.asarray(cross, dtype=float)
    joint = np.block([[a.cov, cross], [cross.T, b.cov]])
    eigs = np.linalg.eigvalsh(symmetrize(joint))
    if eigs[0] < -1e-9 * max(1.0, eigs[-1]):
        raise NotPositiveDefinite("joint covariance of the pair is indefinite")
    denom = symmetrize(a.cov + b.cov - cross - cross.T)
    gain = (a.cov - cross) @ np.linalg.pinv(denom)
    mean = a.mean + gain @ (b.mean - a.mean)
    cov = symmetrize(a.cov - gain @ (a.cov - cross.T))
    return GaussianDensity(mean, cov)


def hmd_norm_const(a: GaussianDensity, b: GaussianDensity, w: float = 0.5,
                   **quad_kwargs) -> float:
    """Mass of the unnormalized harmonic pool ``p_a p_b / (w p_a + (1-w) p_b)``.

    Computed by quadrature on the exact pointwise form. The value is at most
    one, equals one at ``w`` of 0 or 1, and is convex in ``w``; the shortfall
    from one measures how much the pool discounts for unknown correlation.
    """
    w = _check_weight(w)
    return pooling.harmonic_norm_const([a, b], [1.0 - w, w], **quad_kwargs)


def association_gate(a: GaussianDensity, b: GaussianDensity,
                     gamma: float | None = None, rho: float = 0.0) -> bool:
    """Chi-square test that two tracks may share an origin.

    The gate statistic is ``d^T G^-1 d`` with ``d`` the mean difference and
    ``G = A + B - 2 X`` for an assumed cross-covariance
    ``X = rho sqrt(A) sqrt(B)`` (symmetric matrix square roots, with ``G``
    symmetrized since the roots need not commute). ``gamma`` defaults to the
    95% chi-square quantile for the state dimension.

    Raises
    ------
    GateMatrixInvalid
        If the gate matrix is not positive definite (e.g. ``rho`` near 1 with
        nearly equal covariances).
    """
    if a.dim != b.dim:
        raise ValueError("operands must share one dimension")
    if gamma is None:
        gamma = float(chi2.ppf(0.95, a.dim))
    gate = a.cov + b.cov
    if rho != 0.0:
        sqrt_ab = spd_sqrt(a.cov) @ spd_sqrt(b.cov)
        gate = gate - rho * (sqrt_ab + sqrt_ab.T)
    try:
        lam = spd_inv(symmetrize(gate))
    except (NotPositiveDefinite, NotSymmetric) as exc:
        raise GateMatrixInvalid("gate matrix is not positive definite") from exc
    diff = a.mean - b.mean
    return float(diff @ lam @ diff) <= gamma


def fuse_pair(a, b, strategy: str, omega: float = 0.5):
    """Fuse two estimates by strategy name, dispatching on operand type.

    For mixture operands: ``naive`` multiplies term by term, ``gmd`` falls
    back to the pseudo-Chernoff approximation (the geometric pool of mixtures
    has no closed form), ``amd`` stacks, and ``hmd`` uses the mixture rule.
    Returns whatever density type the strategy produces.
    """
    gaussians = isinstance(a, GaussianDensity) and isinstance(b, GaussianDensity)
    if strategy == "naive":
        return fuse_naive(a, b) if gaussians else _mixture_product(_as_mixture(a),
                                                                   _as_mixture(b))
    if strategy == "gmd":
        return fuse_gmd(a, b, omega) if gaussians else fuse_pcf(a, b, omega)
    if strategy == "pcf":
        return fuse_pcf(a, b, omega)
    if strategy == "amd":
        return fuse_amd([a, b], [omega, 1.0 - omega])
    if strategy == "hmd":
        return fuse_hmd(a, b, omega).density if gaussians else fuse_hmd_mixture(a, b, omega)
    raise ValueError(f"unknown fusion strategy: {strategy!r}")


def fuse_many(densities: Sequence[GaussianDensity], strategy: str,
              weights: Sequence[float] | None = None):
    """Fuse several Gaussian estimates with equal weights by default."""
    n = len(densities)
    if n == 0:
        raise ValueError("nothing to fuse")
    if n == 1:
        return densities[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    weights = np.asarray(weights, dtype=float)
    if strategy == "naive":
        acc = densities[0]
        for d in densities[1:]:
            acc = fuse_naive(acc, d)
        return acc
    if strategy == "gmd":
        lams = [spd_inv(d.cov) for d in densities]
        lam = sum(w * L for w, L in zip(weights, lams))
        info = sum(w * (L @ d.mean) for w, L, d in zip(weights, lams, densities))
        cov = spd_inv(symmetrize(lam))
        return GaussianDensity(cov @ info, cov)
    if strategy == "amd":
        return fuse_amd(list(densities), weights)
    if strategy == "hmd":
        return fuse_hmd_recursive(list(densities), weights).density
    raise ValueError(f"unknown fusion strategy: {strategy!r}")
