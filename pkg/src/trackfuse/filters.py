"""Extended Kalman filtering and interacting multiple-model tracking.

The EKF update uses the Joseph-form covariance and wraps angular innovation
components. The IMM keeps one density per motion model; models of different
state dimension interact by zero-padding the shorter states up to the longest
one (padded entries get a configured variance) wherever cross-mode moments
are formed, and truncating back afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModeLikelihoodDegenerate, SingularInnovation
from .gaussians import GaussianDensity, GaussianMixture, moment_match, symmetrize
from .models import MeasurementModel, MotionModel, wrap_angle

__all__ = [
    "ekf_predict",
    "ekf_update",
    "ekf_update_with_loglik",
    "ImmState",
    "imm_step",
    "imm_output",
    "zero_pad",
    "truncate_state",
    "prune_mixture",
    "route_feedback",
    "apply_feedback",
]

_LOG_2PI = math.log(2.0 * math.pi)


def ekf_predict(track: GaussianDensity, motion: MotionModel) -> GaussianDensity:
    """One motion-model prediction step."""
    f = motion.transition
    return GaussianDensity(f @ track.mean,
                           symmetrize(f @ track.cov @ f.T + motion.noise))


def ekf_update_with_loglik(track: GaussianDensity, meas: MeasurementModel,
                           z: np.ndarray) -> tuple[GaussianDensity, float]:
    """Joseph-form measurement update, returning the innovation log-likelihood."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    jac = meas.jacobian(track.mean, track.dim)
    innov = z - meas.measure(track.mean)
    for idx in meas.angle_indices:
        innov[idx] = wrap_angle(innov[idx])
    s = symmetrize(jac @ track.cov @ jac.T + meas.noise_cov)
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is singular") from exc
    gain = np.linalg.solve(s, jac @ track.cov).T
    mean = track.mean + gain @ innov
    imkh = np.eye(track.dim) - gain @ jac
    cov = symmetrize(imkh @ track.cov @ imkh.T + gain @ meas.noise_cov @ gain.T)
    white = np.linalg.solve(chol, innov)
    loglik = -0.5 * (z.size * _LOG_2PI
                     + 2.0 * float(np.sum(np.log(np.diag(chol))))
                     + float(white @ white))
    return GaussianDensity(mean, cov), loglik


def ekf_update(track: GaussianDensity, meas: MeasurementModel,
               z: np.ndarray) -> GaussianDensity:
    """One measurement update step."""
    return ekf_update_with_loglik(track, meas, z)[0]


def zero_pad(track: GaussianDensity, target_dim: int, pad_var: float) -> GaussianDensity:
    """Embed a state in a larger space; padded entries get variance ``pad_var``."""
    extra = target_dim - track.dim
    if extra < 0:
        raise ValueError("cannot pad to a smaller dimension")
    if extra == 0:
        return track
    mean = np.concatenate((track.mean, np.zeros(extra)))
    cov = np.zeros((target_dim, target_dim))
    cov[: track.dim, : track.dim] = track.cov
    cov[track.dim:, track.dim:] = pad_var * np.eye(extra)
    return GaussianDensity(mean, cov)


def truncate_state(track: GaussianDensity, dim: int) -> GaussianDensity:
    """Marginal over the leading ``dim`` state entries."""
    if dim > track.dim:
        raise ValueError("cannot truncate to a larger dimension")
    return GaussianDensity(track.mean[:dim], track.cov[:dim, :dim])


@dataclass(frozen=True)
class ImmState:
    """Mode-conditioned densities with probabilities and the Markov transition.

    ``models[k]`` generates ``densities[k]``; ``transition[i, j]`` is the
    probability of switching from mode ``i`` to mode ``j`` over one step.
    ``pad_var`` is the variance assigned to zero-padded entries when modes of
    different dimension are combined.
    """

    densities: tuple[GaussianDensity, ...]
    mode_probs: np.ndarray
    models: tuple[MotionModel, ...]
    transition: np.ndarray
    pad_var: float = 1.0

    def __post_init__(self):
        probs = np.atleast_1d(np.asarray(self.mode_probs, dtype=float))
        trans = np.atleast_2d(np.asarray(self.transition, dtype=float))
        n = len(self.densities)
        if len(self.models) != n or probs.shape != (n,) or trans.shape != (n, n):
            raise ValueError("densities, models, mode_probs and transition disagree")
        if np.any(probs < 0) or abs(float(np.sum(probs)) - 1.0) > 1e-9:
            raise ValueError("mode probabilities must be a distribution")
        if np.max(np.abs(np.sum(trans, axis=1) - 1.0)) > 1e-9:
            raise ValueError("transition rows must sum to 1")
        for dens, model in zip(self.densities, self.models):
            if dens.dim != model.state_dim:
                raise ValueError("mode density dimension does not match its model")
        object.__setattr__(self, "densities", tuple(self.densities))
        object.__setattr__(self, "mode_probs", probs)
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "transition", trans)

    @property
    def max_dim(self) -> int:
        return max(m.state_dim for m in self.models)


def imm_step(state: ImmState, meas: MeasurementModel, z: np.ndarray) -> ImmState:
    """One interacting multiple-model cycle: mix, predict, update, reweight.

    Mixing forms, for each destination mode, the moment-matched Gaussian of
    the incoming mode densities under the transition-conditioned weights
    (in the zero-padded common space when dimensions differ). If every mode
    likelihood underflows to zero the probabilities are reset to uniform; a
    non-finite likelihood raises :class:`ModeLikelihoodDegenerate`.
    """
    n = len(state.models)
    mu = state.mode_probs
    trans = state.transition
    cbar = trans.T @ mu
    cbar = np.maximum(cbar, np.finfo(float).tiny)
    top = state.max_dim
    padded = [zero_pad(d, top, state.pad_var) for d in state.densities]

    new_densities = []
    logliks = np.empty(n)
    for j, model in enumerate(state.models):
        mix_w = trans[:, j] * mu / cbar[j]
        mixed = moment_match(GaussianMixture(mix_w, tuple(padded)))
        mode_track = truncate_state(mixed, model.state_dim)
        predicted = ekf_predict(mode_track, model)
        updated, loglik = ekf_update_with_loglik(predicted, meas, z)
        new_densities.append(updated)
        logliks[j] = loglik

    if not np.all(np.isfinite(logliks)):
        raise ModeLikelihoodDegenerate("non-finite mode likelihood")
    log_mu = np.log(cbar) + logliks
    log_mu -= np.max(log_mu)
    new_mu = np.exp(log_mu)
    total = float(np.sum(new_mu))
    if total <= 0.0:
        new_mu = np.full(n, 1.0 / n)
    else:
        new_mu = new_mu / total
    return replace(state, densities=tuple(new_densities), mode_probs=new_mu)


def imm_output(state: ImmState) -> GaussianMixture:
    """Mode mixture in the common (padded) space, tagged by model kind."""
    comps = tuple(zero_pad(d, state.max_dim, state.pad_var)
                  for d in state.densities)
    return GaussianMixture(state.mode_probs.copy(), comps,
                           tuple(m.kind for m in state.models))


def prune_mixture(mixture: GaussianMixture, target_count: int) -> GaussianMixture:
    """Keep the ``target_count`` highest-weight components and renormalize.

    Ties break toward the component with the smaller covariance trace.
    """
    if target_count < 1:
        raise ValueError("target_count must be at least 1")
    if mixture.n_components <= target_count:
        return mixture.normalized()
    traces = np.array([np.trace(c.cov) for c in mixture.components])
    order = np.lexsort((traces, -mixture.weights))[:target_count]
    keep = np.sort(order)
    tags = tuple(mixture.tags[k] for k in keep) if mixture.tags is not None else None
    pruned = GaussianMixture(mixture.weights[keep],
                             tuple(mixture.components[k] for k in keep), tags)
    return pruned.normalized()


def route_feedback(state: ImmState, fed: GaussianMixture,
                   operand_idx: int) -> ImmState:
    """Apply fusion-center feedback to the local that was fusion operand
    ``operand_idx``.

    Fused components carry a positional provenance tag with one field per
    operand ("i|j" for a pair hypothesis), naming the operand modes each
    component involves. For every local mode, the components involving that
    mode are moment-matched into the mode's replacement; a mode involved in
    no component keeps its current density and probability. The prepared
    one-component-per-mode mixture is then applied with
    :func:`apply_feedback`.

    A product-style fused mixture involves every recipient mode in several
    cross hypotheses, so each mode receives the full fused information. A
    plain mixture of the operands (arithmetic pooling) contains each
    operand's own modes unchanged, so routing hands every local its own
    state back and the feedback carries no new information.
    """
    if fed.tags is None:
        raise ValueError("feedback mixture must carry provenance tags")
    groups: dict[str, list[int]] = {}
    for k, tag in enumerate(fed.tags):
        fields = tag.split("|")
        if operand_idx >= len(fields):
            raise ValueError("provenance tag has no field for this operand")
        if fields[operand_idx]:
            groups.setdefault(fields[operand_idx], []).append(k)
    keep_w, keep_c = [], []
    for m, model in enumerate(state.models):
        idx = groups.get(model.kind)
        if idx:
            group_w = fed.weights[idx]
            group = GaussianMixture(group_w / np.sum(group_w),
                                    tuple(fed.components[k] for k in idx))
            keep_w.append(float(np.sum(group_w)))
            keep_c.append(moment_match(group))
        else:
            keep_w.append(float(state.mode_probs[m]))
            keep_c.append(zero_pad(state.densities[m], state.max_dim,
                                   state.pad_var))
    prepared = GaussianMixture(np.asarray(keep_w), tuple(keep_c),
                               tuple(m.kind for m in state.models)).normalized()
    return apply_feedback(state, prepared)


def apply_feedback(state: ImmState, fed: GaussianMixture) -> ImmState:
    """Replace each mode density with the fed component matching its model tag.

    ``fed`` must carry exactly one component per local mode (see
    :func:`route_feedback`); components live in the padded common space and are
    truncated back to each mode's own dimension. Mode probabilities are taken
    from the fed weights.
    """
    if fed.tags is None or fed.n_components != len(state.models):
        raise ValueError("feedback mixture must have one tagged component per mode")
    densities = []
    probs = np.empty(len(state.models))
    for k, model in enumerate(state.models):
        matches = [i for i, t in enumerate(fed.tags) if t == model.kind]
        if len(matches) != 1:
            raise ValueError(f"feedback must have exactly one component tagged "
                             f"{model.kind!r}")
        comp = fed.components[matches[0]]
        densities.append(truncate_state(comp, model.state_dim))
        probs[k] = fed.weights[matches[0]]
    probs = probs / np.sum(probs)
    return replace(state, densities=tuple(densities), mode_probs=probs)
