"""Independent reference implementations used as test oracles.

The filter oracles here are written from textbook formulas with plain numpy
calls (no Joseph form, no log-space likelihoods, no helpers shared with the
package), so agreement between a package routine and its oracle is a genuine
two-route check rather than the same code evaluated twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trackfuse import GaussianDensity, wrap_angle


def random_spd(rng: np.random.Generator, dim: int, scale: float = 4.0) -> np.ndarray:
    root = rng.standard_normal((dim, dim))
    return root @ root.T + (0.2 + scale * rng.random()) * np.eye(dim)


def random_gaussian(rng: np.random.Generator, dim: int,
                    mean_scale: float = 5.0) -> GaussianDensity:
    return GaussianDensity(mean_scale * rng.standard_normal(dim),
                           random_spd(rng, dim))


@dataclass(frozen=True)
class LinearSensor:
    """Duck-typed stand-in for MeasurementModel with linear ``h(x) = H x``.

    ``matrix`` applies to the leading state entries, mirroring how the real
    sensors read only the position block; trailing entries are unobserved.
    """

    matrix: np.ndarray
    noise_cov: np.ndarray
    spatial_dims: int = 1
    kind: str = "linear"
    angle_indices: tuple = ()

    @property
    def meas_dim(self) -> int:
        return self.noise_cov.shape[0]

    def measure(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        return self.matrix @ state[: self.matrix.shape[1]]

    def jacobian(self, state: np.ndarray, state_dim: int | None = None) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if state_dim is None:
            state_dim = state.size
        jac = np.zeros((self.meas_dim, state_dim))
        jac[:, : self.matrix.shape[1]] = self.matrix
        return jac


@dataclass(frozen=True)
class StubMotion:
    """Duck-typed stand-in for MotionModel with explicit F and Q."""

    transition: np.ndarray
    noise: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.transition.shape[0]


def kalman_chain(mean0, cov0, f, q, h, r, zs):
    """Textbook linear Kalman filter over a fixed measurement sequence.

    Returns the posterior means and covariances after each measurement.
    """
    x = np.array(mean0, dtype=float)
    p = np.array(cov0, dtype=float)
    f, q, h, r = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (f, q, h, r))
    means, covs = [], []
    for z in zs:
        x = f @ x
        p = f @ p @ f.T + q
        s = h @ p @ h.T + r
        gain = p @ h.T @ np.linalg.inv(s)
        x = x + gain @ (np.atleast_1d(z) - h @ x)
        p = (np.eye(x.size) - gain @ h) @ p
        means.append(x.copy())
        covs.append(p.copy())
    return np.asarray(means), np.asarray(covs)


def imm_reference(means0, covs0, probs0, transition, fs, qs, h, r, zs):
    """Reference interacting multiple-model filter from textbook equations.

    Each step expands every mode transition: the incoming mode densities are
    moment-matched per destination mode under the transition-conditioned
    weights, pushed through a plain Kalman predict/update with that mode's
    matrices, and the mode probabilities are reweighted by the Gaussian
    measurement likelihoods. Returns per-step (means, covs, mode_probs).
    """
    n = len(means0)
    means = [np.array(m, dtype=float) for m in means0]
    covs = [np.array(c, dtype=float) for c in covs0]
    mu = np.array(probs0, dtype=float)
    transition = np.asarray(transition, dtype=float)
    h = np.atleast_2d(np.asarray(h, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    history = []
    for z in zs:
        cbar = transition.T @ mu
        new_means, new_covs = [], []
        liks = np.empty(n)
        for j in range(n):
            w = transition[:, j] * mu / cbar[j]
            mix_mean = sum(wi * mi for wi, mi in zip(w, means))
            mix_cov = sum(wi * (ci + np.outer(mi - mix_mean, mi - mix_mean))
                          for wi, mi, ci in zip(w, means, covs))
            x = fs[j] @ mix_mean
            p = fs[j] @ mix_cov @ fs[j].T + qs[j]
            s = h @ p @ h.T + r
            innov = np.atleast_1d(z) - h @ x
            gain = p @ h.T @ np.linalg.inv(s)
            x = x + gain @ innov
            p = (np.eye(x.size) - gain @ h) @ p
            m_dim = innov.size
            liks[j] = (np.exp(-0.5 * innov @ np.linalg.inv(s) @ innov)
                       / np.sqrt((2.0 * np.pi) ** m_dim * np.linalg.det(s)))
            new_means.append(x)
            new_covs.append(p)
        means, covs = new_means, new_covs
        mu = cbar * liks
        mu = mu / np.sum(mu)
        history.append(([m.copy() for m in means], [c.copy() for c in covs],
                        mu.copy()))
    return history


def fd_jacobian(fn, x, step: float = 1e-5, angle_rows: tuple = ()):
    """Central finite-difference Jacobian with per-axis scaled steps.

    Rows listed in ``angle_rows`` are angular outputs; their differences are
    wrapped so a crossing of the +-pi boundary does not corrupt the quotient.
    """
    x = np.asarray(x, dtype=float)
    base = np.atleast_1d(fn(x))
    jac = np.empty((base.size, x.size))
    for k in range(x.size):
        hk = step * max(1.0, abs(x[k]))
        plus, minus = x.copy(), x.copy()
        plus[k] += hk
        minus[k] -= hk
        diff = np.atleast_1d(fn(plus)) - np.atleast_1d(fn(minus))
        for row in angle_rows:
            diff[row] = wrap_angle(diff[row])
        jac[:, k] = diff / (2.0 * hk)
    return jac


def mean_with_batch_se(values: np.ndarray, n_batches: int = 100):
    """Sample mean plus a batched standard-error estimate.

    ``values`` holds one sample per leading index; the mean and its standard
    error are computed entrywise for whatever trailing shape the samples have.
    """
    values = np.asarray(values)
    batches = np.array_split(values, n_batches)
    batch_means = np.stack([np.mean(b, axis=0) for b in batches])
    overall = np.mean(values, axis=0)
    se = np.std(batch_means, axis=0, ddof=1) / np.sqrt(len(batches))
    return overall, se
