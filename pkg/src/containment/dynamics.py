"""Closed-loop stochastic dynamics and their Euler-Maruyama integration.

Arrays carry an optional leading batch axis: follower positions have shape
``(..., nF, N)``, leader positions ``(..., m, N)``.  All step functions are
written so a batch of replicates advances with the same arithmetic as a single
path, which keeps ensemble rows bit-identical to standalone runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonFiniteState
from .graph_model import DirectedNetwork, LaplacianPartition, steady_state_map

NOISE_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-edge measurement noise intensities.

    ``sigma[i, j]`` is the intensity on agent i's measurement of agent j, i.e.
    it sits at the same position as ``a_ij`` in the weight matrix.
    """

    net: DirectedNetwork
    sigma: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.shape != self.net.weights.shape:
            raise ValueError("sigma must match the weight matrix shape")
        if np.any(s < 0):
            raise ValueError("noise intensities must be nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def uniform(cls, net: DirectedNetwork, sigma: float = 1.0) -> "NoiseModel":
        return cls(net, np.where(net.weights > 0, sigma, 0.0))

    @cached_property
    def edge_coeffs(self) -> np.ndarray:
        """(nF, n) matrix of a_ij * sigma_ji on follower rows."""
        f = list(self.net.follower_ids)
        return self.net.weights[f] * self.sigma[f]

    @cached_property
    def Omega_F(self) -> np.ndarray:
        """Diagonal of the aggregated follower diffusion, sqrt(sum_j (a_ij sigma_ji)^2)."""
        return np.sqrt((self.edge_coeffs ** 2).sum(axis=1))

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Follower in-edges ``(row in follower block, source agent)`` in a fixed order."""
        rows, cols = np.nonzero(self.net.weights[list(self.net.follower_ids)] > 0)
        return tuple(zip(rows.tolist(), cols.tolist()))

    @cached_property
    def edge_matrix(self) -> np.ndarray:
        """(nF, E) map from per-edge white noise to follower increments."""
        E = len(self.edges)
        B = np.zeros((len(self.net.follower_ids), E))
        for e, (r, j) in enumerate(self.edges):
            B[r, e] = self.edge_coeffs[r, j]
        return B


@dataclass
class SystemState:
    t: float
    x_F: np.ndarray
    x_R: np.ndarray
    v_F: np.ndarray | None = None
    v_R: np.ndarray | None = None

    def copy(self) -> "SystemState":
        cp = lambda a: None if a is None else np.array(a, dtype=float, copy=True)
        return SystemState(self.t, cp(self.x_F), cp(self.x_R), cp(self.v_F), cp(self.v_R))

    @property
    def dynamic(self) -> bool:
        return self.v_F is not None

    def is_finite(self) -> bool:
        arrays = [a for a in (self.x_F, self.x_R, self.v_F, self.v_R) if a is not None]
        return all(np.all(np.isfinite(a)) for a in arrays)


@dataclass
class DeltaState:
    delta_x: np.ndarray
    delta_v: np.ndarray | None = None

    def stacked(self) -> np.ndarray:
        if self.delta_v is None:
            return self.delta_x
        return np.concatenate([self.delta_x, self.delta_v], axis=-2)

    def sq_norm(self):
        d = self.stacked()
        return (d * d).sum(axis=(-2, -1))


# -- single-step kernels --------------------------------------------------------

def _stationary_increment(x_F, x_R, a, h, L_FF, L_FR, diffusion):
    drift = -a * (L_FF @ x_F + L_FR @ x_R)
    return x_F + h * drift + diffusion


def _aggregate_diffusion(a, h, omega, xi):
    return (a * np.sqrt(h)) * (omega[:, None] * xi)


def _per_edge_diffusion(a, h, B, xi):
    return (a * np.sqrt(h)) * (B @ xi)


def _draw(rng, xi, shape):
    if xi is not None:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != shape:
            raise ValueError(f"noise array has shape {xi.shape}, expected {shape}")
        return xi
    if rng is None:
        raise ValueError("need either an rng or explicit standard-normal increments xi")
    return rng.standard_normal(shape)


def _finite_or_raise(state):
    if not state.is_finite():
        raise NonFiniteState(state.t)
    return state


def step_stationary(state: SystemState, net: DirectedNetwork, gain, noise: NoiseModel, h: float,
                    rng=None, xi=None) -> SystemState:
    """One Euler-Maruyama step with stationary leaders and aggregated follower noise.

    ``xi`` (standard normals shaped like ``state.x_F``) replaces ``rng`` when the
    caller needs to control the Brownian increments.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    part = net.partition
    a = gain(state.t)
    xi = _draw(rng, xi, np.shape(state.x_F))
    dif = _aggregate_diffusion(a, h, noise.Omega_F, xi)
    with np.errstate(over="ignore", invalid="ignore"):   # reported as NonFiniteState below
        x_F = _stationary_increment(state.x_F, state.x_R, a, h, part.L_FF, part.L_FR, dif)
    return _finite_or_raise(SystemState(state.t + h, x_F, state.x_R))


def per_edge_step_stationary(state: SystemState, net: DirectedNetwork, gain, noise: NoiseModel, h: float,
                             rng=None, xi=None) -> SystemState:
    """Euler-Maruyama step that simulates every noisy measurement separately.

    Each follower in-edge ``(i, j)`` gets its own white noise; ``xi`` has shape
    ``(..., E, N)`` with edges ordered as ``noise.edges``.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    part = net.partition
    a = gain(state.t)
    shape = np.shape(state.x_F)[:-2] + (len(noise.edges), np.shape(state.x_F)[-1])
    xi = _draw(rng, xi, shape)
    dif = _per_edge_diffusion(a, h, noise.edge_matrix, xi)
    with np.errstate(over="ignore", invalid="ignore"):
        x_F = _stationary_increment(state.x_F, state.x_R, a, h, part.L_FF, part.L_FR, dif)
    return _finite_or_raise(SystemState(state.t + h, x_F, state.x_R))


def _dynamic_update(x_F, v_F, x_R, a, a_next, h, k, gamma, C, L_FF, L_FR, noise_inc):
    e = L_FF @ x_F + L_FR @ x_R
    inc_x = k * noise_inc
    inc_v = gamma * inc_x
    x_F_new = x_F + h * (-a * (k * e - v_F)) + inc_x
    v_F_new = v_F + h * (-a * (gamma * k * e)) + inc_v
    x_R_new = x_R + (0.5 * h * (a + a_next)) * C
    return x_F_new, v_F_new, x_R_new


def step_dynamic(state: SystemState, net: DirectedNetwork, gain, noise: NoiseModel, k: float, gamma: float,
                 C, h: float, rng=None, xi=None) -> SystemState:
    """One step of the dynamic-leader loop with follower velocity estimators.

    Position and estimator equations share the same Brownian increment (the
    estimator receives exactly ``gamma`` times the position's noise).  Leaders
    move by the trapezoidal integral of ``a(t) C`` and their velocity is reset
    to the closed form ``a(t+h) C``.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if not 0 < gamma < 1 or k <= 0:
        raise ValueError("need k > 0 and 0 < gamma < 1")
    part = net.partition
    a = gain(state.t)
    a_next = gain(state.t + h)
    C = np.broadcast_to(np.asarray(C, dtype=float), np.shape(state.x_R))
    xi = _draw(rng, xi, np.shape(state.x_F))
    noise_inc = _aggregate_diffusion(a, h, noise.Omega_F, xi)
    with np.errstate(over="ignore", invalid="ignore"):
        x_F, v_F, x_R = _dynamic_update(state.x_F, state.v_F, state.x_R, a, a_next, h, k, gamma, C,
                                        part.L_FF, part.L_FR, noise_inc)
    return _finite_or_raise(SystemState(state.t + h, x_F, x_R, v_F, a_next * C))


def step_delta(delta_x, L_FF, a: float, omega, h: float, xi):
    """Euler-Maruyama step of the stationary error system, integrated directly."""
    return delta_x - h * a * (L_FF @ delta_x) + _aggregate_diffusion(a, h, omega, xi)


# -- error coordinates ------------------------------------------------------------

def _neg_map(part: LaplacianPartition) -> np.ndarray:
    # L_FF^{-1} L_FR = -W
    return -steady_state_map(part)


def to_delta(state: SystemState, part: LaplacianPartition, C=None) -> DeltaState:
    """Shift follower states by their convex-combination targets."""
    M = _neg_map(part)
    delta_x = state.x_F + M @ state.x_R
    delta_v = None
    if state.v_F is not None:
        Cm = np.broadcast_to(np.asarray(0.0 if C is None else C, dtype=float), np.shape(state.x_R))
        delta_v = state.v_F + M @ Cm
    return DeltaState(delta_x, delta_v)


def from_delta(delta: DeltaState, x_R, part: LaplacianPartition, C=None, t: float = 0.0,
               v_R=None) -> SystemState:
    M = _neg_map(part)
    x_F = delta.delta_x - M @ x_R
    v_F = None
    if delta.delta_v is not None:
        Cm = np.broadcast_to(np.asarray(0.0 if C is None else C, dtype=float), np.shape(x_R))
        v_F = delta.delta_v - M @ Cm
    return SystemState(t, x_F, np.asarray(x_R, dtype=float), v_F, v_R)


# -- trajectory integration -------------------------------------------------------

@dataclass
class TrajectoryRecord:
    """States sampled on a time grid; arrays may carry a leading replicate axis."""

    times: np.ndarray
    x_F: np.ndarray
    x_R: np.ndarray
    v_F: np.ndarray | None
    v_R: np.ndarray | None
    aborted_at: np.ndarray          # NaN where the run completed
    follower_ids: tuple
    leader_ids: tuple
    delta: np.ndarray | None = None  # stacked error, same leading axes as x_F
    seed: int | None = None

    @property
    def batched(self) -> bool:
        return self.x_F.ndim == 4

    @property
    def n_replicates(self) -> int:
        return self.x_F.shape[0] if self.batched else 1

    def path(self, i: int) -> "TrajectoryRecord":
        if not self.batched:
            if i != 0:
                raise IndexError(i)
            return self
        pick = lambda a: None if a is None else a[i]
        return TrajectoryRecord(self.times, self.x_F[i], self.x_R[i], pick(self.v_F), pick(self.v_R),
                                self.aborted_at[i], self.follower_ids, self.leader_ids,
                                pick(self.delta), self.seed)

    def delta_sq(self) -> np.ndarray | None:
        if self.delta is None:
            return None
        return (self.delta * self.delta).sum(axis=(-2, -1))


def sample_steps(n_steps: int, samples: int) -> np.ndarray:
    """Step indices of the recording grid (always contains 0 and n_steps)."""
    if n_steps == 0:
        return np.zeros(1, dtype=int)
    idx = np.round(np.linspace(0, n_steps, samples + 1)).astype(int)
    return np.unique(idx)


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index``, derived from ``(master_seed, index)``."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def initial_state(config, batch: int | None = None) -> SystemState:
    net = config.network
    x0 = config.initial_positions()
    x_F = x0[list(net.follower_ids)]
    x_R = x0[list(net.leader_ids)]
    v_F = v_R = None
    if config.mode == "dynamic":
        C = config.leader_velocity_constant()
        v_F = np.broadcast_to(np.asarray(config.v_F0, dtype=float), x_F.shape).copy()
        v_R = config.gain(0.0) * C
    st = SystemState(0.0, x_F, x_R, v_F, v_R)
    if batch is not None:
        tile = lambda a: None if a is None else np.repeat(a[None], batch, axis=0)
        st = SystemState(0.0, tile(st.x_F), tile(st.x_R), tile(st.v_F), tile(st.v_R))
    return st


def _noise_shape(config, noise: NoiseModel):
    if config.noise_form == "per-edge":
        return (len(noise.edges), config.dim)
    return (len(config.network.follower_ids), config.dim)


def _chunks_from_rngs(rngs, shape):
    """Noise source drawing each replicate's normals from its own stream."""
    def draw(length):
        return np.stack([rng.standard_normal((length, *shape)) for rng in rngs], axis=1)
    return draw


def integrate(config, draw, batch: int, h: float | None = None, n_steps: int | None = None,
              grid_steps=None) -> TrajectoryRecord:
    """Integrate ``batch`` replicates; ``draw(length)`` returns (length, batch, *noise_shape) normals."""
    net = config.network
    part = net.partition
    noise = NoiseModel(net, config.sigma)
    h = config.h if h is None else h
    n_steps = config.n_steps if n_steps is None else n_steps
    grid = sample_steps(n_steps, config.samples) if grid_steps is None else np.asarray(grid_steps)
    dynamic = config.mode == "dynamic"

    state = initial_state(config, batch)
    x_F, x_R, v_F, v_R = state.x_F, state.x_R, state.v_F, state.v_R
    L_FF, L_FR = part.L_FF, part.L_FR
    C = config.leader_velocity_constant() if dynamic else None
    a_vals = config.gain(np.arange(n_steps + 1) * h)
    per_edge = config.noise_form == "per-edge"
    if per_edge and dynamic:
        raise ValueError("per-edge noise realization is only defined for stationary leaders")
    omega, B = noise.Omega_F, noise.edge_matrix
    k, gamma = config.k, config.gamma

    G = len(grid)
    rec_xF = np.empty((batch, G) + x_F.shape[1:])
    rec_xR = np.empty((batch, G) + x_R.shape[1:])
    rec_vF = np.empty((batch, G) + x_F.shape[1:]) if dynamic else None
    rec_vR = np.empty((batch, G) + x_R.shape[1:]) if dynamic else None
    aborted = np.full(batch, np.nan)
    alive = np.ones(batch, dtype=bool)

    def record(g, step):
        nonlocal alive
        rec_xF[:, g] = x_F
        rec_xR[:, g] = x_R
        if dynamic:
            rec_vF[:, g] = v_F
            rec_vR[:, g] = v_R
        finite = np.isfinite(x_F).reshape(batch, -1).all(axis=1)
        finite &= np.isfinite(x_R).reshape(batch, -1).all(axis=1)
        if dynamic:
            finite &= np.isfinite(v_F).reshape(batch, -1).all(axis=1)
        aborted[alive & ~finite] = step * h
        alive = alive & finite
        dead = ~alive
        if dead.any():
            rec_xF[dead, g] = np.nan
            if dynamic:
                rec_vF[dead, g] = np.nan

    g = 0
    record(g, 0)
    g += 1
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while step < n_steps:
            length = min(NOISE_CHUNK, n_steps - step)
            xi_chunk = draw(length)
            for s in range(length):
                a = a_vals[step]
                xi = xi_chunk[s]
                if per_edge:
                    dif = _per_edge_diffusion(a, h, B, xi)
                else:
                    dif = _aggregate_diffusion(a, h, omega, xi)
                if dynamic:
                    x_F, v_F, x_R = _dynamic_update(x_F, v_F, x_R, a, a_vals[step + 1], h, k, gamma, C,
                                                    L_FF, L_FR, dif)
                    v_R = a_vals[step + 1] * np.broadcast_to(C, x_R.shape)
                else:
                    x_F = _stationary_increment(x_F, x_R, a, h, L_FF, L_FR, dif)
                step += 1
                if g < G and step == grid[g]:
                    record(g, step)
                    g += 1
            if not alive.any():
                break

    if g < G:
        # every replicate aborted: pad the unreached grid points
        rec_xF[:, g:] = np.nan
        rec_xR[:, g:] = np.nan
        if dynamic:
            rec_vF[:, g:] = np.nan
            rec_vR[:, g:] = np.nan
    times = grid * h
    rec = TrajectoryRecord(times, rec_xF, rec_xR, rec_vF, rec_vR, aborted,
                           net.follower_ids, net.leader_ids)
    if net.a1:
        rec.delta = _delta_on_grid(rec, part, C)
    return rec


def _delta_on_grid(rec: TrajectoryRecord, part, C):
    M = _neg_map(part)
    dx = rec.x_F + M @ rec.x_R
    if rec.v_F is None:
        return dx
    dv = rec.v_F + M @ np.broadcast_to(C, rec.x_R.shape[-2:])
    return np.concatenate([dx, dv], axis=-2)


def simulate_batch(config, master_seed: int, indices) -> TrajectoryRecord:
    """Integrate the replicates ``indices`` of the ensemble seeded by ``master_seed``."""
    indices = list(indices)
    noise = NoiseModel(config.network, config.sigma)
    rngs = [replicate_rng(master_seed, i) for i in indices]
    rec = integrate(config, _chunks_from_rngs(rngs, _noise_shape(config, noise)), len(indices))
    rec.seed = master_seed
    return rec


def simulate(config, seed: int | None = None) -> TrajectoryRecord:
    """Single sample path; identical to replicate 0 of an ensemble with the same seed."""
    seed = config.seed if seed is None else seed
    return simulate_batch(config, seed, [0]).path(0)


def richardson_check(config, seed: int | None = None) -> dict:
    """Compare runs at h and h/2 driven by the same Brownian path.

    Returns the max follower-position gap on the sampling grid and the
    Richardson-extrapolated terminal state ``2 x_{h/2} - x_h``.
    """
    seed = config.seed if seed is None else seed
    noise = NoiseModel(config.network, config.sigma)
    shape = _noise_shape(config, noise)
    n = config.n_steps
    fine = replicate_rng(seed, 0).standard_normal((2 * n, 1, *shape))
    coarse = (fine[0::2] + fine[1::2]) / np.sqrt(2.0)

    def source(arr):
        pos = [0]

        def draw(length):
            out = arr[pos[0]:pos[0] + length]
            pos[0] += length
            return out
        return draw

    grid = sample_steps(n, config.samples)
    rec_h = integrate(config, source(coarse), 1, h=config.h, n_steps=n, grid_steps=grid).path(0)
    rec_h2 = integrate(config, source(fine), 1, h=config.h / 2, n_steps=2 * n, grid_steps=2 * grid).path(0)
    gap = float(np.max(np.abs(rec_h2.x_F - rec_h.x_F)))
    return {
        "max_gap": gap,
        "terminal_h": rec_h.x_F[-1],
        "terminal_h2": rec_h2.x_F[-1],
        "terminal_extrapolated": 2 * rec_h2.x_F[-1] - rec_h.x_F[-1],
    }
