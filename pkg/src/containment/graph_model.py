"""Directed agent networks, leader/follower partition and Laplacian blocks.

Weights follow the convention ``weights[i, j] = a_ij``: the weight with which
agent ``i`` hears agent ``j``.  Influence therefore flows ``j -> i`` whenever
``a_ij > 0``.  Agents with an all-zero row hear nobody and are leaders.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, NetworkError, SingularBlock

# Relative singular-value cutoff below which L_FF is treated as singular.
SINGULAR_RTOL = 1e-10


@dataclass(frozen=True)
class LaplacianPartition:
    L_FF: np.ndarray
    L_FR: np.ndarray
    follower_ids: tuple[int, ...]
    leader_ids: tuple[int, ...]

    @property
    def n_followers(self) -> int:
        return len(self.follower_ids)

    @property
    def n_leaders(self) -> int:
        return len(self.leader_ids)

    def assemble(self) -> np.ndarray:
        """Rebuild the full n x n Laplacian in original agent order."""
        nf, m = self.n_followers, self.n_leaders
        n = nf + m
        blocks = np.zeros((n, n))
        blocks[:nf, :nf] = self.L_FF
        blocks[:nf, nf:] = self.L_FR
        order = np.array(self.follower_ids + self.leader_ids)
        L = np.zeros((n, n))
        L[np.ix_(order, order)] = blocks
        return L

    def is_invertible(self, rtol: float = SINGULAR_RTOL) -> bool:
        """Condition-aware rank test on ``L_FF``."""
        s = np.linalg.svd(self.L_FF, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            return False
        return bool(s[-1] >= rtol * s[0])


@dataclass(frozen=True, eq=False)
class DirectedNetwork:
    """Weighted digraph over ``n`` agents.  Immutable once built."""

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.array(self.weights, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise NetworkError(f"weight matrix must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise NetworkError("weight matrix has non-finite entries")
        if np.any(A < 0):
            raise NetworkError("weights must be nonnegative")
        if np.any(np.diag(A) != 0):
            raise NetworkError("self-loops are not allowed (a_ii must be 0)")
        A.setflags(write=False)
        object.__setattr__(self, "weights", A)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges) -> "DirectedNetwork":
        """Build from ``(i, j, a_ij)`` triples: agent ``i`` hears agent ``j``."""
        A = np.zeros((n, n))
        for i, j, w in edges:
            A[i, j] = w
        return cls(A)

    def permuted(self, perm) -> "DirectedNetwork":
        """Relabel agents: new agent ``k`` is old agent ``perm[k]``."""
        perm = np.asarray(perm)
        return DirectedNetwork(self.weights[np.ix_(perm, perm)])

    @cached_property
    def agents(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return classify_agents(self)

    @property
    def follower_ids(self) -> tuple[int, ...]:
        return self.agents[0]

    @property
    def leader_ids(self) -> tuple[int, ...]:
        return self.agents[1]

    @cached_property
    def partition(self) -> LaplacianPartition:
        return build_partition(self)

    @cached_property
    def a1(self) -> bool:
        return has_leader_rooted_forest(self)

    def laplacian(self) -> np.ndarray:
        return np.diag(self.weights.sum(axis=1)) - self.weights


def classify_agents(net: DirectedNetwork) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split agents into (followers, leaders); leaders are the zero-row agents."""
    row_has_edge = (net.weights > 0).any(axis=1)
    followers = tuple(int(i) for i in np.flatnonzero(row_has_edge))
    leaders = tuple(int(i) for i in np.flatnonzero(~row_has_edge))
    if not leaders:
        raise NetworkError("network has no leaders (every agent hears someone)")
    if not followers:
        raise NetworkError("network has no followers (no agent hears anyone)")
    return followers, leaders


def build_partition(net: DirectedNetwork) -> LaplacianPartition:
    followers, leaders = net.agents
    L = net.laplacian()
    f, r = np.array(followers), np.array(leaders)
    L_FF = L[np.ix_(f, f)]
    L_FR = L[np.ix_(f, r)]
    L_FF.setflags(write=False)
    L_FR.setflags(write=False)
    return LaplacianPartition(L_FF, L_FR, followers, leaders)


def has_leader_rooted_forest(net: DirectedNetwork) -> bool:
    """True iff every follower is reachable from some leader.

    Multi-source BFS from the leader set along influence edges ``j -> i``
    (present whenever ``a_ij > 0``).
    """
    followers, leaders = net.agents
    hears = net.weights > 0
    # listeners[j] = agents that hear j
    listeners = [np.flatnonzero(hears[:, j]) for j in range(net.n)]
    seen = np.zeros(net.n, dtype=bool)
    seen[list(leaders)] = True
    queue = deque(leaders)
    while queue:
        j = queue.popleft()
        for i in listeners[j]:
            if not seen[i]:
                seen[i] = True
                queue.append(i)
    return bool(seen[list(followers)].all())


def steady_state_map(part: LaplacianPartition) -> np.ndarray:
    """Return ``W = -L_FF^{-1} L_FR``: row i holds follower i's convex weights on the leaders."""
    if not part.is_invertible():
        raise SingularBlock("L_FF is singular: some follower is not reachable from any leader")
    return -np.linalg.solve(part.L_FF, part.L_FR)


# -- network files -----------------------------------------------------------

def parse_network(text: str, default_sigma: float = 1.0, path=None):
    """Parse the edge-list network format.

    Returns ``(net, sigma)`` where ``sigma[i, j]`` is the noise intensity on
    agent ``i``'s measurement of agent ``j`` (aligned with ``weights``).
    """
    n = None
    declared_leaders = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0].lower()
        try:
            if key == "agents":
                if len(tok) != 2:
                    raise ConfigError("expected 'agents <n>'", path, lineno, "agents")
                n = int(tok[1])
                if n < 1:
                    raise ConfigError("agent count must be positive", path, lineno, "agents")
            elif key == "leaders":
                declared_leaders = sorted(int(t) for t in tok[1:])
            elif key == "edge":
                if len(tok) not in (4, 5):
                    raise ConfigError("expected 'edge <i> <j> <a_ij> [sigma_ji]'", path, lineno, "edge")
                i, j, w = int(tok[1]), int(tok[2]), float(tok[3])
                s = float(tok[4]) if len(tok) == 5 else None
                edges.append((lineno, i, j, w, s))
            else:
                raise ConfigError(f"unknown directive {tok[0]!r}", path, lineno)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), path, lineno, key) from None
    if n is None:
        raise ConfigError("missing 'agents <n>' header", path)

    A = np.zeros((n, n))
    sigma = np.zeros((n, n))
    for lineno, i, j, w, s in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ConfigError(f"agent id out of range 0..{n - 1}", path, lineno, "edge")
        if i == j:
            raise ConfigError("self-loop", path, lineno, "edge")
        if w < 0:
            raise ConfigError("negative weight", path, lineno, "a_ij")
        if s is not None and s < 0:
            raise ConfigError("negative noise intensity", path, lineno, "sigma_ji")
        A[i, j] = w
        sigma[i, j] = default_sigma if s is None else s

    try:
        net = DirectedNetwork(A)
        followers, leaders = net.agents
    except NetworkError as exc:
        raise ConfigError(str(exc), path) from None
    if declared_leaders is not None and tuple(declared_leaders) != leaders:
        raise ConfigError(
            f"declared leaders {declared_leaders} do not match zero-row agents {list(leaders)}",
            path, field="leaders")
    return net, sigma


def load_network(path, default_sigma: float = 1.0):
    path = Path(path)
    return parse_network(path.read_text(), default_sigma=default_sigma, path=path)


def format_network(net: DirectedNetwork, sigma=None) -> str:
    lines = [f"agents {net.n}", "leaders " + " ".join(map(str, net.leader_ids))]
    for i, j in zip(*np.nonzero(net.weights)):
        s = "" if sigma is None else f" {float(sigma[i, j])!r}"
        lines.append(f"edge {i} {j} {float(net.weights[i, j])!r}{s}")
    return "\n".join(lines) + "\n"
