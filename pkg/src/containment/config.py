"""Experiment configuration: dataclass plus the key=value section file format.

Example file::

    [network]
    file = chain.net          # relative to this file, or a bundled name
    default_sigma = 1.0

    [gain]
    family = log-over-linear
    c = 1.0

    [run]
    mode = stationary         # or dynamic
    dim = 2
    T = 100
    h = 0.001
    samples = 400
    replicates = 200
    seed = 1
    init_seed = 0
    init_box = -5 5

    [dynamic]
    k = 1.0
    gamma = 0.5
    C = 1.0

    [initial]
    3 = 1.0 2.0               # agent id = position (optional per agent)
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import gains as gains_mod
from .errors import ConfigError
from .graph_model import DirectedNetwork, load_network, parse_network

MODES = ("stationary", "dynamic")
NOISE_FORMS = ("aggregate", "per-edge")


@dataclass(frozen=True)
class DecisionRule:
    """Finite-horizon surrogates for the asymptotic convergence statements."""

    rho: float = 0.2                  # E|d(T)|^2 < rho * E|d(T/4)|^2
    as_rel: float = 0.05              # per-path tolerance eps = as_rel*|d(0)| + as_abs
    as_abs: float = 1e-3
    as_window: float = 0.1            # trailing fraction of the grid for the sup
    quorum: float = 0.95
    containment_eps: float = 0.1      # moving-hull containment tolerance (dynamic mode)
    z: float = 2.0                    # standard errors for decision margins
    max_abort_fraction: float = 0.1


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    network: DirectedNetwork
    sigma: np.ndarray = field(repr=False)
    gain: gains_mod.GainSpec = field(default_factory=gains_mod.GainSpec.log_over_linear)
    mode: str = "stationary"
    dim: int = 2
    T: float = 100.0
    h: float = 1e-3
    samples: int = 400
    k: float = 1.0
    gamma: float = 0.5
    C: object = 1.0                    # scalar or (m, dim) array
    noise_form: str = "aggregate"
    init_box: tuple = (-5.0, 5.0)
    init_seed: int = 0
    initial: dict = field(default_factory=dict)   # agent id -> position
    v_F0: object = 0.0
    replicates: int = 200
    seed: int = 0
    threads: int = 1
    output: str | None = None
    decision: DecisionRule = field(default_factory=DecisionRule)
    network_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}", field="mode")
        if self.noise_form not in NOISE_FORMS:
            raise ConfigError(f"noise_form must be one of {NOISE_FORMS}", field="noise_form")
        if self.h <= 0:
            raise ConfigError("step size h must be positive", field="h")
        if self.T < 0:
            raise ConfigError("horizon T must be nonnegative", field="T")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1", field="dim")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1", field="samples")
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != self.network.weights.shape or np.any(sigma < 0):
            raise ConfigError("sigma must be a nonnegative n x n matrix", field="sigma")
        object.__setattr__(self, "sigma", sigma)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))

    def leader_velocity_constant(self) -> np.ndarray:
        m = len(self.network.leader_ids)
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 0:
            return np.full((m, self.dim), float(C))
        return C.reshape(m, self.dim)

    def initial_positions(self) -> np.ndarray:
        """All agents' positions at t=0, shape (n, dim).

        Agents without an explicit position are drawn uniformly from the box
        using ``init_seed``; the draw order is fixed (agent id, then coordinate).
        """
        lo, hi = self.init_box
        rng = np.random.default_rng(self.init_seed)
        x0 = rng.uniform(lo, hi, size=(self.network.n, self.dim))
        for agent, pos in self.initial.items():
            x0[int(agent)] = np.broadcast_to(np.asarray(pos, dtype=float), (self.dim,))
        return x0

    def describe(self) -> list[tuple[str, str]]:
        """Effective configuration as ordered key/value pairs (for provenance files)."""
        d = self.decision
        items = [
            ("network", self.network_path or "<in-memory>"),
            ("agents", str(self.network.n)),
            ("leaders", " ".join(map(str, self.network.leader_ids))),
            ("gain", self.gain.describe()),
            ("mode", self.mode), ("dim", str(self.dim)),
            ("T", repr(self.T)), ("h", repr(self.h)), ("samples", str(self.samples)),
            ("noise_form", self.noise_form),
            ("init_box", f"{self.init_box[0]!r} {self.init_box[1]!r}"),
            ("init_seed", str(self.init_seed)),
            ("replicates", str(self.replicates)), ("seed", str(self.seed)),
            ("rho", repr(d.rho)), ("as_rel", repr(d.as_rel)), ("as_abs", repr(d.as_abs)),
            ("quorum", repr(d.quorum)), ("containment_eps", repr(d.containment_eps)),
        ]
        if self.mode == "dynamic":
            items += [("k", repr(self.k)), ("gamma", repr(self.gamma)),
                      ("C", " ".join(repr(float(c)) for c in self.leader_velocity_constant().ravel()))]
        for agent in sorted(self.initial, key=int):
            items.append((f"initial.{agent}", " ".join(repr(float(v)) for v in np.atleast_1d(self.initial[agent]))))
        return items


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("containment") / "data" / name))


def resolve_data_file(name, base: Path | None = None) -> Path:
    """Look up a file relative to ``base``, then the working directory, then the bundled data."""
    p = Path(name)
    candidates = []
    if base is not None and not p.is_absolute():
        candidates.append(base / p)
    candidates.append(p)
    candidates.append(bundled_path(p.name))
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigError(f"file not found: {name}")


def _floats(text, path, section, key):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}", path, field=f"{section}.{key}") from None


def _find_line(raw_text, section, key):
    current = None
    for lineno, line in enumerate(raw_text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].strip().lower() == key.lower():
            return lineno
    return None


_KNOWN = {
    "network": {"file", "default_sigma"},
    "gain": {"family", "c", "p", "times", "values"},
    "run": {"mode", "dim", "t", "h", "samples", "replicates", "seed", "init_seed", "init_box",
            "noise_form", "threads", "output"},
    "dynamic": {"k", "gamma", "c"},
    "decision": {"rho", "as_rel", "as_abs", "as_window", "quorum", "containment_eps", "z",
                 "max_abort_fraction"},
    "initial": None,
}


def parse_config(text: str, path=None, base: Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], path, getattr(exc, "lineno", None)) from None

    for section in cp.sections():
        if section not in _KNOWN:
            raise ConfigError(f"unknown section [{section}]", path, _find_line(text, section, ""))
        allowed = _KNOWN[section]
        if allowed is None:
            continue
        for key in cp[section]:
            if key not in allowed:
                raise ConfigError("unknown key", path, _find_line(text, section, key), f"{section}.{key}")

    def get(section, key, conv, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value {raw!r} ({exc})", path, _find_line(text, section, key),
                              f"{section}.{key}") from None

    if not cp.has_option("network", "file"):
        raise ConfigError("missing network file", path, field="network.file")
    default_sigma = get("network", "default_sigma", float, 1.0)
    net_file = resolve_data_file(cp.get("network", "file"), base)
    net, sigma = load_network(net_file, default_sigma=default_sigma)

    family = get("gain", "family", str, "log-over-linear")
    gain_params = {}
    for key in ("c", "p"):
        if cp.has_option("gain", key):
            gain_params[key] = get("gain", key, float, None)
    for key in ("times", "values"):
        if cp.has_option("gain", key):
            gain_params[key] = _floats(cp.get("gain", key), path, "gain", key)
    try:
        gain = gains_mod.gain_from_params(family, **gain_params)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc), path, _find_line(text, "gain", "family"), "gain.family") from None

    kwargs = dict(
        network=net, sigma=sigma, gain=gain, network_path=str(net_file),
        mode=get("run", "mode", str, "stationary").strip().lower(),
        dim=get("run", "dim", int, 2),
        T=get("run", "t", float, 100.0),
        h=get("run", "h", float, 1e-3),
        samples=get("run", "samples", int, 400),
        replicates=get("run", "replicates", int, 200),
        seed=get("run", "seed", int, 0),
        init_seed=get("run", "init_seed", int, 0),
        noise_form=get("run", "noise_form", str, "aggregate").strip().lower(),
        threads=get("run", "threads", int, 1),
        output=get("run", "output", str, None),
        k=get("dynamic", "k", float, 1.0),
        gamma=get("dynamic", "gamma", float, 0.5),
    )
    if cp.has_option("run", "init_box"):
        box = _floats(cp.get("run", "init_box"), path, "run", "init_box")
        if len(box) != 2 or box[0] >= box[1]:
            raise ConfigError("init_box needs 'lo hi' with lo < hi", path,
                              _find_line(text, "run", "init_box"), "run.init_box")
        kwargs["init_box"] = tuple(box)
    if cp.has_option("dynamic", "c"):
        vals = _floats(cp.get("dynamic", "c"), path, "dynamic", "C")
        kwargs["C"] = vals[0] if len(vals) == 1 else np.array(vals)
    if cp.has_section("decision"):
        dkw = {k: get("decision", k, float, None) for k in cp["decision"]}
        kwargs["decision"] = DecisionRule(**dkw)
    if cp.has_section("initial"):
        initial = {}
        for key in cp["initial"]:
            try:
                agent = int(key)
            except ValueError:
                raise ConfigError("initial keys must be agent ids", path,
                                  _find_line(text, "initial", key), f"initial.{key}") from None
            if not 0 <= agent < net.n:
                raise ConfigError("agent id out of range", path, _find_line(text, "initial", key),
                                  f"initial.{key}")
            initial[agent] = np.array(_floats(cp.get("initial", key), path, "initial", key))
        kwargs["initial"] = initial

    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    try:
        cfg = ExperimentConfig(**kwargs)
        cfg.leader_velocity_constant()
        for pos in cfg.initial.values():
            np.broadcast_to(pos, (cfg.dim,))
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(exc.message, path, field=exc.field) from None
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = resolve_data_file(path)
    return parse_config(path.read_text(), path=path, base=path.parent, overrides=overrides)


def make_config(net_or_text, gain=None, default_sigma: float = 1.0, **kwargs) -> ExperimentConfig:
    """Convenience constructor from a network (object or file text) for library use."""
    if isinstance(net_or_text, str):
        net, sigma = parse_network(net_or_text, default_sigma=default_sigma)
    else:
        net = net_or_text
        sigma = kwargs.pop("sigma", None)
        if sigma is None:
            sigma = np.where(net.weights > 0, default_sigma, 0.0)
    if gain is not None:
        kwargs["gain"] = gain
    return ExperimentConfig(network=net, sigma=sigma, **kwargs)
