"""Monte Carlo ensembles and convergence verdicts.

Asymptotic statements (mean-square and almost-sure containment) are tested
through finite-horizon surrogates whose constants live in
:class:`containment.config.DecisionRule`.  ``inconclusive`` is a first-class
outcome: it is returned whenever a precondition outside the tested
equivalence fails or the Monte Carlo error swamps the decision margin.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import gains as gains_mod
from .config import DecisionRule, ExperimentConfig
from .dynamics import NoiseModel, TrajectoryRecord, simulate_batch
from .errors import TooManyAborts
from .geometry import project_to_hull
from .spectra import build_dynamic_certificate, solve_lyapunov

log = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    CONVERGED = "converged"
    NOT_CONVERGED = "not-converged"
    INCONCLUSIVE = "inconclusive"

    def __str__(self):
        return self.value


@dataclass
class EnsembleStats:
    grid: np.ndarray
    mean_sq_delta: np.ndarray | None
    mean_sq_delta_se: np.ndarray | None
    containment_mean: np.ndarray
    containment_max: np.ndarray
    replicates: int
    per_path_terminal: np.ndarray | None     # |delta(T)| per replicate
    delta_norms: np.ndarray | None           # (R, G) per-path |delta(t)|
    containment: np.ndarray                  # (R, G) per-path containment error
    aborted: int
    record: TrajectoryRecord = field(repr=False)
    config: ExperimentConfig = field(repr=False)
    master_seed: int = 0

    def index_at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.grid - t)))


@dataclass
class VerdictReport:
    theorem: str
    verdict: Verdict
    preconditions: dict
    statistics: dict
    rule: str
    notes: list = field(default_factory=list)

    def lines(self, prefix: str = "") -> list[str]:
        out = [f"{prefix}theorem={self.theorem}", f"{prefix}verdict={self.verdict}"]
        out += [f"{prefix}pre.{k}={_fmt(v)}" for k, v in self.preconditions.items()]
        out += [f"{prefix}stat.{k}={_fmt(v)}" for k, v in self.statistics.items()]
        out.append(f"{prefix}rule={self.rule}")
        out += [f"{prefix}note={n}" for n in self.notes]
        return out


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# -- hull distances on batches ---------------------------------------------------

def batch_hull_distances(x_F, x_R) -> np.ndarray:
    """Per-follower hull distances for stacked states; returns shape x_F.shape[:-1].

    One- and two-leader hulls (point, segment) are evaluated in closed form;
    larger hulls go through the Frank-Wolfe projection.
    """
    x_F = np.asarray(x_F, dtype=float)
    x_R = np.asarray(x_R, dtype=float)
    m = x_R.shape[-2]
    if m == 1:
        return np.linalg.norm(x_F - x_R[..., :1, :], axis=-1)
    if m == 2:
        a = x_R[..., 0:1, :]
        b = x_R[..., 1:2, :]
        ab = b - a
        denom = (ab * ab).sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = ((x_F - a) * ab).sum(axis=-1) / denom
        s = np.where(denom > 0, np.clip(s, 0.0, 1.0), 0.0)
        d = np.linalg.norm(x_F - (a + s[..., None] * ab), axis=-1)
        return np.where(d <= 1e-9, 0.0, d)
    lead = x_F.shape[:-2]
    hulls = np.broadcast_to(x_R, lead + x_R.shape[-2:])
    out = np.full(x_F.shape[:-1], np.nan)
    todo = np.all(np.isfinite(x_F), axis=-1)
    inside = _simplex_membership(x_F, hulls)
    out[inside & todo] = 0.0
    todo &= ~inside
    for idx in zip(*np.nonzero(todo)):
        out[idx] = project_to_hull(x_F[idx], hulls[idx[:-1]]).distance
    return out


def _simplex_membership(x_F, hulls):
    """Vectorized barycentric test, usable when the m = N+1 generators span a simplex.

    Returns a boolean mask of points certainly inside; everything else falls
    back to the iterative projection.
    """
    m, N = hulls.shape[-2:]
    mask = np.zeros(x_F.shape[:-1], dtype=bool)
    if m != N + 1:
        return mask
    base = hulls[..., :1, :]
    E = np.swapaxes(hulls[..., 1:, :] - base, -1, -2)          # (..., N, N) edge matrix
    det = np.linalg.det(E)
    scale = np.prod(np.linalg.norm(E, axis=-2), axis=-1)
    good = np.abs(det) > 1e-8 * np.maximum(scale, 1e-300)
    if not good.any():
        return mask
    E_safe = np.where(good[..., None, None], E, np.eye(N))
    rhs = np.swapaxes(x_F - base, -1, -2)                        # (..., N, nF)
    lam = np.linalg.solve(E_safe, rhs)                           # (..., N, nF)
    lam0 = 1.0 - lam.sum(axis=-2)
    tol = -1e-12
    inside = np.all(lam >= tol, axis=-2) & (lam0 >= tol)
    return inside & good[..., None]


# -- ensembles --------------------------------------------------------------------

def _concat_records(parts: list[TrajectoryRecord]) -> TrajectoryRecord:
    if len(parts) == 1:
        return parts[0]
    cat = lambda name: None if getattr(parts[0], name) is None else np.concatenate([getattr(p, name) for p in parts])
    first = parts[0]
    return TrajectoryRecord(first.times, cat("x_F"), cat("x_R"), cat("v_F"), cat("v_R"),
                            cat("aborted_at"), first.follower_ids, first.leader_ids, cat("delta"), first.seed)


def run_ensemble(config: ExperimentConfig, replicates: int | None = None, master_seed: int | None = None,
                 threads: int | None = None) -> EnsembleStats:
    """Run independent seeded replicates and aggregate error statistics.

    Replicate ``i`` always uses the stream derived from ``(master_seed, i)``, so
    a smaller ensemble is a prefix of a larger one.  Work is split into
    contiguous replicate blocks across ``threads`` workers and re-joined in
    index order.
    """
    R = config.replicates if replicates is None else replicates
    seed = config.seed if master_seed is None else master_seed
    threads = max(1, config.threads if threads is None else threads)
    if R < 2:
        raise ValueError("an ensemble needs at least 2 replicates")
    blocks = [b for b in np.array_split(np.arange(R), min(threads, R)) if b.size]
    if len(blocks) == 1:
        parts = [simulate_batch(config, seed, blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(lambda b: simulate_batch(config, seed, b), blocks))
    rec = _concat_records(parts)
    return summarize(rec, config, seed)


def summarize(rec: TrajectoryRecord, config: ExperimentConfig, master_seed: int = 0) -> EnsembleStats:
    R = rec.n_replicates
    aborted_mask = np.isfinite(rec.aborted_at)
    n_aborted = int(aborted_mask.sum())
    if n_aborted > config.decision.max_abort_fraction * R:
        raise TooManyAborts(f"{n_aborted} of {R} replicates produced non-finite states")
    ok = ~aborted_mask

    contain = batch_hull_distances(rec.x_F, rec.x_R).max(axis=-1)   # (R, G)
    containment_mean = contain[ok].mean(axis=0)
    containment_max = contain[ok].max(axis=0)

    msd = msd_se = terminal = norms = None
    if rec.delta is not None:
        sq = rec.delta_sq()                      # (R, G)
        good = sq[ok]
        msd = good.mean(axis=0)
        msd_se = good.std(axis=0, ddof=1) / math.sqrt(good.shape[0]) if good.shape[0] > 1 else np.zeros_like(msd)
        norms = np.sqrt(sq)
        terminal = norms[:, -1]
    return EnsembleStats(rec.times, msd, msd_se, containment_mean, containment_max, R, terminal, norms,
                         contain, n_aborted, rec, config, master_seed)


# -- theory-side bounds -------------------------------------------------------------

def _gain_mass(gain, t):
    closed = gains_mod.closed_form_integral(gain, float(t))
    return closed if closed is not None else gains_mod.integral_to(gain, float(t))


def total_gain_mass(gain):
    """Integral of a over [0, inf) when finite and known in closed form, else None."""
    if gain.family == "power-law" and gain.p > 1:
        return gain.c / (gain.p - 1.0)
    if gain.c == 0 and gain.family != "custom":
        return 0.0
    return None


def noise_envelope(gain, T: float, rate: float, v0: float, noise_trace: float) -> float:
    """Upper envelope on the expected Lyapunov value at time T.

    ``v0 * exp(-rate*G(T)) + noise_trace * int_0^T exp(-rate*(G(T)-G(s))) a(s)^2 ds``
    with ``G`` the cumulative gain mass.
    """
    GT = _gain_mass(gain, T)
    head = v0 * math.exp(-rate * GT)
    if T == 0 or noise_trace == 0:
        return head
    f = lambda s: math.exp(-rate * (GT - _gain_mass(gain, s))) * gain(s) ** 2
    pts = [p for p in (1.0, 10.0, 100.0, 1000.0) if p < T]
    val, _ = integrate.quad(f, 0.0, T, points=pts or None, limit=400, epsabs=1e-12, epsrel=1e-8)
    return head + noise_trace * val


def _stationary_bounds(stats: EnsembleStats):
    cfg = stats.config
    net = cfg.network
    cert = solve_lyapunov(net.partition.L_FF)
    noise = NoiseModel(net, cfg.sigma)
    Om = noise.Omega_F
    d0 = stats.record.delta[:, 0]                       # (R, nF, N)
    v0 = float(np.einsum("rin,ij,rjn->r", d0, cert.P, d0).mean())
    trace = cfg.dim * float(np.trace(cert.P @ np.diag(Om ** 2)))
    rate = 1.0 / cert.lambda_max_P
    env = noise_envelope(cfg.gain, stats.grid[-1], rate, v0, trace) / cert.lambda_min_P
    return cert, env


def _dynamic_bounds(stats: EnsembleStats, cert, dyn):
    cfg = stats.config
    noise = NoiseModel(cfg.network, cfg.sigma)
    Om = np.diag(noise.Omega_F)
    Ups = np.vstack([cfg.k * Om, cfg.gamma * cfg.k * Om])
    pbar_eig = np.linalg.eigvalsh(dyn.P_bar)
    d0 = stats.record.delta[:, 0]
    v0 = float(np.einsum("rin,ij,rjn->r", d0, dyn.P_bar, d0).mean())
    trace = cfg.dim * float(np.trace(dyn.P_bar @ Ups @ Ups.T))
    rate = max(dyn.Q_min_eig, 0.0) / pbar_eig[-1]
    env = noise_envelope(cfg.gain, stats.grid[-1], rate, v0, trace) / pbar_eig[0]
    return env


def necessity_floor(stats: EnsembleStats, cert) -> float | None:
    """Lower bound on E|delta(T)|^2 that holds whenever the gain mass is finite."""
    G_inf = total_gain_mass(stats.config.gain)
    if G_inf is None or stats.mean_sq_delta is None:
        return None
    ratio = cert.lambda_min_P / cert.lambda_max_P
    return float(stats.mean_sq_delta[0] * ratio * math.exp(-G_inf / cert.lambda_min_P))


# -- decision rules ---------------------------------------------------------------

def _three_way(margins, rule: DecisionRule):
    """Each margin is (value, se): positive favours convergence."""
    if any(v < -rule.z * se or (se == 0 and v <= 0) for v, se in margins):
        return Verdict.NOT_CONVERGED
    if all(v > rule.z * se for v, se in margins):
        return Verdict.CONVERGED
    return Verdict.INCONCLUSIVE


def _mean_square_rule(stats: EnsembleStats, envelope: float, rule: DecisionRule):
    iT = len(stats.grid) - 1
    iq = stats.index_at(stats.grid[-1] / 4.0)
    mT, mq = float(stats.mean_sq_delta[iT]), float(stats.mean_sq_delta[iq])
    sT, sq = float(stats.mean_sq_delta_se[iT]), float(stats.mean_sq_delta_se[iq])
    if mT == 0.0 and sT == 0.0:
        # error identically zero at the horizon: nothing left to decay
        ratio_margin = floor_margin = (math.inf, 0.0)
    else:
        ratio_margin = (rule.rho * mq - mT, math.hypot(sT, rule.rho * sq))
        floor_margin = (envelope - mT, sT)
    verdict = _three_way([ratio_margin, floor_margin], rule)
    statistics = {
        "mean_sq_delta_T": mT, "se_T": sT,
        "mean_sq_delta_T4": mq, "se_T4": sq,
        "ratio": mT / mq if mq > 0 else (0.0 if mT == 0 else math.inf),
        "rho": rule.rho, "envelope_T": envelope,
    }
    desc = (f"converged iff E|d(T)|^2 < rho*E|d(T/4)|^2 and E|d(T)|^2 <= noise envelope, "
            f"each by more than {rule.z:g} standard errors")
    return verdict, statistics, desc


def _gain_preconditions(gain):
    cls = gains_mod.classify(gain)
    return cls, {"A2": str(cls.A2), "A3": str(cls.A3), "A4": str(cls.A4)}


def _unverified_warning(cls, notes):
    if gains_mod.Flag.UNKNOWN in (cls.A2, cls.A3):
        msg = "gain is tabulated: divergence/square-integrability are unverified, theorem preconditions unknown"
        warnings.warn(msg, stacklevel=3)
        notes.append(msg)


def _a1_failure_report(theorem, stats, pre, rule_text):
    iT = len(stats.grid) - 1
    return VerdictReport(
        theorem, Verdict.NOT_CONVERGED, pre,
        {"containment_mean_T": float(stats.containment_mean[iT]),
         "containment_max_T": float(stats.containment_max[iT])},
        rule_text,
        ["some follower is unreachable from every leader: its motion ignores the leaders, "
         "so containment cannot hold for all initial conditions"],
    )


def verify_mean_square(stats: EnsembleStats, gain=None, net=None, rule: DecisionRule | None = None) -> VerdictReport:
    """Empirical verdict on mean-square containment for stationary leaders."""
    cfg = stats.config
    gain = cfg.gain if gain is None else gain
    net = cfg.network if net is None else net
    rule = cfg.decision if rule is None else rule
    cls, pre = _gain_preconditions(gain)
    pre = {"A1": net.a1, **pre}
    H = gains_mod.Flag.HOLDS
    theorem = "mean-square/stationary[A3]" if cls.A3 == H else "mean-square/stationary[A4]"
    notes = []
    _unverified_warning(cls, notes)
    if not net.a1:
        return _a1_failure_report(theorem, stats, pre, "A1 fails: no leader-rooted spanning forest")

    cert, env = _stationary_bounds(stats)
    verdict, statistics, desc = _mean_square_rule(stats, env, rule)
    statistics["lambda_max_P"] = cert.lambda_max_P
    statistics["lambda_min_P"] = cert.lambda_min_P
    floor = necessity_floor(stats, cert)
    if floor is not None:
        iT = len(stats.grid) - 1
        statistics["necessity_floor"] = floor
        statistics["floor_respected"] = bool(
            stats.mean_sq_delta[iT] + rule.z * stats.mean_sq_delta_se[iT] >= floor)
    if cls.A3 != H and cls.A4 != H:
        notes.append("neither A3 nor A4 holds: the mean-square equivalence makes no claim; "
                     "empirical statistics reported only")
        verdict = Verdict.INCONCLUSIVE
    elif cls.A2 == gains_mod.Flag.FAILS:
        notes.append("A2 fails: divergence of the gain mass is necessary, non-convergence expected")
    return VerdictReport(theorem, verdict, pre, statistics, desc, notes)


def _almost_sure_rule(stats: EnsembleStats, rule: DecisionRule):
    norms = stats.delta_norms
    T = stats.grid[-1]
    window = stats.grid >= (1.0 - rule.as_window) * T - 1e-12
    eps = rule.as_rel * norms[:, 0] + rule.as_abs
    sup = np.max(norms[:, window], axis=1)
    ok = np.isfinite(sup) & (sup < eps)
    R = len(ok)
    frac = float(ok.mean())
    se = math.sqrt(rule.quorum * (1 - rule.quorum) / R)
    if frac >= rule.quorum:
        verdict = Verdict.CONVERGED
    elif frac < rule.quorum - rule.z * se:
        verdict = Verdict.NOT_CONVERGED
    else:
        verdict = Verdict.INCONCLUSIVE
    statistics = {"fraction_converged": frac, "quorum": rule.quorum, "paths": R,
                  "median_sup_tail": float(np.nanmedian(sup)), "median_eps": float(np.median(eps))}
    desc = (f"path converges iff sup over last {rule.as_window:g} of grid of |d(t)| < "
            f"{rule.as_rel:g}*|d(0)| + {rule.as_abs:g}; converged iff fraction >= {rule.quorum:g}")
    return verdict, statistics, desc


def verify_almost_sure(config: ExperimentConfig, replicates: int | None = None,
                       stats: EnsembleStats | None = None) -> VerdictReport:
    """Per-path containment verdict (finite-sample proxy for probability one)."""
    if stats is None:
        stats = run_ensemble(config, replicates)
    rule = config.decision
    cls, pre = _gain_preconditions(config.gain)
    net = config.network
    pre = {"A1": net.a1, **pre}
    theorem = "almost-sure/stationary" if config.mode == "stationary" else "almost-sure/dynamic"
    notes = []
    _unverified_warning(cls, notes)
    if not net.a1:
        return _a1_failure_report(theorem, stats, pre, "A1 fails: no leader-rooted spanning forest")
    verdict, statistics, desc = _almost_sure_rule(stats, rule)
    if cls.A3 != gains_mod.Flag.HOLDS:
        notes.append("A3 does not hold: the almost-sure equivalence is not applicable, no convergence claim")
        verdict = Verdict.INCONCLUSIVE
    return VerdictReport(theorem, verdict, pre, statistics, desc, notes)


def verify_dynamic(config: ExperimentConfig, replicates: int | None = None,
                   stats: EnsembleStats | None = None) -> VerdictReport:
    """Verdict for dynamic leaders: gain certificate, stacked mean-square rule,
    per-path rule (when A3 holds) and containment in the moving hull."""
    if config.mode != "dynamic":
        raise ValueError("verify_dynamic needs a dynamic-mode configuration")
    rule = config.decision
    net = config.network
    cls, pre = _gain_preconditions(config.gain)
    pre = {"A1": net.a1, **pre}
    notes = []
    _unverified_warning(cls, notes)
    theorem = "mean-square/dynamic"
    if stats is None:
        stats = run_ensemble(config, replicates)
    if not net.a1:
        return _a1_failure_report(theorem, stats, pre, "A1 fails: no leader-rooted spanning forest")

    cert = solve_lyapunov(net.partition.L_FF)
    dyn = build_dynamic_certificate(cert, config.k, config.gamma)
    pre.update({"k": config.k, "gamma": config.gamma, "k_threshold": dyn.k_threshold,
                "k_above_threshold": dyn.k_above_threshold, "Q_positive_definite": dyn.Q_pd,
                "P_bar_positive_definite": dyn.P_bar_pd})

    env = _dynamic_bounds(stats, cert, dyn)
    verdict, statistics, desc = _mean_square_rule(stats, env, rule)
    verdicts = [verdict]
    H = gains_mod.Flag.HOLDS
    if cls.A3 == H:
        as_verdict, as_stats, _ = _almost_sure_rule(stats, rule)
        statistics.update({f"as_{k}": v for k, v in as_stats.items()})
        verdicts.append(as_verdict)
    iT = len(stats.grid) - 1
    c_mean = float(stats.containment_mean[iT])
    c_se = float(stats.containment[:, iT].std(ddof=1) / math.sqrt(stats.replicates))
    statistics.update({"containment_mean_T": c_mean, "containment_se_T": c_se,
                       "containment_eps": rule.containment_eps})
    verdicts.append(_three_way([(rule.containment_eps - c_mean, c_se)], rule))

    if Verdict.NOT_CONVERGED in verdicts:
        final = Verdict.NOT_CONVERGED
    elif all(v == Verdict.CONVERGED for v in verdicts):
        final = Verdict.CONVERGED
    else:
        final = Verdict.INCONCLUSIVE
    if not dyn.k_above_threshold:
        notes.append("k is not above the gain threshold: sufficiency hypothesis fails, no claim tested")
        final = Verdict.INCONCLUSIVE
    elif cls.A3 != H and cls.A4 != H:
        notes.append("neither A3 nor A4 holds: no claim tested")
        final = Verdict.INCONCLUSIVE
    desc += f"; plus per-path rule when A3 holds; plus mean moving-hull containment error at T < {rule.containment_eps:g}"
    return VerdictReport(theorem, final, pre, statistics, desc, notes)


def verdicts_for(stats: EnsembleStats) -> list[VerdictReport]:
    """The verdicts appropriate to a configuration's mode."""
    cfg = stats.config
    if cfg.mode == "dynamic":
        return [verify_dynamic(cfg, stats=stats)]
    return [verify_mean_square(stats), verify_almost_sure(cfg, stats=stats)]
