"""Bethe free energy, phase classification, and noise thresholds.

The replica-symmetric Bethe free energy

    phi(M_theta, M_v) = alpha M_theta M_v / (2 Delta)
                        - alpha E[log Z_v(A_v, A_v v0 + sqrt(A_v) W)]
                        -       E[log Z_theta(A_th, A_th theta0 + sqrt(A_th) W)]

(A_v = M_theta/Delta, A_th = alpha M_v/Delta) has the state-evolution fixed
points as stationary points; its global minimizer gives the Bayes-optimal
overlaps. Comparing the fixed points reached from the informative and
perturbed-uninformative initializations classifies a parameter point as
easy, hard, or impossible, and bisections on that comparison locate the
algorithmic, information-theoretic, and spinodal thresholds.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product as _product
from typing import Literal

import numpy as np

from .denoise import denoise
from .errors import BracketTooNarrow, NonZeroMeanPrior
from .priors import LabelPrior, RademacherBernoulli, WorkerPrior
from .state_evolution import (
    QuadratureRule,
    SEFixedPoint,
    SEState,
    _prior_atoms,
    gauss_hermite_rule,
    initial_state,
    overlap_to_errors,
    se_fixed_point,
    se_fixed_points_batch,
    se_step,
)

_ZERO_MEAN_TOL = 1e-12
_GAP_TOL = 1e-6  # two fixed points count as distinct beyond this M_theta gap
_MAX_BISECT = 60

PhaseName = Literal["easy", "hard", "impossible"]


@dataclass(frozen=True)
class PhaseThresholds:
    """Critical noise values at a parameter point; absent when no hard phase."""

    delta_c: float | None = None
    delta_alg: float | None = None
    delta_it: float | None = None
    delta_sp: float | None = None

    def __post_init__(self):
        trio = (self.delta_alg, self.delta_it, self.delta_sp)
        if all(t is not None for t in trio):
            if not (self.delta_alg <= self.delta_it <= self.delta_sp):
                raise ValueError(
                    f"threshold ordering violated: alg={self.delta_alg} "
                    f"it={self.delta_it} sp={self.delta_sp}")

    @property
    def has_hard_window(self) -> bool:
        return self.delta_alg is not None and self.delta_sp is not None


@dataclass(frozen=True)
class PhaseLabel:
    """Phase of a parameter point plus the two fixed points that decided it."""

    phase: PhaseName
    uninformative: SEFixedPoint
    informative: SEFixedPoint
    phi_uninformative: float
    phi_informative: float


def _expected_log_partition(prior, a: float, rule: QuadratureRule) -> float:
    """E_{x0, W}[log Z_x(a, a x0 + sqrt(a) W)] over the prior and Gaussian."""
    if a <= 0.0:
        return 0.0  # Z_x(0, 0) = 1 for a normalized prior
    values, weights = _prior_atoms(prior, rule)
    field = a * values[:, None] + np.sqrt(a) * rule.nodes[None, :]
    logz = denoise(prior, np.full_like(field, a), field).log_partition
    return float(np.einsum("i,j,ij->", weights, rule.weights, logz))


def bethe_free_energy(state: SEState, alpha: float, delta: float,
                      wp: WorkerPrior, lp: LabelPrior,
                      rule: QuadratureRule | None = None) -> float:
    """Evaluate the replica-symmetric Bethe free energy at an overlap pair."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    rule = rule or gauss_hermite_rule()
    a_v = state.m_theta / delta
    a_th = alpha * state.m_v / delta
    return (alpha * state.m_theta * state.m_v / (2.0 * delta)
            - alpha * _expected_log_partition(lp, a_v, rule)
            - _expected_log_partition(wp, a_th, rule))


def bethe_gradient_norm(state: SEState, alpha: float, delta: float,
                        wp: WorkerPrior, lp: LabelPrior,
                        rule: QuadratureRule | None = None,
                        step: float = 1e-6) -> float:
    """Finite-difference gradient norm of the free energy at a state.

    Uses central differences, switching to a second-order one-sided stencil
    near the overlap-domain boundary at zero (the free energy needs M >= 0).
    """
    rule = rule or gauss_hermite_rule()

    def phi(m_theta, m_v):
        return bethe_free_energy(SEState(m_theta, m_v), alpha, delta, wp, lp, rule)

    grads = []
    for which in ("theta", "v"):
        m0 = state.m_theta if which == "theta" else state.m_v

        def at(m):
            return phi(m, state.m_v) if which == "theta" else phi(state.m_theta, m)

        if m0 - step >= 0.0:
            grads.append((at(m0 + step) - at(m0 - step)) / (2.0 * step))
        else:
            grads.append((-3.0 * at(m0) + 4.0 * at(m0 + step) - at(m0 + 2.0 * step))
                         / (2.0 * step))
    return float(np.hypot(*grads))


def critical_noise(alpha: float, wp: WorkerPrior, lp: LabelPrior) -> float:
    """Delta_c = sqrt(alpha) E[theta^2] E[v^2]; the uninformative point of the
    recursion is linearly unstable below it. Requires zero-mean priors."""
    if abs(wp.mean) > _ZERO_MEAN_TOL or abs(lp.mean) > _ZERO_MEAN_TOL:
        raise NonZeroMeanPrior(
            "the uninformative point is only stationary for zero-mean priors")
    return float(np.sqrt(alpha) * wp.second_moment * lp.second_moment)


def uninformative_growth_factor(alpha: float, delta: float, wp: WorkerPrior,
                                lp: LabelPrior, rule: QuadratureRule | None = None,
                                eps: float = 1e-8) -> float:
    """Per-step amplification of a small overlap seeded at the uninformative
    point; crosses 1 exactly at Delta_c. Zero-mean priors only."""
    if abs(wp.mean) > _ZERO_MEAN_TOL or abs(lp.mean) > _ZERO_MEAN_TOL:
        raise NonZeroMeanPrior(
            "growth factor is defined at the zero-overlap stationary point")
    rule = rule or gauss_hermite_rule()
    out = se_step(SEState(m_theta=0.0, m_v=eps), alpha, delta, wp, lp, rule)
    return out.m_v / eps


def detect_critical_noise(alpha: float, wp: WorkerPrior, lp: LabelPrior,
                          rule: QuadratureRule | None = None,
                          bracket: tuple[float, float] = (1e-4, 10.0),
                          rel_tol: float = 1e-4) -> float:
    """Numerically locate Delta_c by bisecting the growth factor through 1."""
    rule = rule or gauss_hermite_rule()
    lo, hi = bracket
    if uninformative_growth_factor(alpha, lo, wp, lp, rule) <= 1.0:
        raise BracketTooNarrow(f"growth factor already stable at delta={lo}")
    if uninformative_growth_factor(alpha, hi, wp, lp, rule) >= 1.0:
        raise BracketTooNarrow(f"growth factor still unstable at delta={hi}")
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if uninformative_growth_factor(alpha, mid, wp, lp, rule) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * mid:
            break
    return 0.5 * (lo + hi)


def _both_fixed_points(alpha, delta, wp, lp, rule, tol, max_iter, perturb):
    uninf = se_fixed_point("uninformative", alpha, delta, wp, lp, rule,
                           tol=tol, max_iter=max_iter, perturb=perturb)
    inf = se_fixed_point("informative", alpha, delta, wp, lp, rule,
                         tol=tol, max_iter=max_iter, perturb=perturb)
    return uninf, inf


def _coexists(alpha, delta, wp, lp, rule, tol, max_iter, perturb, gap_tol) -> bool:
    uninf, inf = _both_fixed_points(alpha, delta, wp, lp, rule, tol, max_iter, perturb)
    return abs(inf.state.m_theta - uninf.state.m_theta) > gap_tol


def _phi_gap(alpha, delta, wp, lp, rule, tol, max_iter, perturb) -> float:
    """phi(uninformative FP) - phi(informative FP); positive below Delta_IT."""
    uninf, inf = _both_fixed_points(alpha, delta, wp, lp, rule, tol, max_iter, perturb)
    return (bethe_free_energy(uninf.state, alpha, delta, wp, lp, rule)
            - bethe_free_energy(inf.state, alpha, delta, wp, lp, rule))


def _bisect(predicate, lo: float, hi: float, rel_tol: float) -> float:
    """Deterministic midpoint bisection; predicate true at lo, false at hi."""
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * max(abs(mid), 1e-300):
            break
    return 0.5 * (lo + hi)


def find_thresholds(alpha: float, wp: WorkerPrior, lp: LabelPrior,
                    delta_bracket: tuple[float, float], rel_tol: float = 1e-4,
                    rule: QuadratureRule | None = None, n_scan: int = 200,
                    gap_tol: float = _GAP_TOL, se_tol: float = 1e-12,
                    se_max_iter: int = 100_000, perturb: float = 1e-7) -> PhaseThresholds:
    """Scan the bracket and bisect the edges of the coexistence window.

    Delta_alg and Delta_sp bound the window where the two initializations
    reach distinct fixed points; Delta_IT is the free-energy crossing inside
    it; Delta_c comes from the closed-form stability criterion when both
    priors are zero-mean. All threshold fields except Delta_c are absent when
    the n_scan-point scan detects no coexistence.
    """
    rule = rule or gauss_hermite_rule()
    lo, hi = delta_bracket
    if not (0 < lo < hi):
        raise ValueError("delta_bracket must satisfy 0 < lo < hi")
    deltas = np.linspace(lo, hi, n_scan)

    th_u, _, _, _ = se_fixed_points_batch("uninformative", alpha, deltas, wp, lp,
                                          rule, se_tol, se_max_iter, perturb)
    th_i, _, _, _ = se_fixed_points_batch("informative", alpha, deltas, wp, lp,
                                          rule, se_tol, se_max_iter, perturb)
    coexist = np.abs(th_i - th_u) > gap_tol

    try:
        delta_c = critical_noise(alpha, wp, lp)
    except NonZeroMeanPrior:
        delta_c = None

    if not coexist.any():
        return PhaseThresholds(delta_c=delta_c)
    if coexist[0] or coexist[-1]:
        raise BracketTooNarrow(
            "coexistence window touches the bracket edge; widen delta_bracket")

    idx = np.nonzero(coexist)[0]
    i0, i1 = int(idx[0]), int(idx[-1])

    def coexists_at(d):
        return _coexists(alpha, d, wp, lp, rule, se_tol, se_max_iter, perturb, gap_tol)

    delta_alg = _bisect(lambda d: not coexists_at(d), deltas[i0 - 1], deltas[i0], rel_tol)
    delta_sp = _bisect(coexists_at, deltas[i1], deltas[i1 + 1], rel_tol)

    gaps = np.array([_phi_gap(alpha, deltas[i], wp, lp, rule, se_tol, se_max_iter, perturb)
                     for i in idx])

    def in_window(d):
        return _coexists(alpha, d, wp, lp, rule, se_tol, se_max_iter, perturb, gap_tol)

    def gap_positive(d):
        return _phi_gap(alpha, d, wp, lp, rule, se_tol, se_max_iter, perturb) > 0

    sign_flip = np.nonzero(np.sign(gaps[:-1]) != np.sign(gaps[1:]))[0]
    if sign_flip.size:
        j = int(sign_flip[0])
        delta_it = _bisect(gap_positive, deltas[idx[j]], deltas[idx[j + 1]], rel_tol)
    elif gaps[0] > 0:
        # crossing hides between the last scanned window point and delta_sp;
        # past the window the branches merge, which counts as crossed
        delta_it = _bisect(lambda d: in_window(d) and gap_positive(d),
                           deltas[i1], deltas[i1 + 1], rel_tol)
    else:
        # crossing sits between delta_alg and the first resolvable window point
        delta_it = _bisect(lambda d: not in_window(d) or gap_positive(d),
                           deltas[i0 - 1], deltas[i0], rel_tol)
    delta_it = min(max(delta_it, delta_alg), delta_sp)
    return PhaseThresholds(delta_c=delta_c, delta_alg=delta_alg,
                           delta_it=delta_it, delta_sp=delta_sp)


def classify_phase(alpha: float, delta: float, wp: WorkerPrior, lp: LabelPrior,
                   rule: QuadratureRule | None = None, gap_tol: float = _GAP_TOL,
                   zero_overlap_tol: float = 1e-6, se_tol: float = 1e-12,
                   se_max_iter: int = 100_000, perturb: float = 1e-7) -> PhaseLabel:
    """Classify a parameter point as easy, hard, or impossible.

    Easy: both initializations agree; hard: they differ and the informative
    fixed point is the free-energy global minimum (AMP misses it);
    impossible: the global minimum has zero overlap (meaningful only for
    zero-mean priors; otherwise only easy/hard are emitted).
    """
    rule = rule or gauss_hermite_rule()
    uninf, inf = _both_fixed_points(alpha, delta, wp, lp, rule, se_tol, se_max_iter, perturb)
    phi_u = bethe_free_energy(uninf.state, alpha, delta, wp, lp, rule)
    phi_i = bethe_free_energy(inf.state, alpha, delta, wp, lp, rule)
    zero_mean = abs(wp.mean) <= _ZERO_MEAN_TOL and abs(lp.mean) <= _ZERO_MEAN_TOL
    distinct = abs(inf.state.m_theta - uninf.state.m_theta) > gap_tol

    if not distinct:
        if zero_mean and inf.state.m_theta <= zero_overlap_tol:
            phase = "impossible"
        else:
            phase = "easy"
    elif phi_i < phi_u:
        phase = "hard"
    else:
        phase = "impossible" if zero_mean and uninf.state.m_theta <= zero_overlap_tol else "easy"
    return PhaseLabel(phase=phase, uninformative=uninf, informative=inf,
                      phi_uninformative=phi_u, phi_informative=phi_i)


# ---- parameter sweeps --------------------------------------------------------

SWEEP_CSV_HEADER = (
    "param1,param2,m_theta_uninf,m_v_uninf,m_theta_inf,m_v_inf,"
    "mse_uninf,er_uninf,mse_inf,er_inf,phi_uninf,phi_inf,phase,"
    "delta_c,delta_alg,delta_it,delta_sp"
)

_SWEEPABLE = ("mu", "delta", "alpha", "lambda", "beta")


def sweep_grid(axes: list[tuple[str, np.ndarray]], *, alpha: float = 1.0,
               mu: float = 0.5, lam: float = 0.5, beta: float = 0.5,
               delta: float = 0.1, rule: QuadratureRule | None = None,
               threads: int = 1, se_tol: float = 1e-12,
               se_max_iter: int = 100_000) -> list[dict]:
    """Classify every point of a 1- or 2-axis grid over the RB-prior family.

    Each row carries both fixed points, their errors and free energies, the
    phase label, and Delta_c where defined. Per-point failures are recorded
    as flagged rows (phase="error"); the sweep itself never aborts. Row order
    follows the row-major grid order regardless of thread count.
    """
    if not axes or len(axes) > 2:
        raise ValueError("sweep_grid takes one or two axes")
    for name, _ in axes:
        if name not in _SWEEPABLE:
            raise ValueError(f"cannot sweep over {name!r}; choose from {_SWEEPABLE}")
    rule = rule or gauss_hermite_rule()
    base = {"alpha": alpha, "mu": mu, "lambda": lam, "beta": beta, "delta": delta}
    grids = [np.asarray(values, dtype=float) for _, values in axes]
    points = list(_product(*grids))

    def run_point(values):
        here = dict(base)
        for (name, _), value in zip(axes, values):
            here[name] = float(value)
        row = {"param1": values[0], "param2": values[1] if len(values) > 1 else ""}
        try:
            wp = RademacherBernoulli(mu=here["mu"], lam=here["lambda"])
            lp = LabelPrior(beta=here["beta"])
            label = classify_phase(here["alpha"], here["delta"], wp, lp, rule,
                                   se_tol=se_tol, se_max_iter=se_max_iter)
            u, i = label.uninformative, label.informative
            try:
                delta_c = critical_noise(here["alpha"], wp, lp)
            except NonZeroMeanPrior:
                delta_c = ""
            row.update({
                "m_theta_uninf": u.state.m_theta, "m_v_uninf": u.state.m_v,
                "m_theta_inf": i.state.m_theta, "m_v_inf": i.state.m_v,
                "mse_uninf": u.mse_theta, "er_uninf": u.er_v,
                "mse_inf": i.mse_theta, "er_inf": i.er_v,
                "phi_uninf": label.phi_uninformative, "phi_inf": label.phi_informative,
                "phase": label.phase,
                "delta_c": delta_c, "delta_alg": "", "delta_it": "", "delta_sp": "",
            })
        except Exception as exc:  # flagged row, sweep continues
            row.update({key: "" for key in SWEEP_CSV_HEADER.split(",")[2:]})
            row["phase"] = f"error: {exc}"
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_point, points))
    else:
        rows = [run_point(p) for p in points]
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    """Write sweep rows under the stable documented header."""
    import csv

    columns = SWEEP_CSV_HEADER.split(",")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, "") for key in columns})
