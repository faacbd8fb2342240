"""Particle-level view of the continuum model.

Empirical measures of the particle flow stand in for the measure-valued
solution. This module measures them (support diameter, 1-Wasserstein
distance) and runs decay studies across particle counts.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from hklapse._geometry import point_set_diameter
from hklapse.assignment import solve_assignment
from hklapse.core import (
    Constant,
    InfluenceSpec,
    OpinionState,
    RadialPower,
    WeightSpec,
    certify_wf,
    compute_psi0,
)
from hklapse.errors import BudgetError, DomainError, SpecError
from hklapse.integrator import PointInitial, simulate
from hklapse.theory import BoundSet, constants_delayed, constants_undelayed

MAX_ATOMS = 512
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Atoms ``points`` (n, d) with nonnegative ``weights`` summing to 1."""

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights=None):
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] == 0:
            raise DomainError("a measure needs at least one atom")
        if not np.all(np.isfinite(p)):
            raise DomainError("atoms must be finite")
        if weights is None:
            w = np.full(p.shape[0], 1.0 / p.shape[0])
        else:
            w = np.asarray(weights, dtype=float).reshape(-1)
            if w.shape[0] != p.shape[0]:
                raise DomainError("one weight per atom")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise DomainError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise DomainError(f"weights sum to {w.sum()!r}, not 1")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def empirical(state) -> EmpiricalMeasure:
    """Uniform-weight measure on the opinions of ``state``."""
    x = state.x if isinstance(state, OpinionState) else state
    return EmpiricalMeasure(x)


def support_diameter(mu: EmpiricalMeasure) -> float:
    """Diameter of the atoms that carry positive mass."""
    pts = mu.points[mu.weights > 0]
    if len(pts) == 0:
        raise DomainError("measure has empty support")
    return point_set_diameter(pts)


# ---------------------------------------------------------------------------
# Wasserstein-1
# ---------------------------------------------------------------------------


def _w1_sorted(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def _w1_cdf(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    x, y = mu.points[:, 0], nu.points[:, 0]
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    xs, ys = x[ix], y[iy]
    cx = np.concatenate([[0.0], np.cumsum(mu.weights[ix])])
    cy = np.concatenate([[0.0], np.cumsum(nu.weights[iy])])
    grid = np.unique(np.concatenate([xs, ys]))
    if len(grid) < 2:
        return 0.0
    F = cx[np.searchsorted(xs, grid[:-1], side="right")]
    G = cy[np.searchsorted(ys, grid[:-1], side="right")]
    return float(np.sum(np.abs(F - G) * np.diff(grid)))


def _cost(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> np.ndarray:
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _w1_assignment(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    _, _, total = solve_assignment(_cost(mu, nu))
    return total / mu.size


def _w1_lp(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    n, m = mu.size, nu.size
    c = _cost(mu, nu).ravel()
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    A = sparse.vstack([rows, cols]).tocsr()
    b = np.concatenate([mu.weights, nu.weights])
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise DomainError(f"transport LP failed: {res.message}")
    return float(res.fun)


def wasserstein1(mu: EmpiricalMeasure, nu: EmpiricalMeasure, method: str = "auto") -> float:
    """1-Wasserstein distance between two discrete measures.

    ``method`` is ``auto``, ``sorted`` (1-D, equal-size uniform), ``cdf``
    (1-D), ``assignment`` (equal-size uniform) or ``lp``. ``auto`` picks
    the first applicable of sorted, cdf, assignment, lp.
    """
    if mu.d != nu.d:
        raise DomainError("measures live in different dimensions")
    equal_uniform = mu.size == nu.size and mu.is_uniform and nu.is_uniform
    if method == "auto":
        if mu.d == 1:
            method = "sorted" if equal_uniform else "cdf"
        else:
            method = "assignment" if equal_uniform else "lp"
    if method in ("assignment", "lp") and max(mu.size, nu.size) > MAX_ATOMS:
        raise BudgetError(f"transport solvers are capped at {MAX_ATOMS} atoms")
    if method in ("sorted", "assignment") and not equal_uniform:
        raise DomainError(f"{method} needs equal-size uniform measures")
    if method in ("sorted", "cdf") and mu.d != 1:
        raise DomainError(f"{method} is one-dimensional only")
    if method == "sorted":
        return _w1_sorted(mu.points[:, 0], nu.points[:, 0])
    if method == "cdf":
        return _w1_cdf(mu, nu)
    if method == "assignment":
        return _w1_assignment(mu, nu)
    if method == "lp":
        return _w1_lp(mu, nu)
    raise DomainError(f"unknown method {method!r}")


def lipschitz_constant(influence: InfluenceSpec) -> float:
    """``L`` with ``|psi(x,y) - psi(x',y')| <= L (|x-x'| + |y-y'|)``.

    Only families with a closed-form constant are admitted.
    """
    if isinstance(influence, Constant):
        return 0.0
    if isinstance(influence, RadialPower):
        return influence.lipschitz()
    raise SpecError(f"mean-field studies need a Lipschitz family, got {influence.name!r}")


# ---------------------------------------------------------------------------
# initial measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBox:
    """Uniform law on ``[low, high]^d``."""

    d: int
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.d < 1 or not self.high >= self.low:
            raise DomainError("invalid box")

    @property
    def radius(self) -> float:
        return math.sqrt(self.d) * max(abs(self.low), abs(self.high))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=(n, self.d))


@dataclass(frozen=True)
class PointMass:
    point: tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.point)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.point))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(np.asarray(self.point, dtype=float), (n, 1))


# ---------------------------------------------------------------------------
# decay study
# ---------------------------------------------------------------------------


@dataclass
class StudyReport:
    rows: list[dict] = field(default_factory=list)
    per_n: list[dict] = field(default_factory=list)
    w1_trend: list[dict] = field(default_factory=list)
    bounds: BoundSet | None = None

    @property
    def passed(self) -> bool:
        return all(r["envelope_passed"] for r in self.per_n)

    def to_record(self) -> dict:
        return {
            "passed": self.passed,
            "bounds": None if self.bounds is None else self.bounds.to_record(),
            "per_N": self.per_n,
            "w1_trend": self.w1_trend,
        }

    def write_csv(self, path) -> None:
        cols = ["N", "t", "d_X", "envelope", "w1_to_next_N"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r["N"]] + [("" if r[c] is None else f"{r[c]:.17g}") for c in cols[1:]])


def study_bounds(influence: InfluenceSpec, weight: WeightSpec, radius: float, d: int,
                 T: float, alpha_bar: float, tau: float, horizon: float):
    """Rate constants shared by every particle count (they depend on the support radius only)."""
    cert = certify_wf(weight, T, alpha_bar, horizon=horizon, tau=tau)
    psi0 = compute_psi0(influence, radius, d)
    if tau > 0:
        b = constants_delayed(influence.K_sup, cert.T, tau, psi0, cert.alpha_bar,
                              M0=radius, cert=cert)
    else:
        b = constants_undelayed(influence.K_sup, cert.T, psi0, cert.alpha_bar, M0=radius)
    return b, cert


def _run_one(args):
    N, x0, influence, weight, tau, h, t_end, t_grid = args
    traj = simulate(PointInitial(x0), influence, weight, tau=tau, h=h, t_end=t_end)
    states = traj(t_grid)
    dX = np.array([support_diameter(empirical(s)) for s in states])
    return N, states, dX


def _fitted_rate(t: np.ndarray, dX: np.ndarray, floor: float) -> float:
    keep = dX > floor
    if keep.sum() < 2:
        return math.inf
    slope = np.polyfit(t[keep], np.log(dX[keep]), 1)[0]
    return float(-slope)


def meanfield_decay_study(influence: InfluenceSpec, weight: WeightSpec, N_list, sampler,
                          seed: int = 0, tau: float = 0.0, T: float = 1.0,
                          alpha_bar: float | None = None, h: float = 1e-2,
                          t_end: float = 10.0, n_times: int = 101,
                          budget: float = 1e5, workers: int = 1) -> StudyReport:
    """Support-diameter decay of particle approximations across sizes ``N_list``.

    Initial opinions are the first ``N`` rows of one draw of ``max(N_list)``
    points from ``sampler`` with ``seed``, so samples are nested; histories
    are constant. Each size is checked against
    ``d_X(0) exp(-gamma (t - offset))`` with a rate computed from the
    sampler's support radius, hence shared by all sizes. Consecutive sizes
    are compared in 1-Wasserstein distance on the common time grid.
    ``budget`` caps ``sum(N) * t_end``.
    """
    lipschitz_constant(influence)
    N_list = sorted(int(n) for n in N_list)
    if not N_list or N_list[0] < 2:
        raise DomainError("particle counts must be at least 2")
    if sum(N_list) * t_end > budget:
        raise BudgetError(f"sum(N) * t_end = {sum(N_list) * t_end:g} exceeds budget {budget:g}")
    if alpha_bar is None:
        alpha_bar = T
    bounds, _ = study_bounds(influence, weight, sampler.radius, sampler.d, T, alpha_bar,
                             tau, horizon=t_end + 4 * T + tau)
    t_grid = np.linspace(0.0, t_end, n_times)
    pool = sampler.sample(N_list[-1], np.random.default_rng(seed))
    jobs = [(N, pool[:N], influence, weight, tau, h, t_end, t_grid) for N in N_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    report = StudyReport(bounds=bounds)
    w1 = {}
    for (Na, sa, _), (Nb, sb, _) in zip(results, results[1:]):
        w1[Na] = np.array([wasserstein1(empirical(a), empirical(b)) for a, b in zip(sa, sb)])
        report.w1_trend.append({"N": Na, "next_N": Nb, "max_w1": float(w1[Na].max()),
                                "w1_at_0": float(w1[Na][0]), "w1_at_end": float(w1[Na][-1])})
    for N, _, dX in results:
        scale = float(dX[0])
        env = scale * np.exp(-bounds.gamma * (t_grid - bounds.offset))
        margin = env - dX
        k = int(np.argmin(margin))
        report.per_n.append({
            "N": N,
            "history_d_X": scale,
            "gamma_env": bounds.gamma,
            "offset": bounds.offset,
            "fitted_rate": _fitted_rate(t_grid, dX, 1e-12 * max(1.0, scale)),
            "envelope_worst_margin": float(margin[k]),
            "envelope_worst_t": float(t_grid[k]),
            "envelope_passed": bool(margin[k] >= -1e-8),
        })
        for i, t in enumerate(t_grid):
            report.rows.append({"N": N, "t": float(t), "d_X": float(dX[i]), "envelope": float(env[i]),
                                "w1_to_next_N": float(w1[N][i]) if N in w1 else None})
    return report
