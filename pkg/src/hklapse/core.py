"""Domain types: opinion states, influence functions, weight functions.

Also hosts certification of the weight condition: a partition
``0 = t_0 < t_1 < ...`` with ``t_n - t_{n-1} <= T`` and
``integral of alpha over [t_{n-1}, t_n] >= alpha_bar``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from hklapse.errors import CertificationError, DomainError, SpecError

Array = np.ndarray


def _frozen(a: Array) -> Array:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OpinionState:
    """Opinions of N >= 2 agents in R^d at time ``t``.

    ``x`` is stored as a read-only ``(N, d)`` float array; a 1-D input is
    read as N scalar opinions.
    """

    t: float
    x: Array

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DomainError(f"opinions must be an (N, d) array, got shape {x.shape}")
        if x.shape[0] < 2:
            raise DomainError("at least two agents are required")
        if x.shape[1] < 1:
            raise DomainError("opinion dimension must be >= 1")
        if not np.all(np.isfinite(x)):
            raise DomainError("opinions must be finite")
        if not math.isfinite(self.t):
            raise DomainError("time must be finite")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", _frozen(x))

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


# ---------------------------------------------------------------------------
# influence functions
# ---------------------------------------------------------------------------


class InfluenceSpec:
    """Positive, bounded, continuous psi: R^d x R^d -> R_+.

    Subclasses implement :meth:`matrix`, which evaluates psi for every pair
    of rows of ``y`` and ``z``.
    """

    K_sup: float
    psi0_hint: float | None = None
    #: psi0 comes from a closed form rather than sampling
    exact_psi0: bool = True
    name: str = "custom"

    def matrix(self, y: Array, z: Array, diff: Array | None = None) -> Array:
        """Return ``psi(y_i, z_j)`` as an ``(len(y), len(z))`` array.

        ``diff`` may carry the precomputed ``z_j - y_i`` tensor.
        """
        raise NotImplementedError

    def pairs(self, y: Array, z: Array) -> Array:
        """Return ``psi(y_k, z_k)`` for matching rows of ``y`` and ``z``."""
        return np.array([self.matrix(y[k:k + 1], z[k:k + 1])[0, 0] for k in range(len(y))])

    def to_record(self) -> dict:
        raise NotImplementedError


def _sq_dist(y: Array, z: Array, diff: Array | None) -> Array:
    if diff is None:
        diff = z[None, :, :] - y[:, None, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass(frozen=True)
class Constant(InfluenceSpec):
    c: float = 1.0
    name = "constant"

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise SpecError("constant influence must be positive and finite")

    @property
    def K_sup(self) -> float:
        return float(self.c)

    def matrix(self, y, z, diff=None):
        return np.full((len(y), len(z)), float(self.c))

    def pairs(self, y, z):
        return np.full(len(y), float(self.c))

    def to_record(self):
        return {"family": "constant", "c": self.c}


@dataclass(frozen=True)
class RadialPower(InfluenceSpec):
    """psi(y, z) = K / (1 + |y - z|^2)^beta."""

    K: float = 1.0
    beta: float = 1.0
    name = "radial_power"

    def __post_init__(self):
        if not (self.K > 0 and math.isfinite(self.K)):
            raise SpecError("K must be positive and finite")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise SpecError("beta must be nonnegative and finite")

    @property
    def K_sup(self) -> float:
        return float(self.K)

    def profile(self, r: Array | float) -> Array:
        return self.K * (1.0 + np.square(r)) ** (-self.beta)

    def matrix(self, y, z, diff=None):
        return self.K * (1.0 + _sq_dist(y, z, diff)) ** (-self.beta)

    def pairs(self, y, z):
        return self.K * (1.0 + np.sum((y - z) ** 2, axis=1)) ** (-self.beta)

    def lipschitz(self) -> float:
        # max over r of |d/dr K (1 + r^2)^-beta| sits at r^2 = 1 / (2 beta + 1)
        if self.beta == 0:
            return 0.0
        r = 1.0 / math.sqrt(2.0 * self.beta + 1.0)
        return 2.0 * self.beta * self.K * r * (1.0 + r * r) ** (-self.beta - 1.0)

    def to_record(self):
        return {"family": "radial_power", "K": self.K, "beta": self.beta}


@dataclass(frozen=True)
class RadialTable(InfluenceSpec):
    """Radial profile tabulated at increasing radii, linear in between.

    Beyond the last radius the profile stays at the last value.
    """

    radii: tuple[float, ...]
    values: tuple[float, ...]
    name = "radial_table"

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 1:
            raise SpecError("radii and values must be equal-length 1-D sequences")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise SpecError("radii must start at 0 and strictly increase")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise SpecError("table values must be positive and finite")
        object.__setattr__(self, "radii", tuple(float(a) for a in r))
        object.__setattr__(self, "values", tuple(float(a) for a in v))

    @property
    def K_sup(self) -> float:
        return max(self.values)

    def profile(self, r):
        return np.interp(r, self.radii, self.values)

    def matrix(self, y, z, diff=None):
        return self.profile(np.sqrt(_sq_dist(y, z, diff)))

    def pairs(self, y, z):
        return self.profile(np.linalg.norm(y - z, axis=1))

    def min_on(self, r_max: float) -> float:
        """Exact minimum of the profile on ``[0, r_max]``."""
        r = np.asarray(self.radii)
        inside = np.asarray(self.values)[r <= r_max]
        return float(min(inside.min(), self.profile(r_max)))

    def to_record(self):
        return {"family": "radial_table", "radii": list(self.radii), "values": list(self.values)}


@dataclass(frozen=True)
class CustomInfluence(InfluenceSpec):
    """User influence function with a declared sup-norm.

    ``evaluator(y, z)`` receives two ``(m, d)`` arrays and returns the ``m``
    values ``psi(y_k, z_k)``.
    """

    evaluator: Callable[[Array, Array], Array]
    K_sup: float
    psi0_hint: float | None = None
    exact_psi0 = False
    name = "custom"

    def __post_init__(self):
        if not (self.K_sup > 0 and math.isfinite(self.K_sup)):
            raise SpecError("declared K_sup must be positive and finite")

    def matrix(self, y, z, diff=None):
        n, m = len(y), len(z)
        yy = np.repeat(y, m, axis=0)
        zz = np.tile(z, (n, 1))
        return np.asarray(self.evaluator(yy, zz), dtype=float).reshape(n, m)

    def pairs(self, y, z):
        return np.asarray(self.evaluator(y, z), dtype=float).reshape(len(y))

    def to_record(self):
        return {"family": "custom", "K_sup": self.K_sup, "psi0_hint": self.psi0_hint}


def _as_vector(v, name: str) -> Array:
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1:
        raise DomainError(f"{name} must be a vector")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} must be finite")
    return a


def eval_influence(spec: InfluenceSpec, y, z) -> float:
    """Evaluate psi(y, z) for one pair of opinions."""
    y = _as_vector(y, "y")
    z = _as_vector(z, "z")
    if y.shape != z.shape:
        raise DomainError(f"dimension mismatch: {y.shape[0]} vs {z.shape[0]}")
    value = float(spec.matrix(y[None, :], z[None, :])[0, 0])
    if not (0.0 < value <= spec.K_sup):
        raise SpecError(f"psi = {value!r} outside (0, K_sup = {spec.K_sup}]")
    return value


# ---------------------------------------------------------------------------
# weight functions
# ---------------------------------------------------------------------------


def _trapezoid(u: Array, length: float, ramp: float) -> Array:
    # 1 on [0, length] with linear ramps centred on both edges; area == length
    if ramp <= 0:
        return ((u >= 0) & (u < length)).astype(float)
    half = 0.5 * ramp
    return np.clip(np.minimum(u + half, length - u + half) / ramp, 0.0, 1.0)


class WeightSpec:
    """Weight alpha: [0, inf) -> [0, 1].

    Calling the spec evaluates it on a scalar or an array of times.
    :meth:`breakpoints` lists the points in ``[a, b]`` where alpha is not
    smooth, so quadrature can split there.
    """

    period: float | None = None
    name: str = "custom"

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        out = self._evaluate(np.asarray(t, dtype=float))
        return float(out) if scalar else out

    def _evaluate(self, t: Array) -> Array:
        raise NotImplementedError

    def breakpoints(self, a: float, b: float) -> list[float]:
        return []

    def to_record(self) -> dict:
        raise NotImplementedError


def _periodic_points(base: Sequence[float], period: float, a: float, b: float) -> list[float]:
    out = []
    k0 = math.floor(a / period) - 1
    k1 = math.ceil(b / period) + 1
    for k in range(k0, k1 + 1):
        for p in base:
            s = p + k * period
            if a < s < b:
                out.append(s)
    return sorted(set(out))


@dataclass(frozen=True)
class ConstantOne(WeightSpec):
    name = "constant_one"

    def _evaluate(self, t):
        return np.ones_like(t)

    def to_record(self):
        return {"family": "constant_one"}


@dataclass(frozen=True)
class SquareWave(WeightSpec):
    """On for a fraction ``duty`` of every ``period``, starting at ``phase``.

    Edges are linear ramps of width ``ramp`` (default ``1e-3 * period``)
    centred on the nominal switching times, which keeps alpha continuous
    and the integral over one period equal to ``duty * period``.
    """

    period: float = 1.0
    duty: float = 0.5
    phase: float = 0.0
    ramp: float | None = None
    name = "square_wave"

    def __post_init__(self):
        if not (self.period > 0 and math.isfinite(self.period)):
            raise SpecError("period must be positive")
        if not (0 < self.duty <= 1):
            raise SpecError("duty must lie in (0, 1]")
        ramp = 1e-3 * self.period if self.ramp is None else float(self.ramp)
        on = self.duty * self.period
        if self.duty < 1 and not (0 <= ramp <= min(on, self.period - on)):
            raise SpecError("ramp width must not exceed the on or off window")
        object.__setattr__(self, "ramp", ramp)

    def _evaluate(self, t):
        if self.duty >= 1:
            return np.ones_like(t)
        on = self.duty * self.period
        u = np.mod(t - self.phase, self.period)
        out = _trapezoid(u, on, self.ramp)
        out = np.maximum(out, _trapezoid(u - self.period, on, self.ramp))
        return out

    def breakpoints(self, a, b):
        if self.duty >= 1 or self.ramp <= 0:
            return []
        on = self.duty * self.period
        h = 0.5 * self.ramp
        base = [self.phase - h, self.phase + h, self.phase + on - h, self.phase + on + h]
        return _periodic_points(base, self.period, a, b)

    def to_record(self):
        return {"family": "square_wave", "period": self.period, "duty": self.duty,
                "phase": self.phase, "ramp": self.ramp}


@dataclass(frozen=True)
class ClippedSinusoid(WeightSpec):
    """alpha(t) = max(0, (s(t) - floor) / (1 - floor)), s(t) = (1 + sin(2 pi t / period)) / 2.

    ``floor`` in [0, 1) sets how much of each period has no interaction.
    """

    period: float = 1.0
    floor: float = 0.0
    name = "clipped_sinusoid"

    def __post_init__(self):
        if not (self.period > 0 and math.isfinite(self.period)):
            raise SpecError("period must be positive")
        if not (0 <= self.floor < 1):
            raise SpecError("floor must lie in [0, 1)")

    def _evaluate(self, t):
        s = 0.5 * (1.0 + np.sin(2.0 * np.pi * t / self.period))
        return np.clip((s - self.floor) / (1.0 - self.floor), 0.0, 1.0)

    def breakpoints(self, a, b):
        if self.floor <= 0:
            return []
        theta = math.asin(2.0 * self.floor - 1.0)
        base = [theta * self.period / (2 * math.pi), (math.pi - theta) * self.period / (2 * math.pi)]
        return _periodic_points(base, self.period, a, b)

    def to_record(self):
        return {"family": "clipped_sinusoid", "period": self.period, "floor": self.floor}


@dataclass(frozen=True)
class DropoutSchedule(WeightSpec):
    """alpha = 1 on the listed on-intervals, 0 elsewhere, with ramped edges.

    With ``period`` set, the intervals (given inside ``[0, period]``) repeat.
    The default ramp width is ``1e-3 * period``, or ``1e-3`` without a period.
    """

    on_intervals: tuple[tuple[float, float], ...] = ()
    period: float | None = None
    ramp: float | None = None
    name = "dropout"

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.on_intervals)
        for a, b in ivs:
            if not (0 <= a < b):
                raise SpecError(f"bad on-interval ({a}, {b})")
            if self.period is not None and b > self.period:
                raise SpecError("on-intervals must lie inside one period")
        if self.period is not None and not self.period > 0:
            raise SpecError("period must be positive")
        ramp = (1e-3 * (self.period or 1.0)) if self.ramp is None else float(self.ramp)
        if ramp < 0 or any(ramp > b - a for a, b in ivs):
            raise SpecError("ramp width must not exceed any on-interval")
        object.__setattr__(self, "on_intervals", ivs)
        object.__setattr__(self, "ramp", ramp)

    def _evaluate(self, t):
        out = np.zeros_like(t)
        if self.period is None:
            shifts, u = (0.0,), t
        else:
            shifts, u = (-self.period, 0.0, self.period), np.mod(t, self.period)
        for a, b in self.on_intervals:
            for s in shifts:
                out = np.maximum(out, _trapezoid(u - a - s, b - a, self.ramp))
        return out

    def breakpoints(self, a, b):
        h = 0.5 * self.ramp
        base = [p for lo, hi in self.on_intervals for p in (lo - h, lo + h, hi - h, hi + h)]
        if self.period is None:
            return sorted(p for p in set(base) if a < p < b)
        return _periodic_points(base, self.period, a, b)

    def to_record(self):
        return {"family": "dropout", "on_intervals": [list(iv) for iv in self.on_intervals],
                "period": self.period, "ramp": self.ramp}


@dataclass(frozen=True)
class CustomWeight(WeightSpec):
    """User weight; ``evaluator`` must accept numpy arrays of times."""

    evaluator: Callable[[Array], Array]
    period: float | None = None
    name = "custom"

    def _evaluate(self, t):
        return np.asarray(self.evaluator(t), dtype=float) * np.ones_like(t)

    def to_record(self):
        return {"family": "custom", "period": self.period}


def eval_weight(spec: WeightSpec, t: float) -> float:
    if not t >= 0:
        raise DomainError(f"weight is defined for t >= 0, got {t}")
    value = spec(float(t))
    if not (0.0 <= value <= 1.0):
        raise SpecError(f"alpha({t}) = {value} outside [0, 1]")
    return value


# ---------------------------------------------------------------------------
# certification of the weight condition
# ---------------------------------------------------------------------------

_SIMPSON_NODES = 1000


@dataclass(frozen=True)
class WfCertificate:
    """A certified partition for the weight condition.

    ``T`` is the spacing bound actually certified; it exceeds
    ``T_requested`` only when intervals were merged to reach spacing
    ``>= tau``.
    """

    partition: Array
    T: float
    alpha_bar: float
    tau: float
    tau_compatible: bool
    integrals: Array
    quadrature_error: float
    horizon: float
    T_requested: float

    def __post_init__(self):
        object.__setattr__(self, "partition", _frozen(np.array(self.partition, dtype=float)))
        object.__setattr__(self, "integrals", _frozen(np.array(self.integrals, dtype=float)))

    @property
    def spacings(self) -> Array:
        return np.diff(self.partition)

    def points_within(self, t_end: float) -> Array:
        return self.partition[self.partition <= t_end + 1e-12]

    def to_record(self) -> dict:
        return {
            "partition": self.partition.tolist(),
            "T": self.T,
            "T_requested": self.T_requested,
            "alpha_bar": self.alpha_bar,
            "tau": self.tau,
            "tau_compatible": self.tau_compatible,
            "integrals": self.integrals.tolist(),
            "quadrature_error": self.quadrature_error,
            "horizon": self.horizon,
        }


@functools.lru_cache(maxsize=64)
def _simpson_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    # unit-interval nodes and weights; read-only so the cache cannot be corrupted
    u = np.linspace(0.0, 1.0, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


def _simpson_piece(spec: WeightSpec, a: float, b: float, n: int) -> tuple[float, float]:
    # n divisible by 4 so the half-resolution rule is also a valid Simpson rule
    u, w = _simpson_rule(n)
    x = a + (b - a) * u
    x[-1] = b
    f = spec(x)
    fine = (b - a) * float(np.dot(w, f)) / (3 * n)
    coarse = (b - a) * float(np.dot(_simpson_rule(n // 2)[1], f[::2])) / (3 * (n // 2))
    return fine, abs(fine - coarse) / 15.0


def integrate_weight(spec: WeightSpec, a: float, b: float,
                     nodes: int = _SIMPSON_NODES) -> tuple[float, float]:
    """Composite Simpson integral of alpha over ``[a, b]`` and a Richardson error estimate.

    The interval is split at the spec's breakpoints; every piece gets a
    share of at least ``nodes`` total nodes.
    """
    if b <= a:
        return 0.0, 0.0
    cuts = [a, *spec.breakpoints(a, b), b]
    total, err = 0.0, 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        n = 4 * max(1, math.ceil(nodes * (hi - lo) / (b - a) / 4))
        s, e = _simpson_piece(spec, lo, hi, n)
        total += s
        err += e
    return total, err


def certify_wf(spec: WeightSpec, T: float, alpha_bar: float, horizon: float,
               tau: float = 0.0) -> WfCertificate:
    """Greedy partition certifying the weight condition on ``[0, horizon]``.

    Each ``t_n`` is the earliest time in ``(t_{n-1}, t_{n-1} + T]`` at which
    the integral of alpha since ``t_{n-1}`` reaches ``alpha_bar``, located by
    bisection to ``1e-9 * T``. Windows are built while they fit inside the
    horizon. With ``tau > 0`` consecutive windows are then merged until every
    spacing is at least ``tau``; the certified spacing bound grows to the
    largest merged spacing when needed.

    Raises :class:`CertificationError` with the offending window when the
    greedy construction stalls. Greedy failure does not prove that no
    partition exists.
    """
    if not T > 0:
        raise DomainError("T must be positive")
    if not alpha_bar > 0:
        raise DomainError("alpha_bar must be positive")
    if not horizon > T:
        raise DomainError("horizon must exceed T")
    if not tau >= 0:
        raise DomainError("tau must be nonnegative")

    points = [0.0]
    integrals: list[float] = []
    errors: list[float] = []
    tol = 1e-9 * T
    while points[-1] + T <= horizon:
        a = points[-1]
        hi = a + T
        full, _ = integrate_weight(spec, a, hi)
        if not math.isfinite(full):
            raise CertificationError("quadrature did not converge", (a, hi), full)
        if full < alpha_bar:
            raise CertificationError(
                f"integral {full:.6g} of alpha over [{a:.6g}, {hi:.6g}] is below alpha_bar = {alpha_bar}",
                (a, hi), full)
        lo = a
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if integrate_weight(spec, a, mid)[0] >= alpha_bar:
                hi = mid
            else:
                lo = mid
        value, err = integrate_weight(spec, a, hi)
        points.append(hi)
        integrals.append(value)
        errors.append(err)

    if len(points) < 2:
        raise CertificationError("horizon too short for a single window", (0.0, horizon))

    T_cert = T
    if tau > 0:
        merged, merged_int, merged_err = [0.0], [], []
        acc, acc_err = 0.0, 0.0
        for p, val, err in zip(points[1:], integrals, errors):
            acc += val
            acc_err += err
            if p - merged[-1] >= tau:
                merged.append(p)
                merged_int.append(acc)
                merged_err.append(acc_err)
                acc, acc_err = 0.0, 0.0
        if len(merged) < 2:
            raise CertificationError(
                f"no window of length >= tau = {tau} fits in the horizon", (0.0, horizon))
        points, integrals, errors = merged, merged_int, merged_err
        T_cert = max(T, float(np.max(np.diff(points))))
        if T_cert > horizon:
            raise CertificationError("merged spacing exceeds the horizon", (0.0, horizon))

    spacings = np.diff(points)
    return WfCertificate(
        partition=np.array(points),
        T=float(T_cert),
        alpha_bar=float(alpha_bar),
        tau=float(tau),
        tau_compatible=bool(np.all(spacings >= tau)),
        integrals=np.array(integrals),
        quadrature_error=float(max(errors)),
        horizon=float(horizon),
        T_requested=float(T),
    )


# ---------------------------------------------------------------------------
# M0 and psi0
# ---------------------------------------------------------------------------


def compute_M0(history) -> float:
    """Largest opinion norm over agents and history samples.

    Accepts an :class:`OpinionState`, an ``(N, d)`` array of initial
    opinions, an ``(M, N, d)`` array of history samples, or anything with a
    ``history_samples()`` method (a trajectory).
    """
    if hasattr(history, "history_samples"):
        history = history.history_samples()
    if isinstance(history, OpinionState):
        history = history.x
    a = np.asarray(history, dtype=float)
    if a.size == 0:
        raise DomainError("empty history")
    if a.ndim == 1:
        a = a[:, None]
    return float(np.max(np.linalg.norm(a, axis=-1)))


_PSI0_SAMPLES_LOG2 = 17  # 131072 >= 1e5 quasi-random pairs
_PSI0_SAFETY = 0.99


def _ball_points(u: Array, radius: float) -> Array:
    # maps [0,1]^d onto the closed ball: cube shells go to sphere shells
    c = 2.0 * u - 1.0
    inf = np.max(np.abs(c), axis=1, keepdims=True)
    two = np.linalg.norm(c, axis=1, keepdims=True)
    scale = np.divide(inf, two, out=np.zeros_like(two), where=two > 0)
    return radius * c * scale


def _sampled_psi0(spec: InfluenceSpec, M0: float, d: int) -> float:
    sampler = qmc.Sobol(d=2 * d, scramble=True, seed=0)
    u = sampler.random_base2(_PSI0_SAMPLES_LOG2)
    y = _ball_points(u[:, :d], M0)
    z = _ball_points(u[:, d:], M0)
    eye = np.eye(d) * M0
    y = np.vstack([y, eye, -eye, np.zeros((1, d))])
    z = np.vstack([z, -eye, eye, np.zeros((1, d))])
    values = np.concatenate([spec.pairs(y[s:s + 16384], z[s:s + 16384])
                             for s in range(0, len(y), 16384)])
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise SpecError("influence function is not positive on the sampled ball")
    if np.any(values > spec.K_sup * (1 + 1e-12)):
        raise SpecError("influence function exceeds its declared K_sup")
    return float(values.min())


def compute_psi0(spec: InfluenceSpec, M0: float, d: int = 1) -> float:
    """Lower bound for psi over pairs with ``|y|, |z| <= M0``.

    Exact for the built-in radial families (the minimum sits at separation
    ``2 * M0`` for decreasing profiles, and is read off the table for
    tabulated ones). Custom functions use the declared ``psi0_hint`` when
    it is consistent with a quasi-random sweep of the product ball, and
    otherwise ``0.99`` times the sampled minimum.
    """
    if not M0 >= 0:
        raise DomainError("M0 must be nonnegative")
    if isinstance(spec, Constant):
        return float(spec.c)
    if isinstance(spec, RadialPower):
        return float(spec.profile(2.0 * M0))
    if isinstance(spec, RadialTable):
        return spec.min_on(2.0 * M0)
    sampled = _sampled_psi0(spec, M0, d)
    if spec.psi0_hint is not None:
        if not 0 < spec.psi0_hint <= sampled:
            raise SpecError(f"psi0_hint {spec.psi0_hint} exceeds sampled minimum {sampled}")
        return float(spec.psi0_hint)
    return _PSI0_SAFETY * sampled
