"""Contraction constants, decay rates and exponential bound curves.

Undelayed regime::

    C     = max(1 - exp(-K T), 1 - psi0 exp(-K T) alpha_bar)
    gamma = ln(1 / C) / T
    d(t) <= d(0) exp(-gamma (t - T))

Delayed regime (partition spacing in [tau, T])::

    C       = max(1 - exp(-K (T + tau)), 1 - psi0 exp(-K T) alpha_bar)
    C_tilde = 1 - exp(-K T) (1 - C)
    gamma   = ln(1 / C_tilde) / (3 T)
    d(t) <= D0 exp(-gamma (t - 3 T + tau))

All constants are independent of the number of agents.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from hklapse.errors import DomainError


@dataclass(frozen=True)
class BoundSet:
    """Constants of one regime and the initial diameter scale they multiply.

    ``gamma`` is the rate of the regime's bound curve: the undelayed rate,
    or the delayed rate built from ``C_tilde``. ``scale`` is ``d(0)``
    (undelayed) or the initial window diameter ``D0`` (delayed).
    """

    regime: str
    K: float
    M0: float
    psi0: float
    T: float
    alpha_bar: float
    tau: float
    C: float
    gamma: float
    C_tilde: float | None = None
    scale: float = 1.0

    @property
    def offset(self) -> float:
        """Time at which the bound curve equals ``scale``."""
        if self.regime == "undelayed":
            return self.T
        return 3.0 * self.T - self.tau

    def with_scale(self, scale: float) -> "BoundSet":
        return _replace(self, scale=float(scale))

    def with_gamma(self, gamma: float) -> "BoundSet":
        return _replace(self, gamma=float(gamma))

    def to_record(self) -> dict:
        return asdict(self)


def _replace(b: BoundSet, **kw) -> BoundSet:
    data = asdict(b)
    data.update(kw)
    return BoundSet(**data)


def _check_common(K: float, T: float, psi0: float, alpha_bar: float) -> None:
    if not (K > 0 and math.isfinite(K)):
        raise DomainError("K must be positive and finite")
    if not (T > 0 and math.isfinite(T)):
        raise DomainError("T must be positive and finite")
    if not (0 < psi0 <= K):
        raise DomainError(f"psi0 must lie in (0, K], got {psi0}")
    if not (0 < alpha_bar <= T):
        raise DomainError(f"alpha_bar must lie in (0, T], got {alpha_bar}")


def _rate(C: float, denom: float, label: str) -> float:
    if not (0.0 < C < 1.0):
        raise DomainError(f"degenerate contraction constant {label} = {C!r}; need a value in (0, 1)")
    g = math.log(1.0 / C) / denom
    if not g > 0:
        raise DomainError(f"decay rate underflows to {g!r} for {label} = {C!r}")
    return g


def constants_undelayed(K: float, T: float, psi0: float, alpha_bar: float,
                        M0: float = float("nan"), scale: float = 1.0) -> BoundSet:
    _check_common(K, T, psi0, alpha_bar)
    eKT = math.exp(-K * T)
    C = max(1.0 - eKT, 1.0 - psi0 * eKT * alpha_bar)
    gamma = _rate(C, T, "C")
    return BoundSet("undelayed", K=float(K), M0=float(M0), psi0=float(psi0), T=float(T),
                    alpha_bar=float(alpha_bar), tau=0.0, C=C, gamma=gamma, scale=float(scale))


def constants_delayed(K: float, T: float, tau: float, psi0_tilde: float, alpha_bar: float,
                      M0: float = float("nan"), scale: float = 1.0,
                      cert=None) -> BoundSet:
    """Delayed-regime constants; ``T`` must bound partition spacings that are all ``>= tau``.

    When a certificate is passed, its ``tau_compatible`` flag and delay are
    checked against the arguments.
    """
    _check_common(K, T, psi0_tilde, alpha_bar)
    if not (tau >= 0 and math.isfinite(tau)):
        raise DomainError("tau must be finite and nonnegative")
    if tau > T:
        raise DomainError(f"tau = {tau} exceeds the spacing bound T = {T}")
    if cert is not None and (not cert.tau_compatible or cert.tau < tau):
        raise DomainError("partition is not compatible with the delay")
    eKT = math.exp(-K * T)
    C = max(1.0 - math.exp(-K * (T + tau)), 1.0 - psi0_tilde * eKT * alpha_bar)
    _rate(C, 1.0, "C")
    C_tilde = 1.0 - eKT * (1.0 - C)
    gamma = _rate(C_tilde, 3.0 * T, "C_tilde")
    return BoundSet("delayed", K=float(K), M0=float(M0), psi0=float(psi0_tilde), T=float(T),
                    alpha_bar=float(alpha_bar), tau=float(tau), C=C, gamma=gamma,
                    C_tilde=C_tilde, scale=float(scale))


def bound_curve(bounds: BoundSet, t):
    """``scale * exp(-gamma (t - offset))``; identically 0 when ``scale == 0``."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise DomainError("bound curve is defined for t >= 0")
    if bounds.scale == 0:
        out = np.zeros_like(tt)
    else:
        out = bounds.scale * np.exp(-bounds.gamma * (tt - bounds.offset))
    return float(out) if out.ndim == 0 else out


def compare_regimes(K: float, T: float, psi0: float, alpha_bar: float,
                    d0: float = 1.0, t_grid=None) -> dict:
    """Undelayed bound versus the delay-free instance of the delayed bound.

    With no delay the three-step contraction constant may be taken equal to
    ``C`` itself, giving rate ``gamma / 3`` and offset ``3 T``; the report
    tabulates both curves and flags whether the undelayed curve is never
    above the other one (it touches it only at ``t = 0``). The general
    delayed rate (built from ``C_tilde``) is reported alongside.
    """
    und = constants_undelayed(K, T, psi0, alpha_bar, scale=d0)
    gen = constants_delayed(K, T, 0.0, psi0, alpha_bar, scale=d0)
    gamma_same_c = math.log(1.0 / und.C) / (3.0 * T)
    if t_grid is None:
        t_grid = np.linspace(0.0, 10.0 * T, 101)
    t = np.asarray(t_grid, dtype=float)
    undelayed_curve = bound_curve(und, t)
    delayed_curve = np.zeros_like(t) if d0 == 0 else d0 * np.exp(-gamma_same_c * (t - 3.0 * T))
    slack = 1e-12 * max(1.0, d0 / und.C)
    dominated = bool(np.all(undelayed_curve <= delayed_curve + slack))
    strictly_below = bool(np.all(undelayed_curve[t > 0] < delayed_curve[t > 0])) if d0 > 0 else False
    return {
        "C": und.C,
        "gamma_undelayed": und.gamma,
        "gamma_delayed_same_C": gamma_same_c,
        "C_tilde_general": gen.C_tilde,
        "gamma_delayed_general": gen.gamma,
        "undelayed_dominates": dominated,
        "strictly_below_for_positive_t": strictly_below,
        "table": [
            {"t": float(a), "undelayed": float(b), "delayed": float(c)}
            for a, b, c in zip(t, undelayed_curve, delayed_curve)
        ],
    }
