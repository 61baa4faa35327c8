"""Time-domain qubit fits: T1 decay, Ramsey T2* and randomized benchmarking.

All fits are nonlinear least squares (Levenberg-Marquardt via
``scipy.optimize.least_squares``) started from deterministic initial
guesses.  Times are fitted in units of the trace span so the problem is
well scaled whatever the absolute time unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import (AmbiguousDetuning, InvalidParams, NoConvergence, NonDecaying,
                     UnphysicalP)
from .model import DecayKind, DecayTrace

_TOL = 1e-15


@dataclass(frozen=True)
class CoherenceResult:
    kind: DecayKind
    value: float                  # T1 [s], T2* [s] or average gate fidelity
    stderr: float
    params: dict[str, float] = field(default_factory=dict)
    param_errors: dict[str, float] = field(default_factory=dict)
    r_squared: float = math.nan
    rms_residual: float = math.nan
    overdamped: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "value": self.value,
            "stderr": self.stderr,
            "params": dict(sorted(self.params.items())),
            "param_errors": dict(sorted(self.param_errors.items())),
            "r_squared": self.r_squared,
            "rms_residual": self.rms_residual,
            "overdamped": self.overdamped,
        }


def _arrays(trace: DecayTrace, kind: DecayKind, min_points: int) -> tuple[np.ndarray, np.ndarray]:
    if trace.kind is not kind:
        raise InvalidParams(f"expected a {kind.value} trace, got {trace.kind.value}")
    if len(trace.x) < min_points:
        raise InvalidParams(f"{kind.value} fit needs >= {min_points} points, got {len(trace.x)}")
    return np.asarray(trace.x, dtype=float), np.asarray(trace.y, dtype=float)


def _normalize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Map y onto unit peak-to-peak around a mean of one; ``y = z * scale + y0``.

    Fits then ignore offset and scale.  The mean sits at one rather than zero
    because relative finite-difference steps vanish for a parameter at zero.
    """
    mean, scale = float(np.mean(y)), float(np.ptp(y))
    return (y - mean) / scale + 1.0, mean - scale, scale


def _solve(resid: Callable[[np.ndarray], np.ndarray], x0: Sequence[float], what: str):
    try:
        # trial steps may pass through tiny or negative time constants
        with np.errstate(over="ignore", invalid="ignore"):
            sol = optimize.least_squares(resid, np.asarray(x0, dtype=float), method="lm",
                                         xtol=_TOL, ftol=_TOL, gtol=_TOL, max_nfev=20000)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NoConvergence(f"{what} fit failed: {exc}") from None
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise NoConvergence(f"{what} fit failed: {sol.message}")
    return sol


def _covariance(sol, n: int) -> np.ndarray:
    p = len(sol.x)
    dof = max(n - p, 1)
    s2 = 2.0 * sol.cost / dof
    jtj = sol.jac.T @ sol.jac
    return np.linalg.pinv(jtj) * s2


def _quality(y: np.ndarray, fun: np.ndarray) -> tuple[float, float]:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(fun ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return r2, math.sqrt(ss_res / len(y))


def _exp_guess(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(a, tau, c) initial guess for y = a*exp(-t/tau) + c from a log-linear fit."""
    sign = 1.0 if y[0] >= y[-1] else -1.0
    span = float(np.ptp(y))
    c0 = float(sign * np.min(sign * y)) - sign * 0.02 * span
    z = sign * (y - c0)
    keep = z > 0.05 * span
    if keep.sum() < 2:
        keep = z > 0
    slope, icpt = np.polyfit(t[keep], np.log(z[keep]), 1)
    tau = -1.0 / slope if slope < 0 else float(np.ptp(t))
    return sign * math.exp(icpt), tau, c0


# --------------------------------------------------------------------------
# T1
# --------------------------------------------------------------------------

def fit_t1(trace: DecayTrace) -> CoherenceResult:
    t, y = _arrays(trace, DecayKind.T1, 6)
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise NonDecaying("trace is constant")
    span = float(np.ptp(t))
    y, y0, scale = _normalize(y)
    a0, tau0, c0 = _exp_guess(t, y)

    def resid(p):
        a, tau, c = p
        return a * np.exp(-t / (tau * span)) + c - y

    sol = _solve(resid, [a0, tau0 / span, c0], "T1")
    a, tau, c = sol.x
    if not tau > 0:
        raise NonDecaying(f"fitted T1 = {tau * span:.4g} s is not positive")
    cov = _covariance(sol, len(t))
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    r2, rms = _quality(y, sol.fun)
    t1 = float(tau * span)
    return CoherenceResult(DecayKind.T1, t1, float(err[1] * span),
                           {"amplitude": float(a * scale), "offset": float(c * scale + y0),
                            "t1_s": t1},
                           {"amplitude": float(err[0] * scale), "offset": float(err[2] * scale),
                            "t1_s": float(err[1] * span)}, r2, rms * scale)


# --------------------------------------------------------------------------
# Ramsey
# --------------------------------------------------------------------------

def dominant_frequency(t: np.ndarray, y: np.ndarray, oversample: int = 16) -> tuple[float, float]:
    """Peak of the discrete spectrum of the mean-removed signal.

    Works on non-uniform grids; returns (frequency, phase) of the peak.
    """
    z = y - y.mean()
    dt = float(np.median(np.diff(t)))
    f_max = 0.5 / dt
    n_f = max(oversample * len(t), 64)
    freqs = np.linspace(0.0, f_max, n_f + 1)[1:]
    phase = np.exp(-2j * np.pi * np.outer(freqs, t - t[0]))
    spec = phase @ z
    k = int(np.argmax(np.abs(spec)))
    # refine on a finer local grid
    step = freqs[1] - freqs[0]
    local = np.linspace(max(freqs[k] - step, step / 100), freqs[k] + step, 201)
    spec_l = np.exp(-2j * np.pi * np.outer(local, t - t[0])) @ z
    j = int(np.argmax(np.abs(spec_l)))
    return float(local[j]), float(np.angle(spec_l[j]))


def fit_ramsey(trace: DecayTrace, overdamped: bool = False) -> CoherenceResult:
    """Fit ``a * exp(-t/T2*) * cos(2*pi*df*t + phi) + c``.

    With ``overdamped=True`` the detuning is fixed at zero and the trace is
    fitted as a plain exponential; the result carries the flag.
    """
    t, y = _arrays(trace, DecayKind.RAMSEY, 10)
    span = float(np.ptp(t))
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise NoConvergence("trace has no signal")
    y, y0, scale = _normalize(y)
    if overdamped:
        a0, tau0, c0 = _exp_guess(t, y)

        def resid0(p):
            a, tau, c = p
            return a * np.exp(-t / (tau * span)) + c - y

        sol = _solve(resid0, [a0, tau0 / span, c0], "Ramsey (overdamped)")
        a, tau, c = sol.x
        if not tau > 0:
            raise NoConvergence("fitted T2* is not positive")
        cov = _covariance(sol, len(t))
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
        r2, rms = _quality(y, sol.fun)
        t2 = float(tau * span)
        return CoherenceResult(DecayKind.RAMSEY, t2, float(err[1] * span),
                               {"amplitude": float(a * scale), "offset": float(c * scale + y0),
                                "t2star_s": t2, "detuning_hz": 0.0, "phase": 0.0},
                               {"amplitude": float(err[0] * scale),
                                "offset": float(err[2] * scale),
                                "t2star_s": float(err[1] * span)}, r2, rms * scale,
                               overdamped=True)

    f0, phi0 = dominant_frequency(t, y)
    if f0 < 1.0 / (2.0 * span):
        raise AmbiguousDetuning(
            f"detuning estimate {f0:.4g} Hz is below 1/(2*span) = {1 / (2 * span):.4g} Hz")
    c0 = float(y.mean())
    a0 = 0.5 * float(np.ptp(y))
    t_rel = t - t[0]

    # detuning is fitted relative to the spectral estimate
    def resid(p):
        a, tau, rel_df, phi, c = p
        return (a * np.exp(-t_rel / (tau * span)) * np.cos(2 * np.pi * rel_df * f0 * t_rel + phi)
                + c - y)

    best = None
    for tau0 in (0.3, 1.0, 3.0):
        try:
            sol = _solve(resid, [a0, tau0, 1.0, phi0, c0], "Ramsey")
        except NoConvergence:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise NoConvergence("Ramsey fit failed from every starting point")
    a, tau, rel_df, phi, c = best.x
    if not tau > 0:
        raise NoConvergence("fitted T2* is not positive")
    cov = _covariance(best, len(t))
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    df = rel_df * f0
    err[2] *= f0
    # canonical sign conventions: a > 0, df > 0
    if a < 0:
        a, phi = -a, phi + np.pi
    if df < 0:
        df, phi = -df, -phi
    # a pure decay also has a low-frequency spectral peak, so the fitted
    # detuning is checked as well as the initial estimate
    if df < 1.0 / (2.0 * span):
        raise AmbiguousDetuning(
            f"fitted detuning {df:.4g} Hz is below 1/(2*span) = {1 / (2 * span):.4g} Hz")
    # phase referred to t = 0 rather than the first sample
    phi = phi - 2 * np.pi * df * t[0]
    phi = float((phi + np.pi) % (2 * np.pi) - np.pi)
    r2, rms = _quality(y, best.fun)
    t2 = float(tau * span)
    return CoherenceResult(DecayKind.RAMSEY, t2, float(err[1] * span),
                           {"amplitude": float(a * scale), "offset": float(c * scale + y0),
                            "t2star_s": t2, "detuning_hz": float(df), "phase": phi},
                           {"amplitude": float(err[0] * scale), "offset": float(err[4] * scale),
                            "t2star_s": float(err[1] * span), "detuning_hz": float(err[2]),
                            "phase": float(err[3])}, r2, rms * scale)


# --------------------------------------------------------------------------
# randomized benchmarking
# --------------------------------------------------------------------------

def fidelity_from_p(p: float) -> float:
    """Average single-qubit gate fidelity for depolarizing parameter p (d = 2)."""
    return 1.0 - (1.0 - p) / 2.0


def fit_rb(trace: DecayTrace) -> CoherenceResult:
    """Fit ``a * p**m + c`` over sequence lengths ``m``."""
    m, y = _arrays(trace, DecayKind.RB, 4)
    if len(np.unique(m)) < 4:
        raise InvalidParams("randomized benchmarking needs >= 4 distinct sequence lengths")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise UnphysicalP("no decay in the trace (p = 1)")
    y, y0, scale = _normalize(y)
    a0, tau0, c0 = _exp_guess(m, y)
    p0 = math.exp(-1.0 / tau0) if tau0 > 0 else 0.99

    def resid(q):
        a, p, c = q
        return a * np.power(p, m) + c - y

    sol = _solve(resid, [a0, p0, c0], "RB")
    a, p, c = sol.x
    if not 0 < p < 1:
        raise UnphysicalP(f"fitted p = {p:.6g} outside (0, 1)")
    cov = _covariance(sol, len(m))
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    r2, rms = _quality(y, sol.fun)
    fid = fidelity_from_p(float(p))
    return CoherenceResult(DecayKind.RB, fid, float(err[1] / 2.0),
                           {"amplitude": float(a * scale), "offset": float(c * scale + y0),
                            "p": float(p)},
                           {"amplitude": float(err[0] * scale), "offset": float(err[2] * scale),
                            "p": float(err[1])}, r2, rms * scale)


def fit_trace(trace: DecayTrace) -> CoherenceResult:
    if trace.kind is DecayKind.T1:
        return fit_t1(trace)
    if trace.kind is DecayKind.RAMSEY:
        return fit_ramsey(trace)
    return fit_rb(trace)
