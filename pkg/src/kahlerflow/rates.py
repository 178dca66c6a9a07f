"""Power-law exponent estimation from monitored time series.

Every fitted quantity is modeled as value ~ C (T - t)^p near the
collapse time; the fit regresses log(value) on log(T - t) by least
squares, so the slope is the exponent directly.  Sign convention,
fixed and relied on downstream: decaying quantities fit positive
exponents (fiber diameter: +1/2), blowing-up quantities fit negative
ones (scalar curvature: -1; curvature norm: bounded below by -2).

Asymptotic rates are near-singularity statements, so the default fit
window is the last decade of log(T - t) before the final sample;
earlier transients reflect initial data, not the collapse rate.
Samples taken after the first Ricci-bound violation are excluded from
report fits and reported separately, since the rate predictions are
conditional on that bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FitError
from .monitors import shadow_bound

__all__ = [
    "RateFit",
    "RateCheck",
    "fit_power_law",
    "last_decade_window",
    "nested_windows",
    "windowed_stability",
    "exponent_drift",
    "clean_prefix",
    "check_verdict",
    "report_lines",
]

#: columns whose uniform boundedness the standard report certifies
BOUNDED_COLUMNS = ("vr_sup", "npot_sup", "Q_sup")


@dataclass(frozen=True)
class RateFit:
    """One least-squares power-law fit.

    ``exponent`` is the slope of log(value) against log(T - t) on the
    window; ``intercept`` is the fitted log-prefactor;
    ``exponent_stderr`` is the ordinary least-squares slope standard
    error, the residual-based uncertainty that subsampling stability is
    measured against.  Construction from a sampled trajectory keeps the
    window inside the sampled range, so t_hi never exceeds the stop
    time of the run that produced the series.
    """

    exponent: float
    intercept: float
    window: tuple[float, float]
    residual_rms: float
    n_points: int
    exponent_stderr: float

    def __post_init__(self):
        if self.n_points < 8:
            raise ConfigurationError(
                f"rate fit needs at least 8 points, got {self.n_points}"
            )
        if not math.isfinite(self.residual_rms):
            raise ConfigurationError("rate fit residual is not finite")
        if not self.window[0] < self.window[1]:
            raise ConfigurationError(
                f"rate fit window {self.window!r} is not increasing"
            )


@dataclass(frozen=True)
class RateCheck:
    """Expected exponent for one monitored column.

    Two-sided by default: PASS iff |exponent - expected| <= tolerance.
    ``one_sided`` checks only exponent >= expected - tolerance, for
    quantities whose prediction is an upper blow-up bound rather than
    an exact rate.
    """

    name: str
    expected: float
    tolerance: float
    one_sided: bool = False

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError("rate check tolerance must be positive")


def _series(t, values) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.ndim != 1 or t.shape != v.shape:
        raise ConfigurationError("series must be two 1-d arrays of equal length")
    return t, v


def last_decade_window(
    t, T: float, decades: float = 1.0
) -> tuple[float, float]:
    """Window spanning the last ``decades`` of log(T - t) before the
    final sample of the series."""
    t, _ = _series(t, t)
    t_hi = float(t.max())
    if not t_hi < T:
        raise ConfigurationError("series reaches the collapse time")
    return T - 10.0**decades * (T - t_hi), t_hi


def fit_power_law(t, values, T: float, window=None) -> RateFit:
    """Least-squares slope of log(value) against log(T - t).

    ``window`` is an inclusive (t_lo, t_hi) time interval inside
    (0, T); by default the last decade of log(T - t) before the final
    sample.  Values must be positive on the window (samples outside it
    are never touched); fewer than 8 in-window samples is an error.
    """
    t, v = _series(t, values)
    if not (math.isfinite(T) and T > 0):
        raise ConfigurationError("collapse time T must be finite and positive")
    if window is None:
        window = last_decade_window(t, T)
    t_lo, t_hi = float(window[0]), float(window[1])
    if not (0.0 <= t_lo < t_hi < T):
        raise ConfigurationError(
            f"fit window [{t_lo!r}, {t_hi!r}] must lie inside (0, T)"
        )
    mask = (t >= t_lo) & (t <= t_hi)
    tw, vw = t[mask], v[mask]
    bad = np.flatnonzero(vw <= 0)
    if bad.size:
        raise FitError(
            f"nonpositive value {float(vw[bad[0]])!r} at"
            f" t={float(tw[bad[0]])!r} inside the fit window"
        )
    n = int(tw.size)
    if n < 8:
        raise FitError(
            f"insufficient data: window [{t_lo!r}, {t_hi!r}]"
            f" holds {n} samples, need at least 8"
        )
    x = np.log(T - tw)
    y = np.log(vw)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float((xc @ (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    res = y - (intercept + slope * x)
    ssr = float(res @ res)
    return RateFit(
        exponent=slope,
        intercept=intercept,
        window=(t_lo, t_hi),
        residual_rms=math.sqrt(ssr / n),
        n_points=n,
        exponent_stderr=math.sqrt(ssr / (n - 2) / sxx),
    )


def nested_windows(
    T: float, eps_stop: float, count: int = 4, step: float = 0.5
) -> list[tuple[float, float]]:
    """Decade-wide windows sliding toward the collapse time.

    The last window is the last decade of log(T - t) before
    T - eps_stop; each earlier window is shifted away from T by
    ``step`` decades.  Exponent drift across them measures how far the
    series is from a clean power law.
    """
    if not 0 < eps_stop < T:
        raise ConfigurationError("windows need 0 < eps_stop < T")
    if count < 2:
        raise ConfigurationError("need at least 2 nested windows")
    gaps = eps_stop * 10.0 ** (step * np.arange(count - 1, -1, -1))
    if not 10.0 * gaps[0] < T:
        raise ConfigurationError(
            "outermost window reaches t <= 0; reduce count or step"
        )
    return [(T - 10.0 * g, T - g) for g in gaps]


def windowed_stability(t, values, T: float, windows) -> tuple[RateFit, ...]:
    """Fits over a family of windows approaching the collapse time."""
    windows = list(windows)
    if not windows:
        raise ConfigurationError("windowed stability needs at least one window")
    return tuple(fit_power_law(t, values, T, w) for w in windows)


def exponent_drift(fits) -> np.ndarray:
    """Absolute exponent change between consecutive window fits."""
    return np.abs(np.diff([f.exponent for f in fits]))


def clean_prefix(hypothesis_ok) -> int:
    """Number of leading samples with the hypothesis flag up.

    The flag is latched upstream, so everything from the first
    violation on is excluded from conditional-rate fits.
    """
    ok = np.asarray(hypothesis_ok, dtype=bool)
    down = np.flatnonzero(~ok)
    return int(down[0]) if down.size else int(ok.size)


def check_verdict(fit: RateFit, check: RateCheck) -> bool:
    """PASS/FAIL of one fitted exponent against its expectation."""
    if check.one_sided:
        return fit.exponent >= check.expected - check.tolerance
    return abs(fit.exponent - check.expected) <= check.tolerance


def _rate_line(name: str, fit: RateFit, check: RateCheck, ok: bool) -> str:
    mode = "one_sided" if check.one_sided else "two_sided"
    return (
        f"name={name} kind=rate window=[{fit.window[0]!r},{fit.window[1]!r}]"
        f" n={fit.n_points} exponent={fit.exponent:.6f}"
        f" residual_rms={fit.residual_rms:.3e}"
        f" expected={check.expected:+.3f} tol={check.tolerance:.3f}"
        f" mode={mode} verdict={'PASS' if ok else 'FAIL'}"
    )


def report_lines(
    columns,
    T: float,
    checks,
    bound_names=BOUNDED_COLUMNS,
    factor: float = 10.0,
    window=None,
) -> tuple[list[str], bool]:
    """Assemble the text rate report: one line per quantity.

    ``columns`` is the trajectory table (column name -> array, as read
    back from the trajectory CSV).  Rate checks fit the requested
    columns on the clean (hypothesis-respecting) prefix; when samples
    are excluded the default window ends at the last clean sample and
    the exclusion is reported on its own INFO line.  Bound checks
    certify max over run <= factor x max over the first decile.
    Returns the lines and the overall verdict.
    """
    needed = ["t", "hypothesis_ok"]
    needed += [c.name for c in checks] + list(bound_names)
    for name in needed:
        if name not in columns:
            raise ConfigurationError(f"trajectory is missing column {name!r}")
    t = np.asarray(columns["t"], dtype=np.float64)
    k = clean_prefix(columns["hypothesis_ok"])
    lines: list[str] = []
    all_pass = True
    if k < t.size:
        lines.append(
            f"name=hypothesis_ok kind=flag first_violation={float(t[k])!r}"
            f" n_excluded={t.size - k} verdict=INFO"
        )
    for check in checks:
        fit = fit_power_law(t[:k], columns[check.name][:k], T, window)
        ok = check_verdict(fit, check)
        all_pass = all_pass and ok
        lines.append(_rate_line(check.name, fit, check, ok))
    for name in bound_names:
        ok, full, early = shadow_bound(columns[name], factor=factor)
        all_pass = all_pass and ok
        lines.append(
            f"name={name} kind=bound run_max={full:.6e}"
            f" early_max={early:.6e} factor={factor:g}"
            f" verdict={'PASS' if ok else 'FAIL'}"
        )
    return lines, all_pass
