"""Per-snapshot diagnostics of the collapsing flow.

Every bounded quantity of the collapse analysis is evaluated here as a
pure function of an immutable flow state: the normalized volume ratio,
the fiber-averaged potential deviation, the scaled trace against the
initial metric, the trace against the pulled-back base form, the
barrier quantity Q, curvature suprema, and the Ricci upper-bound
margin.  A trajectory of records is the time series the rate fits and
the acceptance checks consume.

Normalization bookkeeping: the stepper advances the gauge-free
potential, so the volume-normalized potential deviation is
reconstructed exactly as phi = u - integral(log(T-s)) - uhat, with the
integral in closed form.  All quantities built from phi - Phi (its
fiber average) are therefore independent of the gauge a run was driven
in, down to the last bit.

Curvature-level quantities (scalar/Riemann suprema, the Ricci-bound
margin) are evaluated on an adaptive grid stride that balances stencil
truncation against the eps/h^4 roundoff floor of twice-differenced log
densities; on healthy profiles the stride is 1 and nothing changes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .calabi import (
    AnsatzModel,
    Profile,
    ReferenceFamily,
    fiber_diameter,
    log_volume_form,
    metric_eigenvalues,
    ricci_eigenvalues,
    riemann_norm,
    scalar_curvature,
    traces,
)
from .errors import ConfigurationError
from .flow import FlowState

__all__ = [
    "CSV_COLUMNS",
    "BConfig",
    "MonitorRecord",
    "default_bconfig",
    "volume_ratio",
    "potential_deviation",
    "fiber_average",
    "normalized_potential",
    "barrier_Q",
    "ricci_bound_margin",
    "metric_equivalence_check",
    "observe",
    "observe_run",
    "first_violation",
    "sample_schedule",
    "shadow_bound",
    "write_csv",
    "read_csv",
]

#: trajectory CSV schema, fixed order and names
CSV_COLUMNS = (
    "t",
    "diam_fiber",
    "vr_sup",
    "vr_inf",
    "npot_sup",
    "trace0_scaled_sup",
    "trace_sigma_sup",
    "Q_sup",
    "R_sup",
    "Rm_sup",
    "ricci_margin",
    "hypothesis_ok",
)

#: CSV column -> MonitorRecord field (identity unless listed)
_COLUMN_FIELDS = {"diam_fiber": "fiber_diameter"}

#: collapsed fiber dimension of the radial models
_FIBER_DIM = 1


@dataclass(frozen=True)
class BConfig:
    """Constants of the hypothesis check and the barrier quantity.

    ``B`` bounds the Ricci form against the initial metric
    (Ric(omega_t) <= B omega_0 is the monitored hypothesis); ``A`` is
    the barrier weight in Q.  Both must be positive.
    """

    B: float
    A: float

    def __post_init__(self):
        if not self.B > 0:
            raise ConfigurationError("Ricci bound constant B must be positive")
        if not self.A > 0:
            raise ConfigurationError("barrier constant A must be positive")


@dataclass(frozen=True)
class MonitorRecord:
    """All monitored quantities of one snapshot.

    Grid extrema stand in for extrema over the manifold; the radial
    symmetry makes this exact up to discretization.  ``hypothesis_ok``
    is the raw per-snapshot flag from ``observe`` and the latched one
    in trajectories from ``observe_run``.
    """

    t: float
    fiber_diameter: float
    vr_sup: float
    vr_inf: float
    npot_sup: float
    npot_inf: float
    trace0_scaled_sup: float
    trace0_scaled_inf: float
    trace_sigma_sup: float
    trace_sigma_inf: float
    Q_sup: float
    Q_inf: float
    R_sup: float
    Rm_sup: float
    ricci_margin: float
    hypothesis_ok: bool

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if name != "hypothesis_ok" and not math.isfinite(value):
                raise ConfigurationError(f"monitor field {name} is not finite")


def _check_gap(family: ReferenceFamily, t: float) -> float:
    gap = family.T - t
    if not gap > 0:
        raise ConfigurationError(
            "monitored quantities need a finite positive time to collapse"
        )
    return gap


def _baseline(family: ReferenceFamily, rho: np.ndarray, given: Profile | None) -> Profile:
    if given is not None:
        return given
    return Profile(rho=rho, u=family.u0(rho), base_scale=family.sigma_at(0.0))


#: absolute tolerance on the estimated curvature roundoff floor
_CURV_NOISE_TOL = 1e-3
#: stencil amplification constant of the eps/h^4 floor estimate
_CURV_NOISE_AMP = 24.0


def _curvature_stride(profile: Profile) -> int:
    """Grid stride that keeps curvature-level stencils above roundoff.

    Curvature monitors difference the log volume density twice, which
    amplifies the storage roundoff of the potential by about
    eps |u| / (h^4 u''), paired per node since both the potential scale
    and the fiber eigenvalue vary across the grid.  Near collapse u''
    shrinks like T - t, so on fine grids the floor eventually dwarfs
    the true curvature scale at the grid edges (the classic step-size /
    precision trade-off of numerical differentiation).  Widening the stencil step by a stride s
    divides the floor by s^4 at negligible truncation cost; this returns
    the smallest stride pushing the estimated floor below tolerance.
    Profiles whose estimate is already below tolerance keep the native
    grid, so the stride only engages when the fiber is deeply collapsed
    relative to the resolution.
    """
    if not float(profile.upp.min()) > 0.0:
        return 1
    scale = np.maximum(np.abs(profile.u), 1.0)
    eps = float(np.finfo(np.float64).eps)
    floor = (
        _CURV_NOISE_AMP * eps * float((scale / profile.upp).max())
        / profile.h**4
    )
    if floor <= _CURV_NOISE_TOL:
        return 1
    stride = math.ceil((floor / _CURV_NOISE_TOL) ** 0.25)
    return max(1, min(stride, (profile.rho.size - 1) // 32))


def _curvature_view(profile: Profile, stride: int) -> Profile:
    if stride == 1:
        return profile
    return Profile(
        rho=profile.rho[::stride],
        u=profile.u[::stride],
        base_scale=profile.base_scale,
    )


def _sup_window(stride: int) -> slice:
    """Node window for curvature sup extraction on a strided view.

    Twice-differenced quantities are only second-order accurate on the
    nodes whose stencils touch one-sided boundary values (four per
    side), an error that grows with the stride's wider step.  Strided
    views therefore take sups over the fourth-order-clean interior;
    the native grid keeps every node, so healthy-resolution readings
    are unchanged."""
    return slice(None) if stride == 1 else slice(4, -4)


def volume_ratio(family: ReferenceFamily, state: FlowState) -> np.ndarray:
    """Normalized volume ratio omega_t^n / ((T-t)^r Omega) per node.

    This is the exponential of the flow's own density minus the fixed
    volume datum and the collapsing normalization; its uniform
    boundedness along a run is the volume-bound shadow."""
    gap = _check_gap(family, state.t)
    g = log_volume_form(family.model, state.profile)
    log_ratio = g - family.log_omega(state.profile.rho) - _FIBER_DIM * np.log(gap)
    return np.exp(log_ratio)


def potential_deviation(family: ReferenceFamily, state: FlowState) -> np.ndarray:
    """Volume-normalized potential phi_t = u - integral(log(T-s)) - uhat_t,
    reconstructed exactly from the gauge-free representative."""
    _check_gap(family, state.t)
    rho = state.profile.rho
    return state.profile.u - family.gauge_shift(state.t) - family.uhat(rho, state.t)


def fiber_average(family: ReferenceFamily, state: FlowState) -> float:
    """Average of phi_t over the fiber against the t=0 fiber metric
    density u0'' drho (one value: the ansatz has a single fiber orbit)."""
    rho = state.profile.rho
    phi = potential_deviation(family, state)
    w = family.u0pp(rho)
    return float(np.trapezoid(phi * w, rho) / np.trapezoid(w, rho))


def normalized_potential(family: ReferenceFamily, state: FlowState) -> np.ndarray:
    """(phi_t - Phi_t) / (T - t) per node, the collapse-normalized
    potential deviation whose uniform bound is the potential-bound
    shadow."""
    gap = _check_gap(family, state.t)
    phi = potential_deviation(family, state)
    return (phi - fiber_average(family, state)) / gap


def _trace_initial(
    family: ReferenceFamily, state: FlowState, baseline: Profile | None
) -> np.ndarray:
    base = _baseline(family, state.profile.rho, baseline)
    e0 = metric_eigenvalues(family.model, base)
    return traces(family.model, state.profile, e0)[0]


def barrier_Q(
    family: ReferenceFamily,
    state: FlowState,
    cfg: BConfig,
    baseline: Profile | None = None,
) -> tuple[np.ndarray, int]:
    """Barrier quantity Q = log((T-t) Tr_{omega_t} omega_0)
    - (A/(T-t)) (phi_t - Phi_t) per node, plus its argmax node.

    The second term is built from phi - Phi, so Q is identical across
    run gauges; in particular the argmax node is gauge-invariant."""
    gap = _check_gap(family, state.t)
    tr0 = _trace_initial(family, state, baseline)
    phi = potential_deviation(family, state)
    q = np.log(gap * tr0) - (cfg.A / gap) * (phi - fiber_average(family, state))
    return q, int(np.argmax(q))


def ricci_bound_margin(
    family: ReferenceFamily,
    state: FlowState,
    cfg: BConfig,
    baseline: Profile | None = None,
) -> float:
    """Largest violation of Ric(omega_t) <= B omega_0 over nodes and
    frame directions; <= 0 means the hypothesis holds at this snapshot.

    Both sides are evaluated on the roundoff-valid stride of the grid
    (see ``_curvature_stride``), so deeply collapsed snapshots report
    the margin of the resolved curvature instead of stencil noise."""
    stride = _curvature_stride(state.profile)
    prof = _curvature_view(state.profile, stride)
    base = _curvature_view(
        _baseline(family, state.profile.rho, baseline), stride
    )
    sl = _sup_window(stride)
    e0_b, e0_f = metric_eigenvalues(family.model, base)
    nu_b, nu_f = ricci_eigenvalues(family.model, prof)
    return float(
        max(
            (nu_b - cfg.B * e0_b)[sl].max(),
            (nu_f - cfg.B * e0_f)[sl].max(),
        )
    )


def metric_equivalence_check(
    family: ReferenceFamily, state: FlowState
) -> tuple[float, float]:
    """Largest c_low and smallest c_high with
    c_low * href_t <= omega_t <= c_high * href_t eigenvalue-wise over
    the grid, measured against the interpolating reference metric."""
    _check_gap(family, state.t)
    e_b, e_f = metric_eigenvalues(family.model, state.profile)
    ref = family.reference_eval(state.profile.rho, state.t)
    ratios = np.concatenate([e_b / ref.base, e_f / ref.fiber])
    return float(ratios.min()), float(ratios.max())


def default_bconfig(
    family: ReferenceFamily, baseline: Profile | None = None
) -> BConfig:
    """Computed defaults for the hypothesis and barrier constants.

    B doubles the largest initial Ricci-to-metric eigenvalue ratio
    (floored at 1), so the hypothesis starts with 2x headroom.  A
    follows the barrier sufficiency rule: with C the measured curvature
    scale of the initial metric, A = 2T(C + 2) makes
    C - A/(2T) = -2 < -1."""
    if baseline is None:
        rho = np.linspace(-4.0, 4.0, 512)
        baseline = Profile(
            rho=rho, u=family.u0(rho), base_scale=family.sigma_at(0.0)
        )
    e0_b, e0_f = metric_eigenvalues(family.model, baseline)
    nu_b, nu_f = ricci_eigenvalues(family.model, baseline)
    ratio = max(float((nu_b / e0_b).max()), float((nu_f / e0_f).max()))
    b = max(1.0, 2.0 * ratio)
    c_tilde = float(riemann_norm(family.model, baseline).max())
    return BConfig(B=b, A=2.0 * family.T * (c_tilde + 2.0))


def observe(
    family: ReferenceFamily,
    state: FlowState,
    cfg: BConfig,
    baseline: Profile | None = None,
) -> MonitorRecord:
    """Evaluate every monitored quantity on one snapshot.

    Curvature suprema and the Ricci margin are taken on the
    roundoff-valid stride of the grid (see ``_curvature_stride``);
    everything of first- or second-derivative order uses the native
    grid."""
    gap = _check_gap(family, state.t)
    model = family.model
    prof = state.profile
    stride = _curvature_stride(prof)
    prof_c = _curvature_view(prof, stride)
    sl = _sup_window(stride)
    vr = volume_ratio(family, state)
    npot = normalized_potential(family, state)
    tr0 = _trace_initial(family, state, baseline)
    tr0_scaled = gap * tr0
    tr_sigma = traces(model, prof, (family.lam_sigma, 0.0))[0]
    q, _ = barrier_Q(family, state, cfg, baseline)
    margin = ricci_bound_margin(family, state, cfg, baseline)
    return MonitorRecord(
        t=float(state.t),
        fiber_diameter=fiber_diameter(model, prof),
        vr_sup=float(vr.max()),
        vr_inf=float(vr.min()),
        npot_sup=float(npot.max()),
        npot_inf=float(npot.min()),
        trace0_scaled_sup=float(tr0_scaled.max()),
        trace0_scaled_inf=float(tr0_scaled.min()),
        trace_sigma_sup=float(tr_sigma.max()),
        trace_sigma_inf=float(tr_sigma.min()),
        Q_sup=float(q.max()),
        Q_inf=float(q.min()),
        R_sup=float(scalar_curvature(model, prof_c)[sl].max()),
        Rm_sup=float(riemann_norm(model, prof_c)[sl].max()),
        ricci_margin=margin,
        hypothesis_ok=margin <= 0.0,
    )


def observe_run(
    family: ReferenceFamily,
    states,
    cfg: BConfig | None = None,
    baseline: Profile | None = None,
) -> tuple[MonitorRecord, ...]:
    """Monitor every state of a trajectory, in order.

    The hypothesis flag is latched: once a snapshot violates the Ricci
    bound, every later record reports False even if the margin recovers,
    so downstream fits can filter on a clean prefix."""
    states = list(states)
    if cfg is None:
        cfg = default_bconfig(
            family, _baseline(family, states[0].profile.rho, baseline)
        )
    ts = [s.t for s in states]
    if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])):
        raise ConfigurationError("trajectory times must be strictly increasing")
    records = []
    ok_so_far = True
    for s in states:
        rec = observe(family, s, cfg, baseline)
        ok_so_far = ok_so_far and rec.hypothesis_ok
        if rec.hypothesis_ok and not ok_so_far:
            rec = replace(rec, hypothesis_ok=False)
        records.append(rec)
    return tuple(records)


def first_violation(records) -> float | None:
    """Time of the first snapshot whose hypothesis flag is down, or
    None when the bound held through the whole reported run."""
    for rec in records:
        if not rec.hypothesis_ok:
            return rec.t
    return None


def sample_schedule(
    T: float, eps_stop: float, per_efold: int = 30
) -> np.ndarray:
    """Geometric monitoring cadence: T - t_k = T e^{-k/K} with K
    samples per e-fold of the time to collapse, from t = 0 down to the
    stop time (always included).  Uniform spacing in log(T - t) is what
    the power-law fits need."""
    if not 0 < eps_stop < T:
        raise ConfigurationError("schedule needs 0 < eps_stop < T")
    if per_efold < 1:
        raise ConfigurationError("schedule needs at least one sample per e-fold")
    n_efolds = math.log(T / eps_stop)
    k = np.arange(math.floor(n_efolds * per_efold) + 1)
    times = T - T * np.exp(-k / per_efold)
    return np.append(times[times < T - eps_stop], T - eps_stop)


def shadow_bound(
    values, decile: float = 0.1, factor: float = 10.0
) -> tuple[bool, float, float]:
    """Uniform-boundedness shadow of a monitored series: the run
    maximum may not exceed ``factor`` times the maximum over the first
    ``decile`` of the samples.  Returns (ok, run_max, early_max)."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    if v.ndim != 1 or v.size < 2:
        raise ConfigurationError("shadow bound needs a series of at least 2 samples")
    head = max(2, int(math.ceil(decile * v.size)))
    early = float(v[:head].max())
    full = float(v.max())
    return full <= factor * early, full, early


def write_csv(records, path) -> None:
    """Write the fixed-schema trajectory CSV (floats via repr, so a
    read-back reproduces the exact values)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = [
                repr(float(getattr(rec, _COLUMN_FIELDS.get(name, name))))
                if name != "hypothesis_ok"
                else str(int(rec.hypothesis_ok))
                for name in CSV_COLUMNS
            ]
            writer.writerow(row)


def read_csv(path) -> dict[str, np.ndarray]:
    """Read a trajectory CSV back as column arrays (the rate-fit input
    format); hypothesis_ok comes back as a boolean array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ConfigurationError(
                f"unexpected trajectory CSV header {header!r}"
            )
        rows = [row for row in reader if row]
    if not rows:
        raise ConfigurationError("trajectory CSV has no data rows")
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(CSV_COLUMNS):
        col = [row[j] for row in rows]
        if name == "hypothesis_ok":
            out[name] = np.array([bool(int(x)) for x in col])
        else:
            out[name] = np.array([float(x) for x in col])
    return out
