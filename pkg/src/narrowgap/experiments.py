"""Epsilon sweeps, rate fits and verdicts for the narrow-region claims.

Every check follows the same pattern: sweep the gap width over a decreasing
list, measure a gradient statistic per width on the base grid and once more
on a doubled grid (points whose statistic moves by more than the Richardson
tolerance are flagged grid-limited and excluded from fits), then fit a rate
and compare against the predicted band.

The bounded-remainder checks fit the asymptotic tail of the sweep (default
eps <= 1e-2) rather than the full window: the remainder approaches its O(1)
plateau like C (1 - c eps^{1-1/m}), so the leading sweep points still carry
the approach transient even though the quantity is uniformly bounded.  Both
the tail fit and the full-window fit are recorded.

Deterministic by construction: no randomness enters a sweep, so identical
configurations produce identical CSV bytes.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ansatz as _ans
from . import discretize as _disc
from .config import DECAY_EPS, DEFAULT_EPS, ConfigError, RunConfig
from .geometry import GeometryError

EPS_FIT_MAX = 1e-2          # default tail cut for bounded-remainder fits
NOISE_FLOOR = 1e-12         # relative floor before a point counts as solver noise

THM11_BAND = 0.15
REMARK13_BANDS = {"i": 0.15, "ii": 0.10, "iii": 0.15}
COR41_BAND = 0.20
RESIDUAL_BAND = 0.20
ENERGY_BAND = 0.30
DECAY_MIN_R2 = 0.98


class DataError(ValueError):
    """Fit input is unusable (too few points, non-positive statistics)."""


# ---------------------------------------------------------------------------
# sweep containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    eps: float
    value: float
    refined_value: float | None
    rel_change: float | None
    flagged: bool
    grid: tuple
    reason: str = ""


@dataclass
class SweepResult:
    statistic: str
    points: list
    metadata: dict = field(default_factory=dict)

    def clean(self):
        return [p for p in self.points if not p.flagged]

    def eps(self, clean=True):
        return np.array([p.eps for p in (self.clean() if clean else self.points)])

    def values(self, clean=True):
        return np.array([p.value for p in (self.clean() if clean else self.points)])

    def to_csv(self):
        lines = ["eps,value,refined_value,rel_change,grid,flagged,reason"]
        for p in self.points:
            ref = "" if p.refined_value is None else repr(p.refined_value)
            rel = "" if p.rel_change is None else repr(p.rel_change)
            g = "x".join(str(k) for k in p.grid)
            lines.append(f"{p.eps!r},{p.value!r},{ref},{rel},{g},"
                         f"{int(p.flagged)},{p.reason}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RateFit:
    model: str                  # "power" | "stretched_exponential"
    slope: float
    intercept: float
    r_squared: float
    residuals: tuple
    npoints: int
    m: int = 2
    n: int = 2

    @property
    def decay_constant(self):
        """C of exp(-1/(2C eps^{1-1/m})) for the stretched model."""
        if self.model != "stretched_exponential" or self.slope >= 0:
            return None
        return -1.0 / (2.0 * self.slope)

    def summary(self):
        s = (f"{self.model}: slope {self.slope:+.4f}, intercept "
             f"{self.intercept:+.4f}, R^2 {self.r_squared:.5f}, "
             f"{self.npoints} points")
        if self.decay_constant is not None:
            s += f", fitted C {self.decay_constant:.4f}"
        return s


def fit_rate(sr: SweepResult, model: str = "power", m: int = 2, n: int = 2,
             eps_max: float | None = None) -> RateFit:
    """Least-squares rate fit over the unflagged sweep points.

    power: log s against log eps.  stretched_exponential: log(s eps^{n/2})
    against eps^{-(1-1/m)}, i.e. the decay-rate model with the dimensional
    prefactor removed.
    """
    if model not in ("power", "stretched_exponential"):
        raise DataError(f"unknown fit model {model!r}")
    pts = [p for p in sr.clean()
           if eps_max is None or p.eps <= eps_max * (1 + 1e-12)]
    if len(pts) < 4:
        raise DataError(f"fit requires >= 4 clean points, have {len(pts)} "
                        f"(statistic {sr.statistic!r})")
    eps = np.array([p.eps for p in pts])
    val = np.array([p.value for p in pts])
    bad = np.flatnonzero(val <= 0)
    if bad.size:
        raise DataError(f"non-positive statistic at eps = {eps[bad[0]]:g} "
                        f"(statistic {sr.statistic!r})")
    if model == "power":
        X, Y = np.log(eps), np.log(val)
    else:
        X = eps ** (-(1.0 - 1.0 / m))
        Y = np.log(val * eps ** (n / 2.0))
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(model, float(slope), float(intercept),
                   float(min(max(r2, 0.0), 1.0)), tuple(resid), len(pts), m, n)


# ---------------------------------------------------------------------------
# one solve, lazily post-processed
# ---------------------------------------------------------------------------

class SolveBundle:
    """Everything the statistics need about one (eps, grid) solve."""

    def __init__(self, cfg: RunConfig, eps: float, nodes: tuple,
                 lateral_value=None):
        self.cfg = cfg
        self.eps = eps
        self.region = cfg.geometry.build_region(eps)
        self.tensor, self.lame = cfg.build_tensor()
        self.traces = cfg.build_traces()
        mode = cfg.solver.ansatz_mode
        self.ansatz = _ans.build_ansatz(self.tensor, self.region, self.traces,
                                        mode, lame=self.lame)
        self.ansatz_unc = _ans.build_ansatz(self.tensor, self.region, self.traces,
                                            mode, include_correction=False,
                                            lame=self.lame)
        self.grid = _disc.grid_for(self.region, *nodes)
        lateral = lateral_value if lateral_value is not None else cfg.solver.lateral_value
        self.field, self.report = _disc.solve_bvp(
            self.tensor, self.region, self.traces, self.grid,
            closure=cfg.solver.closure, ansatz=self.ansatz,
            lateral_value=lateral, tol=cfg.solver.tol,
            direct_limit=cfg.solver.direct_limit)
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def coords(self):
        return self._get("coords", self.grid.node_coords)

    @property
    def inner(self):
        def make():
            XP, T = self.coords
            r = np.sqrt(np.sum(XP * XP, axis=-1))
            return (r < self.region.R0) & (T > 0) & (T < 1)
        return self._get("inner", make)

    @property
    def grad_num(self):
        """Numeric gradients as (*shape, N, n)."""
        return self._get("grad_num", lambda: np.moveaxis(
            self.field.gradient_nodes(), (0, 1), (-2, -1)))

    def grad_ansatz(self, corrected=True):
        key = f"grad_ans_{corrected}"

        def make():
            XP, T = self.coords
            x = self.region.from_box(XP, T)
            af = self.ansatz if corrected else self.ansatz_unc
            return af.gradient(x)
        return self._get(key, make)

    def remainder_inner(self, corrected=True):
        key = f"rem_{corrected}"

        def make():
            E = self.grad_num - self.grad_ansatz(corrected)
            return np.sqrt(np.sum(E * E, axis=(-2, -1)))[self.inner]
        return self._get(key, make)

    @property
    def inner_xp(self):
        return self._get("inner_xp", lambda: self.coords[0][self.inner])

    @property
    def c2_norms(self):
        return self._get("c2n", lambda: self.traces.c2_total(
            2 * self.region.R0, dim=self.region.d))

    def normalizer_theta(self):
        xp = self.inner_xp
        return (_ans.theta(self.traces, xp)
                + self.region.delta(xp) * self.c2_norms)

    def normalizer_theta_bar(self):
        xp = self.inner_xp
        return (_ans.theta_bar_delta(self.traces, self.region, xp)
                + self.region.delta(xp) * self.c2_norms)

    def column_max_grad(self, xprime_target):
        """max |grad u| over the interior vertical column nearest a tangential point."""
        axis = self.grid.axes[0]
        iy = int(np.argmin(np.abs(axis - xprime_target)))
        g = self.field.gradient_nodes()          # (N, n, ny..., nt)
        col = g[(slice(None), slice(None), iy) + (0,) * (self.region.d - 1)]
        mag = np.sqrt(np.sum(col * col, axis=(0, 1)))
        return float(mag[1:-1].max())


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _stat_thm11_sup(b: SolveBundle):
    return float(b.remainder_inner().max())


def _stat_thm11_sup_uncorrected(b: SolveBundle):
    return float(b.remainder_inner(corrected=False).max())


def _stat_thm11_sup_normalized(b: SolveBundle):
    return float((b.remainder_inner() / b.normalizer_theta()).max())


def _stat_sup_grad(b: SolveBundle):
    E = np.sqrt(np.sum(b.grad_num ** 2, axis=(-2, -1)))[b.inner]
    return float(E.max())


def _stat_shortest_segment(b: SolveBundle):
    return b.column_max_grad(0.0)


def _stat_monomial_point(b: SolveBundle):
    target = b.eps ** (1.0 / b.region.profiles.m)
    return b.column_max_grad(target)


def _stat_decay_normalized(b: SolveBundle):
    return b.column_max_grad(0.0) / b.field.l2_norm()


def _stat_cor41_thetabar(b: SolveBundle):
    return float((b.remainder_inner() / b.normalizer_theta_bar()).max())


def _stat_cor41_theta(b: SolveBundle):
    return float((b.remainder_inner() / b.normalizer_theta()).max())


def _stat_gauge_margin(b: SolveBundle):
    """min over inner x' of Theta - Theta_bar_delta (>= 0 expected)."""
    xp = b.inner_xp
    return float((_ans.theta(b.traces, xp)
                  - _ans.theta_bar_delta(b.traces, b.region, xp)).min())


def _stat_shortest_remainder(b: SolveBundle):
    """max |grad(u - ubar)| on the shortest segment (Remark 1.1 extra)."""
    axis = b.grid.axes[0]
    iy = int(np.argmin(np.abs(axis)))
    E = b.grad_num - b.grad_ansatz()
    col = E[(iy,) + (0,) * (b.region.d - 1)]
    mag = np.sqrt(np.sum(col * col, axis=(-2, -1)))
    return float(mag[1:-1].max())


def _stat_energy_ratio(b: SolveBundle):
    dlt0 = float(b.region.delta(np.zeros((1, b.region.d)))[0])
    E = local_energy(b.field, b.ansatz, 0.0, dlt0, nq=b.cfg.experiment.energy_quad)
    th0 = float(_ans.theta(b.traces, np.zeros((1, b.region.d)))[0])
    denom = dlt0 ** b.region.n * (th0 ** 2 + dlt0 ** 2 * b.c2_norms ** 2)
    return float(E / denom)


STATISTICS = {
    "thm11_sup": _stat_thm11_sup,
    "thm11_sup_uncorrected": _stat_thm11_sup_uncorrected,
    "thm11_sup_normalized": _stat_thm11_sup_normalized,
    "sup_grad": _stat_sup_grad,
    "shortest_segment_max": _stat_shortest_segment,
    "monomial_point_max": _stat_monomial_point,
    "decay_normalized": _stat_decay_normalized,
    "cor41_sup_thetabar": _stat_cor41_thetabar,
    "cor41_sup_theta": _stat_cor41_theta,
    "gauge_margin": _stat_gauge_margin,
    "shortest_remainder": _stat_shortest_remainder,
    "energy_ratio": _stat_energy_ratio,
}


# ---------------------------------------------------------------------------
# windowed energy (spot check of the localized estimate)
# ---------------------------------------------------------------------------

def local_energy(df: _disc.DiscreteField, ansatz: _ans.AnsatzField, zprime,
                 radius: float, nq=(24, 48)) -> float:
    """Integral of |grad(u - ubar)|^2 over the window |x' - z'| < radius.

    Midpoint quadrature in mapped coordinates with Jacobian delta(x').  The
    remainder gradient is formed at the grid nodes first (so the huge common
    1/delta parts of both gradients cancel exactly there) and then
    interpolated; this keeps sub-cell windows meaningful, which the smallest
    gap widths need because the window radius delta(0') shrinks below the
    tangential spacing.
    """
    region = df.region
    d = region.d
    z = np.atleast_1d(np.asarray(zprime, dtype=float))
    if z.size == 1 and d > 1:
        z = np.full(d, float(z[0]))
    if z.shape != (d,):
        raise GeometryError(f"window center must have {d} tangential coordinates")
    if radius <= 0:
        raise GeometryError("window radius must be positive")
    if np.linalg.norm(z) + radius > 2 * region.R0 * (1 + 1e-12):
        raise GeometryError("energy window outside the grid")

    XP, T = df.grid.node_coords()
    x_all = region.from_box(XP, T)
    gw = df.gradient_nodes() - np.moveaxis(ansatz.gradient(x_all), (-2, -1), (0, 1))
    carrier = _disc.DiscreteField(df.grid, region,
                                  gw.reshape((-1,) + df.grid.shape))

    nqy, nqt = nq
    mids = [z[a] + (np.arange(nqy) + 0.5) / nqy * 2 * radius - radius
            for a in range(d)]
    tt = (np.arange(nqt) + 0.5) / nqt
    mesh = np.meshgrid(*mids, tt, indexing="ij")
    YQ = np.stack([m.ravel() for m in mesh[:-1]], axis=-1)
    TQ = mesh[-1].ravel()
    keep = np.sum((YQ - z) ** 2, axis=-1) <= radius ** 2 * (1 + 1e-12)
    YQ, TQ = YQ[keep], TQ[keep]
    xq = region.from_box(YQ, TQ)
    vals = carrier.value_at(xq)
    w2 = np.sum(vals * vals, axis=-1) * region.delta(YQ)
    cell = (2 * radius / nqy) ** d * (1.0 / nqt)
    return float(w2.sum() * cell)


# ---------------------------------------------------------------------------
# sweeping
# ---------------------------------------------------------------------------

def sweep(cfg: RunConfig, stat_names, eps_list=None, richardson: bool = True,
          lateral_value=None) -> dict:
    """Solve per eps (base and refined grid) and evaluate named statistics.

    Returns one SweepResult per statistic; the solves are shared across
    statistics.  Points whose base/refined values differ by more than the
    Richardson tolerance are flagged grid-limited; values under the noise
    floor are flagged as solver noise.
    """
    for s in stat_names:
        if s not in STATISTICS:
            raise ConfigError([f"unknown statistic {s!r}"])
    eps_list = tuple(eps_list if eps_list is not None
                     else (cfg.experiment.eps_list or DEFAULT_EPS))
    nodes = cfg.solver.scaled_nodes()
    refined = tuple(2 * (k - 1) + 1 for k in nodes)

    def run_one(eps):
        base = SolveBundle(cfg, eps, nodes, lateral_value)
        vals = {s: STATISTICS[s](base) for s in stat_names}
        ref_vals = {}
        reports = [base.report]
        if richardson:
            fine = SolveBundle(cfg, eps, refined, lateral_value)
            ref_vals = {s: STATISTICS[s](fine) for s in stat_names}
            reports.append(fine.report)
        return eps, vals, ref_vals, reports

    threads = max(1, cfg.experiment.threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_one, eps_list))
    else:
        rows = [run_one(e) for e in eps_list]

    out = {}
    meta = {"tensor": cfg.tensor.kind, "traces": cfg.traces.family,
            "m": cfg.geometry.m, "grid": "x".join(map(str, nodes)),
            "closure": cfg.solver.closure,
            "richardson_tol": cfg.experiment.richardson_tol}
    for s in stat_names:
        pts = []
        for eps, vals, ref_vals, _ in rows:
            v = vals[s]
            rv = ref_vals.get(s)
            rel = None
            flagged = False
            reason = ""
            if rv is not None:
                scale = max(abs(v), abs(rv), 1e-300)
                rel = abs(rv - v) / scale
                if rel > cfg.experiment.richardson_tol:
                    flagged, reason = True, "grid-limited"
            pts.append(SweepPoint(eps, v, rv, rel, flagged, nodes, reason))
        vmax = max((abs(p.value) for p in pts), default=0.0)
        cleaned = []
        for p in pts:
            if not p.flagged and vmax > 0 and abs(p.value) < vmax * NOISE_FLOOR:
                p = replace(p, flagged=True, reason="noise-floor")
            cleaned.append(p)
        out[s] = SweepResult(s, cleaned, dict(meta, statistic=s))
    out["_reports"] = [r for *_, reps in rows for r in reps]
    return out


def residual_sweep(cfg: RunConfig, eps_list=None, samples=(199, 31)) -> dict:
    """Analytic-residual sweep (no PDE solves).

    Statistics over an interior sample grid of Omega_{R0}:
      residual_normalized   = max |f| delta / (Theta + delta * C2 norms)
      residual_uncorrected  = max |f0| delta^2 / Theta  (correction dropped)
    Refinement doubles the sampling density; maxima that move more than the
    Richardson tolerance are flagged sampling-limited.
    """
    eps_list = tuple(eps_list if eps_list is not None
                     else (cfg.experiment.eps_list or DEFAULT_EPS))
    tensor, lame = cfg.build_tensor()
    traces = cfg.build_traces()
    mode = cfg.solver.ansatz_mode

    def measure(eps, ns):
        region = cfg.geometry.build_region(eps)
        af = _ans.build_ansatz(tensor, region, traces, mode, lame=lame)
        af0 = _ans.build_ansatz(tensor, region, traces, mode,
                                include_correction=False, lame=lame)
        d = region.d
        ax = np.linspace(-region.R0, region.R0, ns[0] + 2)[1:-1]
        ts = np.linspace(0.0, 1.0, ns[1] + 2)[1:-1]
        mesh = np.meshgrid(*([ax] * d + [ts]), indexing="ij")
        xp = np.stack([m.ravel() for m in mesh[:-1]], axis=-1)
        t = mesh[-1].ravel()
        x = region.from_box(xp, t)
        dlt = region.delta(xp)
        th = _ans.theta(traces, xp)
        c2n = traces.c2_total(2 * region.R0, dim=d)
        f = np.linalg.norm(af.residual(x), axis=-1)
        f0 = np.linalg.norm(af0.residual(x), axis=-1)
        corr = float((f * dlt / (th + dlt * c2n)).max())
        unc = float((f0 * dlt ** 2 / np.maximum(th, 1e-300)).max())
        return corr, unc

    meta = {"tensor": cfg.tensor.kind, "traces": cfg.traces.family,
            "m": cfg.geometry.m, "samples": "x".join(map(str, samples)),
            "closure": "n/a", "richardson_tol": cfg.experiment.richardson_tol}
    pts = {"residual_normalized": [], "residual_uncorrected": []}
    fine = tuple(2 * s + 1 for s in samples)
    for eps in eps_list:
        base = measure(eps, samples)
        ref = measure(eps, fine)
        for name, v, rv in (("residual_normalized", base[0], ref[0]),
                            ("residual_uncorrected", base[1], ref[1])):
            rel = abs(rv - v) / max(abs(v), abs(rv), 1e-300)
            flagged = rel > cfg.experiment.richardson_tol
            pts[name].append(SweepPoint(eps, v, rv, rel, flagged, samples,
                                        "sampling-limited" if flagged else ""))
    return {name: SweepResult(name, p, dict(meta, statistic=name))
            for name, p in pts.items()}


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    name: str
    status: str            # PASS | FAIL | SKIPPED | ABORTED
    details: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    sweeps: dict = field(default_factory=dict)
    elapsed: float = 0.0
    solver_events: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status in ("PASS", "SKIPPED")

    def summary(self):
        lines = [f"[{self.status}] {self.name}"]
        for key, val in sorted(self.details.items()):
            lines.append(f"    {key}: {val}")
        for key, fit in sorted(self.fits.items()):
            lines.append(f"    fit {key}: {fit.summary()}")
        return "\n".join(lines)


def _within(value, center, band):
    return abs(value - center) <= band


def _traces_are_zero(cfg):
    traces = cfg.build_traces()
    probe = np.linspace(-2 * cfg.geometry.R0, 2 * cfg.geometry.R0, 33)
    xp = probe[:, None] if cfg.geometry.n == 2 else \
        np.concatenate([probe[:, None]] * (cfg.geometry.n - 1), axis=-1)
    pv = np.abs(traces.phi.value(xp)).max()
    sv = np.abs(traces.psi.value(xp)).max()
    return max(pv, sv) < 1e-300


def _tail_fit(sr, cfg, default_tail, **kw):
    """(tail fit, full fit, eps_max used).  Falls back to the full window."""
    eps_max = cfg.experiment.eps_fit_max or default_tail
    full = fit_rate(sr, **kw)
    try:
        tail = fit_rate(sr, eps_max=eps_max, **kw)
    except DataError:
        return full, full, None
    return tail, full, eps_max


def check_theorem_1_1(cfg: RunConfig) -> Verdict:
    """Bounded corrected remainder vs eps^{-1/m} uncorrected remainder.

    The expected blow-up rate of the uncorrected interpolant's error is
    eps^{-1/m}: the dropped correction gradient scales like delta^{-1/m}
    pointwise and its supremum is attained where delta is comparable to eps
    (for m = 2 this is the classical eps^{-1/2}).
    """
    t0 = time.perf_counter()
    if _traces_are_zero(cfg):
        return Verdict("thm11", "SKIPPED",
                       {"note": "zero boundary data: theorem hypothesis needs "
                                "phi or psi nonzero"})
    m = cfg.geometry.m
    try:
        srs = sweep(cfg, ["thm11_sup", "thm11_sup_uncorrected",
                          "thm11_sup_normalized"])
        fit_c, full_c, used = _tail_fit(srs["thm11_sup"], cfg, EPS_FIT_MAX)
        fit_u, full_u, _ = _tail_fit(srs["thm11_sup_uncorrected"], cfg, EPS_FIT_MAX)
    except DataError as exc:
        return Verdict("thm11", "ABORTED", {"error": str(exc)},
                       elapsed=time.perf_counter() - t0)
    expected_unc = -1.0 / m
    ok_c = _within(fit_c.slope, 0.0, THM11_BAND)
    ok_u = _within(fit_u.slope, expected_unc, THM11_BAND)
    details = {
        "corrected_slope": round(fit_c.slope, 4),
        "uncorrected_slope": round(fit_u.slope, 4),
        "expected": f"corrected 0 +/- {THM11_BAND}, uncorrected "
                    f"{expected_unc} +/- {THM11_BAND}",
        "full_window_slopes": (round(full_c.slope, 4), round(full_u.slope, 4)),
        "fit_eps_max": used,
    }
    fits = {"corrected": fit_c, "uncorrected": fit_u,
            "corrected_full": full_c, "uncorrected_full": full_u}
    events = [r.record() for r in srs.pop("_reports", [])]
    return Verdict("thm11", "PASS" if ok_c and ok_u else "FAIL", details,
                   fits, srs, time.perf_counter() - t0, events)


def _remark13_case_cfg(cfg, case):
    from .config import TracesConfig
    n = cfg.geometry.n
    if case == "i":
        tr = TracesConfig(family="poly",
                          poly_phi=((1.0, 0.0, 1.0),) + ((0.0,),) * (cfg.N - 1),
                          poly_psi=((1.0, 0.0, 1.0),) + ((0.0,),) * (cfg.N - 1))
    elif case == "ii":
        gap = [0.0] * cfg.N
        gap[min(n, cfg.N) - 1] = 1.0
        tr = TracesConfig(family="constant", phi=tuple(gap),
                          psi=(0.0,) * cfg.N)
    else:
        tr = TracesConfig(family="monomial", k=cfg.experiment.monomial_k)
    return replace(cfg, traces=tr)


def check_remark_1_3(cfg: RunConfig) -> Verdict:
    """Blow-up taxonomy: (i) bounded, (ii) eps^-1, (iii) eps^{k/m-1}."""
    t0 = time.perf_counter()
    m, k = cfg.geometry.m, cfg.experiment.monomial_k
    cases = cfg.experiment.remark13_cases
    if "iii" in cases and m <= k:
        raise ConfigError([f"remark 1.3(iii) requires m > k (m = {m}, k = {k})"])
    sub = {}
    fits, sweeps, statuses, events = {}, {}, [], []
    for case in cases:
        ccfg = _remark13_case_cfg(cfg, case)
        stat = {"i": "sup_grad", "ii": "shortest_segment_max",
                "iii": "monomial_point_max"}[case]
        expected = {"i": 0.0, "ii": -1.0, "iii": k / m - 1.0}[case]
        band = REMARK13_BANDS[case]
        srs = sweep(ccfg, [stat])
        events += [r.record() for r in srs.pop("_reports", [])]
        sr = srs[stat]
        sweeps[f"case_{case}"] = sr
        vmax = float(np.abs(sr.values(clean=False)).max())
        if case == "i" and vmax < 1e-10:
            sub[case] = {"status": "PASS", "note": "gradient numerically zero"}
            statuses.append(True)
            continue
        try:
            fit = fit_rate(sr)
        except DataError as exc:
            sub[case] = {"status": "ABORTED", "error": str(exc)}
            statuses.append(False)
            continue
        fits[f"case_{case}"] = fit
        ok = _within(fit.slope, expected, band)
        sub[case] = {"status": "PASS" if ok else "FAIL",
                     "slope": round(fit.slope, 4),
                     "expected": f"{expected} +/- {band}"}
        statuses.append(ok)
    status = "PASS" if statuses and all(statuses) else "FAIL"
    return Verdict("remark13", status, {f"case_{c}": sub[c] for c in sub},
                   fits, sweeps, time.perf_counter() - t0, events)


def check_theorem_1_3(cfg: RunConfig) -> Verdict:
    """Super-polynomial gradient decay under zero top/bottom data."""
    t0 = time.perf_counter()
    from .config import TracesConfig
    N = cfg.N
    lateral = cfg.solver.lateral_value
    if lateral is None:
        lateral = (1.0,) * N
    if max(abs(float(v)) for v in lateral) == 0:
        return Verdict("decay", "SKIPPED",
                       {"note": "zero solution: top/bottom and lateral data "
                                "all vanish"})
    dcfg = replace(cfg,
                   traces=TracesConfig(family="constant", phi=(0.0,) * N,
                                       psi=(0.0,) * N),
                   solver=replace(cfg.solver, closure="constant",
                                  lateral_value=tuple(lateral)))
    eps_list = cfg.experiment.eps_list or DECAY_EPS
    try:
        srs = sweep(dcfg, ["decay_normalized"], eps_list=eps_list)
        fit = fit_rate(srs["decay_normalized"], model="stretched_exponential",
                       m=cfg.geometry.m, n=cfg.geometry.n)
    except DataError as exc:
        return Verdict("decay", "ABORTED", {"error": str(exc)},
                       elapsed=time.perf_counter() - t0)
    ok = fit.slope < 0 and fit.r_squared >= DECAY_MIN_R2
    details = {"slope": round(fit.slope, 4), "r_squared": round(fit.r_squared, 6),
               "fitted_decay_constant": None if fit.decay_constant is None
               else round(fit.decay_constant, 5),
               "expected": f"slope < 0 and R^2 >= {DECAY_MIN_R2}"}
    events = [r.record() for r in srs.pop("_reports", [])]
    return Verdict("decay", "PASS" if ok else "FAIL", details,
                   {"stretched": fit}, srs, time.perf_counter() - t0, events)


def check_corollary_4_1(cfg: RunConfig) -> Verdict:
    """Elasticity gauge: Theta_bar-normalized remainder bounded, gauge smaller."""
    t0 = time.perf_counter()
    if cfg.tensor.kind != "lame":
        return Verdict("cor41", "SKIPPED",
                       {"note": f"requires the elasticity tensor, got "
                                f"{cfg.tensor.kind!r}"})
    if _traces_are_zero(cfg):
        return Verdict("cor41", "SKIPPED", {"note": "zero boundary data"})
    try:
        srs = sweep(cfg, ["cor41_sup_thetabar", "cor41_sup_theta",
                          "gauge_margin"])
        fit_tb, full_tb, used = _tail_fit(srs["cor41_sup_thetabar"], cfg,
                                          EPS_FIT_MAX)
    except DataError as exc:
        return Verdict("cor41", "ABORTED", {"error": str(exc)},
                       elapsed=time.perf_counter() - t0)
    margin = srs["gauge_margin"].values(clean=False)
    gauge_ok = bool(margin.min() >= -1e-12)
    ok = _within(fit_tb.slope, 0.0, COR41_BAND) and gauge_ok
    details = {"thetabar_slope": round(fit_tb.slope, 4),
               "full_window_slope": round(full_tb.slope, 4),
               "fit_eps_max": used,
               "gauge_min_margin": float(margin.min()),
               "gauge_pointwise_ok": gauge_ok,
               "expected": f"slope 0 +/- {COR41_BAND} and "
                           "Theta_bar <= Theta at every sampled x'"}
    events = [r.record() for r in srs.pop("_reports", [])]
    return Verdict("cor41", "PASS" if ok else "FAIL", details,
                   {"thetabar": fit_tb, "thetabar_full": full_tb}, srs,
                   time.perf_counter() - t0, events)


def check_residual_cancellation(cfg: RunConfig) -> Verdict:
    """The delta^{-2} residual part cancels; without the correction it stays."""
    t0 = time.perf_counter()
    if _traces_are_zero(cfg):
        return Verdict("residual", "SKIPPED", {"note": "zero boundary data"})
    srs = residual_sweep(cfg)
    try:
        fit_c = fit_rate(srs["residual_normalized"])
        fit_u = fit_rate(srs["residual_uncorrected"])
    except DataError as exc:
        return Verdict("residual", "ABORTED", {"error": str(exc)},
                       elapsed=time.perf_counter() - t0)
    umin = float(srs["residual_uncorrected"].values().min())
    ok = (_within(fit_c.slope, 0.0, RESIDUAL_BAND)
          and umin > 0 and fit_u.slope >= -0.1)
    details = {"normalized_slope": round(fit_c.slope, 4),
               "uncorrected_min": round(umin, 6),
               "uncorrected_slope": round(fit_u.slope, 4),
               "expected": f"slope 0 +/- {RESIDUAL_BAND}; uncorrected "
                           "bounded below by a positive constant"}
    return Verdict("residual", "PASS" if ok else "FAIL", details,
                   {"normalized": fit_c, "uncorrected": fit_u}, srs,
                   time.perf_counter() - t0)


def check_local_energy(cfg: RunConfig) -> Verdict:
    """Windowed energy of grad(u - ubar) at z' = 0 scales like delta^n Theta^2."""
    t0 = time.perf_counter()
    if _traces_are_zero(cfg):
        return Verdict("energy", "SKIPPED", {"note": "zero boundary data"})
    try:
        srs = sweep(cfg, ["energy_ratio"])
        fit = fit_rate(srs["energy_ratio"])
    except DataError as exc:
        return Verdict("energy", "ABORTED", {"error": str(exc)},
                       elapsed=time.perf_counter() - t0)
    ok = _within(fit.slope, 0.0, ENERGY_BAND)
    details = {"slope": round(fit.slope, 4),
               "expected": f"0 +/- {ENERGY_BAND}"}
    events = [r.record() for r in srs.pop("_reports", [])]
    return Verdict("energy", "PASS" if ok else "FAIL", details,
                   {"energy": fit}, srs, time.perf_counter() - t0, events)


CHECKS = {
    "thm11": check_theorem_1_1,
    "remark13": check_remark_1_3,
    "decay": check_theorem_1_3,
    "cor41": check_corollary_4_1,
    "residual": check_residual_cancellation,
    "energy": check_local_energy,
}
