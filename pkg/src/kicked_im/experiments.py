"""Parameter scans and datasets behind the command-line front end.

Every command takes a ``RunConfig`` and returns a ``Table``: column names, rows
and a metadata dict.  Scan points are independent and are farmed to a process
pool when ``workers > 1``; results are merged in grid order so output does not
depend on scheduling.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import NumericalError, ValidationError
from .gaussian import te_entropy_curve
from .majorana import kappa_exact, spectral_density
from .model import ModelParams
from .mps import czz_series, fixed_point_im, mps_entropy, restrict
from .spin_ed import czz_ed

COMMANDS = ("kappa", "spectrum", "entropy-curve", "phase-diagram", "collapse", "czz", "mps")
DEFAULT_DELTAS = [0.002, 0.004, 0.006, 0.008, 0.01]
DEFAULT_H = [0.02, 0.06, 0.10, 0.14, 0.18]
DEFAULT_CHI = [64, 128]
CZZ_ED_L = 13
CZZ_AGREE_TOL = 1e-6


@dataclass
class RunConfig:
    command: str
    J: float = 0.31
    g: float = math.pi / 4
    h: float = 0.0
    t_max: int = 150
    t_list: list[int] | None = None
    chi: int = 128
    chi_list: list[int] = field(default_factory=lambda: list(DEFAULT_CHI))
    h_list: list[float] = field(default_factory=lambda: list(DEFAULT_H))
    n_omega: int = 16384
    window: int = 8192
    cut_fraction: float = 0.5
    deltas: list[float] = field(default_factory=lambda: list(DEFAULT_DELTAS))
    scaled_times: list[float] = field(default_factory=lambda: [0.25 * k for k in range(1, 9)])
    x: float = 0.31
    phi: float | None = None
    n_grid: int = 24
    ed_L: int = CZZ_ED_L
    out: str | None = None
    workers: int = 1

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        if "command" not in data:
            raise ValidationError("config needs a 'command' field")
        return RunConfig(**data)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        return RunConfig.from_dict(data)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.J, self.g, self.h)

    def times(self) -> list[int]:
        return list(self.t_list) if self.t_list is not None else list(range(1, self.t_max + 1))

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        self.params  # quadrant and finiteness checks
        if self.t_max < 1:
            raise ValidationError(f"t_max must be >= 1, got {self.t_max}")
        if self.t_list is not None and (not self.t_list or min(self.t_list) < 1):
            raise ValidationError("t_list must be a non-empty list of positive integers")
        if self.chi < 1 or any(c < 1 for c in self.chi_list):
            raise ValidationError("bond dimensions must be >= 1")
        if not 0 < self.cut_fraction < 1:
            raise ValidationError(f"cut_fraction must lie in (0, 1), got {self.cut_fraction}")
        if self.window < 1 or self.n_omega < 2 * self.window:
            raise ValidationError("need window >= 1 and n_omega >= 2 * window")
        if self.n_grid < 1 or self.workers < 1:
            raise ValidationError("n_grid and workers must be >= 1")
        if any(u <= 0 for u in self.scaled_times):
            raise ValidationError("scaled_times must be positive")
        if self.command == "collapse":
            if self.phi is None:
                ModelParams(self.x, self.x)
                for d in self.deltas:
                    ModelParams(self.x - d, self.x + d)
            else:
                for d in self.deltas:
                    if d < 0:
                        raise ValidationError("self-dual scans take delta >= 0 along the direction phi")
                    _self_dual_point(self.phi, d)
        if self.command in ("czz", "mps"):
            for h in self.h_list if self.command == "mps" else [self.h]:
                ModelParams(self.J, self.g, h)
        return self


@dataclass
class Table:
    columns: list[str]
    rows: list[tuple]
    metadata: dict = field(default_factory=dict)

    def to_csv(self, config: RunConfig) -> str:
        header = {"config": json.loads(config.to_json()), "version": __version__}
        header.update(self.metadata)
        lines = ["#" + json.dumps(header, sort_keys=True), ",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _map(fn, items, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------------
# commands


def cmd_kappa(cfg: RunConfig) -> Table:
    p = cfg.params
    p.require_integrable()
    kap = kappa_exact(p, cfg.t_max).values
    k0 = kap[0]
    rows = [(tau, float(v), float(v / k0) if k0 != 0 else 0.0) for tau, v in enumerate(kap)]
    return Table(["tau", "kappa", "kappa_over_kappa0"], rows)


def cmd_spectrum(cfg: RunConfig) -> Table:
    sd = spectral_density(cfg.params, n_omega=cfg.n_omega, window=cfg.window)
    rows = [(float(w), float(a), float(b)) for w, a, b in zip(sd.omega, sd.JR, sd.JI)]
    return Table(["omega", "JR", "JI"], rows, {"spectral": sd.metadata})


def cmd_entropy_curve(cfg: RunConfig) -> Table:
    p = cfg.params
    if not p.integrable:
        raise ValidationError("entropy-curve needs h = 0; use the mps command for h != 0")
    curve = te_entropy_curve(p, cfg.times(), cfg.cut_fraction)
    return Table(["t", "S"], [(t, s) for t, s in curve])


def _saturated_entropy(args) -> float:
    J, g, t, cut_fraction = args
    return te_entropy_curve(ModelParams(J, g), [t], cut_fraction)[0][1]


def phase_grid(n: int) -> np.ndarray:
    """Cell-centred grid on (0, pi/2)."""
    return (np.arange(n) + 0.5) * (math.pi / 2) / n


def cmd_phase_diagram(cfg: RunConfig) -> Table:
    grid = phase_grid(cfg.n_grid)
    points = [(float(J), float(g), cfg.t_max, cfg.cut_fraction) for J in grid for g in grid]
    values = _map(_saturated_entropy, points, cfg.workers)
    rows = [(J, g, S) for (J, g, _, _), S in zip(points, values)]
    return Table(["J", "g", "S"], rows, {"t": cfg.t_max})


# ----------------------------------------------------------------------------
# scaling collapses


def _self_dual_point(phi: float, delta: float) -> ModelParams:
    return ModelParams(math.pi / 4 - delta * math.cos(phi), math.pi / 4 - delta * math.sin(phi))


@dataclass
class CollapseDataset:
    """Rows ``(delta, t, delta * t, S)`` sorted by ``(delta, t)``."""

    rows: list[tuple]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r[0], r[1]))
        for d, t, dt, _ in self.rows:
            if abs(dt - d * t) > 1e-12:
                raise ValidationError(f"row (delta={d}, t={t}) has inconsistent delta*t = {dt}")

    def deltas(self) -> list[float]:
        return sorted({r[0] for r in self.rows})

    def curve(self, delta: float) -> tuple[np.ndarray, np.ndarray]:
        """``(|delta| t, S)`` for one detuning, ordered in t."""
        sel = [r for r in self.rows if r[0] == delta]
        return np.array([abs(r[2]) for r in sel]), np.array([r[3] for r in sel])

    def to_table(self) -> Table:
        return Table(["delta", "t", "delta_t", "S"], list(self.rows), dict(self.metadata))


def collapse_deviation(curves, span: float | None = None) -> float:
    """Largest vertical spread between curves over their common abscissa range,
    relative to ``span`` (default: the range of values of ``curves`` themselves).

    ``curves`` is a list of ``(u, S)`` pairs with increasing ``u``; each curve is
    linearly interpolated onto the union of abscissae inside the overlap.
    """
    if len(curves) < 2:
        raise ValidationError("need at least two curves to measure a collapse")
    lo = max(u[0] for u, _ in curves)
    hi = min(u[-1] for u, _ in curves)
    if not hi > lo:
        raise ValidationError("curves have no overlapping scaled-time range")
    grid = np.unique(np.concatenate([u[(u >= lo) & (u <= hi)] for u, _ in curves]))
    vals = np.array([np.interp(grid, u, S) for u, S in curves])
    spread = (vals.max(axis=0) - vals.min(axis=0)).max()
    if span is None:
        allS = np.concatenate([S for _, S in curves])
        span = allS.max() - allS.min()
    if span <= 0:
        return 0.0 if spread == 0 else math.inf
    return float(spread / span)


def _collapse_point(args) -> list[tuple]:
    J, g, delta, times, cut_fraction = args
    curve = te_entropy_curve(ModelParams(J, g), times, cut_fraction)
    return [(delta, t, delta * t, s) for t, s in curve]


def collapse_dataset(cfg: RunConfig) -> CollapseDataset:
    """Entropy curves versus ``delta * t`` across a critical line or around the self-dual point.

    Without ``phi``: ``(J, g) = (x - delta, x + delta)`` for each signed delta.
    With ``phi``: ``(J, g) = (pi/4 - delta cos phi, pi/4 - delta sin phi)``.
    For delta != 0 the times are ``round(u / |delta|)`` over ``scaled_times``; a
    zero delta uses ``t_list`` (or 1..t_max).
    """
    jobs = []
    for d in cfg.deltas:
        p = ModelParams(cfg.x - d, cfg.x + d) if cfg.phi is None else _self_dual_point(cfg.phi, d)
        if d == 0:
            times = cfg.times()
        else:
            times = sorted({max(1, int(round(u / abs(d)))) for u in cfg.scaled_times})
        jobs.append((p.J, p.g, float(d), times, cfg.cut_fraction))
    rows = [r for part in _map(_collapse_point, jobs, cfg.workers) for r in part]
    meta = {"cut_fraction": cfg.cut_fraction}
    meta.update({"x": cfg.x} if cfg.phi is None else {"phi": cfg.phi})
    ds = CollapseDataset(rows, meta)
    # spreads are quoted against the range of all detuned curves (one panel) and,
    # separately, against each family's own range
    detuned = [ds.curve(d) for d in ds.deltas() if d != 0]
    allS = np.concatenate([S for _, S in detuned]) if detuned else np.zeros(1)
    panel = float(allS.max() - allS.min())
    fams, own = {}, {}
    for sign in (1, -1):
        curves = [ds.curve(d) for d in ds.deltas() if d * sign > 0]
        if len(curves) >= 2:
            key = "positive" if sign > 0 else "negative"
            fams[key] = collapse_deviation(curves, panel)
            own[key] = collapse_deviation(curves)
    ds.metadata["collapse_deviation"] = fams
    ds.metadata["collapse_deviation_family_range"] = own
    return ds


def cmd_collapse(cfg: RunConfig) -> Table:
    return collapse_dataset(cfg).to_table()


# ----------------------------------------------------------------------------
# non-integrable runs


def _mps_curve(args) -> list[tuple]:
    J, g, h, chi, times, cut_fraction = args
    p = ModelParams(J, g, h)
    t_max = max(times)
    mps, report = fixed_point_im(p, t_max, chi)
    rows = []
    for t in times:
        cut = int(math.floor(cut_fraction * t))
        sub = mps if t == t_max else restrict(mps, t)
        S = mps_entropy(sub, cut) if cut >= 1 else 0.0
        rows.append((h, chi, t, S, max(sub.bond_dims, default=1), report.total_discarded))
    return rows


def entropy_curves_mps(cfg: RunConfig) -> list[tuple]:
    times = sorted(set(cfg.times()))
    jobs = [(cfg.J, cfg.g, float(h), int(chi), times, cfg.cut_fraction)
            for h in cfg.h_list for chi in cfg.chi_list]
    return [r for part in _map(_mps_curve, jobs, cfg.workers) for r in part]


def cmd_mps(cfg: RunConfig) -> Table:
    rows = entropy_curves_mps(cfg)
    return Table(["h", "chi", "t", "S", "max_bond", "discarded_weight"], rows)


def czz_rows(cfg: RunConfig) -> list[tuple]:
    """ED rows inside the light-cone window of an ``ed_L`` chain, then IM rows up to t_max.

    On the overlap both sources are emitted and must agree to ``CZZ_AGREE_TOL``.
    """
    p = cfg.params
    t_ed = min(cfg.t_max, (cfg.ed_L - 1) // 2)
    ed = czz_ed(cfg.ed_L, p, t_ed)
    mps, _ = fixed_point_im(p, cfg.t_max, cfg.chi)
    im = czz_series(mps, mps, p)
    gap = float(np.abs(ed - im[: t_ed + 1]).max())
    if gap > CZZ_AGREE_TOL:
        raise NumericalError(f"ED and IM autocorrelations differ by {gap:.2e} on t <= {t_ed}")
    rows = [(t, float(v), "ed") for t, v in enumerate(ed)]
    rows += [(t, float(v), "mps") for t, v in enumerate(im)]
    return rows


def cmd_czz(cfg: RunConfig) -> Table:
    return Table(["t", "C_zz", "source"], czz_rows(cfg))


def crossover_time(czz_h: np.ndarray, czz_0: np.ndarray, tail_start: int) -> float:
    """Time at which the slow decay of ``czz_h`` takes over from the fast integrable decay.

    The slow decay is the straight-line fit of ``log C_zz`` over
    ``t >= tail_start``; the crossover is the first time, by linear
    interpolation between integer times, at which that line rises above the
    log of the integrable curve ``czz_0``.
    """
    czz_h = np.asarray(czz_h, dtype=float)
    czz_0 = np.asarray(czz_0, dtype=float)
    t = np.arange(czz_h.size)
    tail = t >= tail_start
    if tail.sum() < 2 or np.any(czz_h[tail] <= 0):
        raise NumericalError("slow-decay tail must hold at least two positive values")
    slope, icpt = np.polyfit(t[tail], np.log(czz_h[tail]), 1)
    # integrable curve; non-positive values sit below any positive tail
    log0 = np.log(np.clip(czz_0[: czz_h.size], 1e-300, None))
    diff = slope * t + icpt - log0
    above = np.nonzero(diff > 0)[0]
    if above.size == 0:
        raise NumericalError("slow-decay line never crosses the integrable curve")
    k = above[0]
    if k == 0:
        return 0.0
    return float(k - 1 + (-diff[k - 1]) / (diff[k] - diff[k - 1]))


COMMAND_TABLE = {
    "kappa": cmd_kappa,
    "spectrum": cmd_spectrum,
    "entropy-curve": cmd_entropy_curve,
    "phase-diagram": cmd_phase_diagram,
    "collapse": cmd_collapse,
    "czz": cmd_czz,
    "mps": cmd_mps,
}


def run(cfg: RunConfig) -> Table:
    cfg.validate()
    return COMMAND_TABLE[cfg.command](cfg)
