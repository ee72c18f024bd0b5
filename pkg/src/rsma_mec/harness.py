"""Monte Carlo sweeps over Rayleigh fading and their CSV output.

Every realisation ``i`` of a sweep draws its channel from its own generator
seeded with ``(seed, i)``. The same draws are therefore shared by both
schemes and by every axis value (common random numbers), and results do not
depend on how many worker processes are used.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .ao import SolverFailure, optimize, optimize_noma
from .streams import ChannelRealization
from .system import SystemConfig

log = logging.getLogger(__name__)

AXES = ("task_size", "blocklength", "snr")
SCHEMES = ("rsma", "noma")
CSV_HEADER = ("axis", "scheme", "mean_scp", "stderr", "mean_iters", "infeasible")
DEFAULT_SNR_DB = 15.0


def draw_channel(rng: np.random.Generator, snr_db: float | None = None) -> ChannelRealization:
    """Unit-mean Rayleigh power gains |h_k|^2 with unit noise variance.

    The transmit SNR is carried entirely by the power budget (see
    :meth:`SystemConfig.with_snr_db`), so ``snr_db`` does not change the gains;
    it is accepted so callers can pass the operating point along, and is
    checked for being finite.
    """
    if snr_db is not None and not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    h = (rng.standard_normal(2) + 1j * rng.standard_normal(2)) / math.sqrt(2.0)
    g = np.abs(h) ** 2
    return ChannelRealization(float(g[0]), float(g[1]), 1.0)


def realization_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a swept axis over ``values`` with the rest of the system fixed.

    ``fixed`` holds :class:`SystemConfig` overrides plus, optionally,
    ``snr_db`` (default 15 dB). For the ``task_size`` axis only ``M1`` moves
    unless ``tie_tasks`` is set, in which case ``M2`` follows it.
    """

    axis: str
    values: tuple
    fixed: dict = field(default_factory=dict)
    n_realizations: int = 100
    seed: int = 42
    schemes: tuple = SCHEMES
    tie_tasks: bool = False

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        vals = tuple(self.values)
        if not vals:
            raise ValueError("values must be non-empty")
        if list(vals) != sorted(vals):
            raise ValueError("values must be sorted")
        object.__setattr__(self, "values", vals)
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be at least 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ValueError(f"schemes must be a non-empty subset of {SCHEMES}, got {self.schemes!r}")
        known = {f.name for f in fields(SystemConfig)} | {"snr_db"}
        unknown = sorted(set(self.fixed) - known)
        if unknown:
            raise ValueError(f"unknown fixed parameter(s): {', '.join(unknown)}")
        for value in vals:
            self.config_at(value)  # surfaces invalid system parameters early

    def config_at(self, value) -> SystemConfig:
        """System configuration at one axis value."""
        over = dict(self.fixed)
        snr_db = float(over.pop("snr_db", DEFAULT_SNR_DB))
        if self.axis == "task_size":
            over["M1"] = float(value)
            if self.tie_tasks:
                over["M2"] = float(value)
        elif self.axis == "blocklength":
            over["N"] = int(value)
        else:
            snr_db = float(value)
        return SystemConfig(**over).with_snr_db(snr_db)


@dataclass(frozen=True)
class SweepRow:
    axis: float
    scheme: str
    mean_scp: float
    stderr: float
    mean_iters: float
    infeasible: int

    def __post_init__(self):
        if not 0.0 <= self.mean_scp <= 1.0:
            raise ValueError(f"mean SCP {self.mean_scp} outside [0, 1]")


@dataclass(frozen=True)
class InstanceResult:
    scp: float
    iterations: int
    feasible: bool
    failed: bool = False


def solve_instance(cfg: SystemConfig, ch: ChannelRealization, scheme: str) -> InstanceResult:
    """One optimisation; solver failures are logged and scored as SCP 0."""
    try:
        if scheme == "rsma":
            _, res, trace = optimize(cfg, ch)
            iters = trace.iterations
        else:
            _, res = optimize_noma(cfg, ch)
            iters = 0
    except (SolverFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("instance failed (%s): counted as SCP 0", exc)
        return InstanceResult(0.0, 0, False, True)
    return InstanceResult(float(res.scp), int(iters), bool(res.feasible))


def _realization_job(args):
    spec, index = args
    ch = draw_channel(realization_rng(spec.seed, index))
    out = []
    for value in spec.values:
        cfg = spec.config_at(value)
        out.append([solve_instance(cfg, ch, s) for s in spec.schemes])
    return out


def run_realizations(spec: SweepSpec, jobs: int = 1):
    """Per-realisation results, indexed ``[realisation][value][scheme]``."""
    work = [(spec, i) for i in range(spec.n_realizations)]
    if jobs <= 1:
        return [_realization_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map() yields in submission order, so the reduction is index-ordered
        return list(pool.map(_realization_job, work, chunksize=max(1, len(work) // (4 * jobs))))


def summarize(spec: SweepSpec, results) -> list[SweepRow]:
    rows = []
    for v, value in enumerate(spec.values):
        for s, scheme in enumerate(spec.schemes):
            items = [r[v][s] for r in results]
            scps = np.array([it.scp for it in items])
            n = scps.size
            stderr = float(scps.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            rows.append(
                SweepRow(
                    axis=float(value),
                    scheme=scheme,
                    mean_scp=float(np.clip(scps.mean(), 0.0, 1.0)),
                    stderr=stderr,
                    mean_iters=float(np.mean([it.iterations for it in items])),
                    infeasible=sum(1 for it in items if not it.feasible),
                )
            )
    return rows


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[SweepRow]:
    return summarize(spec, run_realizations(spec, jobs))


def _g6(x: float) -> str:
    return f"{x:.6g}"


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_g6(r.axis), r.scheme, _g6(r.mean_scp), _g6(r.stderr), _g6(r.mean_iters), r.infeasible])
    return buf.getvalue()


def write_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


# ---------------------------------------------------------------------------
# Figure set-ups
# ---------------------------------------------------------------------------


def fig2_specs(n_realizations: int = 100, seed: int = 42) -> dict[tuple[int, float], SweepSpec]:
    """SCP against user-1 task size, one sweep per (N, SNR) cell; M2 = 5.5k bits."""
    m1 = tuple(float(v) for v in np.arange(5000.0, 10000.0 + 1, 500.0))
    return {
        (n, snr): SweepSpec("task_size", m1, {"N": n, "M2": 5500.0, "snr_db": snr}, n_realizations, seed)
        for n in (250, 500, 750, 1000)
        for snr in (10.0, 15.0)
    }


# Step 50 resolves the RSMA/NOMA blocklength differences of interest. The upper
# end is the largest such N at which the edge server can still absorb two 8k
# tasks: 2*M*Ccpu <= (T - N*Ts)*f_user*(L + 2) gives N <= 2171.
FIG3_BLOCKLENGTHS = tuple(range(200, 2151, 50))


def fig3_specs(n_realizations: int = 100, seed: int = 42) -> dict[float, SweepSpec]:
    """SCP against blocklength at 15 dB for equal task sizes of 6k, 7k and 8k bits."""
    return {
        m: SweepSpec("blocklength", FIG3_BLOCKLENGTHS, {"M1": m, "M2": m, "snr_db": 15.0}, n_realizations, seed)
        for m in (6000.0, 7000.0, 8000.0)
    }


def fig4_specs(n_realizations: int = 100, seed: int = 42) -> dict[int, SweepSpec]:
    """SCP against transmit SNR (5 to 15 dB) for several blocklengths, M1 = M2 = 7k bits."""
    snrs = tuple(float(v) for v in range(5, 16))
    return {
        n: SweepSpec("snr", snrs, {"N": n, "M1": 7000.0, "M2": 7000.0}, n_realizations, seed)
        for n in (500, 1000, 1500, 2000, 3000)
    }


def first_crossing(rows: list[SweepRow], scheme: str, level: float = 0.5) -> float:
    """Smallest axis value at which ``scheme`` reaches mean SCP ``level`` (inf if never)."""
    hits = [r.axis for r in rows if r.scheme == scheme and r.mean_scp >= level]
    return min(hits) if hits else math.inf


def with_overrides(spec: SweepSpec, **kw) -> SweepSpec:
    return replace(spec, **kw)
