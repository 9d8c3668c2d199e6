"""Exact event-driven Monte-Carlo simulation of the capital process.

Between loss events capital above the critical level grows as
(X - x*) e^{r t} + x*; at an event it is multiplied by the remaining
proportion Z ~ Beta(alpha, 1) (uninsured) or 1 - kappa (1 - Z) (insured).
A path is trapped the first time post-jump capital falls below x*.

Randomness: path i of grid point p uses lane i % 1024 of block i // 1024.
Every block owns a Philox generator seeded by SeedSequence([seed, p, block])
and draws uniforms in fixed (events x lanes x 2) chunks, so the numbers a
path sees depend only on (seed, p, i). Worker count and batching therefore
cannot change any result.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import InsuranceParams, ModelParams, derive_rates

__all__ = [
    "BLOCK_LANES",
    "EVENT_CHUNK",
    "SimConfig",
    "PathOutcome",
    "SimEstimate",
    "remaining_proportion",
    "draw_remaining_proportions",
    "simulate_path",
    "simulate_paths",
    "estimate_curve",
    "estimates_to_csv",
]

BLOCK_LANES = 1024
EVENT_CHUNK = 32
# Blocks advanced together in one vectorised batch.
BATCH_BLOCKS = 32
_MAX_SEED = 2**64


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    ``common_random_numbers`` gives every grid point the same substreams,
    which makes estimates monotone in the initial capital.
    """

    n_paths: int
    horizon: float = 500.0
    seed: int = 0
    early_exit_capital: float | None = None
    workers: int = 1
    common_random_numbers: bool = False

    def __post_init__(self) -> None:
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError(f"n_paths must be a positive integer, got {self.n_paths}")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be positive and finite, got {self.horizon}")
        if int(self.seed) != self.seed or not (0 <= self.seed < _MAX_SEED):
            raise DomainError(f"seed must be an integer in [0, 2^64), got {self.seed}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise DomainError(f"workers must be a positive integer, got {self.workers}")
        if self.early_exit_capital is not None and not self.early_exit_capital > 0.0:
            raise DomainError("early_exit_capital must be positive when given")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "workers", int(self.workers))
        object.__setattr__(self, "horizon", float(self.horizon))


@dataclass(frozen=True)
class PathOutcome:
    trapped: bool
    trapping_time: float | None
    final_capital: float


@dataclass(frozen=True)
class SimEstimate:
    x0: float
    p_hat: float
    std_err: float
    n: int


@dataclass(frozen=True)
class _Dynamics:
    lam: float
    r: float
    x_star: float
    alpha: float
    kappa: float


def _dynamics(m: ModelParams, ins: InsuranceParams | None, poverty_line: str) -> _Dynamics:
    if ins is None:
        return _Dynamics(m.lam, m.r, m.x_star_base, m.alpha, 1.0)
    rates = derive_rates(m, ins, poverty_line)
    return _Dynamics(m.lam, rates.r_eff, rates.x_star_eff, m.alpha, ins.kappa)


def remaining_proportion(u, alpha: float, kappa: float = 1.0):
    """Map uniforms to remaining proportions: Z = u^(1/alpha), Y = 1 - kappa (1 - Z)."""
    z = np.power(u, 1.0 / alpha)
    if kappa == 1.0:
        return z
    return 1.0 - kappa * (1.0 - z)


def draw_remaining_proportions(n: int, alpha: float, seed: int, kappa: float = 1.0) -> np.ndarray:
    """n independent remaining proportions from a dedicated stream."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 2**32 - 1])))
    return remaining_proportion(rng.random(n), alpha, kappa)


def _rng(seed: int, point: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, point, block])))


@dataclass
class _BlockResult:
    trapped: np.ndarray
    trap_time: np.ndarray
    final: np.ndarray


def _run_batch(
    specs: list[tuple[float, int, int, np.ndarray]],
    dyn: _Dynamics,
    cfg: SimConfig,
) -> list[_BlockResult]:
    """Advance a batch of blocks until every used lane is trapped or censored.

    Each spec is (x0, point_key, block_index, used_lanes_mask).
    """
    nb = len(specs)
    rngs = [_rng(cfg.seed, key, blk) for (_, key, blk, _) in specs]
    x = np.array([[spec[0]] * BLOCK_LANES for spec in specs], dtype=float)
    t = np.zeros((nb, BLOCK_LANES))
    active = np.stack([spec[3].copy() for spec in specs])
    trapped = np.zeros((nb, BLOCK_LANES), dtype=bool)
    trap_time = np.full((nb, BLOCK_LANES), np.nan)
    horizon = cfg.horizon
    exit_level = cfg.early_exit_capital
    inv_alpha = 1.0 / dyn.alpha
    xs = dyn.x_star
    live = np.arange(nb)
    while live.size:
        draws = np.stack([rngs[b].random((EVENT_CHUNK, BLOCK_LANES, 2)) for b in live], axis=1)
        xl, tl, al = x[live], t[live], active[live]
        trl, ttl = trapped[live], trap_time[live]
        for e in range(EVENT_CHUNK):
            if not al.any():
                break
            u = draws[e]
            dt = -np.log1p(-u[..., 0]) / dyn.lam
            t_next = tl + dt
            censor = al & (t_next > horizon)
            grow_dt = np.where(censor, horizon - tl, dt)
            above = xl > xs
            with np.errstate(over="ignore"):
                grown = np.where(above, (xl - xs) * np.exp(dyn.r * grow_dt) + xs, xl)
            xl = np.where(al, grown, xl)
            jumping = al & ~censor
            z = np.power(u[..., 1], inv_alpha)
            factor = z if dyn.kappa == 1.0 else 1.0 - dyn.kappa * (1.0 - z)
            xl = np.where(jumping, xl * factor, xl)
            tl = np.where(jumping, t_next, np.where(censor, horizon, tl))
            hit = jumping & (xl < xs)
            trl = trl | hit
            ttl = np.where(hit, t_next, ttl)
            al = al & ~censor & ~hit
            if exit_level is not None:
                al = al & ~(xl > exit_level)
        x[live], t[live], active[live] = xl, tl, al
        trapped[live], trap_time[live] = trl, ttl
        live = live[active[live].any(axis=1)]
    return [_BlockResult(trapped[i], trap_time[i], x[i]) for i in range(nb)]


def _run_specs(specs, dyn: _Dynamics, cfg: SimConfig) -> list[_BlockResult]:
    batches = [specs[i : i + BATCH_BLOCKS] for i in range(0, len(specs), BATCH_BLOCKS)]
    if cfg.workers == 1 or len(batches) == 1:
        results = [_run_batch(b, dyn, cfg) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda b: _run_batch(b, dyn, cfg), batches))
    return [r for batch in results for r in batch]


def _block_specs(x0: float, point_key: int, n_paths: int):
    specs = []
    n_blocks = -(-n_paths // BLOCK_LANES)
    for blk in range(n_blocks):
        used = np.zeros(BLOCK_LANES, dtype=bool)
        used[: min(BLOCK_LANES, n_paths - blk * BLOCK_LANES)] = True
        specs.append((x0, point_key, blk, used))
    return specs


def _check_start(x0: float, dyn: _Dynamics) -> float:
    x0 = float(x0)
    if not (x0 >= dyn.x_star):
        raise DomainError(f"initial capital {x0:g} is below the critical capital {dyn.x_star:g}")
    return x0


def simulate_path(
    x0: float,
    m: ModelParams,
    ins: InsuranceParams | None,
    cfg: SimConfig,
    stream_index: int,
    point_index: int = 0,
    poverty_line: str = "variable",
) -> PathOutcome:
    """Simulate the single path with the given stream index."""
    dyn = _dynamics(m, ins, poverty_line)
    x0 = _check_start(x0, dyn)
    stream_index = int(stream_index)
    if stream_index < 0:
        raise DomainError("stream_index must be non-negative")
    blk, lane = divmod(stream_index, BLOCK_LANES)
    used = np.zeros(BLOCK_LANES, dtype=bool)
    used[lane] = True
    res = _run_batch([(x0, int(point_index), blk, used)], dyn, cfg)[0]
    trapped = bool(res.trapped[lane])
    return PathOutcome(
        trapped=trapped,
        trapping_time=float(res.trap_time[lane]) if trapped else None,
        final_capital=float(res.final[lane]),
    )


def simulate_paths(
    x0: float,
    m: ModelParams,
    ins: InsuranceParams | None,
    cfg: SimConfig,
    point_index: int = 0,
    poverty_line: str = "variable",
) -> list[PathOutcome]:
    """All cfg.n_paths paths for one starting capital, in stream order."""
    dyn = _dynamics(m, ins, poverty_line)
    x0 = _check_start(x0, dyn)
    results = _run_specs(_block_specs(x0, int(point_index), cfg.n_paths), dyn, cfg)
    out = []
    for res, (_, _, _, used) in zip(results, _block_specs(x0, point_index, cfg.n_paths)):
        for lane in np.flatnonzero(used):
            trapped = bool(res.trapped[lane])
            out.append(
                PathOutcome(
                    trapped,
                    float(res.trap_time[lane]) if trapped else None,
                    float(res.final[lane]),
                )
            )
    return out


def estimate_curve(
    x_grid,
    m: ModelParams,
    ins: InsuranceParams | None,
    cfg: SimConfig,
    poverty_line: str = "variable",
) -> list[SimEstimate]:
    """Trapping-probability estimates on a grid of initial capitals.

    Grid point i uses substreams keyed by i (or 0 for every point when
    ``cfg.common_random_numbers`` is set).
    """
    dyn = _dynamics(m, ins, poverty_line)
    xs = [_check_start(x0, dyn) for x0 in np.atleast_1d(np.asarray(x_grid, dtype=float))]
    specs = []
    owners = []
    for i, x0 in enumerate(xs):
        key = 0 if cfg.common_random_numbers else i
        for spec in _block_specs(x0, key, cfg.n_paths):
            specs.append(spec)
            owners.append(i)
    results = _run_specs(specs, dyn, cfg)
    counts = np.zeros(len(xs), dtype=np.int64)
    for owner, res, spec in zip(owners, results, specs):
        counts[owner] += int(np.count_nonzero(res.trapped & spec[3]))
    n = cfg.n_paths
    out = []
    for x0, k in zip(xs, counts):
        p = k / n
        out.append(SimEstimate(x0=x0, p_hat=p, std_err=math.sqrt(p * (1.0 - p) / n), n=n))
    return out


def estimates_to_csv(estimates: list[SimEstimate], cfg: SimConfig) -> str:
    """CSV rows x0, p_hat, std_err, n_paths, horizon, seed with 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x0", "p_hat", "std_err", "n_paths", "horizon", "seed"])
    for est in estimates:
        writer.writerow(
            [
                f"{est.x0:.17g}",
                f"{est.p_hat:.17g}",
                f"{est.std_err:.17g}",
                est.n,
                f"{cfg.horizon:.17g}",
                cfg.seed,
            ]
        )
    return buf.getvalue()
