"""Progressive coarse-to-fine training loop plus comparison and ablation helpers."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imaging
from .adc import AdcConfig, MutationReport, densify_and_prune, reset_opacity
from .freq_filter import FilterKind, filter_image
from .imaging import ImageBuffer, MetricsRecord
from .optim import Adam
from .schedule import FrequencySchedule, ScheduleFamily, kernel_size_at, level_at, snapshot_iterations
from .splat import GaussianSet, LossConfig, RenderSettings, inverse_sigmoid, render, render_backward, save_snapshot

log = logging.getLogger(__name__)

REFERENCE_ITERATIONS = 30000


class TrainMode(str, enum.Enum):
    BASELINE = "baseline"
    FREQ_MODULATED = "freq"
    RESOLUTION_PYRAMID = "pyramid"

    @classmethod
    def parse(cls, value) -> "TrainMode":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower().replace("-", "_")
        aliases = {"freqmodulated": "freq", "freq_modulated": "freq", "resolutionpyramid": "pyramid",
                   "resolution_pyramid": "pyramid"}
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; expected baseline, freq or pyramid") from None


@dataclass(frozen=True)
class LearningRates:
    # position rate is multiplied by the image diagonal
    position: float = 1.6e-4
    position_final_factor: float = 0.01
    log_scale: float = 0.01
    rotation: float = 1e-3
    raw_opacity: float = 5e-2
    color: float = 2.5e-3

    def __post_init__(self):
        for k in ("position", "log_scale", "rotation", "raw_opacity", "color", "position_final_factor"):
            if getattr(self, k) <= 0:
                raise ValueError(f"learning rate {k} must be positive")


@dataclass(frozen=True)
class TrainConfig:
    total_iterations: int = REFERENCE_ITERATIONS
    schedule: FrequencySchedule = field(default_factory=FrequencySchedule)
    adc: AdcConfig = field(default_factory=AdcConfig)
    lr: LearningRates = field(default_factory=LearningRates)
    render: RenderSettings = field(default_factory=RenderSettings)
    loss: LossConfig = field(default_factory=LossConfig)
    init_count: int = 256
    init_opacity: float = 0.1
    seed: int = 0
    mode: TrainMode = TrainMode.FREQ_MODULATED
    metrics_interval: int = 100
    reset_moments_on_level: bool = False
    bilateral_sigma_range: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "mode", TrainMode.parse(self.mode))
        if self.total_iterations < self.schedule.cutoff_iteration:
            raise ValueError("total_iterations must be >= schedule.cutoff_iteration")
        if self.init_count < 1:
            raise ValueError("init_count must be >= 1")
        if not 0.0 < self.init_opacity < 1.0:
            raise ValueError("init_opacity must lie in (0, 1)")
        if self.metrics_interval < 1:
            raise ValueError("metrics_interval must be >= 1")

    @classmethod
    def scaled(cls, total_iterations: int, **overrides) -> "TrainConfig":
        """Reference defaults with every iteration milestone scaled to ``total_iterations``.

        ``scaled(30000)`` equals the unscaled defaults.
        """
        f = total_iterations / REFERENCE_ITERATIONS
        ref_s = FrequencySchedule()
        ref_a = AdcConfig()
        cutoff = max(len(ref_s.level_boundaries), round(ref_s.cutoff_iteration * f))
        schedule = FrequencySchedule.evenly_spaced(cutoff, ref_s.level_count)
        adc = replace(
            ref_a,
            densification_interval=max(1, round(ref_a.densification_interval * f)),
            opacity_reset_interval=max(1, round(ref_a.opacity_reset_interval * f)),
            densify_until_iteration=round(ref_a.densify_until_iteration * f),
        )
        cfg = cls(total_iterations=total_iterations, schedule=schedule, adc=adc)
        return replace(cfg, **overrides) if overrides else cfg

    def with_schedule(self, **kw) -> "TrainConfig":
        return replace(self, schedule=replace(self.schedule, **kw))

    def with_adc(self, **kw) -> "TrainConfig":
        return replace(self, adc=replace(self.adc, **kw))


@dataclass
class Snapshot:
    level: int
    iteration: int
    gaussians: GaussianSet
    kernel_size: int
    path: Path | None = None


@dataclass
class RunResult:
    metrics: list[MetricsRecord]
    snapshots: list[Snapshot]
    final_set: GaussianSet
    events: list[MutationReport] = field(default_factory=list)
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wall_time: float = 0.0
    final_psnr: float = 0.0
    final_ssim: float = 0.0

    @property
    def final_count(self) -> int:
        return len(self.final_set)

    @property
    def peak_count(self) -> int:
        return self.final_set.peak_count


def rng_for(seed: int, stream: str) -> np.random.Generator:
    """Independent named random stream derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(stream.encode()),)))


def image_diagonal(img: ImageBuffer) -> float:
    return math.hypot(img.width, img.height)


def initialize(target: ImageBuffer, init_count: int, seed: int, init_opacity: float = 0.1) -> GaussianSet:
    """Seed Gaussians at uniformly sampled pixels, taking their colours.

    Each starts isotropic with scale diagonal / sqrt(init_count), the given
    opacity and a random depth key.
    """
    n_pix = target.width * target.height
    if init_count < 1:
        raise ValueError("init_count must be >= 1")
    if init_count > n_pix:
        raise ValueError(f"init_count {init_count} exceeds pixel count {n_pix}")
    rng = rng_for(seed, "init")
    flat = rng.choice(n_pix, size=init_count, replace=False)
    rows, cols = np.divmod(flat, target.width)
    scale = image_diagonal(target) / math.sqrt(init_count)
    params = {
        "position": np.stack([cols, rows], axis=1).astype(np.float64),
        "log_scale": np.full((init_count, 2), math.log(scale)),
        "rotation": np.zeros(init_count),
        "raw_opacity": np.full(init_count, float(inverse_sigmoid(init_opacity))),
        "color": target.data[rows, cols].copy(),
    }
    depth = rng_for(seed, "depth").random(init_count)
    return GaussianSet(params, depth, np.arange(init_count))


def _block_downsample(x: np.ndarray, factor: int) -> np.ndarray:
    h, w = x.shape[:2]
    ph, pw = -h % factor, -w % factor
    if ph or pw:
        x = np.pad(x, ((0, ph), (0, pw), (0, 0)), mode="edge")
    hh, ww = x.shape[0] // factor, x.shape[1] // factor
    return x.reshape(hh, factor, ww, factor, 3).mean(axis=(1, 3))


def pyramid_image(img: ImageBuffer, factor: int) -> ImageBuffer:
    """Area downsample by ``factor`` then bilinear upsample back to full size."""
    if factor <= 1:
        return img
    small = _block_downsample(img.data, factor)
    h, w = img.data.shape[:2]
    # full-res pixel centres expressed in low-res pixel coordinates
    ys = (np.arange(h) + 0.5) / factor - 0.5
    xs = (np.arange(w) + 0.5) / factor - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = np.stack(
        [ndimage.map_coordinates(small[:, :, c], [yy, xx], order=1, mode="nearest") for c in range(3)],
        axis=2,
    )
    return ImageBuffer(np.clip(out, 0.0, 1.0))


class TargetProvider:
    """Caches the training target for every distinct modulation state."""

    def __init__(self, image: ImageBuffer, cfg: TrainConfig):
        self.image = image
        self.cfg = cfg
        self._cache: dict = {}

    def state(self, iteration: int):
        s = self.cfg.schedule
        mode = self.cfg.mode
        if mode is TrainMode.BASELINE:
            return None
        if mode is TrainMode.RESOLUTION_PYRAMID:
            level = level_at(s, iteration)
            return ("pyramid", 2 ** max(0, s.level_count - 1 - level)) if level < s.level_count else None
        k = kernel_size_at(s, iteration)
        return ("filter", k) if k > 1 else None

    def __call__(self, iteration: int) -> ImageBuffer:
        key = self.state(iteration)
        if key is None:
            return self.image
        if key not in self._cache:
            kind, value = key
            if kind == "pyramid":
                self._cache[key] = pyramid_image(self.image, value)
            else:
                extra = {}
                if self.cfg.schedule.filter is FilterKind.BILATERAL:
                    extra["sigma_range"] = self.cfg.bilateral_sigma_range
                self._cache[key] = filter_image(self.image, self.cfg.schedule.filter, value, **extra)
        return self._cache[key]


def target_for_iteration(image: ImageBuffer, cfg: TrainConfig, iteration: int) -> ImageBuffer:
    return TargetProvider(image, cfg)(iteration)


def _position_lr(cfg: TrainConfig, diag: float, iteration: int) -> float:
    frac = min(iteration / max(cfg.total_iterations, 1), 1.0)
    return cfg.lr.position * diag * cfg.lr.position_final_factor**frac


def _snapshot_meta(cfg, target, snap_level, iteration, k):
    return {
        "width": target.width,
        "height": target.height,
        "background": list(cfg.render.background),
        "level": snap_level,
        "iteration": iteration,
        "kernel_size": k,
        "mode": cfg.mode.value,
        "seed": cfg.seed,
    }


def train(target: ImageBuffer, cfg: TrainConfig, output_dir=None, callback=None) -> RunResult:
    """Optimize a Gaussian set against ``target`` following ``cfg``.

    ``callback(iteration, active_target, loss)`` is invoked after every
    iteration's backward pass. With ``output_dir`` the metrics, events,
    snapshots and snapshot renders are written there.
    """
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        (out / "snapshots").mkdir(parents=True, exist_ok=True)

    gs = initialize(target, cfg.init_count, cfg.seed, cfg.init_opacity)
    split_rng = rng_for(cfg.seed, "split")
    targets = TargetProvider(target, cfg)
    diag = image_diagonal(target)
    lrs = {
        "position": cfg.lr.position * diag,
        "log_scale": cfg.lr.log_scale,
        "rotation": cfg.lr.rotation,
        "raw_opacity": cfg.lr.raw_opacity,
        "color": cfg.lr.color,
    }
    optim = Adam(lrs)
    snaps = set(snapshot_iterations(cfg.schedule, cfg.total_iterations))
    s = cfg.schedule
    w, h = target.width, target.height
    stat_scale = cfg.adc.grad_stat_scale(w, h)

    metrics: list[MetricsRecord] = []
    events: list[MutationReport] = []
    snapshots: list[Snapshot] = []
    losses = np.empty(cfg.total_iterations)
    start = time.perf_counter()
    prev_level = level_at(s, 0)

    for it in range(cfg.total_iterations):
        level = level_at(s, it)
        if cfg.reset_moments_on_level and level != prev_level:
            for m, v in gs.moments.values():
                m[:] = 0.0
                v[:] = 0.0
        prev_level = level
        active = targets(it)
        res = render_backward(gs, active, cfg.loss, cfg.render, accumulate=True, grad_stat_scale=stat_scale)
        losses[it] = res.loss
        if callback is not None:
            callback(it, active, res.loss)
        optim.step(gs, res.grads, {"position": _position_lr(cfg, diag, it)})

        # record before density control so a level's snapshot is not taken
        # straight after an opacity reset that shares its boundary
        step = it + 1
        if step % cfg.metrics_interval == 0 or it in snaps:
            rendered = render(gs, w, h, settings=cfg.render).image
            metrics.append(
                MetricsRecord(
                    iteration=it,
                    psnr=imaging.psnr(rendered, target),
                    ssim=imaging.ssim(rendered, target),
                    gaussian_count=len(gs),
                    peak_gaussian_count=gs.peak_count,
                    wall_time=time.perf_counter() - start,
                    level=level,
                    kernel_size=kernel_size_at(s, it) if cfg.mode is TrainMode.FREQ_MODULATED else 1,
                )
            )
            if it in snaps:
                snap = Snapshot(level, it, gs.copy(), kernel_size_at(s, it))
                if out is not None:
                    snap.path = out / "snapshots" / f"level_{level}.bin"
                    save_snapshot(gs, snap.path, _snapshot_meta(cfg, target, level, it, snap.kernel_size))
                    imaging.save_image(rendered, snap.path.with_suffix(".png"))
                snapshots.append(snap)
            log.debug("iter %d level %d count %d psnr %.2f", it, level, len(gs), metrics[-1].psnr)

        if step == cfg.total_iterations:
            break
        if cfg.adc.densify_due(step):
            events.append(densify_and_prune(gs, cfg.adc, diag, step, split_rng))
        if cfg.adc.reset_due(step):
            reset_opacity(gs, cfg.adc.opacity_reset_ceiling)

    wall = time.perf_counter() - start
    final = metrics[-1]
    result = RunResult(metrics, snapshots, gs, events, losses, wall, final.psnr, final.ssim)
    if out is not None:
        write_run_outputs(result, out)
    return result


def write_run_outputs(result: RunResult, out: Path) -> None:
    # wall-clock times differ run to run; keep them out of metrics.csv so it is reproducible
    imaging.write_metrics_csv(result.metrics, out / "metrics.csv", include_wall_time=False)
    with open(out / "timing.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["iteration", "wall_time"])
        for m in result.metrics:
            wr.writerow([m.iteration, f"{m.wall_time:.6f}"])
    with open(out / "events.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["iteration", "cloned", "split", "pruned", "total", "peak"])
        for e in result.events:
            wr.writerow([e.iteration, e.cloned, e.split, e.pruned, e.total, e.peak])


# --- comparisons and ablations ------------------------------------------------

SUMMARY_FIELDS = ["final_count", "peak_count", "psnr", "ssim", "wall_time"]


def summarize(result: RunResult) -> dict:
    return {
        "final_count": result.final_count,
        "peak_count": result.peak_count,
        "psnr": result.final_psnr,
        "ssim": result.final_ssim,
        "wall_time": result.wall_time,
    }


def _pct(a: float, b: float) -> float:
    if a == 0:
        return 0.0 if b == 0 else math.copysign(math.inf, b)
    return 100.0 * (b - a) / abs(a)


@dataclass
class ComparisonReport:
    label_a: str
    label_b: str
    summary_a: dict
    summary_b: dict
    differing_fields: list[str]
    results: tuple = ()

    @property
    def deltas(self) -> dict:
        return {k: _pct(self.summary_a[k], self.summary_b[k]) for k in SUMMARY_FIELDS}

    def rows(self) -> list[dict]:
        return [
            {"run": self.label_a, **self.summary_a},
            {"run": self.label_b, **self.summary_b},
            {"run": "delta_pct", **self.deltas},
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, ["run"] + SUMMARY_FIELDS, lineterminator="\n")
            wr.writeheader()
            for row in self.rows():
                wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def config_differences(a: TrainConfig, b: TrainConfig) -> list[str]:
    from .config import to_flat

    fa, fb = to_flat(a), to_flat(b)
    return sorted(k for k in fa if fa[k] != fb.get(k))


def compare(target: ImageBuffer, cfg_a: TrainConfig, cfg_b: TrainConfig, labels=("a", "b"),
            output_dir=None) -> ComparisonReport:
    """Train both configurations and report absolute values and percentage deltas (b vs a)."""
    out = Path(output_dir) if output_dir is not None else None
    ra = train(target, cfg_a, out / labels[0] if out else None)
    rb = train(target, cfg_b, out / labels[1] if out else None)
    report = ComparisonReport(labels[0], labels[1], summarize(ra), summarize(rb),
                              config_differences(cfg_a, cfg_b), (ra, rb))
    if out is not None:
        report.write_csv(out / "comparison.csv")
    return report


ABLATION_FIELDS = ["family", "filter", "initial_kernel", "seed", "mode"] + SUMMARY_FIELDS


def _ablation_cell(args):
    target_data, cfg = args
    res = train(ImageBuffer(target_data), cfg)
    return {
        "family": cfg.schedule.family.value,
        "filter": cfg.schedule.filter.value,
        "initial_kernel": cfg.schedule.initial_kernel,
        "seed": cfg.seed,
        "mode": cfg.mode.value,
        **summarize(res),
    }


def ablation_configs(base: TrainConfig, families=None, filters=None, kernel_sizes=None) -> list[TrainConfig]:
    families = [ScheduleFamily.parse(f) for f in (families or [base.schedule.family])]
    filters = [FilterKind.parse(f) for f in (filters or [base.schedule.filter])]
    kernel_sizes = list(kernel_sizes or [base.schedule.initial_kernel])
    if not (families and filters and kernel_sizes):
        raise ValueError("ablation grid must be non-empty")
    cfgs = []
    for fam in families:
        for filt in filters:
            for k in kernel_sizes:
                cfgs.append(base.with_schedule(family=fam, filter=filt, initial_kernel=int(k), step_sizes=()))
    return cfgs


def ablate(target: ImageBuffer, base: TrainConfig, families=None, filters=None, kernel_sizes=None,
           jobs: int = 1, output_path=None) -> list[dict]:
    """One training run per (family, filter, initial kernel) cell, all sharing ``base.seed``."""
    cfgs = ablation_configs(base, families, filters, kernel_sizes)
    work = [(target.data, c) for c in cfgs]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_ablation_cell, work))
    else:
        rows = [_ablation_cell(w) for w in work]
    if output_path is not None:
        write_rows_csv(rows, output_path, ABLATION_FIELDS)
    return rows


def write_rows_csv(rows, path, fieldnames) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames, lineterminator="\n")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def peak_location(rows, x_key: str = "initial_kernel", y_key: str = "psnr") -> tuple:
    """(x, mean y) of the best cell after averaging over seeds."""
    grouped: dict = {}
    for r in rows:
        grouped.setdefault(r[x_key], []).append(float(r[y_key]))
    curve = sorted((k, float(np.mean(v))) for k, v in grouped.items())
    return max(curve, key=lambda kv: kv[1]), curve


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
