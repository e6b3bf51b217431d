"""Alternating critic/generator optimisation, checkpoints, evaluation, ablation.

Five variants mirror the ablation table:

==================  ===========  ==========  ======  =====
variant             adversarial  generator   stages  merge
==================  ===========  ==========  ======  =====
cyclegan            log          U-Net       1       -
cycle-wgan          Wasserstein  U-Net       1       -
multi-unet          log          Multi-UNet  1       -
double-layer        log          U-Net       2       none (alpha=1)
dual-merged-wgan    Wasserstein  Multi-UNet  2       alpha blend
==================  ===========  ==========  ======  =====
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import metrics
from .dual_pipeline import CycleStage, DualMergedModel, denoise_batch, denoise_fullframe, merge
from .imaging import RegionSpec
from .losses import (
    LossBundle,
    clip_weights,
    cycle_consistency_loss,
    full_objective,
    gan_adversarial_loss,
    wgan_adversarial_loss,
)
from .networks import CriticConfig, MultiUNetConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Variant:
    wasserstein: bool
    multi_unet: bool
    two_stage: bool
    merged: bool


VARIANTS = {
    "cyclegan": Variant(False, False, False, False),
    "cycle-wgan": Variant(True, False, False, False),
    "multi-unet": Variant(False, True, False, False),
    "double-layer": Variant(False, False, True, False),
    "dual-merged-wgan": Variant(True, True, True, True),
}

WGAN_LR = 5e-5
GAN_LR = 2e-4


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "dual-merged-wgan"
    lam: float = 10.0
    clip_c: float = 0.01
    n_critic: int = 5
    # None selects the variant default (WGAN_LR or GAN_LR)
    learning_rate: float | None = None
    epochs: int = 30
    batch_size: int = 4
    seed: int = 0
    merge_alpha: float = 0.5
    crop_size: int = 64
    branch_depths: tuple[int, ...] = (3, 4)
    base_channels: int = 8
    critic_layers: int = 3
    critic_channels: int = 16
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "branch_depths", tuple(int(d) for d in self.branch_depths))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if not self.clip_c > 0:
            raise ValueError("clip_c must be > 0")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0 <= self.merge_alpha <= 1:
            raise ValueError("merge_alpha must lie in [0, 1]")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def spec(self) -> Variant:
        return VARIANTS[self.variant]

    @property
    def lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return WGAN_LR if self.spec.wasserstein else GAN_LR

    @property
    def critic_steps(self) -> int:
        return self.n_critic if self.spec.wasserstein else 1

    def generator_config(self) -> MultiUNetConfig:
        depths = self.branch_depths if self.spec.multi_unet else (max(self.branch_depths),)
        return MultiUNetConfig(branch_depths=depths, base_channels=self.base_channels)

    def critic_config(self) -> CriticConfig:
        return CriticConfig(num_layers=self.critic_layers, base_channels=self.critic_channels)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(d) for d in v)
            elif v is None:
                v = "auto"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        """Build from string values, overriding ``base``; unknown keys are errors."""
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, raw in values.items():
            kwargs[key] = _coerce(key, str(raw).strip(), getattr(cls(), key))
        return dataclasses.replace(base or cls(), **kwargs)

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        return cls.from_mapping(parse_key_values(text), base)


def _coerce(key: str, raw: str, default):
    if key == "learning_rate":
        return None if raw.lower() in ("auto", "none", "") else float(raw)
    if key == "branch_depths":
        return tuple(int(p) for p in raw.split(",") if p.strip())
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ValueError(f"line {n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def build_model(cfg: TrainConfig) -> DualMergedModel:
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2)
    gen_cfg, critic_cfg = cfg.generator_config(), cfg.critic_config()
    stage1 = CycleStage.build(gen_cfg, critic_cfg, int(seeds[0]))
    stage2 = CycleStage.build(gen_cfg, critic_cfg, int(seeds[1])) if cfg.spec.two_stage else None
    alpha = cfg.merge_alpha if cfg.spec.merged else 1.0
    return DualMergedModel(stage1, stage2, merge_alpha=alpha)


class StageTrainer:
    """Optimisers and update rules for one Cycle-GAN stage."""

    def __init__(self, stage: CycleStage, cfg: TrainConfig):
        self.stage = stage
        self.cfg = cfg
        if cfg.spec.wasserstein:
            # momentum-free, as usual with weight clipping
            self.opt_g = torch.optim.RMSprop(stage.generators(), lr=cfg.lr)
            self.opt_c = torch.optim.RMSprop(stage.critics(), lr=cfg.lr)
        else:
            self.opt_g = torch.optim.Adam(stage.generators(), lr=cfg.lr, betas=(0.5, 0.999))
            self.opt_c = torch.optim.Adam(stage.critics(), lr=cfg.lr, betas=(0.5, 0.999))
        self.critic_updates = 0
        self.generator_updates = 0

    def _adversarial(self, real, fake):
        if self.cfg.spec.wasserstein:
            return wgan_adversarial_loss(real, fake)
        return gan_adversarial_loss(torch.sigmoid(real), torch.sigmoid(fake))

    def critic_step(self, x, y, fake_x, fake_y) -> tuple[float, float]:
        st = self.stage
        loss_y, _ = self._adversarial(st.D_Y(y), st.D_Y(fake_y))
        loss_x, _ = self._adversarial(st.D_X(x), st.D_X(fake_x))
        self.opt_c.zero_grad(set_to_none=True)
        (loss_x + loss_y).backward()
        self.opt_c.step()
        if self.cfg.spec.wasserstein:
            c = self.cfg.clip_c
            clip_weights(st.D_X, c)
            clip_weights(st.D_Y, c)
            bound = max(p.abs().max().item() for p in st.critics())
            assert bound <= c, f"critic parameter {bound} escaped [-{c}, {c}]"
        self.critic_updates += 1
        return float(loss_x.detach()), float(loss_y.detach())

    def generator_step(self, x, y) -> LossBundle:
        st = self.stage
        fake_y = st.G(x)
        fake_x = st.F(y)
        rec_x = st.F(fake_y)
        rec_y = st.G(fake_x)
        _, adv_fwd = self._adversarial(st.D_Y(y).detach(), st.D_Y(fake_y))
        _, adv_bwd = self._adversarial(st.D_X(x).detach(), st.D_X(fake_x))
        cyc = cycle_consistency_loss(x, rec_x, y, rec_y)
        bundle = full_objective(adv_fwd, adv_bwd, cyc, self.cfg.lam)
        self.opt_g.zero_grad(set_to_none=True)
        bundle.total.backward()
        self.opt_g.step()
        self.generator_updates += 1
        return bundle

    def step(self, x, y, on_event: Callable | None = None, stage_index: int = 0) -> LossBundle:
        """One iteration: critic steps (clipped for WGAN), then one generator step."""
        with torch.no_grad():
            fake_y = self.stage.G(x)
            fake_x = self.stage.F(y)
        cx = cy = 0.0
        for _ in range(self.cfg.critic_steps):
            cx, cy = self.critic_step(x, y, fake_x, fake_y)
            if on_event is not None:
                on_event("critic", stage_index, self.stage)
        bundle = self.generator_step(x, y)
        if on_event is not None:
            on_event("generator", stage_index, self.stage)
        out = bundle.detached()
        out.critic_x, out.critic_y = cx, cy
        out.check_finite()
        return out


def train_step_cyclegan(trainer: StageTrainer, batch_x, batch_y) -> LossBundle:
    """Log-loss alternating update (one critic step, no clipping)."""
    if trainer.cfg.spec.wasserstein:
        raise ValueError("train_step_cyclegan needs a log-loss variant config")
    return trainer.step(batch_x, batch_y)


def train_step_cyclewgan(trainer: StageTrainer, batch_x, batch_y) -> LossBundle:
    """Wasserstein update: n_critic clipped critic steps, then the generators."""
    if not trainer.cfg.spec.wasserstein:
        raise ValueError("train_step_cyclewgan needs a Wasserstein variant config")
    return trainer.step(batch_x, batch_y)


LOG_COLUMNS = ["iter", "critic_loss_X", "critic_loss_Y", "gen_loss", "cycle_loss", "total"]


@dataclass
class Checkpoint:
    model: DualMergedModel
    config: TrainConfig
    epoch: int = 0
    # one row per iteration, losses summed over active stages
    history: list[dict] = field(default_factory=list)
    # per-stage LossBundles, outer index = iteration
    stage_history: list[list[LossBundle]] = field(default_factory=list)
    updates: list[dict] = field(default_factory=list)

    def run_name(self) -> str:
        return f"{self.config.variant}-seed{self.config.seed}"

    def totals(self) -> np.ndarray:
        return np.array([row["total"] for row in self.history])


def _stack(images: Sequence[np.ndarray]) -> torch.Tensor:
    if len(images) == 0:
        raise ValueError("training sets must be non-empty")
    shapes = {np.shape(im) for im in images}
    if len(shapes) != 1:
        raise ValueError(f"crops must share one shape, got {sorted(shapes)}")
    return torch.as_tensor(np.stack([np.asarray(im) for im in images]), dtype=torch.float32)[:, None]


def _epoch_indices(rng: np.random.Generator, n: int, total: int) -> np.ndarray:
    reps = -(-total // n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:total]


def configure_torch(cfg: TrainConfig) -> None:
    torch.set_num_threads(cfg.threads)
    torch.manual_seed(cfg.seed)
    if cfg.threads == 1:
        torch.use_deterministic_algorithms(True)


def train(
    cfg: TrainConfig,
    noisy_set: Sequence[np.ndarray],
    clean_set: Sequence[np.ndarray],
    log_path: str | Path | None = None,
    on_event: Callable | None = None,
) -> Checkpoint:
    """Train on UNPAIRED noisy and clean crops; each set is shuffled independently.

    ``on_event(kind, stage_index, stage)`` fires after every critic update
    (``kind="critic"``) and generator update (``kind="generator"``).
    """
    configure_torch(cfg)
    X = _stack(noisy_set)
    Y = _stack(clean_set)
    if X.shape[1:] != Y.shape[1:]:
        raise ValueError(f"noisy crops {tuple(X.shape[2:])} and clean crops {tuple(Y.shape[2:])} differ")
    model = build_model(cfg)
    model.train()
    trainers = [StageTrainer(st, cfg) for st in model.stages]
    ckpt = Checkpoint(model=model, config=cfg)

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    rng_x, rng_y = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])
    iters_per_epoch = -(-max(len(X), len(Y)) // cfg.batch_size)
    span = iters_per_epoch * cfg.batch_size

    writer = None
    log_file = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(LOG_COLUMNS)
    try:
        it = 0
        for epoch in range(1, cfg.epochs + 1):
            ix = _epoch_indices(rng_x, len(X), span)
            iy = _epoch_indices(rng_y, len(Y), span)
            for b in range(iters_per_epoch):
                sl = slice(b * cfg.batch_size, (b + 1) * cfg.batch_size)
                x, y = X[ix[sl]], Y[iy[sl]]
                bundles = []
                for k, trainer in enumerate(trainers):
                    bundles.append(trainer.step(x, y, on_event, k))
                    if k == 0 and len(trainers) > 1:
                        # stage boundary: no gradient flows back into stage 1
                        with torch.no_grad():
                            x = merge(x, model.stage1.G(x), model.merge_alpha)
                it += 1
                row = {
                    "iter": it,
                    "critic_loss_X": sum(bd.critic_x for bd in bundles),
                    "critic_loss_Y": sum(bd.critic_y for bd in bundles),
                    "gen_loss": sum(bd.adv_forward + bd.adv_backward for bd in bundles),
                    "cycle_loss": sum(bd.cycle for bd in bundles),
                    "total": sum(bd.total for bd in bundles),
                }
                ckpt.history.append(row)
                ckpt.stage_history.append(bundles)
                if writer is not None:
                    writer.writerow([row[c] if c == "iter" else repr(row[c]) for c in LOG_COLUMNS])
            ckpt.epoch = epoch
            last = ckpt.history[-1]
            log.info("%s epoch %d/%d total=%.4f cycle=%.4f", cfg.variant, epoch, cfg.epochs,
                     last["total"], last["cycle_loss"])
    finally:
        if log_file is not None:
            log_file.close()
    ckpt.updates = [
        {"critic": t.critic_updates, "generator": t.generator_updates} for t in trainers
    ]
    model.eval()
    return ckpt


# checkpoint files -------------------------------------------------------

_PART_NAMES = ("G", "F", "D_X", "D_Y")


def save_checkpoint(ckpt: Checkpoint, run_dir: str | Path) -> Path:
    """Write one parameter blob per sub-model plus ``manifest.txt`` and ``history.csv``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    for s, stage in enumerate(ckpt.model.stages, start=1):
        for part in _PART_NAMES:
            torch.save(getattr(stage, part).state_dict(), run_dir / f"stage{s}_{part}.pt")
    lines = ["# dual-merged cycle-wgan checkpoint", ckpt.config.to_text().rstrip()]
    lines.append(f"epoch={ckpt.epoch}")
    lines.append(f"iterations={len(ckpt.history)}")
    if ckpt.history:
        last = ckpt.history[-1]
        lines += [f"final_{k}={last[k]!r}" for k in LOG_COLUMNS[1:]]
    (run_dir / "manifest.txt").write_text("\n".join(lines) + "\n")
    with open(run_dir / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in ckpt.history:
            w.writerow([row[c] if c == "iter" else repr(row[c]) for c in LOG_COLUMNS])
    return run_dir


def load_checkpoint(run_dir: str | Path) -> Checkpoint:
    run_dir = Path(run_dir)
    manifest = run_dir / "manifest.txt"
    if not manifest.is_file():
        raise FileNotFoundError(f"no checkpoint manifest in {run_dir}")
    values = parse_key_values(manifest.read_text())
    epoch = int(values.pop("epoch", 0))
    values.pop("iterations", None)
    for k in list(values):
        if k.startswith("final_"):
            values.pop(k)
    cfg = TrainConfig.from_mapping(values)
    model = build_model(cfg)
    for s, stage in enumerate(model.stages, start=1):
        for part in _PART_NAMES:
            state = torch.load(run_dir / f"stage{s}_{part}.pt", weights_only=True)
            getattr(stage, part).load_state_dict(state)
    model.eval()
    history = []
    hist_path = run_dir / "history.csv"
    if hist_path.is_file():
        with open(hist_path, newline="") as fh:
            for row in csv.DictReader(fh):
                history.append({k: (int(v) if k == "iter" else float(v)) for k, v in row.items()})
    return Checkpoint(model=model, config=cfg, epoch=epoch, history=history)


# evaluation -------------------------------------------------------------

CSV_COLUMNS = ["image_id", "ssim", "psnr_db", "snr_db", "enl"]


def denoise_all(model: DualMergedModel, images: Sequence[np.ndarray], batch_size: int = 16) -> list[np.ndarray]:
    """Denoise a list of images; batched when shapes allow, tiled otherwise."""
    model.eval()
    k = 2 ** model.max_depth
    out: list[np.ndarray | None] = [None] * len(images)
    dtype = next(model.parameters()).dtype
    groups: dict[tuple, list[int]] = {}
    for i, im in enumerate(images):
        groups.setdefault(np.shape(im), []).append(i)
    for shape, idx in groups.items():
        if shape[0] % k or shape[1] % k:
            for i in idx:
                out[i] = denoise_fullframe(model, images[i])
            continue
        for s in range(0, len(idx), batch_size):
            chunk = idx[s:s + batch_size]
            x = torch.as_tensor(np.stack([images[i] for i in chunk]), dtype=dtype)[:, None]
            _, _, clean2 = denoise_batch(model, x)
            for j, i in enumerate(chunk):
                out[i] = clean2[j, 0].to(torch.float64).numpy()
    return out


def _format(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.6f}"


def mean_report(reports: Sequence[metrics.MetricsReport]) -> metrics.MetricsReport:
    arr = np.array([r.as_row() for r in reports], dtype=np.float64)
    means = []
    for col in arr.T:
        finite = col[~np.isnan(col)]
        means.append(float(finite.mean()) if finite.size else math.nan)
    return metrics.MetricsReport(*means)


def write_metrics_csv(path: str | Path, ids: Sequence[str], reports: Sequence[metrics.MetricsReport],
                      mean: metrics.MetricsReport | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for image_id, r in zip(ids, reports):
            w.writerow([image_id] + [_format(v) for v in r.as_row()])
        if mean is not None:
            w.writerow(["mean"] + [_format(v) for v in mean.as_row()])


def score_images(outputs, references, background: RegionSpec,
                 ssim_params: metrics.SsimParams = metrics.SsimParams()) -> list[metrics.MetricsReport]:
    if len(outputs) != len(references):
        raise ValueError("need one reference per output image")
    for im in outputs:
        background.check_bounds(np.shape(im))
    return [metrics.report(o, r, background, ssim_params) for o, r in zip(outputs, references)]


def evaluate(
    checkpoint: Checkpoint | DualMergedModel,
    test_noisy: Sequence[np.ndarray],
    test_clean_refs: Sequence[np.ndarray],
    background: RegionSpec,
    csv_path: str | Path | None = None,
    ids: Sequence[str] | None = None,
    ssim_params: metrics.SsimParams = metrics.SsimParams(),
) -> metrics.MetricsReport:
    """Mean SSIM/PSNR against references and SNR/ENL of the denoised outputs."""
    model = checkpoint.model if isinstance(checkpoint, Checkpoint) else checkpoint
    for im in test_noisy:
        background.check_bounds(np.shape(im))
    outputs = denoise_all(model, test_noisy)
    reports = score_images(outputs, test_clean_refs, background, ssim_params)
    mean = mean_report(reports)
    if csv_path is not None:
        ids = list(ids) if ids is not None else [f"{i:05d}" for i in range(len(reports))]
        write_metrics_csv(csv_path, ids, reports, mean)
    return mean


# ablation ---------------------------------------------------------------

ABLATION_COLUMNS = ["variant", "ssim", "psnr_db", "snr_db", "enl"]


@dataclass
class AblationRow:
    variant: str
    mean: metrics.MetricsReport
    per_seed: dict[int, metrics.MetricsReport]


def run_ablation(
    base_config: TrainConfig,
    variants: Sequence[str],
    seeds: Sequence[int],
    train_noisy: Sequence[np.ndarray],
    train_clean: Sequence[np.ndarray],
    test_noisy: Sequence[np.ndarray],
    test_clean: Sequence[np.ndarray],
    background: RegionSpec,
    out_dir: str | Path | None = None,
) -> list[AblationRow]:
    """Train every (variant, seed) and score all on the same test split."""
    if not variants or not seeds:
        raise ValueError("need at least one variant and one seed")
    rows = []
    for variant in variants:
        per_seed = {}
        for seed in seeds:
            cfg = dataclasses.replace(base_config, variant=variant, seed=int(seed))
            run_dir = Path(out_dir) / f"{variant}-seed{seed}" if out_dir is not None else None
            ckpt = train(cfg, train_noisy, train_clean,
                         log_path=run_dir / "train_log.csv" if run_dir else None)
            csv_path = run_dir / "metrics.csv" if run_dir else None
            per_seed[int(seed)] = evaluate(ckpt, test_noisy, test_clean, background, csv_path)
            if run_dir is not None:
                save_checkpoint(ckpt, run_dir)
            log.info("ablation %s seed %d: %s", variant, seed, per_seed[int(seed)])
        rows.append(AblationRow(variant, mean_report(list(per_seed.values())), per_seed))
    if out_dir is not None:
        write_ablation_csv(Path(out_dir) / "ablation.csv", rows)
    return rows


def write_ablation_csv(path: str | Path, rows: Sequence[AblationRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ABLATION_COLUMNS)
        for row in rows:
            w.writerow([row.variant] + [_format(v) for v in row.mean.as_row()])
