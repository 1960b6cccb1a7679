"""GAN and WGAN training over encoded corpora, plus seed synthesis."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import nn
from .corpus import Provenance, Testcase
from .encoding import EncodedBatch, batches, decode

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class GanSpec:
    """Generator and critic shapes.

    Defaults follow the reference architecture: four 1024-wide hidden layers
    and a tanh head for the generator, two 256-wide LeakyReLU layers and a
    scalar head for the critic.
    """

    output_size: int
    noise_dim: int = 100
    gen_hidden: tuple[int, ...] = (1024, 1024, 1024, 1024)
    critic_hidden: tuple[int, ...] = (256, 256)
    gen_activation: str = "relu"
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.output_size < 1 or self.noise_dim < 1:
            raise ValueError("output_size and noise_dim must be positive")
        if self.gen_activation not in ("relu", "leaky_relu"):
            raise ValueError("gen_activation must be 'relu' or 'leaky_relu'")
        object.__setattr__(self, "gen_hidden", tuple(self.gen_hidden))
        object.__setattr__(self, "critic_hidden", tuple(self.critic_hidden))

    def build_generator(self, rng) -> nn.MLP:
        hidden = nn.Activation(self.gen_activation, self.leaky_slope)
        sizes = [self.noise_dim, *self.gen_hidden, self.output_size]
        acts = [hidden] * len(self.gen_hidden) + [nn.TANH]
        return nn.init_mlp(sizes, acts, rng)

    def build_critic(self, rng) -> nn.MLP:
        hidden = nn.Activation("leaky_relu", self.leaky_slope)
        sizes = [self.output_size, *self.critic_hidden, 1]
        acts = [hidden] * len(self.critic_hidden) + [nn.IDENTITY]
        return nn.init_mlp(sizes, acts, rng)

    def to_json(self) -> dict:
        d = asdict(self)
        d["gen_hidden"] = list(self.gen_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    n_critic: int = 5
    clip_value: float = 0.01
    lr: float = 5e-5
    lr_step: int = 100
    lr_gamma: float = 0.5
    label_smoothing: float = 0.1
    real_noise_std: float = 0.1
    non_saturating: bool = False
    checkpoint_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.n_critic < 1 or self.checkpoint_every < 1:
            raise ValueError("epochs, batch_size, n_critic and checkpoint_every must be positive")
        if self.clip_value <= 0 or self.lr <= 0:
            raise ValueError("clip_value and lr must be positive")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ValueError("label_smoothing must lie in [0, 0.5)")
        if self.real_noise_std < 0:
            raise ValueError("real_noise_std must be non-negative")
        nn.StepLR(self.lr, self.lr_step, self.lr_gamma)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss_g: float
    loss_d: float
    lr: float
    seconds: float = field(compare=False)


@dataclass
class TrainingLog:
    kind: str
    records: list[EpochRecord] = field(default_factory=list)
    critic_updates: int = 0
    generator_updates: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss_g", "loss_d", "lr", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.loss_g), repr(r.loss_d), repr(r.lr), f"{r.seconds:.4f}"])

    @property
    def total_seconds(self) -> float:
        return sum(r.seconds for r in self.records)


@dataclass
class Checkpoint:
    id: str
    kind: str
    epoch: int
    generator: nn.MLP
    spec: GanSpec
    rng_state: dict = field(default_factory=dict)

    def save(self, path) -> Path:
        extra = {
            "id": self.id,
            "kind": self.kind,
            "epoch": self.epoch,
            "spec": self.spec.to_json(),
            "rng_state": self.rng_state,
        }
        return nn.save_mlp(self.generator, path, extra)

    @classmethod
    def load(cls, path) -> Checkpoint:
        net, extra = nn.load_mlp(path)
        spec = GanSpec(**extra["spec"])
        if net.in_features != spec.noise_dim or net.out_features != spec.output_size:
            raise ValueError(f"{path}: generator shape does not match stored spec")
        return cls(extra["id"], extra["kind"], extra["epoch"], net, spec, extra["rng_state"])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.spec.noise_dim))
        return nn.forward(self.generator, z)[0]


@dataclass
class TrainState:
    """Live view handed to training hooks."""

    generator: nn.MLP
    critic: nn.MLP
    epoch: int = 0
    critic_updates: int = 0
    generator_updates: int = 0


Hook = Callable[[str, TrainState], None]


def _rows(dataset) -> np.ndarray:
    rows = dataset.rows if isinstance(dataset, EncodedBatch) else np.asarray(dataset, dtype=np.float64)
    if rows.ndim != 2 or len(rows) == 0:
        raise ValueError("dataset must be a non-empty 2-D array")
    return rows


def _check_spec(rows, spec):
    if rows.shape[1] != spec.output_size:
        raise ValueError(f"generator output width {spec.output_size} != data width {rows.shape[1]}")


def _finite(value, what, epoch):
    if not np.isfinite(value):
        raise TrainingDiverged(f"{what} became {value} in epoch {epoch}; lower lr or check the data")


def _bce_logits(s, target):
    # -t*log(sigmoid(s)) - (1-t)*log(1-sigmoid(s))
    return np.logaddexp(0.0, s) - target * s


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _train(kind: str, dataset, spec: GanSpec, cfg: TrainConfig, hook: Hook | None):
    rows = _rows(dataset)
    _check_spec(rows, spec)
    rng = np.random.default_rng(cfg.seed)
    G = spec.build_generator(rng)
    D = spec.build_critic(rng)
    opt_g = nn.RMSProp(cfg.lr)
    opt_d = nn.RMSProp(cfg.lr)
    sched = nn.StepLR(cfg.lr, cfg.lr_step, cfg.lr_gamma)
    state = TrainState(G, D)
    tlog = TrainingLog(kind)
    checkpoints: list[Checkpoint] = []
    eps = cfg.label_smoothing

    for epoch in range(cfg.epochs):
        state.epoch = epoch
        lr = sched.lr_at(epoch)
        opt_g.lr = opt_d.lr = lr
        t0 = time.perf_counter()
        d_losses, g_losses = [], []
        for real in batches(rows, cfg.batch_size, rng):
            B = len(real)
            z = rng.standard_normal((B, spec.noise_dim))
            fake = nn.forward(G, z)[0]
            if kind == "wgan":
                s, cache = nn.forward(D, np.vstack([fake, real]))
                loss_d = s[:B].mean() - s[B:].mean()
                dy = np.concatenate([np.full((B, 1), 1.0 / B), np.full((B, 1), -1.0 / B)])
            else:
                noisy = real + cfg.real_noise_std * rng.standard_normal(real.shape) if cfg.real_noise_std else real
                s, cache = nn.forward(D, np.vstack([fake, noisy]))
                target = np.concatenate([np.zeros((B, 1)), np.full((B, 1), 1.0 - eps)])
                per = _bce_logits(s, target)
                loss_d = per[:B].mean() + per[B:].mean()
                dy = (_sigmoid(s) - target) / B
            _finite(loss_d, "critic loss", epoch)
            grads, _ = nn.backward(D, cache, dy)
            opt_d.step(D.params(), grads)
            if kind == "wgan":
                nn.clip_weights(D, cfg.clip_value)
            state.critic_updates += 1
            d_losses.append(float(loss_d))
            stepped = kind == "gan" or state.critic_updates % cfg.n_critic == 0
            if stepped:
                g_losses.append(_generator_step(kind, G, D, opt_g, spec, cfg, rng, epoch))
                state.generator_updates += 1
            # hooks run after the due generator step so counters are consistent
            if hook:
                hook("critic", state)
                if stepped:
                    hook("generator", state)

        if not g_losses:
            # epoch shorter than n_critic batches: report the current objective
            z = rng.standard_normal((cfg.batch_size, spec.noise_dim))
            s = nn.forward(D, nn.forward(G, z)[0])[0]
            g_losses.append(float(-s.mean()))
        rec = EpochRecord(epoch + 1, float(np.mean(g_losses)), float(np.mean(d_losses)), lr, time.perf_counter() - t0)
        tlog.records.append(rec)
        tlog.critic_updates = state.critic_updates
        tlog.generator_updates = state.generator_updates
        if (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs:
            checkpoints.append(
                Checkpoint(f"{kind}-e{epoch + 1:04d}", kind, epoch + 1, G.copy(), spec, _rng_state(rng))
            )
        if hook:
            hook("epoch", state)
        log.debug("%s epoch %d loss_g=%.5f loss_d=%.5f", kind, epoch + 1, rec.loss_g, rec.loss_d)
    return checkpoints, tlog


def _generator_step(kind, G, D, opt_g, spec, cfg, rng, epoch) -> float:
    B = cfg.batch_size
    z = rng.standard_normal((B, spec.noise_dim))
    fake, gcache = nn.forward(G, z)
    s, dcache = nn.forward(D, fake)
    if kind == "wgan":
        loss = -s.mean()
        ds = np.full_like(s, -1.0 / B)
    elif cfg.non_saturating:
        loss = np.logaddexp(0.0, -s).mean()
        ds = (_sigmoid(s) - 1.0) / B
    else:
        loss = -np.logaddexp(0.0, s).mean()  # mean log(1 - D(G(z)))
        ds = -_sigmoid(s) / B
    _finite(loss, "generator loss", epoch)
    _, dx = nn.backward(D, dcache, ds)
    grads, _ = nn.backward(G, gcache, dx)
    opt_g.step(G.params(), grads)
    return float(loss)


def _rng_state(rng) -> dict:
    st = rng.bit_generator.state
    return {"bit_generator": st["bit_generator"], "state": {k: int(v) for k, v in st["state"].items()},
            "has_uint32": int(st["has_uint32"]), "uinteger": int(st["uinteger"])}


def train_wgan(dataset, spec: GanSpec, cfg: TrainConfig = TrainConfig(), hook: Hook | None = None):
    """Critic minimises E_fake[f] - E_real[f] with clipping after every step;
    the generator minimises -E_fake[f] once per ``n_critic`` critic steps."""
    return _train("wgan", dataset, spec, cfg, hook)


def train_gan(dataset, spec: GanSpec, cfg: TrainConfig = TrainConfig(), hook: Hook | None = None):
    """Binary cross-entropy GAN with smoothed real labels and noisy real rows."""
    return _train("gan", dataset, spec, cfg, hook)


def wgan_critic_loss(critic: nn.MLP, fake, real) -> float:
    return float(critic(np.asarray(fake)).mean() - critic(np.asarray(real)).mean())


def gan_discriminator_loss(critic: nn.MLP, fake, real, label_smoothing: float = 0.0) -> float:
    s_f = critic(np.asarray(fake))
    s_r = critic(np.asarray(real))
    return float(_bce_logits(s_f, 0.0).mean() + _bce_logits(s_r, 1.0 - label_smoothing).mean())


def generate_seeds(ckpt: Checkpoint, n: int, min_len: int = 1, seed: int = 0) -> list[Testcase]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = ckpt.sample(n, np.random.default_rng(seed))
    prov = Provenance.generated(ckpt.id)
    return [Testcase(decode(r, min_len), id=f"g{i:06d}", provenance=prov, created_at=i) for i, r in enumerate(rows)]


@dataclass(frozen=True)
class GeneratorScore:
    checkpoint: Checkpoint
    score: float
    acceptance: float
    distinct: float


def score_generator(ckpt: Checkpoint, validator, n: int = 64, weights=(0.7, 0.3), seed: int = 0, min_len: int = 1) -> GeneratorScore:
    seeds = [tc.data for tc in generate_seeds(ckpt, n, min_len, seed)]
    acceptance = sum(1 for s in seeds if validator(s)) / n
    distinct = len(set(seeds)) / n
    return GeneratorScore(ckpt, weights[0] * acceptance + weights[1] * distinct, acceptance, distinct)


def select_generators(checkpoints, validator, n: int = 64, weights=(0.7, 0.3), seed: int = 0) -> list[GeneratorScore]:
    """Rank checkpoints by validator acceptance and sample diversity (best first)."""
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise ValueError("no checkpoints to select from")
    scored = [score_generator(c, validator, n, weights, seed) for c in checkpoints]
    # ties go to the later (longer-trained) checkpoint
    return sorted(scored, key=lambda g: (-g.score, -g.checkpoint.epoch))


def empirical_w1(a, b) -> float:
    """1-D Wasserstein-1 distance between two equal-size samples."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if len(a) != len(b):
        raise ValueError(f"sample sizes differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("empty samples")
    return float(np.abs(a - b).mean())


def mode_coverage(samples, modes, radius: float, min_fraction: float = 0.05) -> float:
    """Fraction of ``modes`` holding at least ``min_fraction`` of the samples within ``radius``."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if len(x) == 0:
        return 0.0
    hit = [np.mean(np.abs(x - m) <= radius) >= min_fraction for m in modes]
    return float(np.mean(hit))


def save_checkpoints(checkpoints, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [c.save(outdir / f"{c.id}.ckpt") for c in checkpoints]
