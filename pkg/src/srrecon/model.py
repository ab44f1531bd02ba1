"""Unrolled super-resolution reconstruction network, pyramid-pooling
discriminator, WGAN-GP losses, and the training loop.

Each of the K unrolled blocks applies a learned residual refinement
s = conv_stack(x) + alpha * x followed by a data-consistency step
x = s - gamma * A*(A s - y); alpha and gamma are learnable scalars
initialized to 1.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad, no_grad, tensor, to_channels, to_complex
from .checkpoint import load_checkpoint, save_checkpoint
from .grid import ComplexGrid
from .masks import SamplingMask
from .nn import Params, avg_pool, conv, dense, he_init
from .operators import ForwardModel, SensitivitySet, adjoint, forward, normal
from .optim import AdamState, adam_step, exp_decay_lr
from .phantom import Dataset, load_record


class TrainingDiverged(Exception):
    """Non-finite loss; the last good checkpoint path is attached."""

    def __init__(self, step, last_checkpoint):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.last_checkpoint = last_checkpoint


@dataclass
class GeneratorConfig:
    n_blocks: int = 4
    hidden: int = 32
    kernel: tuple = (3, 3)
    slope: float = 0.01

    def __post_init__(self):
        self.kernel = tuple(self.kernel)
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")


@dataclass
class DiscConfig:
    in_ch: int = 2
    trunk: tuple = (16, 16)
    pyramid: tuple = (1, 2, 4)
    pyr_ch: int = 8
    kernel: tuple = (3, 3)
    slope: float = 0.01
    input_dims: tuple = (64, 64)

    def __post_init__(self):
        self.trunk = tuple(self.trunk)
        self.pyramid = tuple(self.pyramid)
        self.kernel = tuple(self.kernel)
        self.input_dims = tuple(self.input_dims)


@dataclass
class GanConfig:
    lam: float = 10.0
    eta_gan: float = 100.0
    n_disc: int = 1
    lr: float = 1e-3
    decay: float = 0.95
    epochs: int = 10
    batch_size: int = 1
    max_steps: int | None = None

    def __post_init__(self):
        if self.lam < 0 or self.eta_gan < 0:
            raise ValueError("lam and eta_gan must be >= 0")


def init_generator(cfg: GeneratorConfig, seed: int = 0) -> Params:
    rng = np.random.default_rng(seed)
    p = Params()
    k = cfg.kernel
    kn = int(np.prod(k))
    for i in range(cfg.n_blocks):
        p.add_param(f"blk{i}/w1", he_init(rng, (cfg.hidden, 2, *k), 2 * kn))
        p.add_param(f"blk{i}/b1", np.zeros(cfg.hidden))
        p.add_param(f"blk{i}/w2", he_init(rng, (cfg.hidden, cfg.hidden, *k), cfg.hidden * kn))
        p.add_param(f"blk{i}/b2", np.zeros(cfg.hidden))
        # small output-layer init keeps early iterates close to Landweber
        p.add_param(f"blk{i}/w3", he_init(rng, (2, cfg.hidden, *k), cfg.hidden * kn, scale=0.1))
        p.add_param(f"blk{i}/b3", np.zeros(2))
        p.add_param(f"blk{i}/alpha", np.float64(1.0))
        p.add_param(f"blk{i}/gamma", np.float64(1.0))
    return p


def generator_param_count(cfg: GeneratorConfig) -> int:
    kn = int(np.prod(cfg.kernel))
    per_block = (
        cfg.hidden * 2 * kn + cfg.hidden
        + cfg.hidden * cfg.hidden * kn + cfg.hidden
        + 2 * cfg.hidden * kn + 2
        + 2  # alpha, gamma
    )
    return cfg.n_blocks * per_block


def _conv_stack(params: Params, cfg: GeneratorConfig, i: int, x: Tensor) -> Tensor:
    h = ad.leaky_relu(conv(x, params[f"blk{i}/w1"], params[f"blk{i}/b1"]), cfg.slope)
    h = ad.leaky_relu(conv(h, params[f"blk{i}/w2"], params[f"blk{i}/b2"]), cfg.slope)
    return conv(h, params[f"blk{i}/w3"], params[f"blk{i}/b3"])


def _normal_2ch(model: ForwardModel):
    def apply(v):
        return to_channels(normal(model, to_complex(v)))

    return apply


def srr_forward(
    params: Params,
    cfg: GeneratorConfig,
    model: ForwardModel,
    y: np.ndarray,
    collect: bool = False,
):
    """Run the unrolled network; returns the 2-channel output Tensor
    (and per-block iterates when ``collect``)."""
    adj = to_channels(adjoint(model, y))
    x = tensor(adj)
    c = tensor(adj)  # A* y, the constant data term of the DC step
    nop = _normal_2ch(model)
    iterates = [to_complex(x.value)]
    for i in range(cfg.n_blocks):
        s = ad.add(_conv_stack(params, cfg, i, x), ad.mul(params[f"blk{i}/alpha"], x))
        resid = ad.sub(ad.linear_selfadjoint(s, nop), c)
        x = ad.sub(s, ad.mul(params[f"blk{i}/gamma"], resid))
        if not np.all(np.isfinite(x.value)):
            raise FloatingPointError(f"non-finite iterate after block {i}")
        if collect:
            iterates.append(to_complex(x.value))
    if collect:
        return x, iterates
    return x


def init_discriminator(cfg: DiscConfig, seed: int = 0) -> Params:
    rng = np.random.default_rng(seed)
    p = Params()
    k = cfg.kernel
    kn = int(np.prod(k))
    c_prev = cfg.in_ch
    for i, c in enumerate(cfg.trunk):
        p.add_param(f"trunk{i}/w", he_init(rng, (c, c_prev, *k), c_prev * kn))
        p.add_param(f"trunk{i}/b", np.zeros(c))
        c_prev = c
    feat_sizes = []
    H, W = cfg.input_dims
    for j, f in enumerate(cfg.pyramid):
        p.add_param(f"pyr{j}/w", he_init(rng, (cfg.pyr_ch, c_prev, *k), c_prev * kn))
        p.add_param(f"pyr{j}/b", np.zeros(cfg.pyr_ch))
        feat_sizes.append(cfg.pyr_ch * (-(-H // f)) * (-(-W // f)))
    n_feat = sum(feat_sizes)
    p.add_param("head/w", he_init(rng, (1, n_feat), n_feat))
    p.add_param("head/b", np.zeros(1))
    return p


def discriminator_forward(dparams: Params, cfg: DiscConfig, x) -> Tensor:
    """Scalar critic score; differentiable in input and parameters."""
    h = tensor(x)
    if h.value.shape != (cfg.in_ch, *cfg.input_dims):
        raise ValueError(
            f"discriminator input {h.value.shape} != {(cfg.in_ch, *cfg.input_dims)}"
        )
    for i in range(len(cfg.trunk)):
        h = ad.leaky_relu(conv(h, dparams[f"trunk{i}/w"], dparams[f"trunk{i}/b"]), cfg.slope)
    branches = []
    for j, f in enumerate(cfg.pyramid):
        p = avg_pool(h, f)
        p = ad.leaky_relu(conv(p, dparams[f"pyr{j}/w"], dparams[f"pyr{j}/b"]), cfg.slope)
        branches.append(p)
    flat = ad.concat_flat(branches)
    score = dense(flat, dparams["head/w"], dparams["head/b"])
    return ad.reshape(score, ())


def gradient_penalty(
    dparams: Params, cfg: DiscConfig, x_hat: np.ndarray, lam: float
) -> Tensor:
    """lam * (||grad_x D(x_hat)||_2 - 1)^2, taped for double-backward."""
    leaf = ad.parameter(x_hat)
    score = discriminator_forward(dparams, cfg, leaf)
    gx = grad(score, leaf, create_graph=True)
    norm = ad.l2_norm(gx)
    return ad.mul(tensor(np.float64(lam)), ad.square(ad.sub(norm, tensor(np.float64(1.0)))))


def loss_discriminator(
    dparams: Params,
    cfg: DiscConfig,
    x_real: np.ndarray,
    x_fake: np.ndarray,
    lam: float,
    eps_interp: float,
) -> Tensor:
    """E[D(fake)] - E[D(real)] + gradient penalty at the interpolate."""
    if x_real.shape != x_fake.shape:
        raise ValueError("real/fake shape mismatch")
    if not 0.0 <= eps_interp <= 1.0:
        raise ValueError("eps_interp must be in [0, 1]")
    x_hat = eps_interp * x_real + (1.0 - eps_interp) * x_fake
    d_fake = discriminator_forward(dparams, cfg, x_fake)
    d_real = discriminator_forward(dparams, cfg, x_real)
    return ad.add(ad.sub(d_fake, d_real), gradient_penalty(dparams, cfg, x_hat, lam))


def loss_generator(
    dparams: Params | None,
    cfg: DiscConfig | None,
    x_real,
    x_fake,
    eta_gan: float,
) -> Tensor:
    """-E[D(fake)] + eta_gan * E[||real - fake||^2] over the channels."""
    l2 = ad.mse(tensor(x_real), tensor(x_fake))
    if dparams is None:
        return ad.mul(tensor(np.float64(eta_gan)), l2)
    adv = ad.neg(discriminator_forward(dparams, cfg, x_fake))
    return ad.add(adv, ad.mul(tensor(np.float64(eta_gan)), l2))


# ---------------------------------------------------------------------------
# training / inference


def _record_model(truth, sens, y, mask) -> ForwardModel:
    return ForwardModel(mask.sampled, mask.dims, truth.dims, sens)


def evaluate_l2(params: Params, cfg: GeneratorConfig, records) -> float:
    """Mean channelwise squared error over records (no tape)."""
    total = 0.0
    with no_grad():
        for truth, sens, y, mask in records:
            model = _record_model(truth, sens, y, mask)
            out = srr_forward(params, cfg, model, y.data)
            diff = out.value - to_channels(truth.data)
            total += float(np.mean(diff**2))
    return total / len(records)


def train(
    dataset: Dataset,
    gen_cfg: GeneratorConfig,
    gan_cfg: GanConfig,
    adversarial: bool,
    seed: int,
    out_dir: str,
):
    """Train the unrolled network; writes per-step JSONL logs and
    per-epoch checkpoints. Fully reproducible from the seed.

    Returns (params, dparams-or-None, final checkpoint path, log path).
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = [load_record(r) for r in dataset.split("train")]
    if not records:
        raise ValueError("dataset has no training records")
    hr_dims = records[0][0].dims

    params = init_generator(gen_cfg, seed=seed)
    disc_cfg = DiscConfig(input_dims=hr_dims)
    dparams = init_discriminator(disc_cfg, seed=seed + 1) if adversarial else None

    g_state, d_state = AdamState(), AdamState()
    log_path = os.path.join(out_dir, "train_log.jsonl")
    ckpt_cfg = {"generator": asdict(gen_cfg), "gan": asdict(gan_cfg), "adversarial": adversarial}

    def save(tag):
        path = os.path.join(out_dir, f"ckpt_{tag}.srrckpt")
        values = params.values_dict()
        if dparams is not None:
            values.update({f"disc/{k}": v for k, v in dparams.values_dict().items()})
        save_checkpoint(path, values, ckpt_cfg)
        return path

    last_ckpt = save("init")
    step = 0
    log = open(log_path, "w", encoding="utf-8")
    try:
        for epoch in range(gan_cfg.epochs):
            lr = exp_decay_lr(gan_cfg.lr, gan_cfg.decay, epoch)
            order = rng.permutation(len(records))
            for idx in order:
                truth, sens, y, mask = records[idx]
                model = _record_model(truth, sens, y, mask)
                truth_ch = to_channels(truth.data)

                loss_d_val = 0.0
                if adversarial:
                    with no_grad():
                        fake = srr_forward(params, gen_cfg, model, y.data).value
                    for _ in range(gan_cfg.n_disc):
                        eps = float(rng.uniform())
                        ld = loss_discriminator(
                            dparams, disc_cfg, truth_ch, fake, gan_cfg.lam, eps
                        )
                        loss_d_val = ld.item()
                        dgrads = grad(ld, dparams.tensors())
                        adam_step(
                            dparams,
                            {k: g.value for k, g in zip(dparams.names(), dgrads)},
                            d_state,
                            lr,
                        )

                out = srr_forward(params, gen_cfg, model, y.data)
                lg = loss_generator(
                    dparams if adversarial else None,
                    disc_cfg if adversarial else None,
                    truth_ch,
                    out,
                    gan_cfg.eta_gan,
                )
                loss_g_val = lg.item()
                if not (np.isfinite(loss_g_val) and np.isfinite(loss_d_val)):
                    raise TrainingDiverged(step, last_ckpt)
                ggrads = grad(lg, params.tensors())
                adam_step(
                    params,
                    {k: g.value for k, g in zip(params.names(), ggrads)},
                    g_state,
                    lr,
                )
                with no_grad():
                    fid = 0.5 * float(
                        np.sum(np.abs(forward(model, to_complex(out.value)) - y.data) ** 2)
                    )
                log.write(
                    json.dumps(
                        {
                            "step": step,
                            "epoch": epoch,
                            "loss_g": loss_g_val,
                            "loss_d": loss_d_val,
                            "fidelity": fid,
                            "lr": lr,
                        }
                    )
                    + "\n"
                )
                step += 1
                if gan_cfg.max_steps is not None and step >= gan_cfg.max_steps:
                    break
            last_ckpt = save(f"epoch{epoch:03d}")
            if gan_cfg.max_steps is not None and step >= gan_cfg.max_steps:
                break
    finally:
        log.close()
    final = save("final")
    return params, dparams, final, log_path


def load_generator(ckpt_path: str):
    """Rebuild generator params (and config) from a checkpoint."""
    values, cfg = load_checkpoint(ckpt_path)
    gen_cfg = GeneratorConfig(**cfg.get("generator", {}))
    params = init_generator(gen_cfg, seed=0)
    params.load_values({k: v for k, v in values.items() if not k.startswith("disc/")})
    return params, gen_cfg


def infer(
    ckpt_path: str,
    y: ComplexGrid,
    mask: SamplingMask,
    sens: SensitivitySet,
    hr_dims,
) -> ComplexGrid:
    """Reconstruct with trained parameters; no tape is recorded."""
    params, gen_cfg = load_generator(ckpt_path)
    model = ForwardModel(mask.sampled, mask.dims, tuple(hr_dims), sens)
    with no_grad():
        out = srr_forward(params, gen_cfg, model, y.data)
    return ComplexGrid(to_complex(out.value), domain="image")
