"""Conditional denoising diffusion for answer images.

A small UNet predicts the noise added to the answer image.  The initial
scene image is conditioning via channel concatenation; the guidance
context conditions every resolution level through cross-attention.
Sampling supports the full stochastic reverse process and the
deterministic variant (eta = 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .guidance import sinusoidal_embedding


class BadRange(ValueError):
    pass


class UntrainedModel(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta schedule with precomputed cumulative products."""

    steps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self) -> None:
        if self.steps < 2:
            raise BadRange("need at least 2 steps")
        if not (0.0 < self.beta_start <= self.beta_end < 1.0):
            raise BadRange("betas must satisfy 0 < start <= end < 1")

    @property
    def betas(self) -> torch.Tensor:
        return torch.linspace(self.beta_start, self.beta_end, self.steps, dtype=torch.float64)

    @property
    def alphas(self) -> torch.Tensor:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> torch.Tensor:
        return torch.cumprod(self.alphas, dim=0)


def q_sample(
    schedule: NoiseSchedule, x0: torch.Tensor, t: torch.Tensor, noise: torch.Tensor
) -> torch.Tensor:
    """Forward-process sample x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps."""
    if t.min() < 0 or t.max() >= schedule.steps:
        raise BadRange(f"t out of range [0, {schedule.steps})")
    abar = schedule.alpha_bars.to(x0.dtype)[t].view(-1, *([1] * (x0.dim() - 1)))
    return abar.sqrt() * x0 + (1.0 - abar).sqrt() * noise


class CrossAttentionBlock(nn.Module):
    """Spatial tokens attend to the guidance context, residual."""

    def __init__(self, channels: int, dim_ctx: int, heads: int = 4):
        super().__init__()
        self.norm = nn.GroupNorm(min(8, channels), channels)
        self.attn = nn.MultiheadAttention(
            channels, heads, kdim=dim_ctx, vdim=dim_ctx, batch_first=True
        )

    def forward(
        self, x: torch.Tensor, ctx: torch.Tensor, ctx_pad_mask: torch.Tensor | None
    ) -> torch.Tensor:
        b, c, h, w = x.shape
        q = self.norm(x).flatten(2).transpose(1, 2)  # (B, hw, C)
        out, _ = self.attn(q, ctx, ctx, key_padding_mask=ctx_pad_mask, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.norm1 = nn.GroupNorm(min(8, c_in), c_in)
        self.norm2 = nn.GroupNorm(min(8, c_out), c_out)
        self.time_proj = nn.Linear(time_dim, c_out)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


@dataclass(frozen=True)
class DenoiserConfig:
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 4)
    dim_ctx: int = 96
    attn_heads: int = 4
    image_channels: int = 3


class ConditionalDenoiser(nn.Module):
    """UNet epsilon-predictor.

    Input channels are the noisy answer image concatenated with the
    clean initial image; every down/up level carries a cross-attention
    block over the guidance context.
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        c0 = cfg.base_channels
        time_dim = 4 * c0
        self.time_mlp = nn.Sequential(nn.Linear(c0, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim))

        chans = [c0 * m for m in cfg.channel_mults]
        self.stem = nn.Conv2d(2 * cfg.image_channels, chans[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        prev = chans[0]
        for i, c in enumerate(chans):
            self.down_blocks.append(ResBlock(prev, c, time_dim))
            self.down_attn.append(CrossAttentionBlock(c, cfg.dim_ctx, cfg.attn_heads))
            self.downsamples.append(
                nn.Conv2d(c, c, 3, stride=2, padding=1) if i < len(chans) - 1 else nn.Identity()
            )
            prev = c

        self.mid_block = ResBlock(prev, prev, time_dim)
        self.mid_attn = CrossAttentionBlock(prev, cfg.dim_ctx, cfg.attn_heads)

        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i, c in reversed(list(enumerate(chans))):
            self.up_blocks.append(ResBlock(prev + c, c, time_dim))
            self.up_attn.append(CrossAttentionBlock(c, cfg.dim_ctx, cfg.attn_heads))
            self.upsamples.append(
                nn.ConvTranspose2d(c, c, 4, stride=2, padding=1) if i > 0 else nn.Identity()
            )
            prev = c

        self.head = nn.Sequential(
            nn.GroupNorm(min(8, chans[0]), chans[0]),
            nn.SiLU(),
            nn.Conv2d(chans[0], cfg.image_channels, 3, padding=1),
        )

    def forward(
        self,
        x_t: torch.Tensor,
        init_image: torch.Tensor,
        t: torch.Tensor,
        ctx: torch.Tensor,
        ctx_pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if x_t.shape != init_image.shape:
            raise ValueError("noisy image and init image shapes differ")
        temb = self.time_mlp(sinusoidal_embedding(t, self.cfg.base_channels).to(x_t.dtype))
        h = self.stem(torch.cat([x_t, init_image], dim=1))

        skips = []
        for block, attn, down in zip(self.down_blocks, self.down_attn, self.downsamples):
            h = attn(block(h, temb), ctx, ctx_pad_mask)
            skips.append(h)
            h = down(h)

        h = self.mid_attn(self.mid_block(h, temb), ctx, ctx_pad_mask)

        for block, attn, up in zip(self.up_blocks, self.up_attn, self.upsamples):
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
            h = up(attn(h, ctx, ctx_pad_mask))

        return self.head(h)


def diffusion_loss(
    model: ConditionalDenoiser,
    schedule: NoiseSchedule,
    x0: torch.Tensor,
    init_image: torch.Tensor,
    ctx: torch.Tensor,
    ctx_pad_mask: torch.Tensor | None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Simple epsilon-MSE objective with uniformly drawn timesteps."""
    b = x0.shape[0]
    t = torch.randint(0, schedule.steps, (b,), generator=generator, device=x0.device)
    noise = torch.randn(x0.shape, generator=generator, device=x0.device, dtype=x0.dtype)
    x_t = q_sample(schedule, x0, t, noise)
    pred = model(x_t, init_image, t, ctx, ctx_pad_mask)
    return F.mse_loss(pred, noise)


@torch.no_grad()
def sample(
    model: ConditionalDenoiser,
    schedule: NoiseSchedule,
    init_image: torch.Tensor,
    ctx: torch.Tensor,
    ctx_pad_mask: torch.Tensor | None = None,
    seed: int = 0,
    eta: float = 0.0,
    num_steps: int | None = None,
) -> torch.Tensor:
    """Reverse-process sampling; deterministic given the seed.

    eta = 0 gives the deterministic reverse update; eta = 1 recovers the
    ancestral sampler.  ``num_steps`` (<= schedule.steps) selects an
    evenly strided subsequence of timesteps.
    """
    if not (0.0 <= eta <= 1.0):
        raise BadRange("eta must be in [0, 1]")
    was_training = model.training
    model.eval()
    try:
        b = init_image.shape[0]
        device = init_image.device
        gen = torch.Generator(device="cpu").manual_seed(seed)
        x = torch.randn(init_image.shape, generator=gen).to(device)

        num_steps = num_steps or schedule.steps
        if not (2 <= num_steps <= schedule.steps):
            raise BadRange(f"num_steps must be in [2, {schedule.steps}]")
        ts = torch.linspace(schedule.steps - 1, 0, num_steps).round().long().unique(sorted=True)
        ts = ts.flip(0).tolist()
        abar = schedule.alpha_bars.to(torch.float32)

        for i, t in enumerate(ts):
            t_batch = torch.full((b,), t, dtype=torch.long, device=device)
            eps = model(x, init_image, t_batch, ctx, ctx_pad_mask)
            a_t = abar[t]
            a_prev = abar[ts[i + 1]] if i + 1 < len(ts) else torch.tensor(1.0)
            x0_hat = (x - (1 - a_t).sqrt() * eps) / a_t.sqrt()
            x0_hat = x0_hat.clamp(-1.0, 1.0)
            # keep the noise direction consistent with the clamped estimate
            eps = (x - a_t.sqrt() * x0_hat) / (1 - a_t).sqrt()
            sigma = eta * ((1 - a_prev) / (1 - a_t) * (1 - a_t / a_prev)).sqrt()
            dir_xt = (1 - a_prev - sigma**2).clamp(min=0.0).sqrt() * eps
            x = a_prev.sqrt() * x0_hat + dir_xt
            if eta > 0 and i + 1 < len(ts):
                x = x + sigma * torch.randn(x.shape, generator=gen).to(device)
        return x
    finally:
        if was_training:
            model.train()
