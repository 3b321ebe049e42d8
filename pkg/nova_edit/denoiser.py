"""
Dual-branch denoising transformer.

Videos are cut into pixel patches and embedded by a fixed linear codec into
token grids of width d. Three stacks of transformer blocks run side by side:

  - the main branch denoises the noisy target tokens z;
  - the sparse branch reads the (degraded or edited) reference and adds a
    per-layer hint S, through a zero-initialized projection;
  - the dense branch reads the clean source and is queried by the main
    branch through a per-layer cross-attention D with a zero-initialized
    output projection.

After main block l:  z <- block_l(z, t);  z <- z + S_l + D_l.
At initialization S and D are exactly zero, so the model behaves as the
bare main branch.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass, fields
from typing import Iterator
import math

import numpy as np
import torch
from torch import Tensor, nn

from nova_edit import cst
from nova_edit.core import ConfigError, DataError, NumericError, ShapeMismatch, Video
from nova_edit.rng import Rng


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the denoiser; also fixes the video shape it accepts."""

    height: int = 16
    width: int = 16
    frames: int = 17
    channels: int = 3
    patch: int = 4
    tpatch: int = 1
    dim: int = 64
    layers: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    hint: str = "additive"  # or "cross": hint attends from z to the sparse tokens
    dense: str = "copy"  # or "shared": dense branch reuses frozen main weights
    codec_init: str = "orthogonal"  # or "identity"
    use_sparse: bool = True
    use_dense: bool = True
    schedule_steps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.height % self.patch or self.width % self.patch:
            raise ConfigError(
                f"Patch size {self.patch} does not divide {self.height}x{self.width}."
            )
        if self.frames % self.tpatch:
            raise ConfigError(
                f"Temporal patch {self.tpatch} does not divide {self.frames} frames."
            )
        if self.dim % self.heads:
            raise ConfigError(f"{self.heads} heads do not divide width {self.dim}.")
        if self.dim < self.patch_dim:
            raise ConfigError(
                f"Width {self.dim} is smaller than the patch size {self.patch_dim}."
            )
        if self.layers < 1 or self.schedule_steps < 1:
            raise ConfigError("A denoiser needs at least one layer and one step.")
        if self.hint not in ("additive", "cross"):
            raise ConfigError(f"Unknown hint variant {self.hint!r}.")
        if self.dense not in ("copy", "shared"):
            raise ConfigError(f"Unknown dense branch variant {self.dense!r}.")
        if self.codec_init not in ("orthogonal", "identity"):
            raise ConfigError(f"Unknown codec initialization {self.codec_init!r}.")

    @property
    def patch_dim(self) -> int:
        return self.tpatch * self.patch * self.patch * self.channels

    @property
    def grid(self) -> tuple[int, int, int]:
        return (
            self.frames // self.tpatch,
            self.height // self.patch,
            self.width // self.patch,
        )

    @property
    def tokens(self) -> int:
        gt, gh, gw = self.grid
        return gt * gh * gw

    def to_dict(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def sincos(positions: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal encoding of integer positions, shape (len, dim), dim even."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    angles = positions[:, None].astype(np.float64) * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def position_encoding(grid: tuple[int, int, int], dim: int) -> np.ndarray:
    """Fixed (t, y, x) sinusoidal encoding, shape (tokens, dim)."""
    d_t = 2 * (dim // 6)
    d_y = 2 * (dim // 6)
    d_x = dim - d_t - d_y
    gt, gh, gw = grid
    t, y, x = np.meshgrid(np.arange(gt), np.arange(gh), np.arange(gw), indexing="ij")
    parts = [
        sincos(t.reshape(-1), d_t),
        sincos(y.reshape(-1), d_y),
        sincos(x.reshape(-1), d_x - d_x % 2),
    ]
    enc = np.concatenate(parts, axis=1)
    if enc.shape[1] < dim:
        enc = np.pad(enc, ((0, 0), (0, dim - enc.shape[1])))
    return enc * cst.POSITION_SCALE


class NoiseSchedule:
    """
    Cumulative signal coefficients alpha_bar over `steps` timesteps,
    strictly decreasing in (0, 1].
    """

    def __init__(self, alpha_bar: np.ndarray):
        alpha_bar = np.asarray(alpha_bar, dtype=np.float64)
        if alpha_bar.ndim != 1 or alpha_bar.size == 0:
            raise ConfigError("A noise schedule needs at least one step.")
        if np.any(alpha_bar <= 0.0) or np.any(alpha_bar > 1.0):
            raise ConfigError("Schedule coefficients must lie in (0, 1].")
        if np.any(np.diff(alpha_bar) >= 0.0):
            raise ConfigError("Schedule coefficients must be strictly decreasing.")
        self.alpha_bar = alpha_bar

    @classmethod
    def cosine(cls, steps: int = 100) -> NoiseSchedule:
        s = cst.COSINE_SCHEDULE_OFFSET

        def f(u: np.ndarray) -> np.ndarray:
            return np.cos((u + s) / (1 + s) * math.pi / 2) ** 2

        u = np.arange(steps + 1) / steps
        betas = np.minimum(1.0 - f(u[1:]) / f(u[:-1]), cst.MAX_BETA)
        return cls(np.cumprod(1.0 - betas))

    def __len__(self) -> int:
        return self.alpha_bar.size

    def noisy(self, x0: Tensor, eps: Tensor, t: Tensor) -> Tensor:
        """z_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps, t of shape (B,)."""
        ab = torch.as_tensor(self.alpha_bar, dtype=x0.dtype)[t].view(-1, 1, 1)
        return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps

    def strided(self, steps: int) -> list[int]:
        """Evenly spaced descending timesteps from the last one, ending at 0 when steps > 1."""
        if not 1 <= steps <= len(self):
            raise ConfigError(f"Cannot sample with {steps} steps from a {len(self)}-step schedule.")
        ts = np.round(np.linspace(len(self) - 1, 0, steps)).astype(int)
        return sorted(set(int(t) for t in ts), reverse=True)


def zero_module(module: nn.Module) -> nn.Module:
    """Zeroes every parameter of a module and returns it."""
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


class PatchCodec(nn.Module):
    """
    Linear patch embedding plus fixed position encoding, and its inverse.
    The embedding has orthonormal columns and the unembedding is its
    transpose, so decode(encode(v)) = v up to rounding.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Linear(cfg.patch_dim, cfg.dim)
        self.unembed = nn.Linear(cfg.dim, cfg.patch_dim)
        gen = torch.Generator().manual_seed(cfg.seed)
        if cfg.codec_init == "identity":
            weight = torch.eye(cfg.dim, cfg.patch_dim)
        else:
            q, _ = torch.linalg.qr(torch.randn(cfg.dim, cfg.patch_dim, generator=gen))
            weight = q
        with torch.no_grad():
            self.embed.weight.copy_(weight)
            self.unembed.weight.copy_(weight.T)
            self.embed.bias.zero_()
            self.unembed.bias.zero_()
        pos = position_encoding(cfg.grid, cfg.dim)
        self.register_buffer("pos", torch.as_tensor(pos, dtype=torch.float32))

    def patchify(self, x: Tensor) -> Tensor:
        """(B, T1, H, W, C) -> (B, tokens, patch_dim)."""
        B, T1, H, W, C = x.shape
        pt, ps = self.cfg.tpatch, self.cfg.patch
        if T1 % pt or H % ps or W % ps:
            raise ShapeMismatch(f"Patches ({pt}, {ps}) do not divide video {tuple(x.shape)}.")
        x = x.reshape(B, T1 // pt, pt, H // ps, ps, W // ps, ps, C)
        x = x.permute(0, 1, 3, 5, 2, 4, 6, 7)
        return x.reshape(B, -1, pt * ps * ps * C)

    def unpatchify(self, p: Tensor) -> Tensor:
        """(B, tokens, patch_dim) -> (B, T1, H, W, C)."""
        cfg = self.cfg
        gt, gh, gw = cfg.grid
        pt, ps, C = cfg.tpatch, cfg.patch, cfg.channels
        x = p.reshape(p.shape[0], gt, gh, gw, pt, ps, ps, C)
        x = x.permute(0, 1, 4, 2, 5, 3, 6, 7)
        return x.reshape(p.shape[0], gt * pt, gh * ps, gw * ps, C)

    def encode(self, x: Tensor) -> Tensor:
        return self.embed(self.patchify(x)) + self.pos.to(x.dtype)

    def decode(self, z: Tensor) -> Tensor:
        return self.unpatchify(self.unembed(z - self.pos.to(z.dtype)))


class Attention(nn.Module):
    """Multi-head scaled dot-product attention; keys and values from `context`."""

    def __init__(self, dim: int, heads: int, zero_out: bool = False):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        if zero_out:
            zero_module(self.out)

    def forward(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        context = x if context is None else context
        B, N, D = x.shape
        h = self.heads

        def split(t: Tensor) -> Tensor:
            return t.reshape(t.shape[0], t.shape[1], h, D // h).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(context)), split(self.v(context))
        scores = q @ k.transpose(-2, -1) / math.sqrt(D // h)
        out = scores.softmax(dim=-1) @ v
        return self.out(out.transpose(1, 2).reshape(B, N, D))


class Block(nn.Module):
    """Pre-norm transformer block; the timestep embedding is added to every token."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, z: Tensor, temb: Tensor) -> Tensor:
        z = z + temb[:, None, :]
        z = z + self.attn(self.norm1(z))
        return z + self.mlp(self.norm2(z))


class CrossAttention(nn.Module):
    """Queries from the main stream, keys and values from a branch stream."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads, zero_out=True)

    def forward(self, z: Tensor, context: Tensor) -> Tensor:
        return self.attn(self.norm_q(z), self.norm_kv(context))


class NovaDenoiser(nn.Module):
    """The dual-branch epsilon-prediction network."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        d, L = cfg.dim, cfg.layers
        self.codec = PatchCodec(cfg)
        self.time = nn.Embedding(cfg.schedule_steps, d)
        with torch.no_grad():
            table = sincos(np.arange(cfg.schedule_steps), d - d % 2)
            self.time.weight.zero_()
            self.time.weight[:, : table.shape[1]] = torch.as_tensor(table, dtype=torch.float32)

        def stack() -> nn.ModuleList:
            return nn.ModuleList(Block(d, cfg.heads, cfg.mlp_ratio) for _ in range(L))

        self.main = stack()
        self.sparse = stack()
        if cfg.hint == "additive":
            self.hints = nn.ModuleList(zero_module(nn.Linear(d, d)) for _ in range(L))
        else:
            self.hints = nn.ModuleList(CrossAttention(d, cfg.heads) for _ in range(L))
        self.dense = stack() if cfg.dense == "copy" else None
        self.cross = nn.ModuleList(CrossAttention(d, cfg.heads) for _ in range(L))
        self.head_norm = nn.LayerNorm(d)
        self.head = zero_module(nn.Linear(d, d))
        self.frozen: set[str] = set()
        self.freeze(["codec"])

    # ---
    # Parameter groups
    # ---

    def groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        """Parameters by group: codec, time, main, sparse, dense, cross, head."""
        prefixes = {
            "codec": ("codec.",),
            "time": ("time.",),
            "main": ("main.",),
            "sparse": ("sparse.", "hints."),
            "dense": ("dense.",),
            "cross": ("cross.",),
            "head": ("head_norm.", "head."),
        }
        out: dict[str, list[tuple[str, nn.Parameter]]] = {g: [] for g in cst.PARAM_GROUPS}
        for name, p in self.named_parameters():
            group = next(g for g, pre in prefixes.items() if name.startswith(pre))
            out[group].append((name, p))
        return out

    def group_of(self, name: str) -> str:
        for group, params in self.groups().items():
            if any(n == name for n, _ in params):
                return group
        raise KeyError(f"No parameter named {name}.")

    def freeze(self, groups: list[str] | set[str]) -> None:
        """Sets the freeze mask: exactly the given groups are frozen."""
        unknown = set(groups) - set(cst.PARAM_GROUPS)
        if unknown:
            raise ConfigError(f"Unknown parameter groups {sorted(unknown)}.")
        self.frozen = set(groups)
        for group, params in self.groups().items():
            for _, p in params:
                p.requires_grad_(group not in self.frozen)

    def copy_main_to_dense(self) -> None:
        """Loads the weights of the main blocks into the dense copy."""
        if self.dense is not None:
            self.dense.load_state_dict(self.main.state_dict())

    def trainable(self) -> Iterator[nn.Parameter]:
        return (p for p in self.parameters() if p.requires_grad)

    def check_finite(self) -> None:
        for name, p in self.named_parameters():
            if not torch.all(torch.isfinite(p)):
                raise NumericError(f"Parameter {name} holds non-finite values.")

    # ---
    # Forward
    # ---

    def video_tensor(self, videos: Video | list[Video]) -> Tensor:
        """Stacks videos into a (B, T1, H, W, C) tensor of the model dtype."""
        videos = [videos] if isinstance(videos, Video) else videos
        cfg = self.cfg
        expected = (cfg.frames, cfg.height, cfg.width, cfg.channels)
        for v in videos:
            if v.frames.shape != expected:
                raise ShapeMismatch(
                    f"Video of shape {v.frames.shape} given to a model for {expected}."
                )
        dtype = self.head.weight.dtype
        return torch.as_tensor(np.stack([v.frames for v in videos])).to(dtype)

    def encode(self, videos: Video | list[Video]) -> Tensor:
        return self.codec.encode(self.video_tensor(videos))

    def decode(self, z: Tensor) -> Tensor:
        return self.codec.decode(z)

    def forward(
        self,
        zt: Tensor,
        t: Tensor,
        ref: Tensor,
        src: Tensor,
        use_sparse: bool | None = None,
        use_dense: bool | None = None,
    ) -> Tensor:
        """
        Predicts the noise of `zt`.

        Args:
            zt: noisy target tokens, (B, N, d).
            t: timesteps, (B,).
            ref: reference tokens for the sparse branch, (B, N, d).
            src: source tokens for the dense branch, (B, N', d).
            use_sparse, use_dense: override the configured branch switches.

        Returns:
            predicted noise, (B, N, d).
        """
        use_sparse = self.cfg.use_sparse if use_sparse is None else use_sparse
        use_dense = self.cfg.use_dense if use_dense is None else use_dense
        if zt.shape != ref.shape or zt.shape[0] != src.shape[0] or zt.shape[2] != src.shape[2]:
            raise ShapeMismatch(
                f"Token grids disagree: z {tuple(zt.shape)}, ref {tuple(ref.shape)}, "
                f"src {tuple(src.shape)}."
            )
        temb = self.time(t)
        temb_clean = self.time(torch.zeros_like(t))
        z, r, s = zt, ref, src
        for l, block in enumerate(self.main):
            z = block(z, temb)
            residual = torch.zeros_like(z)
            if use_sparse:
                r = self.sparse[l](r, temb)
                if self.cfg.hint == "additive":
                    residual = residual + self.hints[l](r)
                else:
                    residual = residual + self.hints[l](z, r)
            if use_dense:
                if self.dense is not None:
                    s = self.dense[l](s, temb_clean)
                else:
                    with torch.no_grad():
                        s = block(s, temb_clean)
                residual = residual + self.cross[l](z, s)
            z = z + residual
        return self.head(self.head_norm(z))


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """Target X, pseudo-source X~, degraded reference X^, timestep and noise."""

    target: Video
    source: Video
    reference: Video
    timestep: int
    noise: np.ndarray  # (tokens, dim), standard normal

    def __post_init__(self):
        shapes = {self.target.frames.shape, self.source.frames.shape, self.reference.frames.shape}
        if len(shapes) > 1:
            raise ShapeMismatch(f"Sample videos have different shapes: {sorted(shapes)}.")
        if self.timestep < 0:
            raise DataError(f"Negative timestep {self.timestep}.")


def batch_loss(
    samples: list[TrainingSample],
    model: NovaDenoiser,
    schedule: NoiseSchedule,
) -> Tensor:
    """Mean squared error between the injected and the predicted noise."""
    dtype = model.head.weight.dtype
    x0 = model.encode([s.target for s in samples])
    ref = model.encode([s.reference for s in samples])
    src = model.encode([s.source for s in samples])
    eps = torch.as_tensor(np.stack([s.noise for s in samples])).to(dtype)
    if eps.shape != x0.shape:
        raise ShapeMismatch(f"Noise of shape {tuple(eps.shape)} for tokens {tuple(x0.shape)}.")
    t = torch.as_tensor([s.timestep for s in samples], dtype=torch.long)
    zt = schedule.noisy(x0, eps, t)
    pred = model(zt, t, ref, src)
    return torch.mean((eps - pred) ** 2)


def loss(
    sample: TrainingSample | list[TrainingSample],
    model: NovaDenoiser,
    schedule: NoiseSchedule,
) -> tuple[float, dict[str, Tensor]]:
    """
    The denoising loss of a sample and its gradients with respect to every
    parameter; frozen parameters get zero gradients.
    """
    samples = sample if isinstance(sample, list) else [sample]
    model.zero_grad(set_to_none=True)
    value = batch_loss(samples, model, schedule)
    if value.requires_grad:
        value.backward()
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }
    return float(value.detach()), grads


def draw_sample(
    target: Video,
    source: Video,
    reference: Video,
    model: NovaDenoiser,
    schedule: NoiseSchedule,
    rng: Rng,
) -> TrainingSample:
    """Bundles three videos with a random timestep and noise."""
    t = rng.integers(0, len(schedule))
    noise = rng.normal((model.cfg.tokens, model.cfg.dim)).astype(np.float32)
    return TrainingSample(target, source, reference, t, noise)


@torch.no_grad()
def sample(
    ref: Video,
    src: Video,
    model: NovaDenoiser,
    schedule: NoiseSchedule,
    steps: int,
    rng: Rng,
    clip_denoised: bool = True,
    use_sparse: bool | None = None,
    use_dense: bool | None = None,
) -> Video:
    """
    Ancestral sampling from pure noise over `steps` evenly spaced timesteps,
    conditioning the sparse branch on `ref` and the dense branch on `src`.
    With `clip_denoised`, each clean-token estimate is decoded, clamped to
    [0,1] and re-encoded.
    """
    model.check_finite()
    model.eval()
    dtype = model.head.weight.dtype
    r = model.encode(ref)
    s = model.encode(src)
    z = torch.as_tensor(rng.normal(tuple(r.shape))).to(dtype)
    ab = schedule.alpha_bar
    timesteps = schedule.strided(steps)
    x0 = z
    for i, t in enumerate(timesteps):
        eps = model(z, torch.tensor([t]), r, s, use_sparse, use_dense)
        x0 = (z - math.sqrt(1.0 - ab[t]) * eps) / math.sqrt(ab[t])
        if clip_denoised:
            x0 = model.codec.encode(model.decode(x0).clamp(0.0, 1.0))
        if i == len(timesteps) - 1:
            break
        prev = timesteps[i + 1]
        a_ts = ab[t] / ab[prev]
        beta = 1.0 - a_ts
        mean = (
            math.sqrt(ab[prev]) * beta / (1.0 - ab[t]) * x0
            + math.sqrt(a_ts) * (1.0 - ab[prev]) / (1.0 - ab[t]) * z
        )
        var = beta * (1.0 - ab[prev]) / (1.0 - ab[t])
        noise = torch.as_tensor(rng.normal(tuple(z.shape))).to(dtype)
        z = mean + math.sqrt(var) * noise
    pixels = model.decode(x0)[0].double().numpy()
    if not np.all(np.isfinite(pixels)):
        raise NumericError("Sampling produced non-finite values.")
    return Video.clamped(pixels)
