"""Reference U-Net denoiser with decoder feature modulation.

A deliberately small architecture that runs on CPU: three resolution levels
(widths 32/64/128), two residual blocks per level, 4-head self-attention at
the coarsest level, and a 128-wide sinusoidal timestep embedding. Each
decoder block can rescale its trunk features with the spatial map derived
from their channel mean and attenuate the low frequencies of the incoming
skip features before concatenation.

Weight files use the MFUW container: magic, u32 version, u32 tensor count,
then per tensor a u16 name length, the UTF-8 name, u8 ndim, u32 dims, and
little-endian f32 data.
"""

from __future__ import annotations

import math
import struct
from collections import OrderedDict

import numpy as np
import torch
from torch import nn

from .errors import FormatError
from .modulation import ModulationConfig

MFUW_MAGIC = b"MFUW"
MFUW_VERSION = 1

IN_CHANNELS = 2
BASE_WIDTH = 32
LEVELS = 3
EMBED_DIM = 128
ATTN_HEADS = 4
_NORM_GROUPS = 8


def sinusoidal_embedding(t: torch.Tensor, dim: int = EMBED_DIM) -> torch.Tensor:
    """Classic sin/cos position encoding of the (float) step index."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float32) / (half - 1)
    )
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def _scale_map(x: torch.Tensor, factor: float) -> torch.Tensor:
    # Tensor twin of modulation.backbone_scale_map.
    mean = x.mean(dim=1, keepdim=True)
    flat = mean.flatten(1)
    lo = flat.min(dim=1).values[:, None, None, None]
    hi = flat.max(dim=1).values[:, None, None, None]
    span = hi - lo
    ok = span >= 1e-12
    normalized = (mean - lo) / torch.where(ok, span, torch.ones_like(span))
    return torch.where(ok, (factor - 1.0) * normalized + 1.0, torch.ones_like(mean))


def _scale_first_half(x: torch.Tensor, scale_map: torch.Tensor) -> torch.Tensor:
    out = x.clone()
    half = x.shape[1] // 2
    out[:, :half] = out[:, :half] * scale_map
    return out


def _attenuate_low(h: torch.Tensor, scale: float, radius: float) -> torch.Tensor:
    # Tensor twin of modulation.attenuate_low_frequencies.
    height, width = h.shape[-2:]
    rows = torch.arange(height, dtype=torch.float32) - height // 2
    cols = torch.arange(width, dtype=torch.float32) - width // 2
    dist = torch.sqrt(rows[:, None] ** 2 + cols[None, :] ** 2)
    weights = torch.where(dist < radius, torch.tensor(float(scale)), torch.tensor(1.0))
    weights = torch.fft.ifftshift(weights)
    spectrum = torch.fft.fft2(h)
    return torch.fft.ifft2(spectrum * weights).real


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, emb_dim: int = EMBED_DIM):
        super().__init__()
        self.norm1 = nn.GroupNorm(_NORM_GROUPS, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_ch)
        self.norm2 = nn.GroupNorm(_NORM_GROUPS, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.emb_proj(torch.nn.functional.silu(emb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    def __init__(self, channels: int, heads: int = ATTN_HEADS):
        super().__init__()
        if channels % heads:
            raise ValueError("channels must divide evenly into heads")
        self.heads = heads
        self.norm = nn.GroupNorm(_NORM_GROUPS, channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        head_dim = c // self.heads
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.heads, head_dim, h * w)
        q, k, v = qkv.unbind(dim=1)
        attn = torch.softmax(torch.einsum("bhdn,bhdm->bhnm", q * head_dim**-0.5, k), dim=-1)
        out = torch.einsum("bhnm,bhdm->bhdn", attn, v).reshape(b, c, h, w)
        return x + self.proj(out)


class Downsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class DecoderBlock(nn.Module):
    """Upsample the trunk, modulate trunk/skip, concatenate, refine."""

    def __init__(self, trunk_ch: int, out_ch: int):
        super().__init__()
        self.up = Upsample(trunk_ch, out_ch)
        self.res1 = ResidualBlock(2 * out_ch, out_ch)
        self.res2 = ResidualBlock(out_ch, out_ch)

    def forward(
        self,
        x: torch.Tensor,
        skip: torch.Tensor,
        emb: torch.Tensor,
        factors: tuple[float, float, float] | None,
    ) -> torch.Tensor:
        trunk = self.up(x)
        if factors is not None:
            backbone_scale, skip_scale, radius = factors
            trunk = _scale_first_half(trunk, _scale_map(trunk, backbone_scale))
            skip = _attenuate_low(skip, skip_scale, radius)
        h = torch.cat([trunk, skip], dim=1)
        return self.res2(self.res1(h, emb), emb)


class ModulatedUNet(nn.Module):
    """Noise predictor over 2-channel (re, im) images."""

    def __init__(self, modulation: ModulationConfig | None = None):
        super().__init__()
        self.modulation = modulation if modulation is not None else ModulationConfig()
        widths = [BASE_WIDTH * 2**i for i in range(LEVELS)]

        self.time_mlp = nn.Sequential(
            nn.Linear(EMBED_DIM, EMBED_DIM), nn.SiLU(), nn.Linear(EMBED_DIM, EMBED_DIM)
        )
        self.stem = nn.Conv2d(IN_CHANNELS, widths[0], 3, padding=1)

        self.enc0 = nn.ModuleList([ResidualBlock(widths[0], widths[0]) for _ in range(2)])
        self.down0 = Downsample(widths[0], widths[1])
        self.enc1 = nn.ModuleList([ResidualBlock(widths[1], widths[1]) for _ in range(2)])
        self.down1 = Downsample(widths[1], widths[2])

        self.mid_res1 = ResidualBlock(widths[2], widths[2])
        self.mid_attn = AttentionBlock(widths[2])
        self.mid_res2 = ResidualBlock(widths[2], widths[2])

        # Decoder block 0 works at the coarser resolution, block 1 at full.
        self.dec0 = DecoderBlock(widths[2], widths[1])
        self.dec1 = DecoderBlock(widths[1], widths[0])

        self.out_norm = nn.GroupNorm(_NORM_GROUPS, widths[0])
        self.out_conv = nn.Conv2d(widths[0], IN_CHANNELS, 3, padding=1)

    def _factors(self, block: int) -> tuple[float, float, float] | None:
        cfg = self.modulation
        if block not in cfg.blocks:
            return None
        return (cfg.backbone_scale, cfg.skip_scale, cfg.radius)

    def forward(self, x: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != IN_CHANNELS:
            raise ValueError(f"expected (B, {IN_CHANNELS}, H, W) input, got {tuple(x.shape)}")
        div = 2 ** (LEVELS - 1)
        if x.shape[-2] % div or x.shape[-1] % div:
            raise ValueError(f"spatial dims must be divisible by {div}, got {tuple(x.shape[-2:])}")
        if not torch.is_tensor(t):
            t = torch.full((x.shape[0],), float(t), dtype=torch.float32)
        emb = self.time_mlp(sinusoidal_embedding(t.to(x.device)))

        h = self.stem(x)
        for block in self.enc0:
            h = block(h, emb)
        skip0 = h
        h = self.down0(h)
        for block in self.enc1:
            h = block(h, emb)
        skip1 = h
        h = self.down1(h)

        h = self.mid_res2(self.mid_attn(self.mid_res1(h, emb)), emb)

        h = self.dec0(h, skip1, emb, self._factors(0))
        h = self.dec1(h, skip0, emb, self._factors(1))
        return self.out_conv(torch.nn.functional.silu(self.out_norm(h)))


class UNetDenoiser:
    """Adapter exposing the network through the numpy denoiser interface."""

    def __init__(self, model: ModulatedUNet):
        self.model = model.eval()

    def predict_noise(self, y: np.ndarray, t: int) -> np.ndarray:
        x = torch.from_numpy(np.asarray(y, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            out = self.model(x, t)
        return out.squeeze(0).numpy().astype(np.float64)


def init_random(seed: int, modulation: ModulationConfig | None = None) -> ModulatedUNet:
    """Seed-deterministic random initialization of the reference architecture."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = ModulatedUNet(modulation)
    return model.eval()


def architecture_manifest() -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Ordered (name, shape) pairs every weight file must match."""
    with torch.random.fork_rng():
        torch.manual_seed(0)
        model = ModulatedUNet()
    return tuple((name, tuple(p.shape)) for name, p in model.state_dict().items())


def save_weights(model_or_state, path) -> None:
    """Serialize a model (or state dict) to an MFUW file."""
    if isinstance(model_or_state, nn.Module):
        state = model_or_state.state_dict()
    else:
        state = model_or_state
    with open(path, "wb") as f:
        f.write(MFUW_MAGIC)
        f.write(struct.pack("<II", MFUW_VERSION, len(state)))
        for name, tensor in state.items():
            data = np.ascontiguousarray(
                tensor.detach().cpu().numpy() if torch.is_tensor(tensor) else tensor,
                dtype="<f4",
            )
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def _read_exact(f, n: int, context: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated weight file while reading {context}")
    return buf


def load_weights(path) -> "OrderedDict[str, np.ndarray]":
    """Parse an MFUW file and validate it against the architecture manifest."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MFUW_MAGIC:
            raise FormatError(f"{path}: bad magic, not an MFUW weight file")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != MFUW_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        tensors: OrderedDict[str, np.ndarray] = OrderedDict()
        for index in range(count):
            context = f"tensor {index}"
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, context))
            name = _read_exact(f, name_len, context).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, f"tensor '{name}'"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, f"tensor '{name}'"))
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            payload = _read_exact(f, 4 * size, f"tensor '{name}'")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()

    manifest = architecture_manifest()
    if len(tensors) != len(manifest):
        raise FormatError(
            f"{path}: expected {len(manifest)} tensors, found {len(tensors)}"
        )
    for (name, shape), (got_name, got) in zip(manifest, tensors.items()):
        if got_name != name:
            raise FormatError(f"{path}: expected tensor '{name}', found '{got_name}'")
        if tuple(got.shape) != shape:
            raise FormatError(
                f"{path}: tensor '{name}' has shape {tuple(got.shape)}, expected {shape}"
            )
    return tensors


def load_model(path, modulation: ModulationConfig | None = None) -> ModulatedUNet:
    """Instantiate the reference architecture from an MFUW file."""
    weights = load_weights(path)
    with torch.random.fork_rng():
        torch.manual_seed(0)
        model = ModulatedUNet(modulation)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in weights.items()})
    return model.eval()
