"""Vision transformer backbone producing per-patch features.

Standard pre-norm ViT. Parameter names follow the common checkpoint
layout (``patch_embed.proj``, ``cls_token``, ``pos_embed``,
``blocks.N.norm1/attn.qkv/attn.proj/norm2/mlp.fc1/mlp.fc2``, ``norm``),
so published self-supervised ViT checkpoints load directly via
``load_state_dict``. The exported features are the final layer's patch
tokens taken after the final LayerNorm, with the class token dropped;
token order is row-major over the patch grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ModelLoadError


@dataclass(frozen=True)
class ArchSpec:
    name: str
    patch_size: int
    dim: int
    depth: int
    heads: int


ARCHS = {
    "vit-b-8": ArchSpec("vit-b-8", 8, 768, 12, 12),
    "vit-b-16": ArchSpec("vit-b-16", 16, 768, 12, 12),
    "vit-s-8": ArchSpec("vit-s-8", 8, 384, 12, 6),
    "vit-s-16": ArchSpec("vit-s-16", 16, 384, 12, 6),
    # small configurations for smoke tests and orientation checks
    "mini-8": ArchSpec("mini-8", 8, 64, 2, 2),
    "mini-16": ArchSpec("mini-16", 16, 64, 2, 2),
}


def arch_spec(name: str) -> ArchSpec:
    try:
        return ARCHS[name]
    except KeyError:
        raise ModelLoadError(f"unknown architecture {name!r}; choose from {sorted(ARCHS)}")


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, dim * 4)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PatchEmbed(nn.Module):
    def __init__(self, patch_size: int, dim: int):
        super().__init__()
        self.proj = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(x).flatten(2).transpose(1, 2)  # (B, HW, D), row-major


class VisionTransformer(nn.Module):
    # pretrained position embeddings assume this training resolution
    BASE_RESOLUTION = 224

    def __init__(self, spec: ArchSpec):
        super().__init__()
        self.spec = spec
        base_grid = self.BASE_RESOLUTION // spec.patch_size
        self.patch_embed = PatchEmbed(spec.patch_size, spec.dim)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, spec.dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, base_grid * base_grid + 1, spec.dim))
        self.blocks = nn.ModuleList(Block(spec.dim, spec.heads) for _ in range(spec.depth))
        self.norm = nn.LayerNorm(spec.dim, eps=1e-6)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)

    def _interpolated_pos_embed(self, grid_h: int, grid_w: int) -> torch.Tensor:
        n_base = self.pos_embed.shape[1] - 1
        base = int(math.sqrt(n_base))
        if (grid_h, grid_w) == (base, base):
            return self.pos_embed
        cls_pos = self.pos_embed[:, :1]
        patch_pos = self.pos_embed[:, 1:].reshape(1, base, base, -1).permute(0, 3, 1, 2)
        patch_pos = nn.functional.interpolate(
            patch_pos, size=(grid_h, grid_w), mode="bicubic", align_corners=False
        )
        patch_pos = patch_pos.permute(0, 2, 3, 1).reshape(1, grid_h * grid_w, -1)
        return torch.cat([cls_pos, patch_pos], dim=1)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) images -> (B, H/p, W/p, D) patch features."""
        b, _, h, w = images.shape
        p = self.spec.patch_size
        if h % p or w % p:
            raise ModelLoadError(f"input {h}x{w} is not divisible by patch size {p}")
        grid_h, grid_w = h // p, w // p
        tokens = self.patch_embed(images)
        cls = self.cls_token.expand(b, -1, -1)
        tokens = torch.cat([cls, tokens], dim=1)
        tokens = tokens + self._interpolated_pos_embed(grid_h, grid_w)
        for block in self.blocks:
            tokens = block(tokens)
        tokens = self.norm(tokens)
        return tokens[:, 1:].reshape(b, grid_h, grid_w, self.spec.dim)


def _strip_prefixes(state: dict) -> dict:
    out = {}
    for key, value in state.items():
        for prefix in ("module.", "backbone."):
            if key.startswith(prefix):
                key = key[len(prefix):]
        out[key] = value
    return out


def build_model(arch: str, weights: str | None = None, seed: int = 0) -> VisionTransformer:
    """Instantiate an architecture, randomly initialized from ``seed`` or
    loaded from a checkpoint file."""
    spec = arch_spec(arch)
    torch.manual_seed(seed)
    model = VisionTransformer(spec)
    if weights is not None:
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise ModelLoadError(f"cannot read checkpoint {weights}: {exc}") from exc
        if isinstance(state, dict):
            for key in ("state_dict", "model", "teacher"):
                if key in state and isinstance(state[key], dict):
                    state = state[key]
                    break
        state = _strip_prefixes(state)
        state = {k: v for k, v in state.items() if not k.startswith("head.")}
        try:
            model.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise ModelLoadError(f"checkpoint {weights} does not match {arch}: {exc}") from exc
    model.eval()
    return model
