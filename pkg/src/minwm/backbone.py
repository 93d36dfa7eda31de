"""Tiny video diffusion transformer with PRoPE attention and chunked AR masks."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from .camera import Camera
from .prope import PropeTransforms, TokenCoord, build_transforms, prope_attention

MASK_MODES = ("bidirectional", "chunk_causal", "teacher_forcing")


@dataclass
class ModelConfig:
    blocks: int = 6
    dim: int = 192
    heads: int = 6
    patch: int = 4
    chunk_len: int = 4
    rope_base: float = 10000.0
    n_scenes: int = 64
    height: int = 32
    width: int = 32

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def tokens_per_frame(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def tokens_per_chunk(self) -> int:
        return self.chunk_len * self.tokens_per_frame

    def validate(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if self.head_dim % 8 != 0:
            raise ValueError("head_dim must be divisible by 8")
        if self.height % self.patch or self.width % self.patch:
            raise ValueError("resolution must be divisible by patch size")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text)).validate()


def patchify(frames: torch.Tensor, patch: int) -> torch.Tensor:
    """[N, H, W, 3] -> [N * H/p * W/p, 3*p*p] tokens, row-major patch order."""
    N, H, W, C = frames.shape
    if H % patch or W % patch:
        raise ValueError("frame dims must be divisible by patch size")
    x = frames.reshape(N, H // patch, patch, W // patch, patch, C)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(N * (H // patch) * (W // patch), patch * patch * C)


def unpatchify(tokens: torch.Tensor, n_frames: int, H: int, W: int, patch: int) -> torch.Tensor:
    C = tokens.shape[-1] // (patch * patch)
    x = tokens.reshape(n_frames, H // patch, W // patch, patch, patch, C)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(n_frames, H, W, C)


def token_coords(n_frames: int, H: int, W: int, patch: int,
                 frame_offset: int = 0) -> list[TokenCoord]:
    coords = []
    for f in range(n_frames):
        for y in range(H // patch):
            for x in range(W // patch):
                coords.append(TokenCoord(frame_index=f + frame_offset, x=x, y=y))
    return coords


def build_mask(mode: str, n_chunks: int, tokens_per_chunk: int) -> torch.Tensor:
    """Boolean visibility mask at token granularity; True = may attend."""
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}")
    L = tokens_per_chunk
    if mode == "bidirectional":
        T = n_chunks * L
        return torch.ones(T, T, dtype=torch.bool)
    if mode == "chunk_causal":
        chunk = torch.arange(n_chunks).repeat_interleave(L)
        return chunk[:, None] >= chunk[None, :]
    # teacher_forcing: layout = [clean chunks 0..n-1, noisy chunks 0..n-1]
    T = 2 * n_chunks * L
    chunk = torch.arange(n_chunks).repeat_interleave(L)
    is_noisy = torch.zeros(T, dtype=torch.bool)
    is_noisy[n_chunks * L:] = True
    idx = torch.cat([chunk, chunk])
    q_noisy, k_noisy = is_noisy[:, None], is_noisy[None, :]
    qi, ki = idx[:, None], idx[None, :]
    clean_sees = ~q_noisy & ~k_noisy & (qi >= ki)
    noisy_sees_clean = q_noisy & ~k_noisy & (ki < qi)
    noisy_sees_self = q_noisy & k_noisy & (qi == ki)
    return clean_sees | noisy_sees_clean | noisy_sees_self


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t[..., None] * freqs * 1000.0
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class PropeSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def _split(self, x):
        T = x.shape[0]
        return x.reshape(T, self.heads, self.head_dim).transpose(0, 1)

    def forward(self, x, transforms: PropeTransforms, mask):
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        out = prope_attention(self._split(q), self._split(k), self._split(v),
                              transforms, mask, compute_dtype=torch.float32)
        out = out.transpose(0, 1).reshape(x.shape[0], -1)
        return self.proj(out)

    def forward_cached(self, x_new, transforms_new: PropeTransforms, cache: dict):
        """Incremental decode: attend over cached transformed k/v plus the new chunk."""
        q, k, v = self.qkv(x_new).chunk(3, dim=-1)
        # float32 to match the precision of the full-sequence attention path
        qt = transforms_new.apply_query(self._split(q))
        kt = transforms_new.apply_keyval(self._split(k))
        vt = transforms_new.apply_keyval(self._split(v))
        if cache.get("k") is not None:
            k_all = torch.cat([cache["k"], kt], dim=1)
            v_all = torch.cat([cache["v"], vt], dim=1)
        else:
            k_all, v_all = kt, vt
        cache["k"], cache["v"] = k_all.detach(), v_all.detach()
        attn = torch.softmax(qt @ k_all.transpose(-1, -2) / math.sqrt(self.head_dim), dim=-1)
        out = transforms_new.apply_out(attn @ v_all)
        out = out.transpose(0, 1).reshape(x_new.shape[0], -1)
        return self.proj(out)


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = PropeSelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))

    def forward(self, x, transforms, mask):
        x = x + self.attn(self.norm1(x), transforms, mask)
        return x + self.mlp(self.norm2(x))

    def forward_cached(self, x, transforms, cache):
        x = x + self.attn.forward_cached(self.norm1(x), transforms, cache)
        return x + self.mlp(self.norm2(x))


class ChunkKVCache:
    """Per-layer transformed keys/values of finalized chunks (append-only)."""

    def __init__(self, n_layers: int):
        self.layers = [{} for _ in range(n_layers)]
        self.n_tokens = 0
        self.n_chunks = 0

    def __len__(self):
        return self.n_tokens


class WorldModel(nn.Module):
    """Velocity-predicting video DiT conditioned on cameras, chunk timesteps and scene id."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        in_dim = 3 * cfg.patch * cfg.patch
        self.embed = nn.Linear(in_dim, cfg.dim)
        self.t_mlp = nn.Sequential(nn.Linear(cfg.dim, cfg.dim), nn.SiLU(),
                                   nn.Linear(cfg.dim, cfg.dim))
        self.scene_embed = nn.Embedding(cfg.n_scenes, cfg.dim)
        self.frame_offset_embed = nn.Embedding(cfg.chunk_len, cfg.dim)
        self.blocks = nn.ModuleList(Block(cfg.dim, cfg.heads) for _ in range(cfg.blocks))
        self.norm_out = nn.LayerNorm(cfg.dim)
        self.head = nn.Linear(cfg.dim, in_dim)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def _embed_tokens(self, frames, chunk_timesteps, scene_id, frame_offsets):
        cfg = self.cfg
        n_frames = frames.shape[0]
        x = self.embed(patchify(frames, cfg.patch))
        tpf = cfg.tokens_per_frame
        t_emb = self.t_mlp(timestep_embedding(chunk_timesteps, cfg.dim))
        t_per_frame = t_emb.repeat_interleave(cfg.chunk_len, dim=0)[:n_frames]
        off = self.frame_offset_embed(frame_offsets)
        per_frame = t_per_frame + off + self.scene_embed.weight[scene_id]
        return x + per_frame.repeat_interleave(tpf, dim=0)

    def _transforms(self, coords, cameras):
        return build_transforms(coords, cameras, self.cfg.head_dim, self.cfg.rope_base)

    def forward(self, frames: torch.Tensor, chunk_timesteps: torch.Tensor,
                cameras: list[Camera], scene_id: int, mask_mode: str = "bidirectional"):
        """frames [N, H, W, 3] -> predicted velocity of the same shape.

        In teacher_forcing mode, `frames`/`chunk_timesteps`/`cameras` cover the
        concatenated clean + noisy layout (2x the clip length); the velocity
        prediction is still returned for every frame.
        """
        cfg = self.cfg
        n_frames = frames.shape[0]
        if n_frames % cfg.chunk_len:
            raise ValueError("frame count must be divisible by chunk_len")
        n_chunks = n_frames // cfg.chunk_len
        if chunk_timesteps.shape[0] != n_chunks:
            raise ValueError("one timestep per chunk required")
        if len(cameras) != n_frames:
            raise ValueError("one camera per frame required")
        if mask_mode == "teacher_forcing":
            if n_chunks % 2:
                raise ValueError("teacher_forcing layout needs clean+noisy copies")
            mask = build_mask(mask_mode, n_chunks // 2, cfg.tokens_per_chunk)
            half = n_frames // 2
            frame_idx = list(range(half)) + list(range(half))
        else:
            mask = build_mask(mask_mode, n_chunks, cfg.tokens_per_chunk)
            frame_idx = list(range(n_frames))
        coords = token_coords(n_frames, cfg.height, cfg.width, cfg.patch)
        for tok in coords:
            tok.frame_index = frame_idx[tok.frame_index]
        offsets = torch.arange(n_frames) % cfg.chunk_len
        x = self._embed_tokens(frames, chunk_timesteps, scene_id, offsets)
        transforms = self._transforms(coords, [cameras[i] for i in range(n_frames)])
        for blk in self.blocks:
            x = blk(x, transforms, mask)
        out = self.head(self.norm_out(x))
        return unpatchify(out, n_frames, cfg.height, cfg.width, cfg.patch)

    def new_cache(self) -> ChunkKVCache:
        return ChunkKVCache(len(self.blocks))

    def forward_with_cache(self, chunk_frames: torch.Tensor, chunk_timestep: torch.Tensor,
                           chunk_cameras: list[Camera], scene_id: int,
                           cache: ChunkKVCache):
        """Predict velocity for one new chunk given finalized chunks in `cache`.

        Does not advance the cache; call `commit_chunk` once the chunk is final.
        """
        cfg = self.cfg
        if chunk_frames.shape[0] != cfg.chunk_len:
            raise ValueError("forward_with_cache expects exactly one chunk")
        # frame_index only selects the frame camera; local indices suffice
        coords = token_coords(cfg.chunk_len, cfg.height, cfg.width, cfg.patch)
        transforms = self._transforms(coords, chunk_cameras)
        offsets = torch.arange(cfg.chunk_len) % cfg.chunk_len
        x = self._embed_tokens(chunk_frames, chunk_timestep.reshape(1), scene_id, offsets)
        snapshots = [dict(layer) for layer in cache.layers]
        for blk, layer_cache in zip(self.blocks, cache.layers):
            x = blk.forward_cached(x, transforms, layer_cache)
        # roll back: cache advances only on commit
        for layer, snap in zip(cache.layers, snapshots):
            layer.clear()
            layer.update(snap)
        out = self.head(self.norm_out(x))
        return unpatchify(out, cfg.chunk_len, cfg.height, cfg.width, cfg.patch)

    def commit_chunk(self, chunk_frames: torch.Tensor, chunk_timestep: torch.Tensor,
                     chunk_cameras: list[Camera], scene_id: int, cache: ChunkKVCache):
        """Run the finalized (clean) chunk through the model, appending its k/v."""
        cfg = self.cfg
        coords = token_coords(cfg.chunk_len, cfg.height, cfg.width, cfg.patch)
        transforms = self._transforms(coords, chunk_cameras)
        offsets = torch.arange(cfg.chunk_len) % cfg.chunk_len
        x = self._embed_tokens(chunk_frames, chunk_timestep.reshape(1), scene_id, offsets)
        with torch.no_grad():
            for blk, layer_cache in zip(self.blocks, cache.layers):
                x = blk.forward_cached(x, transforms, layer_cache)
        cache.n_tokens += cfg.tokens_per_chunk
        cache.n_chunks += 1
