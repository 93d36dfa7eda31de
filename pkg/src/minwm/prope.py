"""Camera-aware rotary position transforms and GTA-form attention.

Each token carries a block-diagonal linear map D: the first half of the head
dimension holds d/8 copies of the token's 4x4 lifted projective matrix, the
remaining two quarters are RoPE rotations driven by the token's (x, y) grid
coordinate. Attention applies D^T to queries, D^-1 to keys/values and D to
the output, so all interactions depend only on relative transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .camera import Camera, lift_projective

DEFAULT_ROPE_BASE = 10000.0


@dataclass
class TokenCoord:
    frame_index: int
    x: int
    y: int


def rope_angles(pos, n_pairs: int, base: float = DEFAULT_ROPE_BASE) -> torch.Tensor:
    """Rotation angles for `n_pairs` 2-d subspaces at integer position(s) `pos`."""
    if base <= 0:
        raise ValueError("RoPE base must be positive")
    pos = torch.as_tensor(pos, dtype=torch.float32)
    inv_freq = base ** (-torch.arange(n_pairs, dtype=torch.float32) / n_pairs)
    return pos[..., None] * inv_freq


def rope_rotation(pos: int, dims: int, base: float = DEFAULT_ROPE_BASE) -> torch.Tensor:
    """Dense block-diagonal rotation matrix for one position (tests/reference)."""
    if dims % 2 != 0:
        raise ValueError("RoPE dims must be even")
    ang = rope_angles(pos, dims // 2, base)
    R = torch.zeros(dims, dims)
    c, s = torch.cos(ang), torch.sin(ang)
    for j in range(dims // 2):
        R[2 * j, 2 * j] = c[j]
        R[2 * j, 2 * j + 1] = -s[j]
        R[2 * j + 1, 2 * j] = s[j]
        R[2 * j + 1, 2 * j + 1] = c[j]
    return R


def _apply_rope(x: torch.Tensor, ang: torch.Tensor, sign: float) -> torch.Tensor:
    # x: [..., T, 2*n_pairs], ang: [T, n_pairs]
    a, b = x[..., 0::2], x[..., 1::2]
    c, s = torch.cos(ang), torch.sin(ang) * sign
    out = torch.empty_like(x)
    out[..., 0::2] = c * a - s * b
    out[..., 1::2] = s * a + c * b
    return out


class PropeTransforms:
    """Per-token block-diagonal transforms for a sequence of T tokens."""

    def __init__(self, P: torch.Tensor, ang_x: torch.Tensor, ang_y: torch.Tensor,
                 head_dim: int):
        if head_dim % 8 != 0:
            raise ValueError(f"head_dim must be divisible by 8, got {head_dim}")
        self.head_dim = head_dim
        self.P = P                       # [T, 4, 4]
        self.P_inv = torch.linalg.inv(P.double()).to(P.dtype)
        self.ang_x = ang_x               # [T, d/8]
        self.ang_y = ang_y               # [T, d/8]

    @property
    def n_tokens(self) -> int:
        return self.P.shape[0]

    def _apply(self, x: torch.Tensor, cam_mode: str, rope_sign: float) -> torch.Tensor:
        d = self.head_dim
        half, quarter = d // 2, d // 4
        P = self.P.to(x.dtype)
        P_inv = self.P_inv.to(x.dtype)
        cam = x[..., :half].reshape(*x.shape[:-1], half // 4, 4)
        if cam_mode == "P":
            cam = torch.einsum("tij,...tbj->...tbi", P, cam)
        elif cam_mode == "PT":
            cam = torch.einsum("tji,...tbj->...tbi", P, cam)
        elif cam_mode == "Pinv":
            cam = torch.einsum("tij,...tbj->...tbi", P_inv, cam)
        else:
            raise ValueError(cam_mode)
        cam = cam.reshape(*x.shape[:-1], half)
        rx = _apply_rope(x[..., half:half + quarter], self.ang_x.to(x.dtype), rope_sign)
        ry = _apply_rope(x[..., half + quarter:], self.ang_y.to(x.dtype), rope_sign)
        return torch.cat([cam, rx, ry], dim=-1)

    def apply_out(self, x):    # D
        return self._apply(x, "P", +1.0)

    def apply_query(self, x):  # D^T
        return self._apply(x, "PT", -1.0)

    def apply_keyval(self, x):  # D^-1
        return self._apply(x, "Pinv", -1.0)

    def apply_inverse(self, x):  # alias, used for round-trip checks
        return self._apply(x, "Pinv", -1.0)

    def slice(self, start: int, stop: int) -> "PropeTransforms":
        out = PropeTransforms.__new__(PropeTransforms)
        out.head_dim = self.head_dim
        out.P = self.P[start:stop]
        out.P_inv = self.P_inv[start:stop]
        out.ang_x = self.ang_x[start:stop]
        out.ang_y = self.ang_y[start:stop]
        return out


def build_transforms(coords: list[TokenCoord], cameras: list[Camera | None],
                     head_dim: int, base: float = DEFAULT_ROPE_BASE) -> PropeTransforms:
    """Build per-token transforms; tokens whose frame camera is None get D = I."""
    if head_dim % 8 != 0:
        raise ValueError(f"head_dim must be divisible by 8, got {head_dim}")
    lifted = [np.eye(4) if c is None else lift_projective(c) for c in cameras]
    P = torch.tensor(np.stack([lifted[tc.frame_index] for tc in coords]),
                     dtype=torch.float32)
    xs = torch.tensor([tc.x for tc in coords], dtype=torch.float32)
    ys = torch.tensor([tc.y for tc in coords], dtype=torch.float32)
    n_pairs = head_dim // 8
    return PropeTransforms(P, rope_angles(xs, n_pairs, base),
                           rope_angles(ys, n_pairs, base), head_dim)


def build_prope_transform(tok: TokenCoord, cam: Camera, head_dim: int,
                          base: float = DEFAULT_ROPE_BASE) -> PropeTransforms:
    return build_transforms([TokenCoord(0, tok.x, tok.y)], [cam], head_dim, base)


def identity_transforms(n_tokens: int, head_dim: int) -> PropeTransforms:
    P = torch.eye(4).expand(n_tokens, 4, 4).contiguous()
    zeros = torch.zeros(n_tokens, head_dim // 8)
    return PropeTransforms(P, zeros, zeros.clone(), head_dim)


def prope_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                    transforms: PropeTransforms,
                    mask: torch.Tensor | None = None,
                    compute_dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """GTA-form attention: D o Attn(D^T o Q, D^-1 o K, D^-1 o V).

    q/k/v: [..., T, d] with d == transforms.head_dim. mask: [T, T] bool,
    True = visible. Fully masked rows yield zero output.

    float64 internals by default keep the relative-transform invariance well
    under 1e-5; the transformer passes float32 (2x cheaper, equivalence between
    its own code paths is unaffected since both use the same dtype).
    """
    T, d = q.shape[-2], q.shape[-1]
    if k.shape[-2] != T or v.shape[-2] != T or transforms.n_tokens != T:
        raise ValueError("token count mismatch between q/k/v/transforms")
    out_dtype = q.dtype
    q, k, v = (x.to(compute_dtype) for x in (q, k, v))
    qt = transforms.apply_query(q)
    kt = transforms.apply_keyval(k)
    vt = transforms.apply_keyval(v)
    logits = qt @ kt.transpose(-1, -2) / math.sqrt(d)
    if mask is not None:
        # large-negative fill keeps softmax finite; blocked weights underflow to 0
        logits = logits.masked_fill(~mask, -1e30)
    attn = torch.softmax(logits, dim=-1)
    if mask is not None:
        dead = ~mask.any(dim=-1)
        if dead.any():
            attn = attn * (~dead)[:, None].to(attn.dtype)
    out = attn @ vt
    return transforms.apply_out(out).to(out_dtype)
