"""Numerical substrate: reverse-mode gradients, Adam, and EMA shadow parameters.

Backed by torch CPU tensors in float32. All randomness flows through explicit
torch.Generator seeds so single-threaded runs are reproducible.
"""

from __future__ import annotations

import torch

from .container import read_container, write_container


class ParamSet:
    """Named parameter map with an optional EMA shadow copy."""

    def __init__(self, params: dict[str, torch.Tensor]):
        self.params = params
        self.ema_shadow: dict[str, torch.Tensor] | None = None

    @classmethod
    def from_module(cls, module: torch.nn.Module) -> "ParamSet":
        return cls(dict(module.named_parameters()))

    def init_ema(self) -> None:
        self.ema_shadow = {k: v.detach().clone() for k, v in self.params.items()}

    def ema_update(self, decay: float) -> None:
        """shadow <- decay * shadow + (1 - decay) * params, with stop-gradient."""
        if not 0.0 <= decay <= 1.0:
            raise ValueError(f"EMA decay must be in [0, 1], got {decay}")
        if self.ema_shadow is None:
            raise ValueError("EMA shadow not initialized")
        with torch.no_grad():
            for k, p in self.params.items():
                self.ema_shadow[k].mul_(decay).add_(p.detach(), alpha=1.0 - decay)


def backward(loss: torch.Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable parameter."""
    if loss.numel() != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {tuple(loss.shape)}")
    loss.backward()


def adam_step(params: ParamSet, grads: dict[str, torch.Tensor], state: dict,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One in-place Adam update. `state` persists m/v/step between calls."""
    state.setdefault("step", 0)
    state["step"] += 1
    t = state["step"]
    with torch.no_grad():
        for name, p in params.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {tuple(g.shape)} != param shape "
                                 f"{tuple(p.shape)} for {name}")
            m = state.setdefault("m_" + name, torch.zeros_like(p))
            v = state.setdefault("v_" + name, torch.zeros_like(p))
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            m_hat = m / (1.0 - beta1 ** t)
            v_hat = v / (1.0 - beta2 ** t)
            p.addcdiv_(m_hat, v_hat.sqrt().add_(eps), value=-lr)
    return params


def ema_update(params: dict[str, torch.Tensor], shadow: dict[str, torch.Tensor],
               decay: float) -> dict[str, torch.Tensor]:
    """Functional EMA: returns decay * shadow + (1 - decay) * params, detached."""
    if not 0.0 <= decay <= 1.0:
        raise ValueError(f"EMA decay must be in [0, 1], got {decay}")
    out = {}
    with torch.no_grad():
        for k in shadow:
            out[k] = decay * shadow[k] + (1.0 - decay) * params[k].detach()
    return out


def save_checkpoint(path, module: torch.nn.Module, stage: str,
                    ema_shadow: dict | None = None, extra_meta: dict | None = None):
    arrays = {k: v.detach().numpy() for k, v in module.state_dict().items()}
    if ema_shadow is not None:
        arrays.update({"ema." + k: v.detach().numpy() for k, v in ema_shadow.items()})
    meta = {"stage": stage}
    meta.update(extra_meta or {})
    write_container(path, arrays, meta=meta)


def load_checkpoint(path):
    """Returns (state_dict tensors, ema state dict or None, meta)."""
    arrays, meta = read_container(path)
    state, ema = {}, {}
    for name, arr in arrays.items():
        if name.startswith("ema."):
            ema[name[4:]] = torch.from_numpy(arr.copy())
        else:
            state[name] = torch.from_numpy(arr.copy())
    return state, (ema or None), meta
