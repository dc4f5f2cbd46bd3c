import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import torch
from torch import Tensor, nn

__all__ = ("AdamWState", "AdamW", "adamw_step", "global_grad_norm", "clip_global_norm",
           "warmup_lr",)

logger = logging.getLogger(__name__)

NamedParameters = Iterable[Tuple[str, nn.Parameter]]


@dataclass
class AdamWState:
    """Moments keyed by parameter name.

    ``counts`` holds the number of updates each parameter received (its bias-correction
    step); ``step`` counts applied optimizer steps and ``skipped`` the rejected ones.
    """

    step: int = 0
    skipped: int = 0
    m: Dict[str, Tensor] = field(default_factory=dict)
    v: Dict[str, Tensor] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)

    def tensors(self) -> Dict[str, Tensor]:
        out = {}
        for name in sorted(self.m):
            out["m." + name] = self.m[name]
            out["v." + name] = self.v[name]
            out["t." + name] = torch.tensor([float(self.counts[name])])
        return out

    @classmethod
    def from_tensors(cls, step: int, skipped: int,
                     tensors: Dict[str, Tensor]) -> "AdamWState":
        state = cls(step, skipped)
        for key, value in tensors.items():
            kind, name = key.split(".", 1)
            if kind == "m":
                state.m[name] = value.clone()
            elif kind == "v":
                state.v[name] = value.clone()
            elif kind == "t":
                state.counts[name] = int(value.reshape(-1)[0].item())
        if set(state.m) != set(state.v) or set(state.m) != set(state.counts):
            raise ValueError("optimizer state has unpaired moments")
        return state


def _grads_finite(params: List[Tuple[str, nn.Parameter]]) -> bool:
    return all(bool(torch.isfinite(p.grad).all()) for _, p in params if p.grad is not None)


class AdamW:
    """``torch.optim.AdamW`` over named parameters.

    Parameters without a gradient are left untouched. A non-finite gradient anywhere
    skips the whole step. :attr:`state` exposes the moments by parameter name.
    """

    def __init__(self, params: NamedParameters, *, lr: float = 1e-4,
                 betas: Tuple[float, float] = (0.9, 0.95), weight_decay: float = 0.1,
                 eps: float = 1e-8) -> None:
        assert lr >= 0
        assert 0 < betas[0] < 1 and 0 < betas[1] < 1
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.weight_decay = weight_decay
        self.eps = eps
        self.optimizer = torch.optim.AdamW([p for _, p in self.params], lr=lr, betas=betas,
                                           weight_decay=weight_decay, eps=eps)
        self.steps = 0
        self.skipped = 0

    @property
    def state(self) -> AdamWState:
        state = AdamWState(self.steps, self.skipped)
        for name, param in self.params:
            slot = self.optimizer.state.get(param)
            if slot:
                state.m[name] = slot["exp_avg"]
                state.v[name] = slot["exp_avg_sq"]
                state.counts[name] = int(slot["step"])
        return state

    @state.setter
    def state(self, state: AdamWState) -> None:
        names = {name for name, _ in self.params}
        unknown = sorted(set(state.m) - names)
        if unknown:
            raise ValueError("optimizer state for unknown parameter(s) {}".format(
                ", ".join(unknown[:5])))
        self.steps, self.skipped = state.step, state.skipped
        for name, param in self.params:
            if name not in state.m:
                self.optimizer.state.pop(param, None)
                continue
            if state.m[name].shape != param.shape or state.v[name].shape != param.shape:
                raise ValueError("optimizer state for {} has shape {}, parameter is {}".format(
                    name, tuple(state.m[name].shape), tuple(param.shape)))
            self.optimizer.state[param] = {
                "step": torch.tensor(float(state.counts[name])),
                "exp_avg": state.m[name].to(param),
                "exp_avg_sq": state.v[name].to(param),
            }

    def zero_grad(self) -> None:
        self.optimizer.zero_grad(set_to_none=True)

    def skip(self) -> None:
        self.skipped += 1

    def step(self, lr: Optional[float] = None) -> bool:
        """One decoupled-weight-decay Adam update; returns False if the step was skipped."""
        if not _grads_finite(self.params):
            self.skipped += 1
            logger.warning("skipping optimizer step %d: non-finite gradient "
                           "(%d skipped so far)", self.steps + 1, self.skipped)
            return False
        for group in self.optimizer.param_groups:
            group["lr"] = self.lr if lr is None else lr
        self.optimizer.step()
        self.steps += 1
        return True

    def __repr__(self) -> str:
        return "AdamW(lr={}, betas={}, weight_decay={}, eps={})".format(
            self.lr, self.betas, self.weight_decay, self.eps)


def adamw_step(params: NamedParameters, state: AdamWState, *, lr: float,
               betas: Tuple[float, float] = (0.9, 0.95), weight_decay: float = 0.1,
               eps: float = 1e-8) -> bool:
    """Functional form of :meth:`AdamW.step`; ``state`` is updated in place."""
    opt = AdamW(params, lr=lr, betas=betas, weight_decay=weight_decay, eps=eps)
    names = [name for name, _ in opt.params]
    opt.state = AdamWState(state.step, state.skipped,
                           {n: state.m[n] for n in names if n in state.m},
                           {n: state.v[n] for n in names if n in state.v},
                           {n: state.counts[n] for n in names if n in state.counts})
    applied = opt.step()
    updated = opt.state
    state.step, state.skipped = updated.step, updated.skipped
    state.m.update(updated.m)
    state.v.update(updated.v)
    state.counts.update(updated.counts)
    return applied


def global_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for param in params:
        if param.grad is not None:
            total += float(param.grad.detach().to(torch.float64).pow(2).sum())
    return math.sqrt(total)


def clip_global_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the factor applied, 1.0 when the norm was already within bounds. Non-finite
    gradients are left as they are; the optimizer skips that step.
    """
    assert max_norm > 0
    params = [p for p in params if p.grad is not None]
    norm = global_grad_norm(params)
    if not math.isfinite(norm) or norm <= max_norm:
        return 1.0
    nn.utils.clip_grad_norm_(params, max_norm)
    return max_norm / norm


def warmup_lr(step: int, lr: float, warmup_steps: int) -> float:
    """Linear warmup to ``lr`` over ``warmup_steps`` (``step`` counts from 1), then constant."""
    if warmup_steps <= 0 or step >= warmup_steps:
        return lr
    return lr * max(step, 0) / warmup_steps
