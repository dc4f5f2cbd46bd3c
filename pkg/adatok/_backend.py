"""Functional tensor operations the nested autoencoder is built from.

Every operation accepts an unbatched ``(c, h, w)`` tensor or a batched ``(n, c, h, w)``
one and returns the same rank it was given. Reverse-mode differentiation is delegated
to :mod:`torch.autograd`; :func:`gradient_check` verifies it against central
differences.
"""
import math
from typing import Callable, Iterable, NamedTuple, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from ._errors import ConfigurationError, ContractViolation, GradientCheckError

__all__ = ("conv2d", "group_norm", "silu", "upsample_nearest", "AttentionParams",
           "attention_weights", "attention_layer", "gradient_check",)


def _as_batch(x: Tensor, name: str) -> Tuple[Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ContractViolation("{} must have shape (c, h, w) or (n, c, h, w), got {}".format(
        name, tuple(x.shape)))


def _restore(x: Tensor, squeeze: bool) -> Tensor:
    return x.squeeze(0) if squeeze else x


def conv2d(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None, *,
           stride: int = 1, padding: int = 0) -> Tensor:
    x, squeeze = _as_batch(input, "input")
    if weight.dim() != 4:
        raise ContractViolation("weight must have shape (cout, cin, k, k), got {}".format(
            tuple(weight.shape)))
    cout, cin, kh, kw = weight.shape
    if kh != kw:
        raise ContractViolation("kernel must be square, got {}x{}".format(kh, kw))
    if kh % 2 == 0:
        raise ContractViolation("kernel size must be odd, got {}".format(kh))
    if stride not in (1, 2):
        raise ContractViolation("stride must be 1 or 2, got {}".format(stride))
    if x.shape[1] != cin:
        raise ContractViolation("channel dimension mismatch: input has {}, weight expects {}"
                                .format(x.shape[1], cin))
    if bias is not None and tuple(bias.shape) != (cout,):
        raise ContractViolation("bias dimension mismatch: expected ({},), got {}".format(
            cout, tuple(bias.shape)))
    height, width = x.shape[-2:]
    if height + 2 * padding < kh or width + 2 * padding < kw:
        raise ContractViolation("spatial size {}x{} too small for kernel {} with padding {}"
                                .format(height, width, kh, padding))
    return _restore(F.conv2d(x, weight, bias, stride=stride, padding=padding), squeeze)


def group_norm(input: Tensor, groups: int, gamma: Tensor, beta: Tensor,
               eps: float = 1e-6) -> Tensor:
    x, squeeze = _as_batch(input, "input")
    channels = x.shape[1]
    if groups < 1 or channels % groups != 0:
        raise ConfigurationError("{} channels are not divisible into {} groups".format(
            channels, groups))
    if tuple(gamma.shape) != (channels,) or tuple(beta.shape) != (channels,):
        raise ContractViolation("gamma/beta must have shape ({},)".format(channels))
    return _restore(F.group_norm(x, groups, gamma, beta, eps), squeeze)


def silu(input: Tensor) -> Tensor:
    return F.silu(input)


def upsample_nearest(input: Tensor, scale: int = 2) -> Tensor:
    x, squeeze = _as_batch(input, "input")
    return _restore(F.interpolate(x, scale_factor=scale, mode="nearest"), squeeze)


class AttentionParams(NamedTuple):
    q_weight: Tensor
    q_bias: Tensor
    k_weight: Tensor
    k_bias: Tensor
    v_weight: Tensor
    v_bias: Tensor
    out_weight: Tensor
    out_bias: Tensor


def _tokens(input: Tensor, params: AttentionParams) -> Tuple[Tensor, bool]:
    x, squeeze = _as_batch(input, "input")
    channels = x.shape[1]
    for name, value in params._asdict().items():
        expected = (channels, channels) if name.endswith("weight") else (channels,)
        if tuple(value.shape) != expected:
            raise ContractViolation("attention {} must have shape {}, got {}".format(
                name, expected, tuple(value.shape)))
    # (n, c, h, w) -> (n, h*w, c)
    return x.flatten(2).transpose(1, 2), squeeze


def _softmax_scores(tokens: Tensor, params: AttentionParams) -> Tensor:
    query = F.linear(tokens, params.q_weight, params.q_bias)
    key = F.linear(tokens, params.k_weight, params.k_bias)
    scores = query @ key.transpose(1, 2) / math.sqrt(tokens.shape[-1])
    return torch.softmax(scores, dim=-1)


def attention_weights(input: Tensor, params: AttentionParams) -> Tensor:
    """Row-stochastic ``(h*w, h*w)`` attention matrix (batched if the input is)."""
    tokens, squeeze = _tokens(input, params)
    return _restore(_softmax_scores(tokens, params), squeeze)


def attention_layer(input: Tensor, params: AttentionParams, *,
                    residual: Optional[Tensor] = None) -> Tensor:
    """Single-head self-attention over spatial positions with a residual connection.

    Projections are linear maps over channels only, so the layer accepts any spatial size.
    The residual defaults to ``input``; pre-normalized callers pass the raw activation.
    """
    tokens, squeeze = _tokens(input, params)
    weights = _softmax_scores(tokens, params)
    value = F.linear(tokens, params.v_weight, params.v_bias)
    attended = F.linear(weights @ value, params.out_weight, params.out_bias)
    if residual is None:
        base = tokens
    else:
        if residual.shape != input.shape:
            raise ContractViolation("residual shape {} does not match input {}".format(
                tuple(residual.shape), tuple(input.shape)))
        base, _ = _as_batch(residual, "residual")
        base = base.flatten(2).transpose(1, 2)
    out = (base + attended).transpose(1, 2).reshape(
        tokens.shape[0], tokens.shape[2], *input.shape[-2:])
    return _restore(out, squeeze)


def gradient_check(f: Callable[[], Tensor], params: Iterable[Tensor], h: float = 1e-6, *,
                   max_elements: Optional[int] = None, seed: int = 0) -> float:
    """Max relative error between autograd and central-difference gradients.

    ``f`` is re-evaluated with each parameter element perturbed in place. With
    ``max_elements`` only a seeded random subset of each parameter's elements is checked.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ContractViolation("step h must lie in [1e-6, 1e-4], got {}".format(h))
    params = list(params)
    for param in params:
        if param.dtype != torch.float64:
            raise ContractViolation("gradient checks require float64 parameters, got {}"
                                    .format(param.dtype))

    loss = f()
    if loss.numel() != 1:
        raise ContractViolation("gradient check needs a scalar function, got shape {}".format(
            tuple(loss.shape)))
    if not torch.isfinite(loss).all():
        raise GradientCheckError("loss is not finite: {}".format(loss.item()))
    grads = torch.autograd.grad(loss, params, allow_unused=True)

    def evaluate() -> float:
        value = f().item()
        if not math.isfinite(value):
            raise GradientCheckError("loss became non-finite under perturbation h={}".format(h))
        return value

    generator = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for param, grad in zip(params, grads):
            analytic = torch.zeros_like(param) if grad is None else grad
            analytic = analytic.reshape(-1)
            flat = param.data.view(-1)
            count = flat.numel()
            if max_elements is None or max_elements >= count:
                indices = range(count)
            else:
                indices = torch.randperm(count, generator=generator)[:max_elements].tolist()
            for index in indices:
                original = flat[index].item()
                flat[index] = original + h
                plus = evaluate()
                flat[index] = original - h
                minus = evaluate()
                flat[index] = original
                numeric = (plus - minus) / (2 * h)
                exact = analytic[index].item()
                error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
                worst = max(worst, error)
    return worst
