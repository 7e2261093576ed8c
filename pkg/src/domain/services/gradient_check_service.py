"""Finite-difference verification of every differentiable loss and learned head."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import torch
from torch.autograd import gradcheck
from torch.func import functional_call

from src.domain.model.decoder import MaskDecoder
from src.domain.model.heads import FilmHead, ProjHead, compose_objpart, film_modulate
from src.domain.services.attention_control_service import AttentionControlService
from src.domain.services.loss_service import LossService

logger = logging.getLogger(__name__)

DTYPE = torch.float64

Case = tuple[Callable[..., torch.Tensor], tuple[torch.Tensor, ...]]


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    instances: int
    passed: int

    @property
    def ok(self) -> bool:
        return self.passed == self.instances


def _rand(gen: torch.Generator, *shape: int) -> torch.Tensor:
    return torch.rand(*shape, generator=gen, dtype=DTYPE).requires_grad_(True)


def _randn(gen: torch.Generator, *shape: int) -> torch.Tensor:
    return torch.randn(*shape, generator=gen, dtype=DTYPE).requires_grad_(True)


def _nonempty_masks(gen: torch.Generator, n: int, h: int, w: int) -> torch.Tensor:
    masks = torch.rand(n, h, w, generator=gen) < 0.4
    for i in range(n):
        if not masks[i].any():
            masks[i].view(-1)[int(torch.randint(h * w, (1,), generator=gen))] = True
    return masks


def _separation_soft(gen: torch.Generator) -> Case:
    norms = _rand(gen, 3, 4, 4)
    return (lambda x: AttentionControlService.separation_loss_soft(x, 0.3, 0.2, 1e-8, 3)), (
        norms,
    )


def _enhancement(gen: torch.Generator) -> Case:
    maps = _rand(gen, 3, 4, 4)
    masks = _nonempty_masks(gen, 3, 4, 4)
    return (lambda x: AttentionControlService.enhancement_loss(list(zip(x, masks)))), (maps,)


def _normalize_and_smooth(gen: torch.Generator) -> Case:
    raw = _randn(gen, 2, 4, 4)
    return (lambda x: AttentionControlService.normalize_and_smooth(x, 1.0, 3)), (raw,)


def _bce(gen: torch.Generator) -> Case:
    logits = _randn(gen, 6, 6)
    target = (torch.rand(6, 6, generator=gen) < 0.5).to(DTYPE)
    return (lambda z: LossService.bce_masked(z, target)), (logits,)


def _mask_loss(gen: torch.Generator) -> Case:
    # 2 pairs + uncategory, 2 objects + uncategory, 1 part
    logits = _randn(gen, 2, 7, 4, 4)
    targets = tuple(
        (torch.rand(2, c, 4, 4, generator=gen) < 0.5).to(DTYPE) for c in (3, 3, 1)
    )
    return (lambda z: LossService.mask_loss(z, targets, 0.7, 1.3)), (logits,)


def _total_loss(gen: torch.Generator) -> Case:
    parts = (_rand(gen, ()), _rand(gen, ()), _rand(gen, ()))
    return (lambda m, s, e: LossService.total_loss(m, s, e, 0.1, 0.2)), parts


def _film(gen: torch.Generator) -> Case:
    head = FilmHead(4).to(DTYPE)
    feat = _randn(gen, 2, 4, 3, 3)
    text = _randn(gen, 2, 4)
    weight = _randn(gen, 8, 4)
    bias = _randn(gen, 8)

    def fn(f, t, w, b):
        params = {"generator.weight": w, "generator.bias": b}
        return film_modulate(f, t, _Bound(head, params))

    return fn, (feat, text, weight, bias)


def _proj(gen: torch.Generator) -> Case:
    head = ProjHead(4).to(DTYPE)
    obj = _randn(gen, 2, 4, 3, 3)
    part = _randn(gen, 2, 4, 3, 3)
    weight = _randn(gen, 4, 8)

    def fn(o, p, w):
        return compose_objpart(o, p, _Bound(head, {"linear.weight": w}))

    return fn, (obj, part, weight)


def _decoder(upsample: str) -> Callable[[torch.Generator], Case]:
    def case(gen: torch.Generator) -> Case:
        with torch.random.fork_rng():
            torch.manual_seed(int(torch.randint(2**31, (1,), generator=gen)))
            decoder = MaskDecoder(4, 2, blocks=1, upsample=upsample).to(DTYPE)
        grids = _randn(gen, 1, 2, 4, 2, 2)
        weight = _randn(gen, *decoder.head.weight.shape)
        bias = _randn(gen, 1)

        def fn(g, w, b):
            params = {"head.weight": w, "head.bias": b}
            return functional_call(decoder, params, (g,))[0]

        return fn, (grids, weight, bias)

    return case


class _Bound:
    """Calls ``module`` with substituted parameters while keeping its attributes visible."""

    def __init__(self, module: torch.nn.Module, params: dict[str, torch.Tensor]) -> None:
        self.module = module
        self.params = params

    def __getattr__(self, name: str):
        return getattr(self.module, name)

    def __call__(self, *args):
        return functional_call(self.module, self.params, args)


CHECKS: dict[str, Callable[[torch.Generator], Case]] = {
    "separation_loss_soft": _separation_soft,
    "enhancement_loss": _enhancement,
    "normalize_and_smooth": _normalize_and_smooth,
    "bce_masked": _bce,
    "mask_loss": _mask_loss,
    "total_loss": _total_loss,
    "film_head": _film,
    "proj_head": _proj,
    "decoder_head": _decoder("bilinear"),
    "decoder_head_transposed": _decoder("transposed"),
}


class GradientCheckService:
    @staticmethod
    def run(
        instances: int = 50,
        seed: int = 0,
        rtol: float = 1e-4,
        atol: float = 1e-7,
        names: list[str] | None = None,
    ) -> list[GradCheckResult]:
        results = []
        for name in names or list(CHECKS):
            gen = torch.Generator().manual_seed(seed)
            passed = 0
            for _ in range(instances):
                fn, inputs = CHECKS[name](gen)
                if gradcheck(fn, inputs, eps=1e-6, atol=atol, rtol=rtol, raise_exception=False):
                    passed += 1
            logger.info("%s: %d/%d instances passed", name, passed, instances)
            results.append(GradCheckResult(name, instances, passed))
        return results
