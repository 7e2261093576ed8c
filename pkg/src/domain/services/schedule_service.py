from __future__ import annotations


class ScheduleService:
    # Linear warmup to base_lr, then poly decay to 0 at total_iters
    @staticmethod
    def lr_at(
        step: int, base_lr: float, total_iters: int, warmup_iters: int, poly_power: float
    ) -> float:
        step = min(max(step, 0), total_iters)
        if warmup_iters > 0 and step < warmup_iters:
            return base_lr * step / warmup_iters
        remaining = 1.0 - (step - warmup_iters) / (total_iters - warmup_iters)
        return base_lr * max(remaining, 0.0) ** poly_power

    @staticmethod
    def lr_factor(step: int, total_iters: int, warmup_iters: int, poly_power: float) -> float:
        """Multiplier form for ``torch.optim.lr_scheduler.LambdaLR``."""
        return ScheduleService.lr_at(step, 1.0, total_iters, warmup_iters, poly_power)
