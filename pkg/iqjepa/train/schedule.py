import math

TAU_START = 0.996
TAU_END = 1.0


def _cosine_progress(step: int, total_steps: int) -> float:
    if total_steps <= 0:
        raise ValueError("total steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step == total_steps:
        return 0.0
    return (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def momentum_schedule(
    step: int,
    total_steps: int,
    tau_start: float = TAU_START,
    tau_end: float = TAU_END,
) -> float:
    if not (0 <= tau_start <= 1 and 0 <= tau_end <= 1):
        raise ValueError("momentum endpoints must be in [0, 1]")
    return tau_end - (tau_end - tau_start) * _cosine_progress(step, total_steps)


def lr_schedule(step: int, total_steps: int, base_lr: float) -> float:
    return base_lr * _cosine_progress(step, total_steps)
