"""One iteration of masked latent prediction.

The student encoder sees the masked input through the sparse forward, the
mask token fills the hidden latent cells, the predictor regresses the
teacher's dense latent at those cells, and the teacher follows the student by
exponential moving average.
"""
import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from iqjepa.errors import NumericalError
from iqjepa.model.encoder import Encoder, MaskLike, build_encoder, mask_tensor
from iqjepa.model.layers import adapt_mask_tensor
from iqjepa.model.masks import LatentMask, MaskSpec, generate_batch_masks
from iqjepa.model.predictor import MaskToken, Predictor, insert_mask_token
from iqjepa.signal.grid import DEFAULT_ANTENNAS
from iqjepa.train.schedule import TAU_END, TAU_START, lr_schedule, momentum_schedule
from torch import nn

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS = 100
DEFAULT_BATCH_SIZE = 32
DEFAULT_BASE_LR = 1e-3
DEFAULT_WEIGHT_DECAY = 0.05

PRECISIONS = {"float32": torch.float32, "float64": torch.float64}


def torch_dtype(precision: str) -> torch.dtype:
    try:
        return PRECISIONS[precision]
    except KeyError as e:
        raise ValueError(f"unsupported precision '{precision}'") from e


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    base_lr: float = DEFAULT_BASE_LR
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    tau_start: float = TAU_START
    tau_end: float = TAU_END
    mask: MaskSpec = field(default_factory=MaskSpec)
    seed: int = 0
    precision: str = "float32"
    architecture: str = "wjcnn"
    upsampling: Optional[int] = None
    clip_grad_norm: Optional[float] = None
    log_every: int = 10
    # wall_ms is written as 0 unless enabled, keeping reruns byte-identical
    record_wall_time: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ValueError("learning rate and weight decay must be non-negative")
        for tau in (self.tau_start, self.tau_end):
            if not 0 <= tau <= 1:
                raise ValueError("momentum endpoints must be in [0, 1]")
        if self.clip_grad_norm is not None and self.clip_grad_norm <= 0:
            raise ValueError("gradient clipping norm must be positive")
        if self.upsampling is not None and self.upsampling < 1:
            raise ValueError("upsampling factor must be positive")
        torch_dtype(self.precision)

    @property
    def dtype(self) -> torch.dtype:
        return torch_dtype(self.precision)


@dataclass(frozen=True)
class LossReport:
    loss: float
    masked_cells: int
    tau: float
    lr: float
    step: int


class TeacherState:
    """EMA copy of the student encoder.

    Only parameters follow the student; batch-norm running statistics belong
    to the teacher and are updated by its own forward passes.
    """

    def __init__(self, encoder: Encoder, momentum: float = TAU_START) -> None:
        if not 0 <= momentum <= 1:
            raise ValueError("momentum must be in [0, 1]")
        self.encoder = encoder
        self.momentum = momentum
        for p in self.encoder.parameters():
            p.requires_grad_(False)

    @classmethod
    def from_student(
        cls, student: Encoder, momentum: float = TAU_START
    ) -> "TeacherState":
        return cls(copy.deepcopy(student), momentum)

    @torch.no_grad()
    def targets(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder.dense_forward(x)


@torch.no_grad()
def ema_update(teacher: TeacherState, student: nn.Module, tau: float) -> TeacherState:
    if not 0 <= tau <= 1:
        raise ValueError("momentum must be in [0, 1]")
    t_params = dict(teacher.encoder.named_parameters())
    s_params = dict(student.named_parameters())
    if t_params.keys() != s_params.keys():
        raise ValueError("teacher and student parameter sets differ")
    for name, t in t_params.items():
        s = s_params[name]
        if t.shape != s.shape:
            raise ValueError(f"shape mismatch for '{name}': {t.shape} vs {s.shape}")
        t.mul_(tau).add_(s.detach().to(t.dtype), alpha=1.0 - tau)
    teacher.momentum = tau
    return teacher


def masked_l2_loss(
    y_hat: torch.Tensor,
    y: torch.Tensor,
    masks: MaskLike,
) -> torch.Tensor:
    """Squared error summed over channels, averaged over masked cells.

    Batched inputs (B, D, h, w) average the per-sample losses. Unmasked cells
    are selected away, so they never reach the value or the gradient.
    """
    if y_hat.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(y_hat.shape)} vs {tuple(y.shape)}")
    single = y_hat.dim() == 3
    if single:
        y_hat, y = y_hat[None], y[None]
    m = mask_tensor(masks, dtype=y_hat.dtype)
    if tuple(m.shape[-2:]) != tuple(y_hat.shape[-2:]) or m.shape[0] != y_hat.shape[0]:
        raise ValueError("masks do not match the latent grid")
    hidden = m[:, 0] == 0
    counts = hidden.sum(dim=(1, 2))
    if bool((counts == 0).any()):
        raise ValueError("loss needs at least one masked cell per sample")
    sq = ((y_hat - y) ** 2).sum(dim=1)
    per_sample = torch.where(hidden, sq, torch.zeros_like(sq)).sum(dim=(1, 2))
    return (per_sample / counts.to(sq.dtype)).mean()


@dataclass(eq=False)
class ForwardRecord:
    loss: torch.Tensor
    masks: List[LatentMask]
    latent: torch.Tensor
    prediction: torch.Tensor
    target: torch.Tensor
    parameters: Dict[str, nn.Parameter]
    consumed: bool = False

    @property
    def masked_cells(self) -> int:
        return sum(m.masked_count for m in self.masks)


def backward(
    record: Optional[ForwardRecord], loss_grad: float = 1.0
) -> Dict[str, torch.Tensor]:
    if record is None:
        raise RuntimeError("backward called before a forward pass")
    if record.consumed:
        raise RuntimeError("forward record was already consumed by backward")
    record.loss.backward(torch.as_tensor(loss_grad, dtype=record.loss.dtype))
    record.consumed = True
    return {
        name: (p.grad.clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in record.parameters.items()
    }


@dataclass(eq=False)
class JEPAState:
    student: Encoder
    predictor: Predictor
    token: MaskToken
    teacher: TeacherState
    optimizer: torch.optim.AdamW
    config: TrainConfig
    total_steps: int
    antennas: int = DEFAULT_ANTENNAS
    step: int = 0

    @classmethod
    def create(
        cls,
        config: TrainConfig,
        total_steps: int,
        antennas: int = DEFAULT_ANTENNAS,
    ) -> "JEPAState":
        if total_steps < 1:
            raise ValueError("total steps must be positive")
        dtype = config.dtype
        student = build_encoder(config.architecture, seed=config.seed, dtype=dtype)
        predictor = Predictor(student.latent_channels).to(dtype)
        token = MaskToken(student.latent_channels).to(dtype)
        teacher = TeacherState.from_student(student, config.tau_start)
        trainable = nn.ModuleDict(
            {"encoder": student, "predictor": predictor, "mask_token": token}
        )
        optimizer = torch.optim.AdamW(
            trainable.parameters(),
            lr=config.base_lr,
            weight_decay=config.weight_decay,
        )
        state = cls(
            student, predictor, token, teacher, optimizer, config, total_steps, antennas
        )
        state.train()
        return state

    def train(self) -> None:
        # the teacher normalizes with batch statistics as well
        self.student.train()
        self.predictor.train()
        self.teacher.encoder.train()

    @property
    def trainable(self) -> Dict[str, nn.Parameter]:
        named = {}
        for prefix, module in (
            ("encoder", self.student),
            ("predictor", self.predictor),
            ("mask_token", self.token),
        ):
            for name, p in module.named_parameters():
                named[f"{prefix}.{name}"] = p
        return named

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]


def forward_pass(
    state: JEPAState,
    batch: torch.Tensor,
    masks: List[LatentMask],
) -> ForwardRecord:
    m = mask_tensor(masks, dtype=batch.dtype)
    x_masked = batch * adapt_mask_tensor(m, batch.shape[-2:])
    h = state.student.sparse_forward(x_masked, m)
    h_tilde = insert_mask_token(h, m, state.token)
    y_hat = state.predictor(h_tilde)
    y = state.teacher.targets(batch)
    loss = masked_l2_loss(y_hat, y, m)
    return ForwardRecord(
        loss=loss,
        masks=list(masks),
        latent=h,
        prediction=y_hat,
        target=y,
        parameters=state.trainable,
    )


def draw_masks(
    state: JEPAState,
    batch: torch.Tensor,
    mask_spec: MaskSpec,
    first_index: int,
) -> Tuple[MaskSpec, List[LatentMask]]:
    dims = state.student.latent_dims(batch.shape[-2], batch.shape[-1])
    spec = mask_spec.resolve(dims, state.antennas)
    return spec, generate_batch_masks(spec, dims, first_index, batch.shape[0])


def train_step(
    state: JEPAState,
    batch: torch.Tensor,
    mask_spec: MaskSpec,
    first_index: int = 0,
    masks: Optional[List[LatentMask]] = None,
) -> Tuple[JEPAState, LossReport]:
    """Run one optimisation step on a batch of grid tensors (B, 2, H, W).

    Sample ``i`` of the batch draws its mask from ``mask_spec.seed ^
    (first_index + i)`` unless explicit ``masks`` are given.
    """
    if batch.dim() != 4 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty (B, 2, H, W) tensor")
    batch = batch.to(state.config.dtype)
    if masks is None:
        _, masks = draw_masks(state, batch, mask_spec, first_index)
    elif len(masks) != batch.shape[0]:
        raise ValueError("one mask per sample is required")

    lr = lr_schedule(state.step, state.total_steps, state.config.base_lr)
    for group in state.optimizer.param_groups:
        group["lr"] = lr

    state.optimizer.zero_grad(set_to_none=True)
    record = forward_pass(state, batch, masks)
    loss = record.loss.item()
    if not math.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss} at step {state.step}")
    backward(record)
    if state.config.clip_grad_norm is not None:
        nn.utils.clip_grad_norm_(
            list(record.parameters.values()), state.config.clip_grad_norm
        )
    state.optimizer.step()

    tau = momentum_schedule(
        state.step, state.total_steps, state.config.tau_start, state.config.tau_end
    )
    ema_update(state.teacher, state.student, tau)

    report = LossReport(
        loss=loss,
        masked_cells=record.masked_cells,
        tau=tau,
        lr=lr,
        step=state.step,
    )
    logger.debug("step %d loss %.6f tau %.6f lr %.3e", state.step, loss, tau, lr)
    state.step += 1
    return state, report


def grid_batch(x: np.ndarray, factor: int) -> torch.Tensor:
    """Antenna-upsample a stack of (2, A, T) samples into (B, 2, A*factor, T)."""
    if x.ndim != 4:
        raise ValueError("expected a (B, 2, A, T) stack")
    return torch.from_numpy(np.repeat(x, factor, axis=2))
