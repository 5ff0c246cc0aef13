"""DDPM pieces: linear noise schedule, forward noising, x0-predicting losses
and the reverse step a_{k-1} = sqrt(ab[k-1]) * pred_a0 + sqrt(1 - ab[k-1]) * eps.

Steps are indexed 1..K; ``alpha_bar[0]`` is 1 so the last reverse step
returns the prediction itself.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np

from helpers.autodiff import Var, mse
from helpers.errors import BadLambda, BadRange, BadStep, LengthMismatch, ShapeMismatch

logger = logging.getLogger(__name__)

Steps = Union[int, np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    K: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def check_step(self, k: Steps) -> np.ndarray:
        k = np.asarray(k)
        if not np.issubdtype(k.dtype, np.integer) or np.any(k < 1) or np.any(k > self.K):
            raise BadStep(f"diffusion step must be an integer in 1..{self.K}, got {k.tolist()}")
        return k


def make_schedule(K: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    if int(K) != K or K < 1:
        raise BadRange(f"step count must be a positive integer, got {K}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise BadRange(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, int(K))
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha)])
    for array in (beta, alpha, alpha_bar):
        array.setflags(write=False)
    return NoiseSchedule(K=int(K), beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def _coefficient(values: np.ndarray, ndim: int) -> np.ndarray:
    """Per-row coefficients broadcast against a (B, ...) batch."""
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def _require_same_shape(*arrays: np.ndarray):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"shapes disagree: {sorted(shapes)}")


def add_noise(a0, k: Steps, eps, sched: NoiseSchedule) -> np.ndarray:
    a0, eps = np.asarray(a0, dtype=float), np.asarray(eps, dtype=float)
    _require_same_shape(a0, eps)
    k = sched.check_step(k)
    if k.ndim and (a0.ndim == 0 or k.shape[0] != a0.shape[0]):
        raise ShapeMismatch(f"{k.shape[0]} steps for a batch of shape {a0.shape}")
    ab = _coefficient(sched.alpha_bar[k], a0.ndim)
    return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * eps


def _blend(pred_a0: np.ndarray, alpha_bar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    ab = _coefficient(alpha_bar, pred_a0.ndim)
    return np.sqrt(ab) * pred_a0 + np.sqrt(1.0 - ab) * eps


def denoise_step(a_k, k: Steps, pred_a0, sched: NoiseSchedule, eps_k=None) -> np.ndarray:
    a_k, pred_a0 = np.asarray(a_k, dtype=float), np.asarray(pred_a0, dtype=float)
    eps_k = np.zeros_like(a_k) if eps_k is None else np.asarray(eps_k, dtype=float)
    _require_same_shape(a_k, pred_a0, eps_k)
    k = sched.check_step(k)
    return _blend(pred_a0, sched.alpha_bar[k - 1], eps_k)


def reverse_schedule(K: int, reverse_steps: Optional[int] = None) -> List[int]:
    """Descending steps visited by the sampler, always starting at K."""
    if reverse_steps is None or reverse_steps >= K:
        return list(range(K, 0, -1))
    if reverse_steps < 1:
        raise BadRange(f"reverse_steps must be positive, got {reverse_steps}")
    steps = np.unique(np.round(np.linspace(K, 1, reverse_steps)).astype(int))[::-1]
    return [int(k) for k in steps]


def sample(
    denoiser: Callable[[np.ndarray, np.ndarray], np.ndarray],
    shape,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    reverse_steps: Optional[int] = None,
) -> np.ndarray:
    """Reverse loop from standard-normal noise.

    ``denoiser(a_k, k)`` returns the predicted a_0; ``k`` is a per-row step
    array. Intermediate steps inject fresh standard-normal noise, the final
    jump to step 0 injects none.
    """
    a = rng.standard_normal(shape)
    steps = reverse_schedule(sched.K, reverse_steps)
    batch = shape[0] if len(shape) > 1 else None
    for i, k in enumerate(steps):
        k_rows = np.full(batch, k) if batch is not None else np.asarray(k)
        pred = np.asarray(denoiser(a, k_rows), dtype=float)
        target = steps[i + 1] if i + 1 < len(steps) else 0
        eps = rng.standard_normal(shape) if target > 0 else np.zeros(shape)
        a = _blend(pred, np.asarray(sched.alpha_bar[target]), eps)
    return a


def loss_ee(a0_true, a_k, k: Steps, C, denoiser: Callable[..., Var]) -> Var:
    """MSE between the denoiser's predicted a_0 and the true chunk."""
    pred = denoiser(a_k, k, C)
    true_shape = np.shape(a0_true.value if isinstance(a0_true, Var) else a0_true)
    if pred.shape != true_shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {true_shape}")
    return mse(pred, a0_true)


def loss_joint(a_joint_true, a_joint_pred: Var) -> Var:
    true_shape = np.shape(a_joint_true.value if isinstance(a_joint_true, Var) else a_joint_true)
    if true_shape != a_joint_pred.shape:
        raise LengthMismatch(f"joint target {true_shape} vs prediction {a_joint_pred.shape}")
    return mse(a_joint_pred, a_joint_true)


def loss_total(l_ee, l_joint, lam: float = 0.9):
    if not 0.0 <= lam <= 1.0:
        raise BadLambda(f"trade-off coefficient must lie in [0, 1], got {lam}")
    return l_ee * lam + l_joint * (1.0 - lam)
