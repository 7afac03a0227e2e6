"""
Matting losses.

    L_matte    = L_mse + L_grad
    L_total    = L_matte + lambda_boundary * L_boundary

Every term is a mean, so lambda does not depend on resolution.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from utils.errors import ConfigError, InvalidInputError

GRAD_OPERATORS = ("forward", "sobel")

_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.t().contiguous()


@dataclass
class LossConfig:
    lambda_boundary: float = 0.01
    grad_operator: str = "forward"

    def validate(self):
        if self.lambda_boundary < 0:
            raise ConfigError("must be >= 0", "loss.lambda_boundary")
        if self.grad_operator not in GRAD_OPERATORS:
            raise ConfigError(f"must be one of {GRAD_OPERATORS}", "loss.grad_operator")


def _check(pred, target):
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")


def loss_mse(pred, target):
    _check(pred, target)
    return ((pred - target) ** 2).mean()


def _forward_diff(x):
    return x[..., :, 1:] - x[..., :, :-1], x[..., 1:, :] - x[..., :-1, :]


def _sobel(x):
    shape = x.shape
    flat = x.reshape(-1, 1, shape[-2], shape[-1])
    flat = F.pad(flat, (1, 1, 1, 1), mode="replicate")
    kx = _SOBEL_X.to(x)[None, None]
    ky = _SOBEL_Y.to(x)[None, None]
    gx = F.conv2d(flat, kx).reshape(shape)
    gy = F.conv2d(flat, ky).reshape(shape)
    return gx, gy


def loss_grad(pred, target, operator="forward"):
    """
    Sum of the per-axis mean absolute gradient differences.

    With the forward operator the x term averages over H x (W-1) positions
    and the y term over (H-1) x W positions.
    """
    _check(pred, target)
    if pred.shape[-1] < 2 or pred.shape[-2] < 2:
        raise InvalidInputError("gradient loss needs at least 2 pixels along each axis")

    grad = _forward_diff if operator == "forward" else _sobel
    px, py = grad(pred)
    tx, ty = grad(target)
    return (px - tx).abs().mean() + (py - ty).abs().mean()


def loss_boundary(pred_boundary, target_boundary):
    _check(pred_boundary, target_boundary)
    return (pred_boundary - target_boundary).abs().mean()


def loss_matte(pred, target, cfg=None):
    """Returns (L_mse + L_grad, breakdown)"""
    operator = cfg.grad_operator if cfg is not None else "forward"
    l_mse = loss_mse(pred, target)
    l_grad = loss_grad(pred, target, operator)
    total = l_mse + l_grad
    return total, {"l_mse": l_mse, "l_grad": l_grad, "l_boundary": None, "total": total}


def loss_total(pred_matte, target_matte, pred_boundary, target_boundary, cfg=None):
    """Returns (L_matte + lambda * L_boundary, breakdown of every term)"""
    cfg = cfg or LossConfig()
    l_matte, breakdown = loss_matte(pred_matte, target_matte, cfg)
    l_bnd = loss_boundary(pred_boundary, target_boundary)
    total = l_matte + cfg.lambda_boundary * l_bnd
    breakdown.update(l_boundary=l_bnd, total=total)
    return total, breakdown


def breakdown_to_floats(breakdown):
    return {k: (None if v is None else float(v.detach())) for k, v in breakdown.items()}
