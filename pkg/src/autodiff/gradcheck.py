"""Finite-difference verification of reverse-mode gradients.

The operation under test is reduced to a scalar through a fixed random
linear projection of its output; every input element is then perturbed by
+-eps and the central difference is compared against the autograd gradient.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import torch
from loguru import logger
from torch import Tensor, nn
from torch.func import functional_call

from src.core.errors import GradError


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference check.

    Attributes:
        max_rel_error: Largest relative error over all checked elements
        per_input: Maximum relative error per checked input
        tolerance: Threshold the check was run against
        checked: Number of perturbed scalar elements
    """

    max_rel_error: float
    tolerance: float
    checked: int
    per_input: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "checked": self.checked,
            "per_input": self.per_input,
            "passed": self.passed,
        }


def finite_diff_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    tolerance: float = 1e-4,
    wrt: Optional[Sequence[int]] = None,
    floor: float = 1e-3,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autograd gradients of ``fn`` against central differences.

    Args:
        fn: Operation under test; returns a tensor of any shape
        inputs: Evaluation point; converted to float64 copies
        eps: Perturbation size
        tolerance: Relative-error threshold recorded on the report
        wrt: Indices of inputs to differentiate (default: all floating inputs)
        floor: Lower bound of the relative-error denominator
        seed: Seed of the output projection

    Returns:
        GradCheckReport with the maximum relative error

    Raises:
        GradError: If the reverse-mode gradient is not finite
    """
    point = [x.detach().clone().to(torch.float64) if x.is_floating_point() else x for x in inputs]
    if wrt is None:
        wrt = [i for i, x in enumerate(point) if x.is_floating_point()]

    with torch.no_grad():
        reference = fn(*point)
    generator = torch.Generator().manual_seed(seed)
    projection = torch.randn(reference.shape, generator=generator, dtype=torch.float64)

    def scalar(args: list[Tensor]) -> Tensor:
        return (fn(*args) * projection).sum()

    leaves = [x.requires_grad_(True) if i in wrt else x for i, x in enumerate(point)]
    grads = torch.autograd.grad(scalar(leaves), [leaves[i] for i in wrt], allow_unused=True)

    per_input: list[float] = []
    checked = 0
    for index, grad in zip(wrt, grads):
        analytic = torch.zeros_like(point[index]) if grad is None else grad.detach()
        if not torch.isfinite(analytic).all():
            raise GradError(f"non-finite gradient for input {index}")

        base = point[index].detach()
        flat = base.reshape(-1)
        numeric = torch.empty_like(flat)
        with torch.no_grad():
            for k in range(flat.numel()):
                args = [x.detach() for x in point]
                plus, minus = flat.clone(), flat.clone()
                plus[k] += eps
                minus[k] -= eps
                args[index] = plus.reshape(base.shape)
                f_plus = scalar(args)
                args[index] = minus.reshape(base.shape)
                f_minus = scalar(args)
                numeric[k] = (f_plus - f_minus) / (2 * eps)
        checked += flat.numel()

        a = analytic.reshape(-1)
        denom = torch.clamp(torch.maximum(a.abs(), numeric.abs()), min=floor)
        per_input.append(float(((a - numeric).abs() / denom).max()) if flat.numel() else 0.0)

    report = GradCheckReport(
        max_rel_error=max(per_input, default=0.0),
        tolerance=tolerance,
        checked=checked,
        per_input=per_input,
    )
    logger.debug(f"Gradient check: {checked} elements, max rel. error {report.max_rel_error:.3e}")
    return report


def check_module(
    module: nn.Module,
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    tolerance: float = 1e-4,
    seed: int = 0,
) -> GradCheckReport:
    """Finite-difference check of a module w.r.t. its inputs and parameters.

    The module is evaluated in float64 through ``functional_call`` so that
    its parameters can be perturbed without mutating the module.
    """
    module = module.to(torch.float64)
    names = [name for name, _ in module.named_parameters()]
    params = [p.detach() for _, p in module.named_parameters()]
    n_inputs = len(inputs)

    def call(*args: Tensor) -> Tensor:
        state = dict(zip(names, args[n_inputs:]))
        return functional_call(module, state, tuple(args[:n_inputs]))

    return finite_diff_check(call, [*inputs, *params], eps=eps, tolerance=tolerance, seed=seed)
