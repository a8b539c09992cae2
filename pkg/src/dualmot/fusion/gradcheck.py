"""Central-difference verification of hand-written backward passes.

Every differentiable op in this package ships a forward returning
(value, cache) and a vjp mapping the upstream gradient back onto inputs
and parameters. The checker perturbs each scalar of each input in turn,
recomputes a scalar loss, and compares the finite-difference slope
against the analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_STEP = 1e-5
REL_FLOOR = 1e-8


@dataclass(frozen=True)
class GradReport:
    """Worst-case agreement between analytic and numeric gradients."""

    max_abs_err: float
    max_rel_err: float
    worst: tuple[str, tuple[int, ...]]
    n_checked: int

    def ok(self, tol: float) -> bool:
        return self.max_rel_err <= tol


def _rel_err(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric), REL_FLOOR)
    return abs(analytic - numeric) / denom


def probe_indices(size: int, max_per_array: int | None) -> np.ndarray:
    """Flat indices grad_check probes in an array of ``size`` scalars:
    everything, or an evenly strided subset capped at ``max_per_array``."""
    if max_per_array is not None and size > max_per_array:
        idx = np.linspace(0, size - 1, max_per_array).round().astype(int)
        return np.unique(idx)
    return np.arange(size)


def grad_check(loss_and_grads, point: dict[str, np.ndarray],
               h: float = DEFAULT_STEP,
               max_per_array: int | None = None) -> GradReport:
    """Compare analytic gradients with central differences at ``point``.

    ``loss_and_grads(point)`` must return (loss, grads) where ``grads``
    has the same keys and shapes as ``point``. Each checked scalar costs
    two forward evaluations. ``max_per_array`` caps the number of
    coordinates probed per array (evenly strided, deterministic); None
    checks every coordinate. Non-finite values anywhere are an error.
    """
    _, grads = loss_and_grads(point)
    missing = set(point) - set(grads)
    if missing:
        raise KeyError(f"analytic gradients missing for {sorted(missing)}")

    max_abs = 0.0
    max_rel = 0.0
    worst = ("", ())
    n_checked = 0
    for name in sorted(point):
        arr = point[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != arr.shape:
            raise ValueError(
                f"{name}: gradient shape {g.shape} != value shape {arr.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite analytic gradient in {name}")
        idx = probe_indices(arr.size, max_per_array)
        flat = arr.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss_and_grads(point)
            flat[i] = orig - h
            down, _ = loss_and_grads(point)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(
                    f"non-finite loss while perturbing {name}[{i}]")
            numeric = (up - down) / (2.0 * h)
            analytic = float(g.reshape(-1)[i])
            abs_err = abs(analytic - numeric)
            rel_err = _rel_err(analytic, numeric)
            if rel_err > max_rel:
                max_rel = rel_err
                # unravel_index yields numpy scalars; keep the declared
                # plain-int contract so reports serialize as-is
                worst = (name, tuple(int(j) for j in np.unravel_index(i, arr.shape)))
            max_abs = max(max_abs, abs_err)
            n_checked += 1
    return GradReport(max_abs_err=max_abs, max_rel_err=max_rel,
                      worst=worst, n_checked=n_checked)


def sum_squares_loss(forward):
    """Wrap a forward + vjp pair into the loss_and_grads shape.

    ``forward(point)`` must return (out, vjp_fn) where ``vjp_fn(dout)``
    returns the gradient dict. The loss is 0.5 * sum(out**2), whose
    upstream gradient is ``out`` itself.
    """

    def loss_and_grads(point):
        out, vjp_fn = forward(point)
        loss = 0.5 * float((out * out).sum())
        return loss, vjp_fn(out)

    return loss_and_grads
