"""Central finite-difference checking of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import ContractError, Tape, Tensor, backward


def _evaluate(f: Callable[[], Tensor]) -> tuple[float, str]:
    with Tape() as tape:
        out = f()
    if out.shape != (1, 1):
        raise ContractError(f"grad_check needs a scalar function, got shape {out.shape}")
    return out.item(), tape.kink_signature()


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
               samples: int | None = 64, floor: float = 1e-4, seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` takes no arguments and reads the current values of ``params``.  Up
    to ``samples`` coordinates per parameter are checked (all of them when
    ``samples`` is None).  A coordinate whose +-h probes land on a different
    side of any relu/threshold/floor branch than the base point is skipped.

    ``floor`` is an absolute gradient scale added to the denominator.  Central
    differences of an O(1) function carry ~1e-10 of roundoff, so coordinates
    with a true gradient near zero would otherwise dominate the maximum.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ContractError(f"step h={h} outside [1e-7, 1e-4]")
    for p in params:
        p.requires_grad = True
        p.grad = None

    with Tape() as tape:
        out = f()
    if out.shape != (1, 1):
        raise ContractError(f"grad_check needs a scalar function, got shape {out.shape}")
    base_val = out.item()
    base_sig = tape.kink_signature()
    if tape.produced(out):
        backward(tape, out, params)
    else:
        for p in params:
            p.grad = np.zeros_like(p.values)
    analytic = [p.grad.copy() for p in params]

    again, _ = _evaluate(f)
    if again != base_val:
        raise ContractError("f is not deterministic; seed any dropout inside it")

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.values.reshape(-1)
        if not np.shares_memory(flat, p.values):
            raise ContractError("parameter values must be contiguous for probing")
        n = flat.size
        coords = np.arange(n) if samples is None or samples >= n else rng.choice(n, samples, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp, sp = _evaluate(f)
            flat[c] = orig - h
            fm, sm = _evaluate(f)
            flat[c] = orig
            if sp != base_sig or sm != base_sig:
                continue
            numeric = (fp - fm) / (2.0 * h)
            a = ga.reshape(-1)[c]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + floor)
            worst = max(worst, err)
    return worst
