"""Paired t-test and Holm-Bonferroni step-down correction."""

from __future__ import annotations

import math
from typing import Sequence

from scipy.special import betainc

from qrw.errors import DegenerateSampleError, ValidationError


def t_sf_two_sided(t: float, dof: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom.

    Uses the identity P(|T| >= t) = I_x(dof/2, 1/2) with x = dof / (dof + t^2).
    """
    if dof < 1:
        raise ValidationError("dof must be >= 1")
    x = dof / (dof + t * t)
    return float(betainc(dof / 2.0, 0.5, x))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided p-value of the paired t-test on ``a - b``.

    Identical samples (all differences zero) give p = 1.0. Zero variance with a
    nonzero mean difference raises DegenerateSampleError.
    """
    if len(a) != len(b):
        raise ValidationError(f"paired samples differ in length ({len(a)} vs {len(b)})")
    n = len(a)
    if n < 2:
        raise ValidationError("paired t-test needs at least 2 pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return 1.0
        raise DegenerateSampleError()
    t = mean / math.sqrt(var / n)
    return t_sf_two_sided(t, n - 1)


def holm_bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[bool]:
    """Holm's step-down procedure; returns rejection flags in input order."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    reject = [False] * m
    for step, i in enumerate(order):
        if p_values[i] <= alpha / (m - step):
            reject[i] = True
        else:
            break
    return reject
