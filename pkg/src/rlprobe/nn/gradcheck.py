"""Finite-difference oracle for the autodiff engine.

Both sides run on a float64 shadow copy of the network: the autodiff pass
re-executes the identical backward rules at higher precision, the oracle side
uses central differences. Coordinates whose perturbation flips the sign of any
ReLU pre-activation are reported as excluded rather than failed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import LayerKind, Network, forward
from .tensor import Tape, Tensor, backward, mul, tsum


@dataclass
class GradCheckReport:
    max_rel_err: float
    tolerance: float
    checked: int
    excluded: list = field(default_factory=list)
    per_tensor: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_rel_err <= self.tolerance

    def __str__(self):
        lines = [f"gradcheck: max_rel_err={self.max_rel_err:.3e} tol={self.tolerance:.1e} "
                 f"checked={self.checked} excluded={len(self.excluded)} "
                 f"{'PASS' if self.passed else 'FAIL'}"]
        for name, err in sorted(self.per_tensor.items()):
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def _relu_signs(layers, x, train):
    signs = []
    t = Tensor(x)
    for layer in layers:
        if layer.spec.kind is LayerKind.RELU:
            signs.append(t.data > 0)
        t = layer.forward(t, None, train)
    return t.data, signs


def _loss_of(out, rvec):
    return float(np.sum(out.astype(np.float64) * rvec))


def finite_diff_check(layers, input_array, tolerance=1e-4, h=1e-3, train=False,
                      max_coords=None, seed=0):
    """Compare autodiff gradients against central differences.

    ``layers`` may be a Network or a layer list. Checks the input and every
    parameter; when ``max_coords`` is set, a seeded random subset of that many
    coordinates per tensor is probed instead of all of them.
    """
    if isinstance(layers, Network):
        net = layers.astype(np.float64)
    else:
        net = Network([l.spec for l in layers], layers=[l.astype(np.float64) for l in layers])
    rng = np.random.default_rng(seed)
    x = Tensor(np.asarray(input_array, dtype=np.float64), requires_grad=True)

    tape = Tape()
    out = forward(net.layers, x, tape, train)
    rvec = rng.standard_normal(out.shape)
    loss = tsum(mul(out, Tensor(rvec), tape), tape=tape)
    backward(tape, loss)

    targets = [("input", x)] + net.parameters()
    max_rel = 0.0
    per_tensor = {}
    excluded = []
    checked = 0
    for name, t in targets:
        flat = t.data.reshape(-1)
        gflat = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
        n = flat.size
        coords = range(n)
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp, sp = _relu_signs(net.layers, x.data, train)
            flat[c] = orig - h
            fm, sm = _relu_signs(net.layers, x.data, train)
            flat[c] = orig
            if any((a != b).any() for a, b in zip(sp, sm)):
                excluded.append((name, int(c)))
                continue
            fd = (_loss_of(fp, rvec) - _loss_of(fm, rvec)) / (2.0 * h)
            ad = float(gflat[c])
            rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-6)
            worst = max(worst, rel)
            checked += 1
        per_tensor[name] = worst
        max_rel = max(max_rel, worst)
    return GradCheckReport(max_rel_err=max_rel, tolerance=tolerance, checked=checked,
                           excluded=excluded, per_tensor=per_tensor)
