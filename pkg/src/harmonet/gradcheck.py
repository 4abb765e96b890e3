"""Central-difference verification of analytic gradients.

Numeric differentiation perturbs one parameter coordinate at a time with
h = 1e-5 * max(1, |theta|) and compares against the backward pass using the
scale-free error |analytic - numeric| / max(1, |analytic|, |numeric|).
Models should be built in f64; batch-norm running statistics are frozen
around the probe so the loss is a pure function of the parameters.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CoordResult:
    param: str
    index: tuple
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradCheckReport:
    tol: float
    results: list = field(default_factory=list)

    @property
    def max_rel_err(self):
        return max((r.rel_err for r in self.results), default=0.0)

    @property
    def worst(self):
        return max(self.results, key=lambda r: r.rel_err, default=None)

    @property
    def passed(self):
        return self.max_rel_err <= self.tol

    def summary(self):
        w = self.worst
        status = "pass" if self.passed else "FAIL"
        where = f" worst={w.param}{list(w.index)} rel_err={w.rel_err:.3e}" if w else ""
        return f"grad_check {status}: {len(self.results)} coords, tol={self.tol:g}{where}"


def rel_error(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _frozen_batchnorm(model):
    """Disable running-stat updates on every BatchNorm reachable from model."""
    frozen = []
    stack = list(model.layers)
    while stack:
        layer = stack.pop()
        if hasattr(layer, "track_running") and layer.track_running:
            layer.track_running = False
            frozen.append(layer)
        stack.extend(getattr(layer, "sublayers", lambda: [])())
    return frozen


def _sample_indices(shape, max_coords, rng):
    total = int(np.prod(shape))
    if total <= max_coords:
        flat = np.arange(total)
    else:
        flat = rng.choice(total, size=max_coords, replace=False)
    return [np.unravel_index(i, shape) for i in np.sort(flat)]


def grad_check(model, x, labels, tol=1e-4, max_coords_per_param=20, seed=0):
    """Compare analytic parameter gradients against central differences.

    Returns a :class:`GradCheckReport`; callers decide whether to assert on
    ``report.passed``.
    """
    rng = np.random.default_rng(seed)
    params = model.params()
    for i, p in enumerate(params):
        if not p.name:
            p.name = f"param{i}"
    frozen = _frozen_batchnorm(model)
    try:
        model.zero_grads()
        model.loss_and_grads(x, labels, train=True)
        analytic = {id(p): p.grad.copy() for p in params}

        def loss_fn():
            logits = model.forward(x, train=True)
            return model.loss.forward(logits, labels)

        report = GradCheckReport(tol=tol)
        for p in params:
            for idx in _sample_indices(p.value.shape, max_coords_per_param, rng):
                orig = p.value[idx]
                h = 1e-5 * max(1.0, abs(float(orig)))
                p.value[idx] = orig + h
                lp = loss_fn()
                p.value[idx] = orig - h
                lm = loss_fn()
                p.value[idx] = orig
                numeric = (lp - lm) / (2 * h)
                a = float(analytic[id(p)][idx])
                report.results.append(
                    CoordResult(p.name, idx, a, numeric, rel_error(a, numeric)))
    finally:
        for layer in frozen:
            layer.track_running = True
    return report


def layer_grad_check(layer, x, tol=1e-6, max_coords=40, seed=0, train=True):
    """Check one layer's input and parameter gradients against central differences.

    The scalar objective is a fixed random projection of the layer output,
    which keeps the probe independent of any particular loss head.
    """
    rng = np.random.default_rng(seed)
    frozen_layers = _frozen_batchnorm(type("M", (), {"layers": [layer]})())
    try:
        out = layer.forward(x.copy(), train=train)
        proj = rng.standard_normal(out.shape)
        for p in layer.params():
            p.zero_grad()
        grad_in = layer.backward(proj.astype(out.dtype))
        param_grads = {id(p): p.grad.copy() for p in layer.params()}

        def objective(inp):
            return float((layer.forward(inp, train=train) * proj).sum())

        report = GradCheckReport(tol=tol)
        for idx in _sample_indices(x.shape, max_coords, rng):
            orig = x[idx]
            h = 1e-5 * max(1.0, abs(float(orig)))
            xp = x.copy()
            xp[idx] = orig + h
            lp = objective(xp)
            xp[idx] = orig - h
            lm = objective(xp)
            numeric = (lp - lm) / (2 * h)
            a = float(grad_in[idx])
            report.results.append(CoordResult("input", idx, a, numeric, rel_error(a, numeric)))
        for pi, p in enumerate(layer.params()):
            name = p.name or f"param{pi}"
            for idx in _sample_indices(p.value.shape, max_coords, rng):
                orig = p.value[idx]
                h = 1e-5 * max(1.0, abs(float(orig)))
                p.value[idx] = orig + h
                lp = objective(x)
                p.value[idx] = orig - h
                lm = objective(x)
                p.value[idx] = orig
                numeric = (lp - lm) / (2 * h)
                a = float(param_grads[id(p)][idx])
                report.results.append(CoordResult(name, idx, a, numeric, rel_error(a, numeric)))
    finally:
        for bn in frozen_layers:
            bn.track_running = True
    return report
