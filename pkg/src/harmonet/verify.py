"""Self-verification suites: basis properties, algorithm equivalence,
gradient integrity. Each suite returns rows of
{name, max_err, tol, passed} that the CLI renders as a pass/fail table and
the acceptance tests assert on.
"""

import numpy as np

from . import lapped
from .dct import FilterBank
from .gradcheck import grad_check, layer_grad_check
from .harmonic import HarmonicBlock
from .nn import (AvgPool2d, BatchNorm, Conv2d, Dense, Flatten, Network, ReLU,
                 SoftmaxCrossEntropy, UpsampleNearest)


def rel_diff(a, b):
    """Scale-free elementwise difference: max|a-b| / max(1, |a|max, |b|max)."""
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a)), np.max(np.abs(b))))


def basis_suite(sizes=(2, 3, 4, 8), l1_tol=1e-12, ortho_tol=1e-9):
    rows = []
    worst_l1 = 0.0
    worst_dot = 0.0
    for k in sizes:
        bank = FilterBank(k)
        l1 = np.abs(bank.psi).sum(axis=(2, 3))
        worst_l1 = max(worst_l1, float(np.abs(l1 - 1.0).max()))
        flat = bank.phi.reshape(k * k, k * k)
        gram = flat @ flat.T
        off = gram - np.diag(np.diag(gram))
        worst_dot = max(worst_dot, float(np.abs(off).max()))
    rows.append({"name": f"psi L1 norms == 1 (K in {list(sizes)})",
                 "max_err": worst_l1, "tol": l1_tol, "passed": worst_l1 < l1_tol})
    rows.append({"name": "raw basis pairwise orthogonality",
                 "max_err": worst_dot, "tol": ortho_tol, "passed": worst_dot < ortho_tol})
    return rows


def random_block_configs(count, seed=0, dtype=np.float64):
    """Sample harmonic block geometries for the equivalence suite."""
    rng = np.random.default_rng(seed)
    configs = []
    for i in range(count):
        k = int(rng.choice([3, 4]))
        subset = {"lam": None, "truncate": None}
        pick = rng.integers(0, 3)
        if pick == 1:
            subset["lam"] = int(rng.integers(1, 2 * k))
        elif pick == 2:
            subset["truncate"] = int(rng.integers(1, k * k + 1))
        configs.append(dict(
            in_channels=int(rng.integers(1, 9)),
            out_channels=int(rng.integers(1, 9)),
            kernel_size=k,
            stride=int(rng.choice([1, 2])),
            padding=int(rng.choice([0, 1])),
            h=int(rng.integers(k + 2, k + 8)),
            w=int(rng.integers(k + 2, k + 8)),
            seed=i,
            **subset,
        ))
    return configs


def _equivalence_errors(config, dtype):
    rng = np.random.default_rng(config["seed"] + 1234)
    block = HarmonicBlock(config["in_channels"], config["out_channels"],
                          config["kernel_size"], stride=config["stride"],
                          padding=config["padding"], lam=config["lam"],
                          truncate=config["truncate"], normalize=False,
                          rng=rng, dtype=dtype)
    x = rng.standard_normal(
        (2, config["in_channels"], config["h"], config["w"])).astype(dtype)
    out_e = block.forward_expanded(x, train=True)
    g = rng.standard_normal(out_e.shape).astype(dtype)
    block.weights.zero_grad()
    gx_e = block.backward(g)
    gw_e = block.weights.grad.copy()

    out_f = block.forward_folded(x, train=True)
    block.weights.zero_grad()
    gx_f = block.backward(g)
    gw_f = block.weights.grad.copy()

    return (rel_diff(out_e, out_f), rel_diff(gx_e, gx_f), rel_diff(gw_e, gw_f))


def equivalence_suite(count=50, seed=0, f32_tol=1e-4, f64_tol=1e-10):
    """Expanded vs folded agreement (forward, input grad, weight grad)."""
    rows = []
    for dtype, tol in ((np.float32, f32_tol), (np.float64, f64_tol)):
        worst = [0.0, 0.0, 0.0]
        for config in random_block_configs(count, seed=seed):
            errs = _equivalence_errors(config, dtype)
            worst = [max(w, e) for w, e in zip(worst, errs)]
        tag = "f32" if dtype is np.float32 else "f64"
        for label, err in zip(("forward", "grad wrt input", "grad wrt weights"), worst):
            rows.append({"name": f"expanded == folded {label} ({tag}, {count} configs)",
                         "max_err": err, "tol": tol, "passed": err <= tol})
    return rows


def _isolated_layers(seed=0):
    """One small instance of every differentiable layer kind, with an input
    kept away from ReLU's kink where relevant."""
    rng = np.random.default_rng(seed)

    def signal(*shape):
        x = rng.uniform(0.2, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
        return np.ascontiguousarray(x)

    return [
        ("conv2d", Conv2d(3, 4, 3, stride=2, padding=1, rng=rng, dtype=np.float64),
         signal(3, 3, 8, 8)),
        ("batchnorm", BatchNorm(5, affine=True, dtype=np.float64), signal(6, 5, 4, 4)),
        ("relu", ReLU(), signal(4, 3, 5, 5)),
        ("avgpool", AvgPool2d(3, stride=2, padding=1), signal(2, 3, 7, 7)),
        ("upsample_nearest", UpsampleNearest((9, 9)), signal(2, 3, 4, 4)),
        ("flatten", Flatten(), signal(3, 2, 4, 4)),
        ("dense", Dense(10, 7, rng=rng, dtype=np.float64), signal(5, 10)),
        ("harmonic_expanded",
         HarmonicBlock(2, 3, 3, padding=1, normalize=True, algorithm=1,
                       rng=rng, dtype=np.float64), signal(4, 2, 6, 6)),
        ("harmonic_folded",
         HarmonicBlock(2, 3, 3, stride=2, lam=3, rng=rng, dtype=np.float64),
         signal(2, 2, 7, 7)),
    ]


def layer_gradcheck_suite(tol=1e-6, seed=0):
    rows = []
    for name, layer, x in _isolated_layers(seed):
        report = layer_grad_check(layer, x, tol=tol, seed=seed)
        rows.append({"name": f"finite-difference gradients: {name}",
                     "max_err": report.max_rel_err, "tol": tol,
                     "passed": report.passed})
    loss = SoftmaxCrossEntropy()
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((6, 10))
    labels = rng.integers(0, 10, size=6)
    loss.forward(logits, labels)
    grad = loss.backward()
    exp = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = exp / exp.sum(axis=1, keepdims=True)
    onehot = np.eye(10)[labels]
    err = rel_diff(grad, (probs - onehot) / 6)
    rows.append({"name": "softmax_xent grad == (softmax - onehot)/batch",
                 "max_err": err, "tol": 1e-12, "passed": err <= 1e-12})
    return rows


def small_model_gradcheck(tol=1e-4, seed=0):
    """A reduced stack exercising every layer kind end to end."""
    rng = np.random.default_rng(seed)
    model = Network([
        HarmonicBlock(1, 4, 3, padding=1, normalize=True, algorithm=1,
                      rng=rng, dtype=np.float64),
        BatchNorm(4, dtype=np.float64),
        ReLU(),
        AvgPool2d(3, stride=2, padding=1),
        Conv2d(4, 4, 3, padding=1, rng=rng, dtype=np.float64),
        ReLU(),
        Flatten(),
        Dense(4 * 4 * 4, 10, rng=rng, dtype=np.float64),
    ])
    x = rng.standard_normal((4, 1, 8, 8))
    labels = rng.integers(0, 10, size=4)
    report = grad_check(model, x, labels, tol=tol, max_coords_per_param=10, seed=seed)
    return [{"name": "finite-difference gradients: mixed model",
             "max_err": report.max_rel_err, "tol": tol, "passed": report.passed}]


def full_verification(max_n=32, tol=None, grad_tol=1e-6, equivalence_count=50, seed=0):
    """Everything the `verify` CLI command runs. ``tol`` overrides the
    identity-suite tolerances (lapped transforms + algorithm equivalence);
    gradient checks keep their own tolerance."""
    id_tol = tol if tol is not None else 1e-12
    shift_tol = tol if tol is not None else 1e-10
    f32_tol = max(tol, 1e-4) if tol is not None else 1e-4
    f64_tol = tol if tol is not None else 1e-10
    rows = []
    rows += basis_suite(l1_tol=id_tol if tol is not None else 1e-12,
                        ortho_tol=id_tol if tol is not None else 1e-9)
    rows += lapped.identity_suite(max_n=max_n, tol=id_tol, shift_tol=shift_tol, seed=seed)
    rows += equivalence_suite(count=equivalence_count, seed=seed,
                              f32_tol=f32_tol, f64_tol=f64_tol)
    rows += layer_gradcheck_suite(tol=grad_tol, seed=seed)
    rows += small_model_gradcheck(seed=seed)
    return rows
