"""Executable acceptance checks.

Each ``check_*`` function runs one acceptance criterion at its fixed
tolerance and returns a :class:`CheckResult`. ``pcl-lab check`` and the
acceptance tests both call these.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from . import oracles
from .experiment import checkpoint_load, checkpoint_save
from .losses import (
    LossConfig,
    LossKind,
    PairedEmbeddings,
    ProjectionHead,
    compute_loss,
    fcl_loss,
    info_nce_core,
    pcl_loss,
    uniformity_regularizer,
)
from .model import Model, ModelOutputs, forward
from .numerics import Tensor
from .synthdata import make_benchmark
from .training import TrainConfig, cross_entropy, evaluate_target, pseudo_label_loss, records_equal, train

GRAD_TOL = 1e-4
ORACLE_TOL = 1e-9
INVARIANCE_TOL = 1e-10
PROB_KINDS = (LossKind.PCL, LossKind.PCL_L2, LossKind.PCL_MSE, LossKind.BCE)
W_FREE_KINDS = (LossKind.FCL, LossKind.NTCL, LossKind.SFCL)
W_BOUND_KINDS = (LossKind.PCL, LossKind.LCL, LossKind.PCL_L2, LossKind.PCL_MSE, LossKind.BCE)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.number}. {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(number, name, passed, detail, time.perf_counter() - t0)


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def _sizes(rng) -> tuple[int, int, int]:
    return int(rng.integers(2, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 7))


def _split_views(fn):
    """Turn ``fn(view_a, view_b)`` into a function of the two views stacked by rows."""

    def f(x: Tensor) -> Tensor:
        n = x.shape[0] // 2
        return fn(nx.take_rows(x, np.arange(n)), nx.take_rows(x, np.arange(n, 2 * n)))

    return f


def _loss_of_raw(kind: LossKind, cfg: LossConfig, head=None):
    """Scalar function of the raw stacked inputs (features, or logits for probability losses)."""

    def outputs(t: Tensor) -> ModelOutputs:
        if kind in PROB_KINDS:
            return ModelOutputs(t, t, nx.softmax_rows(t))
        return ModelOutputs(t, t, t)

    return _split_views(lambda a, b: compute_loss(cfg, outputs(a), outputs(b), head=head))


# --------------------------------------------------------------------------
# 1. gradients
# --------------------------------------------------------------------------


def check_gradients(trials: int = 20, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst: dict[str, float] = {}
        for kind in LossKind:
            cfg = LossConfig(kind=kind)
            for _ in range(trials):
                n, c, d = _sizes(rng)
                width = c if kind in PROB_KINDS or kind is LossKind.LCL else d
                head = ProjectionHead(width, seed=rng) if kind is LossKind.NTCL else None
                x = rng.standard_normal((2 * n, width))
                err = nx.finite_diff_check(_loss_of_raw(kind, cfg, head), x, h=1e-5)
                worst[kind.value] = max(worst.get(kind.value, 0.0), err)
        for _ in range(trials):
            n, c, _ = _sizes(rng)
            labels = rng.integers(0, c, n)
            err = nx.finite_diff_check(lambda t: cross_entropy(nx.softmax_rows(t), labels), rng.standard_normal((n, c)))
            worst["cross_entropy"] = max(worst.get("cross_entropy", 0.0), err)
            err = nx.finite_diff_check(lambda t: uniformity_regularizer(nx.softmax_rows(t)), rng.standard_normal((n, c)))
            worst["uniformity"] = max(worst.get("uniformity", 0.0), err)
        top = max(worst, key=worst.get)
        ok = all(v < GRAD_TOL for v in worst.values())
        return ok, f"{len(worst)} functions x {trials} trials, worst rel. error {worst[top]:.2e} ({top})"

    return _timed(1, "gradient suite", run)


# --------------------------------------------------------------------------
# 2. oracles
# --------------------------------------------------------------------------


def _oracle_value(kind: LossKind, cfg: LossConfig, a: np.ndarray, b: np.ndarray, head=None) -> float:
    if kind in (LossKind.FCL, LossKind.LCL):
        return oracles.fcl(a, b, cfg.scale)
    if kind is LossKind.SFCL:
        return oracles.sfcl(a, b, cfg.scale, cfg.sfcl_threshold)
    if kind is LossKind.NTCL:
        w1, b1, w2, b2 = (p.data.tolist() for p in head.parameters())

        def project(x):
            h = [[max(0.0, v + bb) for v, bb in zip(r, b1)] for r in oracles.matmul(x, w1)]
            return [[v + bb for v, bb in zip(r, b2)] for r in oracles.matmul(h, w2)]

        return oracles.fcl(project(a), project(b), cfg.scale)
    pa = [oracles.softmax(r) for r in a.tolist()]
    pb = [oracles.softmax(r) for r in b.tolist()]
    if kind is LossKind.PCL:
        return oracles.pcl(pa, pb, cfg.scale)
    if kind is LossKind.PCL_L2:
        return oracles.fcl(pa, pb, cfg.scale)
    if kind is LossKind.PCL_MSE:
        return oracles.pcl_mse(pa, pb, cfg.scale)
    return oracles.bce(pa, pb, cfg.bce_threshold)


def check_oracles(batches: int = 50, seed: int = 1) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst: dict[str, float] = {}

        def note(name, err):
            worst[name] = max(worst.get(name, 0.0), err)

        for kind in LossKind:
            cfg = LossConfig(kind=kind)
            for _ in range(batches):
                n, c, d = _sizes(rng)
                width = c if kind in PROB_KINDS or kind is LossKind.LCL else d
                head = ProjectionHead(width, seed=rng) if kind is LossKind.NTCL else None
                if kind is LossKind.SFCL:
                    # clustered rows so that false-negative removal actually fires
                    base = rng.standard_normal((2, width))
                    a = base[rng.integers(0, 2, n)] + 0.2 * rng.standard_normal((n, width))
                    b = a + 0.2 * rng.standard_normal((n, width))
                else:
                    a, b = rng.standard_normal((n, width)), rng.standard_normal((n, width))
                got = _loss_of_raw(kind, cfg, head)(Tensor(np.vstack([a, b]))).item()
                note(kind.value, abs(got - _oracle_value(kind, cfg, a, b, head)))
        for _ in range(batches):
            n, c, _ = _sizes(rng)
            p = _softmax(rng.standard_normal((n, c)))
            labels = rng.integers(0, c, n)
            note("cross_entropy", abs(cross_entropy(Tensor(p), labels).item() - oracles.cross_entropy(p, labels)))
            note("uniformity", abs(uniformity_regularizer(Tensor(p)).item() - oracles.uniformity(p)))
            weak = _softmax(3.0 * rng.standard_normal((n, c)))
            value, kept = pseudo_label_loss(Tensor(weak), Tensor(p), 0.8)
            want, want_kept = oracles.pseudo_label(weak, p, 0.8)
            note("pseudo_label", abs(value.item() - want) + (0.0 if kept == want_kept else 1.0))
        top = max(worst, key=worst.get)
        ok = all(v < ORACLE_TOL for v in worst.values())
        return ok, f"{len(worst)} functions x {batches} batches, worst |diff| {worst[top]:.1e} ({top})"

    return _timed(2, "oracle suite", run)


# --------------------------------------------------------------------------
# 3. inner-product bound
# --------------------------------------------------------------------------


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def check_bound(pairs: int = 10_000, seed: int = 2) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst_margin = math.inf
        violations = 0
        for k in range(pairs):
            c = int(rng.integers(2, 11))
            alpha = [0.01, 0.1, 1.0, 10.0][k % 4]
            p, q = rng.dirichlet(np.full(c, alpha)), rng.dirichlet(np.full(c, alpha))
            dot = nx.matmul(Tensor(p[None]), Tensor(q[:, None])).item()
            if dot > 1.0:
                violations += 1
            if _entropy(p) > 1e-6 or _entropy(q) > 1e-6:
                worst_margin = min(worst_margin, 1.0 - dot)
                if not 1.0 - dot > 1e-9:
                    violations += 1
        exact = 0
        for c in range(2, 11):
            for j in range(c):
                e = np.eye(c)[j]
                exact += nx.matmul(Tensor(e[None]), Tensor(e[:, None])).item() == 1.0
        equal_cases = sum(range(2, 11))
        ok = violations == 0 and exact == equal_cases
        return ok, (
            f"{pairs} pairs, {violations} violations, min margin {worst_margin:.2e} "
            f"for non-degenerate pairs, {exact}/{equal_cases} one-hot equalities exact"
        )

    return _timed(3, "inner-product bound", run)


# --------------------------------------------------------------------------
# 4. closed forms
# --------------------------------------------------------------------------


def check_closed_forms() -> CheckResult:
    def run():
        problems = []
        for n in (1, 2, 4, 8):
            for c in (2, 4, 5):
                u = Tensor(np.full((n, c), 1.0 / c))
                for sym in (True, False):
                    v = pcl_loss(PairedEmbeddings(u, u), LossConfig(symmetrize=sym)).item()
                    if abs(v - math.log(2 * n - 1)) >= 1e-10:
                        problems.append(f"PCL uniform N={n} C={c} sym={sym}: {v}")
        for c in (2, 3, 4, 10):
            v = uniformity_regularizer(Tensor(np.full((1, c), 1.0 / c))).item()
            if abs(v - math.log(c)) >= 1e-12:
                problems.append(f"uniformity C={c}: {v}")
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b = rng.standard_normal((1, 5)), rng.standard_normal((1, 5))
            for sym in (True, False):
                if info_nce_core(Tensor(a), Tensor(b), 7.0, sym).item() != 0.0:
                    problems.append("N=1 InfoNCE not exactly 0")
        return not problems, "; ".join(problems[:3]) or "log(2N-1), log C and N=1 zero all hold"

    return _timed(4, "closed forms", run)


# --------------------------------------------------------------------------
# 5. invariances
# --------------------------------------------------------------------------


def check_invariances(trials: int = 20, seed: int = 5) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = {"fcl_scale": 0.0, "pcl_shift": 0.0, "permutation": 0.0}
        for _ in range(trials):
            n, c, d = _sizes(rng)
            a, b = rng.standard_normal((n, d)), rng.standard_normal((n, d))
            cfg = LossConfig(kind="FCL")
            base = fcl_loss(PairedEmbeddings(Tensor(a), Tensor(b)), cfg).item()
            for alpha in (0.1, 10.0):
                v = fcl_loss(PairedEmbeddings(Tensor(alpha * a), Tensor(alpha * b)), cfg).item()
                worst["fcl_scale"] = max(worst["fcl_scale"], abs(v - base))

            za, zb = rng.standard_normal((n, c)), rng.standard_normal((n, c))

            def pcl_of(x, y):
                return pcl_loss(PairedEmbeddings(nx.softmax_rows(Tensor(x)), nx.softmax_rows(Tensor(y))), LossConfig()).item()

            shifted = pcl_of(za + rng.normal(0, 5, (n, 1)), zb + rng.normal(0, 5, (n, 1)))
            worst["pcl_shift"] = max(worst["pcl_shift"], abs(shifted - pcl_of(za, zb)))

            perm = rng.permutation(n)
            for kind in LossKind:
                kcfg = LossConfig(kind=kind)
                width = c if kind in PROB_KINDS or kind is LossKind.LCL else d
                head = ProjectionHead(width, seed=1) if kind is LossKind.NTCL else None
                x, y = rng.standard_normal((n, width)), rng.standard_normal((n, width))
                f = _loss_of_raw(kind, kcfg, head)
                v0 = f(Tensor(np.vstack([x, y]))).item()
                v1 = f(Tensor(np.vstack([x[perm], y[perm]]))).item()
                worst["permutation"] = max(worst["permutation"], abs(v0 - v1))
        ok = all(v < INVARIANCE_TOL for v in worst.values())
        return ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())

    return _timed(5, "invariance suite", run)


# --------------------------------------------------------------------------
# 6. class weights in the gradient
# --------------------------------------------------------------------------


def check_structural(trials: int = 5, seed: int = 6) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        zero_norms: dict[str, float] = {}
        live_norms: dict[str, float] = {}
        for t in range(trials):
            model = Model.create(input_dim=2, num_classes=4, hidden=16, feature_dim=6, seed=t, with_head=True)
            x = rng.standard_normal((6, 2))
            xa, xb = x + 0.1 * rng.standard_normal(x.shape), x + 0.1 * rng.standard_normal(x.shape)
            for kind in LossKind:
                model.zero_grad()
                loss = compute_loss(LossConfig(kind=kind), forward(model, xa), forward(model, xb), head=model.head)
                nx.backward(loss)
                g = model.classifier.W.grad
                norm = 0.0 if g is None else float(np.linalg.norm(g))
                if kind in W_FREE_KINDS:
                    zero_norms[kind.value] = max(zero_norms.get(kind.value, 0.0), norm)
                elif kind in W_BOUND_KINDS:
                    live_norms[kind.value] = min(live_norms.get(kind.value, math.inf), norm)
        ok = all(v == 0.0 for v in zero_norms.values()) and all(v > 1e-8 for v in live_norms.values())
        detail = "max |dL/dW| " + ", ".join(f"{k}={v:.0e}" for k, v in zero_norms.items())
        detail += "; min |dL/dW| " + ", ".join(f"{k}={v:.1e}" for k, v in live_norms.items())
        return ok, detail

    return _timed(6, "class weights in gradient", run)


# --------------------------------------------------------------------------
# 7. one-hot emergence
# --------------------------------------------------------------------------


def free_parameter_descent(kind: str, seed: int, n: int = 8, c: int = 4, steps: int = 2000, lr: float = 0.1):
    """Plain gradient descent on free per-view parameters; returns final mean max-probability.

    For PCL the parameters are logits. For FCL they are features, read out
    through a fixed random classifier that plays no part in the loss.
    """
    rng = np.random.default_rng(seed)
    a = Tensor(rng.standard_normal((n, c)), requires_grad=True)
    b = Tensor(rng.standard_normal((n, c)), requires_grad=True)
    cfg = LossConfig(kind=kind)
    for _ in range(steps):
        a.grad = b.grad = None
        if kind == "PCL":
            loss = pcl_loss(PairedEmbeddings(nx.softmax_rows(a), nx.softmax_rows(b)), cfg)
        else:
            loss = fcl_loss(PairedEmbeddings(a, b), cfg)
        nx.backward(loss)
        a.data -= lr * a.grad
        b.data -= lr * b.grad
    both = np.vstack([a.data, b.data])
    if kind == "PCL":
        return float(_softmax(both).max(axis=1).mean())
    readout = rng.standard_normal((c, c)) / math.sqrt(c)
    return float(_softmax(both @ readout.T).max(axis=1).mean())


def check_one_hot(seeds=range(5)) -> CheckResult:
    def run():
        pcl = [free_parameter_descent("PCL", s) for s in seeds]
        fcl = [free_parameter_descent("FCL", s) for s in seeds]
        ok = min(pcl) > 0.99 and max(fcl) < 0.9
        return ok, (
            "PCL mean max-prob per seed " + ", ".join(f"{v:.3f}" for v in pcl) + " (need > 0.99); "
            "FCL " + ", ".join(f"{v:.3f}" for v in fcl) + " (need < 0.9)"
        )

    return _timed(7, "one-hot emergence", run)


# --------------------------------------------------------------------------
# 8. end-to-end ordering
# --------------------------------------------------------------------------

E2E_KINDS = ("Baseline", "FCL", "PCL")


def benchmark_grid(seeds=range(5), cfg: TrainConfig | None = None) -> dict[str, list[dict]]:
    """Train every comparison variant in ``E2E_KINDS`` on the default benchmark for each seed."""
    base = cfg or TrainConfig()
    out: dict[str, list[dict]] = {k: [] for k in E2E_KINDS}
    for seed in seeds:
        data = make_benchmark(seed=seed)
        for kind in E2E_KINDS:
            if kind == "Baseline":
                run_cfg = base.with_overrides({"seed": seed, "lambda_contrastive": 0.0})
            else:
                run_cfg = base.with_overrides({"seed": seed, "loss": {"kind": kind}})
            t0 = time.perf_counter()
            final = dict(train(run_cfg, data).final)
            final["seconds"] = time.perf_counter() - t0
            out[kind].append(final)
    return out


def check_end_to_end(seeds=range(5), results: dict | None = None) -> CheckResult:
    def run():
        res = results or benchmark_grid(seeds)
        acc = {k: float(np.mean([r["actual_accuracy"] for r in v])) for k, v in res.items()}
        dev_wins = sum(p["deviation_score"] < f["deviation_score"] for p, f in zip(res["PCL"], res["FCL"]))
        gap_wins = sum(p["oracle_gap"] < f["oracle_gap"] for p, f in zip(res["PCL"], res["FCL"]))
        slowest = max(r["seconds"] for v in res.values() for r in v)
        n = len(res["PCL"])
        need = n - 1
        ok = (
            acc["PCL"] >= acc["FCL"] + 0.03
            and acc["FCL"] >= acc["Baseline"] - 0.01
            and dev_wins >= need
            and gap_wins >= need
            and slowest < 300
        )
        return ok, (
            f"acc Baseline {100 * acc['Baseline']:.1f} / FCL {100 * acc['FCL']:.1f} / PCL {100 * acc['PCL']:.1f}; "
            f"deviation PCL<FCL {dev_wins}/{n}; oracle gap PCL<FCL {gap_wins}/{n}; slowest run {slowest:.1f}s"
        )

    return _timed(8, "end-to-end ordering", run)


# --------------------------------------------------------------------------
# 9. reproducibility
# --------------------------------------------------------------------------


def check_reproducibility(seed: int = 3) -> CheckResult:
    def run():
        cfg = TrainConfig(seed=seed, steps=200, eval_interval=50)
        data = make_benchmark(seed=seed)
        first, second = train(cfg, data), train(cfg, make_benchmark(seed=seed))
        same_record = records_equal(first, second)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ckpt.json"
            checkpoint_save(first.model, path, rng_state=first.rng_state, config=cfg.to_dict())
            restored = checkpoint_load(path)
        before = evaluate_target(first.model, data.target.points, data.target.ground_truth())
        after = evaluate_target(restored, data.target.points, data.target.ground_truth())
        params_equal = all(
            np.array_equal(p.data, q.data) for (_, p), (_, q) in zip(first.model.named_parameters(), restored.named_parameters())
        )
        ok = same_record and before == after and params_equal
        return ok, f"repeat run identical: {same_record}; checkpoint params exact: {params_equal}; metrics equal: {before == after}"

    return _timed(9, "reproducibility", run)


FAST_CHECKS = (
    check_gradients,
    check_oracles,
    check_bound,
    check_closed_forms,
    check_invariances,
    check_structural,
    check_one_hot,
)


def run_checks(include_slow: bool = True) -> list[CheckResult]:
    results = [check() for check in FAST_CHECKS]
    if include_slow:
        results.append(check_end_to_end())
    results.append(check_reproducibility())
    return results


__all__ = [
    "CheckResult",
    "check_gradients",
    "check_oracles",
    "check_bound",
    "check_closed_forms",
    "check_invariances",
    "check_structural",
    "check_one_hot",
    "check_end_to_end",
    "check_reproducibility",
    "benchmark_grid",
    "free_parameter_descent",
    "run_checks",
]
