"""Mini-batch training with Adam and a plain-text / CSV report."""

from dataclasses import dataclass, field
import csv
import io
import time

import numpy as np

from . import model as M


class DivergenceError(RuntimeError):
    def __init__(self, step, loss):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


@dataclass
class TrainHyper:
    lr: float = 1e-3
    batch: int = 32
    steps: int = 2000
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_batch: int = 256


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)  # dicts: epoch, step, loss, train_acc, test_acc
    test_accuracy: float = 0.0
    initial_test_accuracy: float = 0.0
    utilization: list = field(default_factory=list)  # per layer, fraction per head
    wall_time: float = 0.0
    losses: list = field(default_factory=list)  # per step

    def metrics_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "step", "loss", "train_acc", "test_acc"])
        for e in self.epochs:
            w.writerow([e["epoch"], e["step"], f"{e['loss']:.6g}",
                        f"{e['train_acc']:.6g}", f"{e['test_acc']:.6g}"])
        return buf.getvalue()

    def text(self):
        lines = [
            f"final test accuracy: {self.test_accuracy:.4f}",
            f"untrained test accuracy: {self.initial_test_accuracy:.4f}",
            f"steps: {len(self.losses)}",
        ]
        for l, u in enumerate(self.utilization):
            lines.append(f"layer {l} router utilization: " + " ".join(f"{x:.3f}" for x in u))
        return "\n".join(lines) + "\n"


class Adam:
    def __init__(self, arrays, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arrays = arrays
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for a, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def accuracy(params, mc, data, batch=256, seed=0):
    correct = 0
    for i in range(0, len(data), batch):
        logits, _ = M.forward(params, mc, data.sequences[i:i + batch], seed)
        correct += int((logits.argmax(axis=1) == data.labels[i:i + batch]).sum())
    return correct / max(1, len(data))


def train(mc, train_data, test_data, hyper=None, log=None):
    """Train a fresh model; returns ``(report, params)``."""
    hyper = hyper or TrainHyper()
    if len(train_data) == 0:
        raise ValueError("empty training set")
    if train_data.length != mc.length:
        raise ValueError(f"data length {train_data.length} != model length {mc.length}")
    rng = np.random.default_rng(hyper.seed)
    params = M.init_params(mc, rng)
    opt = Adam(M.arrays(params), hyper.lr, hyper.beta1, hyper.beta2, hyper.adam_eps)
    report = TrainReport()
    report.initial_test_accuracy = accuracy(params, mc, test_data, hyper.eval_batch)

    steps_per_epoch = max(1, len(train_data) // hyper.batch)
    t0 = time.perf_counter()
    ep_loss, ep_correct, ep_seen = 0.0, 0, 0
    order = rng.permutation(len(train_data))
    cursor = 0
    for step in range(1, hyper.steps + 1):
        if cursor + hyper.batch > len(order):
            order = rng.permutation(len(train_data))
            cursor = 0
        idx = order[cursor:cursor + hyper.batch]
        cursor += hyper.batch
        tokens, labels = train_data.sequences[idx], train_data.labels[idx]

        # a diverging run is reported through the loss check below
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            logits, cache = M.forward(params, mc, tokens, seed=hyper.seed + 2 * step)
            loss, g_logits = M.cross_entropy(logits, labels)
        if not np.isfinite(loss):
            raise DivergenceError(step, loss)
        grads = M.backward(params, mc, cache, g_logits)
        opt.step(M.arrays(grads))

        report.losses.append(loss)
        ep_loss += loss * len(idx)
        ep_correct += int((logits.argmax(axis=1) == labels).sum())
        ep_seen += len(idx)
        if step % steps_per_epoch == 0 or step == hyper.steps:
            test_acc = accuracy(params, mc, test_data, hyper.eval_batch)
            report.epochs.append({
                "epoch": len(report.epochs) + 1,
                "step": step,
                "loss": ep_loss / ep_seen,
                "train_acc": ep_correct / ep_seen,
                "test_acc": test_acc,
            })
            if log:
                e = report.epochs[-1]
                log(f"epoch {e['epoch']:3d} step {step:5d} loss {e['loss']:.4f} "
                    f"train {e['train_acc']:.3f} test {test_acc:.3f}")
            ep_loss, ep_correct, ep_seen = 0.0, 0, 0

    report.test_accuracy = report.epochs[-1]["test_acc"] if report.epochs else report.initial_test_accuracy
    report.utilization = [u.tolist() for u in M.router_utilization(params, mc, test_data.sequences)]
    report.wall_time = time.perf_counter() - t0
    return report, params
