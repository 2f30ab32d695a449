"""Synthetic sequence-classification datasets.

* copy: a random first half followed by its mirror image, either intact or
  with one position of the mirror changed; binary label (1 = intact).
* nested-ops: ListOps-style prefix expressions over MAX/MIN/MED on digits,
  padded to a fixed length; the label is the expression's value.
"""

from dataclasses import dataclass
import json

import numpy as np

# nested-ops vocabulary: digits 0-9 then operators, close bracket and padding
OPS = {"MAX": 10, "MIN": 11, "MED": 12}
CLOSE = 13
PAD = 14
NESTED_VOCAB = 15
_OP_NAMES = {v: k for k, v in OPS.items()}


@dataclass
class Dataset:
    sequences: np.ndarray  # (examples, length) int64
    labels: np.ndarray  # (examples,) int64
    vocab_size: int
    num_classes: int
    split: str = "all"

    def __post_init__(self):
        self.sequences = np.asarray(self.sequences, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.sequences.ndim != 2 or len(self.sequences) != len(self.labels):
            raise ValueError("sequences must be (examples, length) with one label each")
        if self.sequences.size and (self.sequences.min() < 0 or self.sequences.max() >= self.vocab_size):
            raise ValueError("token outside [0, vocab_size)")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    def __len__(self):
        return len(self.labels)

    @property
    def length(self):
        return self.sequences.shape[1]

    def subset(self, idx, split):
        return Dataset(self.sequences[idx], self.labels[idx], self.vocab_size, self.num_classes, split)

    def split_test(self, fraction, seed=0):
        """Deterministic ``(train, test)`` split."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = len(self) - int(round(len(self) * fraction))
        return self.subset(np.sort(order[:cut]), "train"), self.subset(np.sort(order[cut:]), "test")


def gen_copy_task(seed, n, vocab, examples):
    if n < 2 or n % 2:
        raise ValueError(f"sequence length must be even and >= 2, got {n}")
    if vocab < 2:
        raise ValueError(f"vocab must be >= 2, got {vocab}")
    if examples < 1:
        raise ValueError("need at least one example")
    rng = np.random.default_rng(seed)
    half = n // 2
    first = rng.integers(0, vocab, size=(examples, half))
    seqs = np.concatenate([first, first[:, ::-1]], axis=1)
    labels = np.zeros(examples, dtype=np.int64)
    labels[: (examples + 1) // 2] = 1
    rng.shuffle(labels)
    broken = np.flatnonzero(labels == 0)
    pos = half + rng.integers(0, half, size=broken.size)
    shift = rng.integers(1, vocab, size=broken.size)
    seqs[broken, pos] = (seqs[broken, pos] + shift) % vocab
    return Dataset(seqs, labels, vocab, 2, "all")


def evaluate_expr(tree):
    """Value of a nested ``(op, [args])`` tree; digits are plain ints."""
    if isinstance(tree, (int, np.integer)):
        return int(tree)
    op, args = tree
    vals = [evaluate_expr(a) for a in args]
    if op == "MAX":
        return max(vals)
    if op == "MIN":
        return min(vals)
    if op == "MED":
        return sorted(vals)[(len(vals) - 1) // 2]
    raise ValueError(f"unknown operator {op!r}")


def tokenize_expr(tree):
    if isinstance(tree, (int, np.integer)):
        return [int(tree)]
    op, args = tree
    out = [OPS[op]]
    for a in args:
        out.extend(tokenize_expr(a))
    out.append(CLOSE)
    return out


def _random_expr(rng, depth):
    op = ("MAX", "MIN", "MED")[rng.integers(3)]
    k = int(rng.integers(2, 6))
    nested = int(rng.integers(k)) if depth > 1 else -1
    args = []
    for i in range(k):
        if depth > 1 and (i == nested or rng.random() < 0.25):
            args.append(_random_expr(rng, depth - 1))
        else:
            args.append(int(rng.integers(10)))
    return op, args


def gen_nested_ops(seed, depth, length, examples, max_retries=1000):
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if examples < 1:
        raise ValueError("need at least one example")
    rng = np.random.default_rng(seed)
    seqs = np.full((examples, length), PAD, dtype=np.int64)
    labels = np.empty(examples, dtype=np.int64)
    for i in range(examples):
        for _ in range(max_retries):
            tree = _random_expr(rng, depth)
            toks = tokenize_expr(tree)
            if len(toks) <= length:
                break
        else:
            raise ValueError(f"no depth-{depth} expression fits in {length} tokens")
        seqs[i, : len(toks)] = toks
        labels[i] = evaluate_expr(tree)
    return Dataset(seqs, labels, NESTED_VOCAB, 10, "all")


def detokenize(tokens):
    words = []
    for t in tokens:
        if t == PAD:
            continue
        words.append(str(t) if t < 10 else ("]" if t == CLOSE else "[" + _OP_NAMES[t]))
    return " ".join(words)


def save_jsonl(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"vocab_size": data.vocab_size, "num_classes": data.num_classes,
                             "split": data.split}) + "\n")
        for seq, label in zip(data.sequences, data.labels):
            fh.write(json.dumps({"tokens": seq.tolist(), "label": int(label)}) + "\n")


def load_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        records = [json.loads(line) for line in fh if line.strip()]
    return Dataset(
        [r["tokens"] for r in records],
        [r["label"] for r in records],
        header["vocab_size"],
        header["num_classes"],
        header.get("split", "all"),
    )
