"""Flat dotted-key config files and the binary parameter format.

Config files are ``key = value`` lines; ``#`` starts a comment. Compression
rates are written as exact rationals, e.g. ``adamra.c = 1/2, 1/8, 1/32``.

Parameter files are little-endian: magic ``b"AMRA"``, u32 version, u32 d,
H, S, then H (i64 numerator, i64 denominator) rate pairs, then every weight
as row-major float64 in declaration order.
"""

from fractions import Fraction
import struct

import numpy as np

from .diffcheck import flatten, unflatten
from .layer import AdamraConfig, AdamraParams, parse_rate

MAGIC = b"AMRA"
FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


def _bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "on", "yes"):
        return True
    if lowered in ("0", "false", "off", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _rates(text):
    if isinstance(text, (tuple, list)):
        return tuple(parse_rate(c) for c in text)
    return tuple(parse_rate(c) for c in text.split(",") if c.strip())


def _ints(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in text.split(",") if v.strip())


def _str(text):
    return str(text).strip()


# key -> (parser, default)
SCHEMA = {
    "adamra.d": (int, 64),
    "adamra.heads": (int, 3),
    "adamra.subheads": (int, 2),
    "adamra.c": (_rates, (Fraction(1, 2), Fraction(1, 8), Fraction(1, 32))),
    "adamra.phi": (_str, "relu"),
    "adamra.eps": (float, 1e-6),
    "adamra.routing": (_str, "learned"),
    "adamra.gate_scaling": (_bool, True),
    "model.layers": (int, 2),
    "model.ffn": (int, 128),
    "model.classifier": (int, 64),
    "model.positional": (_bool, True),
    "task.name": (_str, "copy"),
    "task.length": (int, 64),
    "task.vocab": (int, 8),
    "task.examples": (int, 10000),
    "task.depth": (int, 2),
    "task.test_fraction": (float, 0.2),
    "train.steps": (int, 2000),
    "train.batch": (int, 32),
    "train.lr": (float, 1e-3),
    "bench.n": (_ints, (512, 1024, 2048, 4096, 8192)),
    "bench.models": (_str, "softmax,kernel,adamra"),
    "bench.trials": (int, 5),
    "bench.warmup": (int, 3),
    "bench.heads": (int, 4),
    "bench.c": (_rates, (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16), Fraction(1, 32))),
    "verify.seeds": (int, 100),
    "gradcheck.seeds": (int, 20),
    "gradcheck.h": (float, 1e-5),
    "gradcheck.tol": (float, 1e-5),
}


def defaults():
    return {key: default for key, (_, default) in SCHEMA.items()}


def parse_value(key, raw):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    parser, _ = SCHEMA[key]
    try:
        return parser(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, raw)
    return values


def load(path=None, overrides=()):
    """Defaults, updated by the file at ``path``, then ``key=value`` overrides."""
    values = defaults()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_text(fh.read()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        values[key] = parse_value(key, raw)
    return values


def adamra_config(values, prefix="adamra"):
    try:
        return AdamraConfig(
            d=values[f"{prefix}.d"],
            heads=values[f"{prefix}.heads"],
            subheads=values[f"{prefix}.subheads"],
            rates=values[f"{prefix}.c"],
            phi=values[f"{prefix}.phi"],
            eps=values[f"{prefix}.eps"],
            routing=values[f"{prefix}.routing"],
            gate_scaling=values[f"{prefix}.gate_scaling"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def format_rates(rates):
    return ",".join(str(Fraction(c)) for c in rates)


def dump_text(values):
    lines = []
    for key in SCHEMA:
        if key not in values:
            continue
        v = values[key]
        if key.endswith(".c"):
            v = format_rates(v)
        elif isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "on" if v else "off"
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# binary parameters
# ---------------------------------------------------------------------------


def save_params(path, params, cfg):
    params.check(cfg)
    header = MAGIC + struct.pack("<4I", FORMAT_VERSION, cfg.d, cfg.heads, cfg.subheads)
    for c in cfg.rates:
        header += struct.pack("<2q", c.numerator, c.denominator)
    body = b"".join(np.ascontiguousarray(b, dtype="<f8").tobytes() for _, b in params.blocks())
    with open(path, "wb") as fh:
        fh.write(header + body)


def load_params(path, cfg=None):
    """Read a parameter file; returns ``(params, cfg)``.

    Without ``cfg`` the layer shape comes from the header and the remaining
    settings are defaults. With ``cfg`` the header must agree with it.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ConfigError(f"{path}: not a parameter file (bad magic)")
    version, d, heads, subheads = struct.unpack_from("<4I", data, 4)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format version {version}")
    offset = 20
    rates = []
    for _ in range(heads):
        num, den = struct.unpack_from("<2q", data, offset)
        rates.append(Fraction(num, den))
        offset += 16
    if cfg is None:
        cfg = AdamraConfig(d=d, heads=heads, subheads=subheads, rates=tuple(rates))
    elif (cfg.d, cfg.heads, cfg.subheads, cfg.rates) != (d, heads, subheads, tuple(rates)):
        raise ConfigError(f"{path}: header does not match the given configuration")
    template = AdamraParams.zeros(cfg)
    expected = sum(b.size for _, b in template.blocks())
    values = np.frombuffer(data, dtype="<f8", offset=offset)
    if values.size != expected:
        raise ConfigError(f"{path}: expected {expected} weights, found {values.size}")
    vec = flatten(template)
    return unflatten(vec.with_values(values.astype(np.float64))), cfg
