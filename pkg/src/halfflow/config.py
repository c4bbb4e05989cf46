"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment.  Every subcommand has a
fixed schema of typed keys with defaults; unknown keys are rejected so that
typos fail loudly.  ``resolve`` returns the complete key set that is written
next to every output.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = context or {}


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


_COMMON = {
    "seed": (int, 0),
    "output_dir": (str, "out"),
}

SCHEMAS = {
    "calibrate": {"M": (int, 256)},
    "flow": {
        "M": (int, 128),
        "n": (int, 3),
        "dt": (float, 1e-3),
        "t_end": (float, 1.0),
        "initial_data": (str, "perturbed_constant(0.15)"),
        "reproject": (_bool, True),
        "scan_radii": (_floats, [0.02, 0.05, 0.1]),
        "eps1": (float, 0.05),
        "eps0": (float, 0.5),
        "sphere_tol": (float, 1e-8),
        "snapshot_stride": (int, 10),
        "slab_length": (float, 0.0),
        "picard_max_iters": (int, 20),
        "picard_tol": (float, 1e-8),
        "glue": (_bool, False),
    },
    "scan": {
        "radii": (_floats, [0.02, 0.05, 0.1]),
        "eps1": (float, 0.05),
        "report_radius": (float, 0.1),
    },
    "bubble": {
        "L": (float, 50.0),
        "line_M": (int, 2048),
        "N": (int, 3),
        "gamma": (float, 1.0),
        "sphere_tol": (float, 1e-3),
    },
    "variational": {
        "M": (int, 64),
        "n": (int, 3),
        "initial_data": (str, "perturbed_constant(0.15)"),
        "eps": (float, 0.1),
        "eps_list": (_floats, [0.2, 0.1, 0.05, 0.02]),
        "s": (float, 0.5),
        "p": (float, 2.0),
        "iters": (int, 200),
        "Mt": (int, 40),
        "T_factor": (float, 10.0),
    },
    "wente": {
        "M": (int, 256),
        "samples": (int, 100),
        "delta": (float, 0.25),
        "kernel_modes": (int, 3),
        "g_modes": (int, 8),
    },
    "accept": {
        "M_scale": (float, 1.0),
        "fault": (str, "none"),
    },
}


def parse_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", {"line": raw})
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key", {"line": raw})
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", {"key": key})
        out[key] = val
    return out


def resolve(subcommand: str, raw: dict | None = None, overrides: dict | None = None) -> dict:
    """Validate ``raw`` against the schema of ``subcommand`` and fill defaults."""
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}", {"subcommand": subcommand})
    schema = {**_COMMON, **SCHEMAS[subcommand]}
    raw = dict(raw or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}",
                          {"unknown": unknown, "allowed": sorted(schema)})
    cfg = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", {"key": key,
                                                                    "value": raw[key]})
        else:
            cfg[key] = list(default) if isinstance(default, list) else default
    return cfg


def load(subcommand: str, path: str | Path | None, overrides: dict | None = None) -> dict:
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}", {"path": str(p)})
        raw = parse_text(p.read_text())
    return resolve(subcommand, raw, overrides)


def dump(cfg: dict) -> str:
    """Render a resolved config back to key = value text (sorted keys)."""
    lines = []
    for key in sorted(cfg):
        val = cfg[key]
        if isinstance(val, list):
            val = ",".join(repr(float(v)) for v in val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
