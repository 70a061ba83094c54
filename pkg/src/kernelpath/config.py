"""Line-oriented key=value configuration with typed keys and auto-resolution.

Format: one `key = value` per line, `#` starts a comment, blank lines
ignored. Unknown keys, malformed lines, duplicate keys, and type errors
are reported with their line number. Resolution order is built-in
defaults < config file < command-line overrides; the keys b, theta, t0,
threads, window_lo, window_hi accept the literal value `auto`.

Every run emits a manifest echoing the fully-resolved configuration in
this same format; feeding the manifest back reproduces the run exactly
(auto values are resolved to numbers before writing, and resolution is
idempotent on already-resolved values).
"""

from __future__ import annotations

import math
import os

from .online_learner import Schedule, auto_theta, make_schedule, minimal_t0
from .spectral_model import SpectralModel, make_power_law_model

AUTO = "auto"

ENV_OUTDIR = "KERNELPATH_OUTDIR"
DEFAULT_OUTDIR = "runs"


class ConfigError(ValueError):
    pass


def _parse_int(raw, minimum=None):
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}") from None
    if minimum is not None and val < minimum:
        raise ConfigError(f"expected an integer >= {minimum}, got {val}")
    return val


def _parse_float(raw, *, gt=None, ge=None, lt=None):
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"expected a finite number, got {raw!r}")
    if gt is not None and not val > gt:
        raise ConfigError(f"expected a value > {gt}, got {val}")
    if ge is not None and not val >= ge:
        raise ConfigError(f"expected a value >= {ge}, got {val}")
    if lt is not None and not val < lt:
        raise ConfigError(f"expected a value < {lt}, got {val}")
    return val


def _auto_or(parser):
    def parse(raw):
        if raw == AUTO:
            return AUTO
        return parser(raw)

    return parse


def _parse_choice(raw, choices):
    if raw not in choices:
        raise ConfigError(f"expected one of {sorted(choices)}, got {raw!r}")
    return raw


# (parser, default) per key; insertion order defines the manifest order.
REGISTRY = {
    "modes": (lambda s: _parse_int(s, minimum=1), 256),
    "mu_decay": (lambda s: _parse_float(s, gt=1.0), 2.0),
    "source_decay": (lambda s: _parse_float(s, gt=0.5), 1.0),
    "r": (lambda s: _parse_float(s, gt=0.0), 1.0),
    "sigma": (lambda s: _parse_float(s, ge=0.0), 0.5),
    "seed": (lambda s: _parse_int(s, minimum=0), 0),
    "a": (lambda s: _parse_float(s, gt=0.0), 4.0),
    "b": (_auto_or(lambda s: _parse_float(s, gt=0.0)), AUTO),
    "theta": (_auto_or(lambda s: _parse_float(s, ge=0.0, lt=1.0 + 1e-12)), AUTO),
    "t0": (_auto_or(lambda s: _parse_float(s, gt=0.0)), AUTO),
    "T": (lambda s: _parse_int(s, minimum=0), 131072),
    "replicates": (lambda s: _parse_int(s, minimum=1), 20),
    "representation": (lambda s: _parse_choice(s, {"spectral", "nodal"}), "spectral"),
    "delta": (lambda s: _parse_float(s, gt=0.0, lt=1.0), 0.1),
    "threads": (_auto_or(lambda s: _parse_int(s, minimum=1)), AUTO),
    "window_lo": (_auto_or(lambda s: _parse_float(s, gt=0.0)), AUTO),
    "window_hi": (_auto_or(lambda s: _parse_float(s, gt=0.0)), AUTO),
}


def parse_config_text(text: str, source: str = "config") -> dict:
    """Raw key=value pairs, validated and typed against the registry."""
    values = {}
    lines_seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: malformed line (expected key = value): {line.strip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in REGISTRY:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key {key!r} (first set on line {lines_seen[key]})"
            )
        if raw == "":
            raise ConfigError(f"{source}:{lineno}: empty value for key {key!r}")
        parser, _default = REGISTRY[key]
        try:
            values[key] = parser(raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: key {key!r}: {exc}") from None
        lines_seen[key] = lineno
    return values


def parse_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults < file < overrides, then resolve every `auto`.

    Overrides are already-typed values keyed by registry names (unknown
    names rejected; None entries mean "not supplied"). Resolves b = 1/a,
    theta = 2r/(2r+1), threads = hardware count. t0 needs the model's
    kappa and is resolved in build_model_schedule; the fit window keys
    may stay `auto` (the harness then derives the window from the
    checkpoints).
    """
    vals = {key: default for key, (_p, default) in REGISTRY.items()}
    if file_values:
        for key, v in file_values.items():
            if key not in REGISTRY:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = v
    if overrides:
        for key, v in overrides.items():
            if key not in REGISTRY:
                raise ConfigError(f"unknown key {key!r}")
            if v is not None:
                vals[key] = v

    if vals["b"] == AUTO:
        vals["b"] = 1.0 / vals["a"]
    if vals["theta"] == AUTO:
        vals["theta"] = auto_theta(vals["r"])
    if vals["threads"] == AUTO:
        vals["threads"] = os.cpu_count() or 1
    # t0 resolution needs kappa, hence the model; done in build_model_schedule.
    return vals


def build_model_schedule(vals: dict) -> tuple[SpectralModel, Schedule, dict]:
    """Construct the model and schedule; returns fully-resolved values too."""
    model = make_power_law_model(
        modes=vals["modes"],
        mu_decay=vals["mu_decay"],
        source_decay=vals["source_decay"],
        regularity_r=vals["r"],
        noise_halfwidth=vals["sigma"],
    )
    resolved = dict(vals)
    if resolved["t0"] == AUTO:
        resolved["t0"] = float(
            minimal_t0(resolved["a"], resolved["b"], resolved["theta"], model.kappa, r=resolved["r"])
        )
    schedule = make_schedule(
        a=resolved["a"],
        b=resolved["b"],
        theta=resolved["theta"],
        t0=resolved["t0"],
        r=resolved["r"],
        kappa=model.kappa,
    )
    return model, schedule, resolved


def window_from(vals: dict) -> tuple[float, float] | None:
    lo, hi = vals["window_lo"], vals["window_hi"]
    if lo == AUTO and hi == AUTO:
        return None
    if AUTO in (lo, hi):
        raise ConfigError("window_lo and window_hi must both be numeric or both auto")
    if lo >= hi:
        raise ConfigError("window_lo must be below window_hi")
    return (lo, hi)


def _format_value(v) -> str:
    if isinstance(v, bool):
        raise TypeError("no boolean config keys")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "{:.17g}".format(v)
    return str(v)


def manifest_text(vals: dict, header_comments: list[str] | None = None) -> str:
    """The fully-resolved config in parseable form; idempotent round-trip."""
    lines = [f"# {c}" for c in (header_comments or [])]
    for key in REGISTRY:
        lines.append(f"{key} = {_format_value(vals[key])}")
    return "\n".join(lines) + "\n"


def write_manifest(outdir: str, vals: dict, header_comments: list[str] | None = None) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "manifest.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_text(vals, header_comments))
    return path


def default_outdir() -> str:
    return os.environ.get(ENV_OUTDIR, DEFAULT_OUTDIR)
