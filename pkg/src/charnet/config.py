"""Run configuration: INI-style config files and run manifests.

A config file has sections [run], [encoding], [model], [train], [data];
every key can be overridden on the command line, flags taking
precedence. The manifest written into each output directory is itself a
valid config file (plus informational [versions] and [invocation]
sections), so any run can be reproduced with `--config manifest.cfg`.
"""

from __future__ import annotations

import configparser
import os
import sys
from dataclasses import dataclass, fields

from .errors import DataError


@dataclass
class RunConfig:
    # [run]
    seed: int = 0
    outdir: str = "out"
    threads: int = 0  # 0: library default; 1: pin BLAS for bitwise runs
    # [encoding]
    max_chars: int = 256
    max_sentences: int = 30
    lowercase: bool = True
    # [model]
    scale: float = 1.0
    head: str = "sigmoid"
    # [train]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    early_stop_patience: int | None = None
    val_fraction: float = 0.2
    # [data]
    train_path: str | None = None
    data_format: str = "csv"
    val_path: str | None = None
    balance_per_class: int | None = None


_SECTIONS = {
    "run": ("seed", "outdir", "threads"),
    "encoding": ("max_chars", "max_sentences", "lowercase"),
    "model": ("scale", "head"),
    "train": ("learning_rate", "beta1", "beta2", "epsilon", "batch_size",
              "epochs", "early_stop_patience", "val_fraction"),
    "data": ("train_path", "data_format", "val_path", "balance_per_class"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    ftype = _FIELD_TYPES[name]
    if raw == "" and "None" in str(ftype):
        return None
    if ftype in ("int", int):
        return int(raw)
    if ftype in ("float", float):
        return float(raw)
    if ftype in ("bool", bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise DataError(f"config key {name}: expected a boolean, got {raw!r}")
    if "int" in str(ftype):  # int | None
        return int(raw)
    return raw


def load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise DataError(f"cannot parse config {path}: {exc}") from exc
    cfg = RunConfig()
    for section, keys in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        for key in parser.options(section):
            if key not in keys:
                raise DataError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                setattr(cfg, key, _parse_value(key, parser.get(section, key)))
            except ValueError as exc:
                raise DataError(f"{path}: bad value for {key}: {exc}") from exc
    return cfg


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def config_text(cfg: RunConfig) -> str:
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_format_value(getattr(cfg, key))}")
        lines.append("")
    return "\n".join(lines)


def write_manifest(cfg: RunConfig, path, argv: list[str] | None = None) -> None:
    """Config echo plus versions and the invoking command line."""
    import matplotlib
    import numpy

    from . import __version__

    body = config_text(cfg)
    body += (
        "[versions]\n"
        f"charnet = {__version__}\n"
        f"python = {sys.version.split()[0]}\n"
        f"numpy = {numpy.__version__}\n"
        f"matplotlib = {matplotlib.__version__}\n\n"
    )
    if argv is not None:
        body += "[invocation]\nargv = " + " ".join(argv) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body)
