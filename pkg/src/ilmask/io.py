"""Text artifacts: demo files, map CSV/PGM, run logs and key=value configs.

Every format is plain text so runs can be diffed and audited without tooling.
Floats are written with ``repr`` which round-trips binary64 exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .core import (ConfigError, ContractError, DemoSet, ImportanceMap, ParseError, RunConfig,
                   ValidationError, round_half_up)

DEMO_COLUMNS = ("traj_index", "t", "state", "action", "reward")


# -- demonstrations -----------------------------------------------------------

def save_demos(path, demos: DemoSet):
    lines = [f"{demos.env_name},{demos.H},{demos.T},{demos.A}"]
    for h in range(demos.H):
        for t in range(demos.T):
            lines.append(f"{h},{t},{int(demos.states[h, t])},{int(demos.actions[h, t])},"
                         f"{float(demos.rewards[h, t])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _fields(line, n, lineno):
    parts = line.strip().split(",")
    if len(parts) != n:
        raise ParseError(f"expected {n} fields, got {len(parts)}", lineno)
    return parts


def load_demos(path) -> DemoSet:
    """Read a demo file; malformed lines raise ParseError, bad shapes ValidationError."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    env, *dims = _fields(lines[0], 4, 1)
    try:
        H, T, A = (int(x) for x in dims)
    except ValueError:
        raise ParseError(f"header needs integer H,T,A, got {dims}", 1) from None
    if min(H, T, A) < 1:
        raise ValidationError(f"header dimensions must be positive, got H={H} T={T} A={A}")
    states = np.full((H, T), -1, dtype=np.int64)
    actions = np.zeros((H, T), dtype=np.int64)
    rewards = np.zeros((H, T), dtype=np.float64)
    seen = np.zeros((H, T), dtype=bool)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = _fields(line, 5, lineno)
        try:
            h, t, s, a = (int(x) for x in parts[:4])
            r = float(parts[4])
        except ValueError:
            raise ParseError(f"bad number in {line!r}", lineno) from None
        if not 0 <= h < H:
            raise ValidationError(f"line {lineno}: trajectory {h} outside header H={H}")
        if not 0 <= t < T:
            raise ValidationError(f"trajectory {h}: step {t} outside header T={T}")
        if not 0 <= a < A:
            raise ValidationError(f"trajectory {h}: action {a} outside header A={A}")
        if seen[h, t]:
            raise ValidationError(f"trajectory {h}: step {t} appears twice")
        seen[h, t] = True
        states[h, t], actions[h, t], rewards[h, t] = s, a, r
    for h in range(H):
        n = int(seen[h].sum())
        if n != T:
            raise ValidationError(f"trajectory {h} has {n} steps, header says T={T}")
    try:
        return DemoSet(env, states, actions, rewards, A)
    except ContractError as exc:
        raise ValidationError(str(exc)) from None


# -- importance maps ----------------------------------------------------------

def save_map_csv(path, imap: ImportanceMap):
    z = imap.normalized
    rows = [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(z)]
    Path(path).write_text("\n".join(rows) + "\n")


def load_map_csv(path) -> ImportanceMap:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(x) for x in line.strip().split(",")])
            except ValueError:
                raise ParseError(f"bad number in {line.strip()!r}", lineno) from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"row has {len(rows[-1])} cells, first row {len(rows[0])}", lineno)
    if not rows:
        raise ParseError("empty map file", 1)
    return ImportanceMap.from_normalized(np.array(rows), meta={"path": str(path)})


def pgm_pixels(values) -> np.ndarray:
    """8-bit gray levels, white = most important; a constant map is mid-gray."""
    z = np.asarray(values, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("map has non-finite cells")
    lo, hi = z.min(), z.max()
    if hi == lo:
        return np.full(z.shape, 128, dtype=np.int64)
    scaled = (z - lo) / (hi - lo) * 255
    return np.vectorize(lambda v: round_half_up(v), otypes=[np.int64])(scaled)


def save_map_pgm(path, imap: ImportanceMap):
    px = np.atleast_2d(pgm_pixels(imap.normalized))
    H, G = px.shape
    body = "\n".join(" ".join(str(int(v)) for v in row) for row in px)
    Path(path).write_text(f"P2\n{G} {H}\n255\n{body}\n")


def export_map(imap: ImportanceMap, path, fmt: str = "csv"):
    writers = {"csv": save_map_csv, "pgm": save_map_pgm}
    if fmt not in writers:
        raise ValueError(f"format must be csv or pgm, got {fmt!r}")
    try:
        writers[fmt](path, imap)
    except OSError as exc:
        raise OSError(f"cannot write map to {path}: {exc}") from exc


# -- run logs and tables ------------------------------------------------------

def save_runlog(path, runlog):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = [f.name for f in fields(runlog.records[0])] if runlog.records else []
        w.writerow(names)
        for rec in runlog.records:
            w.writerow([repr(v) if isinstance(v, float) else int(v) for v in asdict(rec).values()])


def save_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# -- configuration ------------------------------------------------------------

# file key -> RunConfig attribute
CONFIG_KEYS = {"env": "env_name", "learner": "learner_name", "H": "H", "T": "T", "G": "G",
               "level": "level", "n_masks": "n_masks", "n_rollouts": "n_rollouts",
               "seed": "seed", "workers": "workers", "out_dir": "out_dir"}
INT_KEYS = {"H", "T", "G", "n_masks", "n_rollouts", "seed", "workers"}
NESTED = ("env_params.", "learner_params.")


def _scalar(text):
    """Parse a parameter value: JSON when it parses (numbers, lists), else a bare string."""
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_assignments(pairs, source="--set"):
    out = []
    for lineno, raw in pairs:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}: expected key=value, got {raw.strip()!r}", lineno)
        key, value = (x.strip() for x in line.split("=", 1))
        out.append((key, value))
    return out


def read_config_file(path):
    with open(path) as fh:
        return parse_assignments(enumerate(fh, start=1), source=str(path))


def build_config(assignments) -> RunConfig:
    """Fold ``(key, value)`` pairs into a RunConfig; later pairs win.

    Unknown keys raise KeyError; values that do not convert raise ConfigError.
    """
    cfg = RunConfig()
    for key, value in assignments:
        prefix = next((p for p in NESTED if key.startswith(p)), None)
        if prefix:
            name = key[len(prefix):]
            if not name:
                raise KeyError(key)
            getattr(cfg, prefix[:-1])[name] = _scalar(value)
        elif key in CONFIG_KEYS:
            attr = CONFIG_KEYS[key]
            try:
                if key in INT_KEYS:
                    value = int(value)
                elif key == "level":
                    value = float(value)
            except ValueError:
                raise ConfigError(f"{key} must be a number, got {value!r}", key=key) from None
            setattr(cfg, attr, value)
        else:
            raise KeyError(key)
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Resolved config as key=value lines that ``build_config`` reads back."""
    inv = {v: k for k, v in CONFIG_KEYS.items()}
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in ("env_params", "learner_params"):
            for k in sorted(value):
                v = value[k]
                lines.append(f"{f.name}.{k}={v if isinstance(v, str) else json.dumps(v)}")
        else:
            lines.append(f"{inv[f.name]}={value!r}" if isinstance(value, float)
                         else f"{inv[f.name]}={value}")
    return "\n".join(lines) + "\n"
