import json
import os
from typing import Dict

import numpy as np
import torch

from rieszEL.common.errors import ConfigError


def project_weighted_simplex(v: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Projects v onto {f >= 0, Σ w_i f_i = 1} in the w-weighted norm.

    The minimizer of Σ w_i (f_i - v_i)^2 over that set is f_i = max(v_i - θ, 0)
    with θ chosen so the weighted mass is one.

    Args:
        v (torch.Tensor): Point to project
        w (torch.Tensor): Positive weights

    Returns:
        torch.Tensor: Projection
    """
    order = torch.argsort(v, descending=True)
    vs, ws = v[order], w[order]
    cw = torch.cumsum(ws, 0)
    cwv = torch.cumsum(ws * vs, 0)
    theta = (cwv - 1.0) / cw
    active = torch.nonzero(vs > theta).flatten()
    k = int(active[-1]) if active.numel() else 0
    return torch.clamp(v - theta[k], min=0.0)


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based generator: the same seed gives the same stream."""
    return np.random.Generator(np.random.Philox(seed))


def read_csv_columns(path: str) -> Dict[str, np.ndarray]:
    """Reads a headed CSV of floats into a dict of columns.

    Raises:
        ConfigError: Unreadable or malformed file
    """
    try:
        with open(path, 'rt') as f:
            header = f.readline().strip().split(',')
        data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: header has {len(header)} columns, "
                          f"rows have {data.shape[1]}")
    return {name.strip(): data[:, i] for i, name in enumerate(header)}


def write_csv_columns(path: str, columns: Dict[str, np.ndarray]) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    np.savetxt(path, data, delimiter=',', header=','.join(names), comments='',
               fmt='%.17g')


def write_json(path: str, payload: dict) -> None:
    with open(path, 'wt') as f:
        json.dump(to_jsonable(payload), f, indent=4, sort_keys=True)


def to_jsonable(obj):
    """Converts numpy scalars/arrays, tuples and infinities for json.dump."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isnan(x):
            return 'nan'
        if np.isinf(x):
            return 'inf' if x > 0 else '-inf'
        return x
    return obj


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
