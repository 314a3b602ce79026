"""Behavioral models of the activation-function circuits.

Each circuit takes a column current (amperes) and produces a voltage bounded
by its rail. The smooth curves saturate within 1% of the rail at the edges of
the ±i_range sweep; the piecewise-linear curves saturate earlier at ``i_sat``.

Curve Family
============
::
    V ▲                          sigmoid_transfer   rail / (1 + e^(−k·i))
 rail ┤            ______        tanh_transfer      rail · tanh(k·i / 2)
      │          /               approx sigmoid     clamp(rail·(i/(2·i_sat) + ½), 0, rail)
      │        /                 approx tanh        clamp(rail·i / i_sat, −rail, rail)
      │      /
    0 ┼_____/──────────────▶ i   k = ln(99) / i_range by default
       −i_range        +i_range

    renormalize      v · to_rail / from_rail          (voltage buffer)
    step_response    target · (1 − e^(−t/τ))          (capacitor lag)

Key Behaviours
===============
- Every transfer is monotone non-decreasing and bounded by its rail.
- ``sigmoid_transfer(i) + sigmoid_transfer(−i) == rail``.
- ``apply_transfer`` in ideal mode bypasses circuit shaping and applies the
  mathematical activation to the current rescaled into pre-activation units.
"""

import csv
import io
import math
from pathlib import Path

import numpy as np

from common.enums import ActivationKind, TransferMode
from common.exceptions import InputError
from common.schemas import TransferConfig
from services.mlp.mlp_service import activation

__all__ = [
    "CURVE_HEADER",
    "STEP_HEADER",
    "apply_transfer",
    "approx_transfer",
    "export_curves",
    "export_step_response",
    "renormalize",
    "sigmoid_transfer",
    "step_response",
    "tanh_transfer",
    "write_csv",
]

CURVE_HEADER = ("i_amps", "sigmoid_v", "sigm_1v", "sigm_0v1", "tanh_v", "approx_sigmoid_v", "approx_tanh_v")
STEP_HEADER = ("t_seconds", "sigmoid_v", "sigm_1v", "sigm_0v1", "tanh_v")


def _scalar_or_array(out: np.ndarray) -> float | np.ndarray:
    return float(out) if out.ndim == 0 else out


def sigmoid_transfer(i: float | np.ndarray, cfg: TransferConfig) -> float | np.ndarray:
    current = np.asarray(i, dtype=np.float64)
    out = cfg.rail * np.exp(-np.logaddexp(0.0, -cfg.effective_gain_k * current))
    return _scalar_or_array(out)


def tanh_transfer(i: float | np.ndarray, cfg: TransferConfig) -> float | np.ndarray:
    current = np.asarray(i, dtype=np.float64)
    return _scalar_or_array(cfg.rail * np.tanh(cfg.effective_gain_k * current / 2.0))


def approx_transfer(kind: ActivationKind | str, i: float | np.ndarray, cfg: TransferConfig) -> float | np.ndarray:
    """Piecewise-linear sigmoid or tanh; ``kind`` may be the approximate or smooth name."""
    kind = ActivationKind(kind) if kind not in ("sigmoid", "tanh") else ActivationKind(f"approx_{kind}")
    current = np.asarray(i, dtype=np.float64)
    i_sat = cfg.i_sat(kind)
    if kind.is_tanh_family:
        out = np.clip(cfg.rail * current / i_sat, -cfg.rail, cfg.rail)
    else:
        out = np.clip(cfg.rail * (current / (2.0 * i_sat) + 0.5), 0.0, cfg.rail)
    return _scalar_or_array(out)


def renormalize(v: float | np.ndarray, from_rail: float, to_rail: float) -> float | np.ndarray:
    if not (from_rail > 0 and to_rail > 0):
        raise InputError(f"Rails must be positive, got {from_rail} -> {to_rail}")
    return _scalar_or_array(np.asarray(v, dtype=np.float64) * (to_rail / from_rail))


def step_response(target_v: float, cfg: TransferConfig, t: float | np.ndarray) -> float | np.ndarray:
    """First-order lag towards ``target_v``; ``tau == 0`` is instantaneous."""
    times = np.asarray(t, dtype=np.float64)
    if np.any(times < 0):
        raise InputError("step_response requires t >= 0")
    if cfg.tau == 0:
        return _scalar_or_array(np.full(times.shape, target_v, dtype=np.float64))
    return _scalar_or_array(target_v * -np.expm1(-times / cfg.tau))


def apply_transfer(
    kind: ActivationKind,
    current: np.ndarray,
    cfg: TransferConfig,
    *,
    amps_per_unit: float | np.ndarray,
    sigmoid_slope: float = 0.25,
    tanh_slope: float = 1.0,
) -> np.ndarray:
    """Shape a column current into an activation in normalized units.

    Circuit mode returns the circuit voltage divided by the rail, so
    sigmoid-family outputs lie in [0, 1] and tanh-family outputs in [−1, 1].
    Ideal mode divides the current by ``amps_per_unit`` to recover the
    pre-activation and applies the mathematical activation.
    """
    current = np.asarray(current, dtype=np.float64)
    if cfg.mode == TransferMode.IDEAL:
        return np.asarray(
            activation(kind, current / amps_per_unit, sigmoid_slope=sigmoid_slope, tanh_slope=tanh_slope)
        )
    match kind:
        case ActivationKind.SIGMOID:
            volts = sigmoid_transfer(current, cfg)
        case ActivationKind.TANH:
            volts = tanh_transfer(current, cfg)
        case _:
            volts = approx_transfer(kind, current, cfg)
    return np.asarray(renormalize(volts, cfg.rail, 1.0))


# ============================================================================
# CURVE EXPORT
# ============================================================================


def export_curves(cfg: TransferConfig, n_points: int) -> list[tuple[float, ...]]:
    """Sample all six activation curves over [−i_range, +i_range]."""
    if n_points < 2:
        raise InputError(f"n_points must be >= 2, got {n_points}")
    currents = np.linspace(-cfg.i_range, cfg.i_range, n_points)
    sigmoid = np.asarray(sigmoid_transfer(currents, cfg))
    columns = (
        currents,
        sigmoid,
        np.asarray(renormalize(sigmoid, cfg.rail, 1.0)),
        np.asarray(renormalize(sigmoid, cfg.rail, 0.1)),
        np.asarray(tanh_transfer(currents, cfg)),
        np.asarray(approx_transfer(ActivationKind.APPROX_SIGMOID, currents, cfg)),
        np.asarray(approx_transfer(ActivationKind.APPROX_TANH, currents, cfg)),
    )
    return [tuple(float(col[row]) for col in columns) for row in range(n_points)]


def export_step_response(
    cfg: TransferConfig, n_points: int, *, current: float | None = None, t_end: float | None = None
) -> list[tuple[float, ...]]:
    """Transient of each smooth output after a current step to ``current``.

    ``t_end`` defaults to five time constants; with ``tau == 0`` the response
    is flat at the settled value.
    """
    if n_points < 2:
        raise InputError(f"n_points must be >= 2, got {n_points}")
    step = cfg.i_range if current is None else current
    horizon = t_end if t_end is not None else (5.0 * cfg.tau if cfg.tau > 0 else 1e-9)
    times = np.linspace(0.0, horizon, n_points)
    settled_sigmoid = float(sigmoid_transfer(step, cfg))
    targets = (
        settled_sigmoid,
        float(renormalize(settled_sigmoid, cfg.rail, 1.0)),
        float(renormalize(settled_sigmoid, cfg.rail, 0.1)),
        float(tanh_transfer(step, cfg)),
    )
    traces = [np.asarray(step_response(target, cfg, times)) for target in targets]
    return [(float(times[row]), *(float(trace[row]) for trace in traces)) for row in range(n_points)]


def _format(value: float) -> str:
    return f"{value:.9g}" if math.isfinite(value) else str(value)


def write_csv(rows: list[tuple[float, ...]], header: tuple[str, ...], path: Path | None = None) -> str:
    """Render rows with 9 significant digits; also write to ``path`` when given."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_format(value) for value in row] for row in rows)
    text = buffer.getvalue()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text
