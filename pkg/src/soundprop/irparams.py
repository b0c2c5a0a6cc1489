"""Acoustic parameter extraction from impulse responses.

Implements the broadband extraction chain: arrival detection and path
distance, windowed energy levels, the backward-integrated energy curve,
decay-time estimators, and direction-of-arrival estimation from a path
distance field. All functions are pure and safe for concurrent use.

Levels are window-integrated energies in dB (``10 log10`` of the summed
squared samples); amplitude gains elsewhere use ``20 log10``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateGradientError,
    InputError,
    NoArrivalError,
    UndefinedDecayError,
)
from .latentfield import masked_interp
from .scene import VoxelScene

SPEED_OF_SOUND = 343.0  # m/s

# Backward-integration floor keeps regression finite after the tail. Deep
# enough that the fixed late window (ending 1015 ms after arrival) stays
# measurable for short decays; the reverse-cumulative sum below is accurate
# to float rounding at any depth.
_SCHROEDER_FLOOR_DB = -240.0
_GRAD_EPS = 1e-9


@dataclass(frozen=True)
class ImpulseResponse:
    """Mono pressure signal with its sampling metadata.

    ``t0`` is the emission time of the impulse that produced the response,
    in seconds on the same clock as the sample at index 0.
    """

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise InputError("impulse response must be a non-empty 1-D signal")
        if not np.all(np.isfinite(x)):
            raise InputError("impulse response contains non-finite samples")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"invalid sample rate {self.sample_rate}")
        object.__setattr__(self, "samples", x)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class WindowConfig:
    """Analysis windows, all anchored at the direct-sound arrival ``t_DS``.

    Defaults follow the standard split: a 15 ms direct-sound window, the
    early-reflections window 15-115 ms after arrival, the late window
    415-1015 ms after arrival, and 25 ms matching sub-windows at the
    ER tail / LR head used to level the late reverberation.
    """

    ds_len: float = 0.015
    er_start: float = 0.015
    er_end: float = 0.115
    lr_start: float = 0.415
    lr_end: float = 1.015
    match_len: float = 0.025
    arrival_threshold: float = 0.1

    def __post_init__(self):
        ordered = (
            0.0 < self.ds_len <= self.er_start < self.er_end <= self.lr_start < self.lr_end
        )
        if not ordered:
            raise ConfigurationError("analysis windows must be ordered and non-overlapping")
        if not (0.0 < self.arrival_threshold < 1.0):
            raise ConfigurationError("arrival threshold must lie in (0, 1)")
        if not (0.0 < self.match_len <= min(self.er_end - self.er_start, self.lr_end - self.lr_start)):
            raise ConfigurationError("match window must fit inside the ER and LR windows")

    def ds_window(self, t_ds: float) -> tuple[float, float]:
        return (t_ds, t_ds + self.ds_len)

    def er_window(self, t_ds: float) -> tuple[float, float]:
        return (t_ds + self.er_start, t_ds + self.er_end)

    def lr_window(self, t_ds: float) -> tuple[float, float]:
        return (t_ds + self.lr_start, t_ds + self.lr_end)

    def er_tail(self, t_ds: float) -> tuple[float, float]:
        return (t_ds + self.er_end - self.match_len, t_ds + self.er_end)

    def lr_head(self, t_ds: float) -> tuple[float, float]:
        return (t_ds + self.lr_start, t_ds + self.lr_start + self.match_len)


@dataclass(frozen=True)
class AcousticParamSet:
    """Per-pair parameter bundle consumed by the renderer.

    ``doa`` is the unit direction of arrival at the receiver; it is filled
    by spatial queries and left ``None`` when extracted from a mono IR.
    ``l_lr`` is the matched late-reverberation level.
    """

    pi: float
    l_ds: float
    l_er: float
    tau_er: float
    tau_lr: float
    doa: np.ndarray | None = None
    l_lr: float | None = None


def _window_slice(ir: ImpulseResponse, window: tuple[float, float]) -> slice:
    t0, t1 = window
    if not (t1 > t0):
        raise InputError(f"empty analysis window {window}")
    i0 = int(round(t0 * ir.sample_rate))
    i1 = int(round(t1 * ir.sample_rate))
    if i0 < 0 or i1 > ir.samples.size or i1 <= i0:
        raise InputError(f"window {window} outside the impulse response")
    return slice(i0, i1)


def arrival_and_distance(
    ir: ImpulseResponse, cfg: WindowConfig = WindowConfig(), c: float = SPEED_OF_SOUND
) -> tuple[float, float]:
    """Direct-sound arrival time and traveled path distance.

    The arrival is the first sample whose magnitude reaches
    ``arrival_threshold`` times the peak magnitude of the unfiltered IR;
    the distance follows from the time of flight at speed ``c``.
    """
    x = np.abs(ir.samples)
    peak = x.max()
    if peak <= 0.0:
        raise NoArrivalError("impulse response is identically zero")
    idx = int(np.argmax(x >= cfg.arrival_threshold * peak))
    t_ds = idx / ir.sample_rate
    pi = max(c * (t_ds - ir.t0), 0.0)
    return t_ds, pi


@dataclass(frozen=True)
class SchroederCurve:
    """Backward-integrated energy in dB, sampled at the IR rate."""

    values_db: np.ndarray
    sample_rate: float

    def time_axis(self) -> np.ndarray:
        return np.arange(self.values_db.size) / self.sample_rate

    def window_slice(self, window: tuple[float, float]) -> slice:
        i0 = int(round(window[0] * self.sample_rate))
        i1 = int(round(window[1] * self.sample_rate))
        if i0 < 0 or i1 > self.values_db.size or i1 - i0 < 2:
            raise InputError(f"window {window} outside the decay curve")
        return slice(i0, i1)


def schroeder_curve(ir: ImpulseResponse) -> SchroederCurve:
    """Energy remaining from each instant onward, normalized to 0 dB.

    ``S(t) = 10 log10( sum_{u>=t} x(u)^2 / sum_u x(u)^2 )``, clamped at
    -240 dB so later regressions stay finite. The tail sums are formed by
    a reverse cumulative sum, which keeps them accurate at any depth
    (subtracting a forward sum from the total would cancel catastrophically
    deep in the tail).
    """
    energy = ir.samples.astype(float) ** 2
    remaining = np.cumsum(energy[::-1])[::-1]
    total = remaining[0]
    if total <= 0.0:
        raise InputError("impulse response has zero energy")
    floor = total * 10.0 ** (_SCHROEDER_FLOOR_DB / 10.0)
    s = 10.0 * np.log10(np.maximum(remaining, floor) / total)
    return SchroederCurve(values_db=s, sample_rate=ir.sample_rate)


def window_level(ir: ImpulseResponse, window: tuple[float, float]) -> float:
    """Energy integrated over ``window`` in dB (sum of squared samples)."""
    seg = ir.samples[_window_slice(ir, window)]
    energy = float(np.sum(seg * seg))
    if energy <= 0.0:
        raise InputError(f"window {window} has zero energy")
    return 10.0 * float(np.log10(energy))


def level_lr_matched(
    ir: ImpulseResponse, cfg: WindowConfig = WindowConfig(), t_ds: float | None = None
) -> float:
    """Late-reverberation level with a smooth hand-over from the ER regime.

    The raw LR-window level is offset by the energy gap between the final
    25 ms of the ER window and the first 25 ms of the LR window, so that a
    late tail scaled to the returned level starts where the early
    reflections left off.
    """
    if t_ds is None:
        t_ds, _ = arrival_and_distance(ir, cfg)
    tail_db = window_level(ir, cfg.er_tail(t_ds))
    head_db = window_level(ir, cfg.lr_head(t_ds))
    raw_db = window_level(ir, cfg.lr_window(t_ds))
    return raw_db + (tail_db - head_db)


def decay_time(
    curve: SchroederCurve, window: tuple[float, float], method: str
) -> float:
    """Decay time ``tau = -60 / s`` from the curve slope over ``window``.

    ``method`` selects the slope estimator: ``"rms-forward-diff"`` (the
    early-reflections estimator; slope magnitude is the RMS of per-sample
    forward differences divided by the step) or ``"linear-regression"``
    (least squares over the window, used for the late tail).
    """
    sl = curve.window_slice(window)
    s_win = curve.values_db[sl]
    dt = 1.0 / curve.sample_rate
    if method == "rms-forward-diff":
        diffs = np.diff(s_win)
        slope = -float(np.sqrt(np.mean(diffs * diffs))) / dt
    elif method == "linear-regression":
        t = np.arange(s_win.size) * dt
        slope = float(np.polyfit(t, s_win, 1)[0])
    else:
        raise ConfigurationError(f"unknown decay estimator {method!r}")
    if slope >= 0.0:
        raise UndefinedDecayError(f"non-negative decay slope {slope:.3g} dB/s")
    return -60.0 / slope


def extract_params(
    ir: ImpulseResponse,
    cfg: WindowConfig = WindowConfig(),
    c: float = SPEED_OF_SOUND,
) -> AcousticParamSet:
    """Full extraction chain over one impulse response."""
    t_ds, pi = arrival_and_distance(ir, cfg, c)
    l_ds = window_level(ir, cfg.ds_window(t_ds))
    l_er = window_level(ir, cfg.er_window(t_ds))
    l_lr = level_lr_matched(ir, cfg, t_ds)
    curve = schroeder_curve(ir)
    tau_er = decay_time(curve, cfg.er_window(t_ds), "rms-forward-diff")
    tau_lr = decay_time(curve, cfg.lr_window(t_ds), "linear-regression")
    return AcousticParamSet(
        pi=pi, l_ds=l_ds, l_er=l_er, tau_er=tau_er, tau_lr=tau_lr, l_lr=l_lr
    )


def _sample_scalar(field, scene: VoxelScene, p) -> float | None:
    """Masked-interpolated field value at ``p``; None when unresolvable."""
    valid = np.isfinite(field.values)
    try:
        value, _, _ = masked_interp(
            field.values[..., None], scene, p, value_mask=valid
        )
    except InputError:
        return None
    return float(value[0])


def doa_from_field(field, b, scene: VoxelScene) -> np.ndarray:
    """Unit direction of arrival from a path-distance field at ``b``.

    The direction is the negated, normalized spatial gradient of the field
    with respect to the receiver, approximated by central finite
    differences with a one-grid-spacing step. Sides that cannot be
    resolved (walls, missing samples) fall back to one-sided stencils,
    second-order when two same-side samples exist.
    """
    b = np.asarray(b, dtype=float)
    h = scene.spacing
    center = None
    g = np.zeros(3)
    resolved = False
    for a in range(3):
        offset = np.zeros(3)
        offset[a] = h
        plus = _sample_scalar(field, scene, b + offset)
        minus = _sample_scalar(field, scene, b - offset)
        if plus is not None and minus is not None:
            g[a] = (plus - minus) / (2.0 * h)
            resolved = True
            continue
        if center is None:
            center = _sample_scalar(field, scene, b)
        if center is None:
            raise DegenerateGradientError("field unresolvable at the query point")
        if plus is not None:
            plus2 = _sample_scalar(field, scene, b + 2 * offset)
            if plus2 is not None:
                g[a] = (-3.0 * center + 4.0 * plus - plus2) / (2.0 * h)
            else:
                g[a] = (plus - center) / h
            resolved = True
        elif minus is not None:
            minus2 = _sample_scalar(field, scene, b - 2 * offset)
            if minus2 is not None:
                g[a] = (3.0 * center - 4.0 * minus + minus2) / (2.0 * h)
            else:
                g[a] = (center - minus) / h
            resolved = True
    norm = float(np.linalg.norm(g))
    if not resolved or norm < _GRAD_EPS:
        raise DegenerateGradientError("path-distance gradient is degenerate here")
    return -g / norm
