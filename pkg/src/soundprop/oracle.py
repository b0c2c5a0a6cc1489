"""Desk-scale ground-truth generator.

Replaces a full wave-simulation pipeline with analytically known fields:
geodesic path distances over the free-voxel graph, synthetic level and
decay-time fields that are smooth-plus-piecewise-constant functions of the
geometry, and synthetic impulse responses with known parameters for
round-trip testing of the extractors.

Everything here is a pure function of immutable inputs; per-source field
generation is embarrassingly parallel across sources.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .irparams import AcousticParamSet, ImpulseResponse, WindowConfig
from .scene import VoxelScene

FIELD_KINDS = ("path-distance", "level", "decay-time", "doa")

# Synthetic direct-sound model: reference level at 1 m and the extra
# attenuation per meter of detour beyond the straight line.
_L0_DB = 0.0
_DIFFRACTION_DB_PER_M = 1.0

# 26-connected neighborhood with Euclidean edge weights (unit spacing).
_OFFSETS = [
    (di, dj, dk, math.sqrt(di * di + dj * dj + dk * dk))
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for dk in (-1, 0, 1)
    if (di, dj, dk) != (0, 0, 0)
]


@dataclass(frozen=True)
class FieldVolume:
    """One scalar (or direction) field over all receiver grid points.

    ``values`` has shape ``(nx, ny, nz)`` for scalar kinds and
    ``(nx, ny, nz, 3)`` for ``"doa"``. Occupied or unreachable voxels hold
    NaN sentinels; ``valid_mask()`` exposes the usable entries.
    """

    source: np.ndarray
    kind: str
    values: np.ndarray
    spacing: float
    origin: np.ndarray

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ConfigurationError(f"unknown field kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        expected = 4 if self.kind == "doa" else 3
        if v.ndim != expected:
            raise ConfigurationError(
                f"{self.kind} field must have {expected} array dimensions"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape[:3]

    def valid_mask(self) -> np.ndarray:
        if self.kind == "doa":
            return np.all(np.isfinite(self.values), axis=-1)
        return np.isfinite(self.values)


def geodesic_field(scene: VoxelScene, source) -> FieldVolume:
    """Shortest-path distance from ``source`` to every free voxel center.

    Distances are Dijkstra shortest paths over the 26-connected free-voxel
    graph with Euclidean edge weights, which overestimates the true
    geodesic by at most a few percent and is exactly reciprocal. The
    source is seeded at its containing voxel with the offset to that
    voxel's center, so a source at a center starts at exactly zero.
    """
    source = np.asarray(source, dtype=float)
    start = scene.voxel_of(source)
    if scene.occupancy[start]:
        raise InputError("geodesic source lies inside an occupied voxel")

    nx, ny, nz = scene.dims
    occ = scene.occupancy
    h = scene.spacing
    dist = np.full(scene.dims, np.inf)
    start_cost = float(np.linalg.norm(source - scene.voxel_center(start)))
    dist[start] = start_cost
    heap = [(start_cost, start[0], start[1], start[2])]
    while heap:
        d, i, j, k = heapq.heappop(heap)
        if d > dist[i, j, k]:
            continue
        for di, dj, dk, w in _OFFSETS:
            ni, nj, nk = i + di, j + dj, k + dk
            if not (0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz):
                continue
            if occ[ni, nj, nk]:
                continue
            nd = d + w * h
            if nd < dist[ni, nj, nk]:
                dist[ni, nj, nk] = nd
                heapq.heappush(heap, (nd, ni, nj, nk))

    values = np.where(np.isfinite(dist), dist, np.nan)
    return FieldVolume(
        source=source,
        kind="path-distance",
        values=values,
        spacing=scene.spacing,
        origin=scene.origin,
    )


def synth_acoustic_fields(
    scene: VoxelScene, source, geo: FieldVolume
) -> dict[str, FieldVolume]:
    """Level and decay-time ground truth derived from the geodesic field.

    Direct-sound level follows the inverse-square law in the path distance
    plus a 1 dB/m diffraction penalty on the detour beyond the straight
    line (zero for line-of-sight receivers reached without detour); the ER
    level is a per-region reference attenuated at half the rate; decay
    times are per-region constants, so they are exactly recoverable.
    """
    if geo.kind != "path-distance" or geo.dims != scene.dims:
        raise InputError("geo must be the path-distance field for this scene")
    if scene.regions is None or scene.region_params is None:
        raise ConfigurationError("scene carries no region annotations")

    source = np.asarray(source, dtype=float)
    pi = geo.values
    valid = np.isfinite(pi)
    h = scene.spacing
    straight = np.linalg.norm(scene.voxel_centers() - source, axis=-1)

    floor_pi = np.maximum(pi, h)
    with np.errstate(invalid="ignore"):
        l_ds = _L0_DB - 20.0 * np.log10(floor_pi) - _DIFFRACTION_DB_PER_M * (pi - straight)

    ids = np.unique(scene.regions[valid & scene.free_mask()])
    l_er_ref = np.full(scene.dims, np.nan)
    tau_er = np.full(scene.dims, np.nan)
    tau_lr = np.full(scene.dims, np.nan)
    for rid in ids:
        params = scene.region_params.get(int(rid))
        if params is None:
            raise ConfigurationError(f"missing acoustic constants for region {rid}")
        sel = scene.regions == rid
        l_er_ref[sel] = params.l_er_ref
        tau_er[sel] = params.tau_er
        tau_lr[sel] = params.tau_lr
    with np.errstate(invalid="ignore"):
        l_er = l_er_ref - 10.0 * np.log10(floor_pi)

    def _vol(kind, vals):
        vals = np.where(valid, vals, np.nan)
        return FieldVolume(
            source=source, kind=kind, values=vals, spacing=scene.spacing, origin=scene.origin
        )

    return {
        "l_ds": _vol("level", l_ds),
        "l_er": _vol("level", l_er),
        "tau_er": _vol("decay-time", tau_er),
        "tau_lr": _vol("decay-time", tau_lr),
    }


def bake_source(scene: VoxelScene, source) -> dict[str, FieldVolume]:
    """All five ground-truth parameter fields for one source."""
    geo = geodesic_field(scene, source)
    fields = synth_acoustic_fields(scene, source, geo)
    return {"pi": geo, **fields}


def _shifted(v: np.ndarray, axis: int, steps: int) -> np.ndarray:
    """Values ``steps`` voxels along ``axis``, NaN-padded at the border."""
    out = np.full_like(v, np.nan)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if steps > 0:
        dst[axis], src[axis] = slice(0, -steps), slice(steps, None)
    else:
        dst[axis], src[axis] = slice(-steps, None), slice(0, steps)
    out[tuple(dst)] = v[tuple(src)]
    return out


def doa_field(scene: VoxelScene, geo: FieldVolume) -> FieldVolume:
    """Per-voxel direction of arrival from a path-distance field.

    Central finite differences where both axis neighbors are valid; at
    walls and field boundaries falls back to second-order one-sided
    stencils (first-order when only one sample is available). Voxels with
    a degenerate gradient (notably the source voxel itself) receive NaN
    sentinels.
    """
    if geo.kind != "path-distance":
        raise InputError("doa_field expects a path-distance field")
    v = geo.values
    valid = np.isfinite(v)
    h = geo.spacing
    grad = np.zeros(v.shape + (3,))
    for a in range(3):
        p1 = _shifted(v, a, 1)
        p2 = _shifted(v, a, 2)
        m1 = _shifted(v, a, -1)
        m2 = _shifted(v, a, -2)
        has_p1, has_p2 = np.isfinite(p1), np.isfinite(p2)
        has_m1, has_m2 = np.isfinite(m1), np.isfinite(m2)
        g = np.zeros_like(v)
        central = has_p1 & has_m1
        g[central] = (p1[central] - m1[central]) / (2.0 * h)
        fwd2 = ~central & has_p1 & has_p2
        g[fwd2] = (-3.0 * v[fwd2] + 4.0 * p1[fwd2] - p2[fwd2]) / (2.0 * h)
        fwd1 = ~central & has_p1 & ~has_p2
        g[fwd1] = (p1[fwd1] - v[fwd1]) / h
        bwd2 = ~central & ~has_p1 & has_m1 & has_m2
        g[bwd2] = (3.0 * v[bwd2] - 4.0 * m1[bwd2] + m2[bwd2]) / (2.0 * h)
        bwd1 = ~central & ~has_p1 & has_m1 & ~has_m2
        g[bwd1] = (v[bwd1] - m1[bwd1]) / h
        grad[..., a] = g

    norm = np.linalg.norm(grad, axis=-1)
    # Below half a voxel of path distance the direction is undefined (the
    # receiver sits essentially at the source).
    good = valid & (norm > 1e-9) & (v > 0.5 * h)
    doa = np.full(v.shape + (3,), np.nan)
    doa[good] = -grad[good] / norm[good][..., None]
    return FieldVolume(
        source=geo.source, kind="doa", values=doa, spacing=geo.spacing, origin=geo.origin
    )


@dataclass(frozen=True)
class SyntheticIRConfig:
    """Construction parameters for synthetic impulse responses.

    ``duration`` of ``None`` auto-sizes the signal to cover the late window
    plus 100 ms of tail margin. ``max_decay`` bounds the admissible decay
    times (matching the renderer's longest reference decay).
    """

    sample_rate: float = 16000.0
    duration: float | None = None
    t0: float = 0.0
    c: float = 343.0
    seed: int = 0
    max_decay: float = 2.0

    def __post_init__(self):
        if self.sample_rate < 8000:
            raise ConfigurationError("synthetic IRs need a sample rate >= 8 kHz")
        if self.c <= 0:
            raise ConfigurationError("speed of sound must be positive")


def _decaying_noise(n: int, fs: float, tau: float, rng) -> np.ndarray:
    """Exponential amplitude envelope with random signs.

    Random signs (rather than random amplitudes) keep the energy envelope
    exactly exponential, so decay slopes measured from the backward energy
    integral match the construction without estimator bias.
    """
    t = np.arange(n) / fs
    envelope = 10.0 ** (-3.0 * t / tau)
    signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
    return envelope * signs


def synth_ir(params: AcousticParamSet, cfg: SyntheticIRConfig = SyntheticIRConfig()) -> ImpulseResponse:
    """Impulse response with known parameters, for extractor round trips.

    The signal holds a single direct spike at ``t0 + pi / c`` whose
    direct-sound window integrates to ``10^(L_DS/10)``, an early segment of
    sign-randomized exponentially decaying noise normalized so the ER
    window integrates to ``10^(L_ER/10)`` and decays at ``-60/tau_ER`` dB/s,
    the same envelope extrapolated across the gap, and a late tail decaying
    at ``-60/tau_LR`` dB/s whose start is amplitude-continuous with the
    extrapolated early regime.
    """
    for name in ("pi", "l_ds", "l_er", "tau_er", "tau_lr"):
        if not math.isfinite(getattr(params, name)):
            raise InputError(f"parameter {name} must be finite")
    for name in ("tau_er", "tau_lr"):
        tau = getattr(params, name)
        if not (0.0 < tau <= cfg.max_decay):
            raise ConfigurationError(
                f"{name}={tau} outside the admissible range (0, {cfg.max_decay}]"
            )
    if params.pi < 0:
        raise InputError("path distance must be non-negative")

    w = WindowConfig()
    fs = cfg.sample_rate
    t_ds = cfg.t0 + params.pi / cfg.c
    needed = t_ds + w.lr_end + 0.1
    if cfg.duration is None:
        # enough tail that truncation cannot bend the energy curve inside
        # the late window (the missing energy is ~ -72 dB of the boundary)
        duration = t_ds + w.lr_end + max(0.1, 1.2 * params.tau_lr)
    else:
        duration = cfg.duration
    if duration < needed:
        raise ConfigurationError(
            f"duration {cfg.duration} too short; needs >= {needed:.3f} s"
        )

    n = int(round(duration * fs))
    x = np.zeros(n)
    rng = np.random.default_rng(cfg.seed)

    spike_idx = int(round(t_ds * fs))
    spike_amp = 10.0 ** (params.l_ds / 20.0)
    x[spike_idx] = spike_amp

    # Early regime: runs from the ER window start through the gap up to the
    # LR window start, decaying at tau_er throughout.
    er_i0 = int(round((t_ds + w.er_start) * fs))
    er_i1 = int(round((t_ds + w.er_end) * fs))
    lr_i0 = int(round((t_ds + w.lr_start) * fs))
    seg = _decaying_noise(lr_i0 - er_i0, fs, params.tau_er, rng)
    win_energy = float(np.sum(seg[: er_i1 - er_i0] ** 2))
    scale = math.sqrt(10.0 ** (params.l_er / 10.0) / win_energy)
    seg *= scale
    x[er_i0:lr_i0] = seg

    # Late regime: amplitude-continuous with the extrapolated early regime.
    start_amp = scale * 10.0 ** (-3.0 * (lr_i0 - er_i0) / fs / params.tau_er)
    tail = _decaying_noise(n - lr_i0, fs, params.tau_lr, rng)
    x[lr_i0:] = start_amp * tail

    if spike_amp < 0.1 * np.max(np.abs(x)):
        raise ConfigurationError(
            "direct spike below the default detection threshold; "
            "lower L_ER or raise L_DS"
        )
    return ImpulseResponse(samples=x, sample_rate=fs, t0=cfg.t0)
