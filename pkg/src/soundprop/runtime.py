"""Deployed query path: parameter prediction and rendering gains.

Loaded model bundles, reference tails and speaker layouts are immutable;
queries and renders are reentrant and safe under concurrent readers.

The rendering model sums three signal paths: a dry path scaled by the
direct-sound level and panned toward the direction of arrival, plus early
and late wet paths built by blending reference tails selected by decay
time. A third of each wet path's energy follows the dry direction, the
rest is emitted omnidirectionally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateGradientError, InputError
from .irparams import AcousticParamSet, ImpulseResponse, WindowConfig
from .latentfield import interp_latent
from .scene import VoxelScene

_GRAD_EPS = 1e-9


def dry_gain(l_ds: float) -> float:
    """Linear amplitude gain for the dry path: ``10^(L_DS/20)``."""
    if not np.isfinite(l_ds):
        raise InputError("direct-sound level must be finite")
    return float(10.0 ** (l_ds / 20.0))


def wet_weights(tau: float, ref_taus) -> np.ndarray:
    """Piecewise-linear blend weights over three reference decay times.

    Clamps to the nearest reference outside ``[tau_S, tau_L]``; inside, the
    two bracketing references share weight linearly. At most two weights
    are nonzero and they always sum to one.
    """
    t_s, t_m, t_l = (float(t) for t in ref_taus)
    if not (t_s < t_m < t_l):
        raise ConfigurationError("reference decay times must be strictly increasing")
    if tau <= t_s:
        return np.array([1.0, 0.0, 0.0])
    if tau >= t_l:
        return np.array([0.0, 0.0, 1.0])
    if tau <= t_m:
        a = (t_m - tau) / (t_m - t_s)
        return np.array([a, 1.0 - a, 0.0])
    a = (t_l - tau) / (t_l - t_m)
    return np.array([0.0, a, 1.0 - a])


def derive_l_lr(l_er: float, tau_er: float, windows: WindowConfig = WindowConfig()) -> float:
    """Late level extrapolated from the early regime across the gap.

    Continues the early decay at ``-60/tau_er`` dB/s from the ER window
    start to the LR window start, so the two rendered regimes meet without
    a level step.
    """
    if not (tau_er > 0):
        raise InputError("tau_er must be positive")
    gap = windows.lr_start - windows.er_start
    return l_er - 60.0 * gap / tau_er


@dataclass(frozen=True)
class SpeakerLayout:
    """Loudspeaker directions plus the triples used for 3D panning."""

    directions: np.ndarray  # (S, 3) unit vectors
    triples: tuple  # index triples covering the sphere region of use

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        if d.ndim != 2 or d.shape[1] != 3 or d.shape[0] < 1:
            raise ConfigurationError("layout needs an (S, 3) direction array")
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ConfigurationError("speaker directions must be unit vectors")
        object.__setattr__(self, "directions", d)
        trips = tuple(tuple(int(i) for i in t) for t in self.triples)
        for t in trips:
            if len(t) != 3 or len(set(t)) != 3 or max(t) >= d.shape[0] or min(t) < 0:
                raise ConfigurationError(f"invalid speaker triple {t}")
        object.__setattr__(self, "triples", trips)

    @property
    def n_speakers(self) -> int:
        return self.directions.shape[0]


def octahedral_layout() -> SpeakerLayout:
    """Six axis-aligned speakers with one triple per octant."""
    dirs = np.array(
        [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]
    )
    triples = []
    for ix in (0, 1):
        for iy in (2, 3):
            for iz in (4, 5):
                triples.append((ix, iy, iz))
    return SpeakerLayout(directions=dirs, triples=tuple(triples))


def vbap_gains(delta, layout: SpeakerLayout) -> np.ndarray:
    """Power-normalized per-speaker gains panning ``delta``.

    Picks the first triple (lowest index order) whose basis solution is
    non-negative and normalizes it to unit power. When no triple covers
    the direction, the nearest speaker receives gain 1.
    """
    delta = np.asarray(delta, dtype=float)
    if abs(np.linalg.norm(delta) - 1.0) > 1e-6:
        raise InputError("panning direction must be a unit vector")
    gains = np.zeros(layout.n_speakers)
    for triple in layout.triples:
        basis = layout.directions[list(triple)].T  # columns are speaker dirs
        try:
            g = np.linalg.solve(basis, delta)
        except np.linalg.LinAlgError:
            continue
        if np.all(g >= -1e-12):
            g = np.maximum(g, 0.0)
            norm = np.linalg.norm(g)
            if norm <= 0:
                continue
            gains[list(triple)] = g / norm
            return gains
    nearest = int(np.argmax(layout.directions @ delta))
    gains[nearest] = 1.0
    return gains


def spatialize_wet(wet_gain: float, delta, layout: SpeakerLayout) -> np.ndarray:
    """Per-speaker amplitude gains for one wet path.

    One third of the wet energy follows the panned direction, the rest is
    spread equally over all speakers; components combine in the energy
    domain so the emitted energy equals ``wet_gain**2`` exactly.
    """
    if wet_gain < 0:
        raise InputError("wet gain must be non-negative")
    v = vbap_gains(delta, layout)
    s = layout.n_speakers
    energy = v * v / 3.0 + 2.0 / (3.0 * s)
    return wet_gain * np.sqrt(energy)


@dataclass(frozen=True)
class ReferenceIRSet:
    """Six reference tails for small/medium/large early and late regimes."""

    er_irs: tuple
    lr_irs: tuple
    er_taus: tuple
    lr_taus: tuple

    def __post_init__(self):
        for irs, taus in ((self.er_irs, self.er_taus), (self.lr_irs, self.lr_taus)):
            if len(irs) != 3 or len(taus) != 3:
                raise ConfigurationError("reference sets hold three tails each")
            if not (taus[0] < taus[1] < taus[2]):
                raise ConfigurationError("reference decay times must increase")
        rates = {ir.sample_rate for ir in (*self.er_irs, *self.lr_irs)}
        if len(rates) != 1:
            raise ConfigurationError("reference IR sample rates must match")

    @property
    def sample_rate(self) -> float:
        return self.er_irs[0].sample_rate


def default_reference_irs(sample_rate: float = 16000.0, seed: int = 0) -> ReferenceIRSet:
    """Bundled stand-in tails: unit-energy exponentially decaying noise."""
    rng = np.random.default_rng(seed)
    er_taus = (0.1, 0.3, 0.9)
    lr_taus = (0.4, 1.0, 1.8)

    def tail(tau):
        n = max(int(round(3.0 * tau * sample_rate)), 8)
        t = np.arange(n) / sample_rate
        x = 10.0 ** (-3.0 * t / tau) * (rng.integers(0, 2, size=n) * 2.0 - 1.0)
        x /= np.sqrt(np.sum(x * x))
        return ImpulseResponse(samples=x, sample_rate=sample_rate)

    return ReferenceIRSet(
        er_irs=tuple(tail(t) for t in er_taus),
        lr_irs=tuple(tail(t) for t in lr_taus),
        er_taus=er_taus,
        lr_taus=lr_taus,
    )


@dataclass(frozen=True)
class RenderParams:
    """Resolved rendering quantities for one source-receiver pair."""

    dry: float
    er_gain: float
    lr_gain: float
    er_weights: np.ndarray
    lr_weights: np.ndarray
    doa: np.ndarray

    def __post_init__(self):
        for name in ("dry", "er_gain", "lr_gain"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be non-negative")
        for name in ("er_weights", "lr_weights"):
            w = np.asarray(getattr(self, name), dtype=float)
            if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise InputError(f"{name} must be three non-negative weights summing to 1")
            object.__setattr__(self, name, w)
        d = np.asarray(self.doa, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise InputError("doa must be a unit vector")
        object.__setattr__(self, "doa", d)


def render_params(params: AcousticParamSet, refs: ReferenceIRSet,
                  windows: WindowConfig = WindowConfig()) -> RenderParams:
    """Gains and blend weights from one acoustic parameter set."""
    if params.doa is None:
        raise InputError("rendering needs a direction of arrival")
    l_lr = params.l_lr
    if l_lr is None:
        l_lr = derive_l_lr(params.l_er, params.tau_er, windows)
    return RenderParams(
        dry=dry_gain(params.l_ds),
        er_gain=10.0 ** (params.l_er / 20.0),
        lr_gain=10.0 ** (l_lr / 20.0),
        er_weights=wet_weights(params.tau_er, refs.er_taus),
        lr_weights=wet_weights(params.tau_lr, refs.lr_taus),
        doa=params.doa,
    )


def _wet_bus(x: np.ndarray, irs, weights, n_out: int) -> np.ndarray:
    bus = np.zeros(n_out)
    for ir, w in zip(irs, weights):
        if w == 0.0:
            continue
        conv = np.convolve(x, ir.samples)
        bus[: conv.size] += w * conv
    return bus


def render_offline(
    x_in: np.ndarray,
    params: RenderParams,
    refs: ReferenceIRSet,
    layout: SpeakerLayout,
) -> np.ndarray:
    """Offline parametric render of a mono input to speaker channels.

    Returns an ``(n_speakers, n_samples)`` array: panned dry path plus the
    early and late wet buses built by direct time-domain convolution with
    the blended reference tails.
    """
    x = np.asarray(x_in, dtype=float)
    if x.ndim != 1:
        raise InputError("input signal must be mono")
    max_ref = max(ir.samples.size for ir in (*refs.er_irs, *refs.lr_irs))
    n_out = x.size + max_ref - 1
    out = np.zeros((layout.n_speakers, n_out))

    pan = vbap_gains(params.doa, layout)
    out[:, : x.size] += np.outer(pan, params.dry * x)

    er_bus = params.er_gain * _wet_bus(x, refs.er_irs, params.er_weights, n_out)
    lr_bus = params.lr_gain * _wet_bus(x, refs.lr_irs, params.lr_weights, n_out)
    er_sp = spatialize_wet(1.0, params.doa, layout)
    lr_sp = spatialize_wet(1.0, params.doa, layout)
    out += np.outer(er_sp, er_bus)
    out += np.outer(lr_sp, lr_bus)
    return out


# ---------------------------------------------------------------------------
# Model queries
# ---------------------------------------------------------------------------


def _latent(bundle, p):
    return interp_latent(bundle.grid, bundle.scene, p).latent


def _predict_pi(bundle, u_a: np.ndarray, x) -> float | None:
    """Distance prediction at receiver position ``x``; None if unresolvable."""
    try:
        v = _latent(bundle, x)
    except InputError:
        return None
    return float(bundle.head.predict(u_a[None, :], v[None, :])["pi"][0])


def query_doa(distance_bundle, a, b) -> np.ndarray:
    """Direction of arrival from the predicted distance field around ``b``.

    Central finite differences of the predicted field at one grid spacing,
    one-sided where a stencil point is occluded or outside the scene.
    """
    scene = distance_bundle.scene
    u_a = _latent(distance_bundle, a)
    b = np.asarray(b, dtype=float)
    h = scene.spacing
    center = None
    g = np.zeros(3)
    resolved = False
    for axis in range(3):
        off = np.zeros(3)
        off[axis] = h
        plus = _predict_pi(distance_bundle, u_a, b + off)
        minus = _predict_pi(distance_bundle, u_a, b - off)
        if plus is not None and minus is not None:
            g[axis] = (plus - minus) / (2.0 * h)
            resolved = True
            continue
        if center is None:
            center = _predict_pi(distance_bundle, u_a, b)
        if center is None:
            raise DegenerateGradientError("predicted field unresolvable at receiver")
        if plus is not None:
            g[axis] = (plus - center) / h
            resolved = True
        elif minus is not None:
            g[axis] = (center - minus) / h
            resolved = True
    norm = float(np.linalg.norm(g))
    if not resolved or norm < _GRAD_EPS:
        raise DegenerateGradientError("predicted distance gradient is degenerate")
    return -g / norm


def query_params(bundles: dict, scene: VoxelScene, a, b) -> AcousticParamSet:
    """Predict the full parameter set for one source-receiver pair.

    ``bundles`` maps group names (``distance``, ``levels``, ``decays``) to
    trained model bundles sharing ``scene``. Latents are sampled with
    visibility masking; the direction of arrival comes from the predicted
    distance field. A pure function of the checkpoints and positions.
    """
    if "distance" not in bundles:
        raise ConfigurationError("query needs at least a distance bundle")
    dist = bundles["distance"]
    u, v = _latent(dist, a), _latent(dist, b)
    pi = float(dist.head.predict(u[None, :], v[None, :])["pi"][0])

    l_ds = l_er = tau_er = tau_lr = float("nan")
    if "levels" in bundles:
        lv = bundles["levels"]
        lu, lvv = _latent(lv, a), _latent(lv, b)
        out = lv.head.predict(lu[None, :], lvv[None, :])
        l_ds, l_er = float(out["l_ds"][0]), float(out["l_er"][0])
    if "decays" in bundles:
        dc = bundles["decays"]
        du, dv = _latent(dc, a), _latent(dc, b)
        out = dc.head.predict(du[None, :], dv[None, :])
        tau_er, tau_lr = float(out["tau_er"][0]), float(out["tau_lr"][0])

    doa = query_doa(dist, a, b)
    l_lr = derive_l_lr(l_er, tau_er) if np.isfinite(l_er) and tau_er > 0 else None
    return AcousticParamSet(
        pi=pi, l_ds=l_ds, l_er=l_er, tau_er=tau_er, tau_lr=tau_lr, doa=doa, l_lr=l_lr
    )
