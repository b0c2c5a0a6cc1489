"""Dataset assembly and gradient training of latent-grid models.

A *model bundle* couples one latent grid with one parameter head (path
distance, levels, or decay times). Groups are trained independently with
per-source batches: for every source in a batch the bundle predicts the
full receiver field, the mean-squared error against the oracle field is
backpropagated through the decoder and the receiver-side latents, and the
gradient flowing into the source-position latent is zeroed (stop-gradient)
to prevent it from overfitting.

Training is deterministic for a fixed seed: batches are drawn from a
seeded generator and gradients are reduced in fixed source order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decoders import (
    DecaysModel,
    DistanceModel,
    DotProductDecoder,
    LevelsModel,
    make_distance_decoder,
)
from .errors import ConfigurationError, DivergenceError, InputError
from .latentfield import LatentGrid, init_latent_grid, interp_latent
from .oracle import FieldVolume, bake_source
from .scene import VoxelScene, visible_voxels

GROUP_HEADS = {
    "distance": ("pi",),
    "levels": ("l_ds", "l_er"),
    "decays": ("tau_er", "tau_lr"),
}


@dataclass
class Dataset:
    """Oracle fields for a list of sources over one scene."""

    scene: VoxelScene
    sources: list
    fields: list  # one {name: FieldVolume} dict per source
    split: str = "train"

    def __post_init__(self):
        if len(self.sources) != len(self.fields):
            raise InputError("one field dict per source required")

    def __len__(self) -> int:
        return len(self.sources)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_sources: int = 4
    lr_decoder: float = 1e-3
    lr_grid: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_interval: int = 50
    stop_gradient_at_source: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.lr_grid > self.lr_decoder:
            raise ConfigurationError(
                "grid learning rate must not exceed the decoder learning rate"
            )
        if self.batch_sources < 1:
            raise ConfigurationError("batch must contain at least one source")


class Adam:
    """Adaptive moment estimation over a named parameter dict.

    Updates happen in place; moment buffers are aligned one-to-one with the
    parameter arrays.
    """

    def __init__(self, params: dict, lrs: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lrs = lrs
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = 0

    def moment_count(self) -> int:
        return sum(m.size for m in self.m.values())

    def step(self, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= self.lrs[name] * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class ModelBundle:
    """One latent grid plus the parameter head decoding it."""

    group: str
    grid: LatentGrid
    head: object  # DistanceModel | LevelsModel | DecaysModel
    scene: VoxelScene

    def trainable(self) -> dict:
        params = {"grid": self.grid.values}
        params.update(self.head.trainable())
        return params

    def snapshot(self) -> dict:
        return {k: p.copy() for k, p in self.trainable().items()}

    def restore(self, snapshot: dict) -> None:
        for k, p in self.trainable().items():
            np.copyto(p, snapshot[k])


def make_bundle(
    scene: VoxelScene,
    group: str,
    family: str,
    n: int,
    seed: int = 0,
    K: float = 2.0,
    hidden=None,
) -> ModelBundle:
    """Fresh bundle for one parameter group.

    The decay grid is initialized with coordinates scaled down by the scene
    diagonal so latent dot products start in the responsive range of the
    sigmoid; distance and level grids warm-start at physical scale.
    """
    if group not in GROUP_HEADS:
        raise ConfigurationError(f"unknown parameter group {group!r}")
    if group == "distance":
        decoder = make_distance_decoder(family, n, seed=seed, hidden=hidden)
        head = DistanceModel(decoder)
        coord_scale = 1.0
    elif group == "levels":
        k = 2 if family.startswith("mlp") else 1
        decoder = make_distance_decoder(family, n, seed=seed, hidden=hidden, k=k)
        head = LevelsModel(decoder, n, seed=seed)
        coord_scale = 1.0
    else:
        if family.startswith("mlp"):
            decoder = make_distance_decoder(family, n, seed=seed, hidden=hidden, k=2)
        else:
            decoder = DotProductDecoder(n, K)
        head = DecaysModel(decoder, n, seed=seed)
        coord_scale = 1.0 / scene.diagonal
    grid = init_latent_grid(scene, n, seed=seed, coord_scale=coord_scale)
    return ModelBundle(group=group, grid=grid, head=head, scene=scene)


# ---------------------------------------------------------------------------
# Source sampling and dataset assembly
# ---------------------------------------------------------------------------


def sample_sources(scene: VoxelScene, seed: int = 0, init_count: int = 20) -> list:
    """Adaptive source placement with full line-of-sight coverage.

    Starts from ``init_count`` random free voxels, marks everything they
    see, then repeatedly drops a source on a still-unseen free voxel until
    every free voxel is visible from at least one source. Deterministic
    for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    free = scene.free_indices()
    k = min(init_count, len(free))
    chosen = rng.choice(len(free), size=k, replace=False)
    sources = [scene.voxel_center(free[i]) for i in sorted(chosen)]

    covered = np.zeros(scene.dims, dtype=bool)
    for src in sources:
        covered |= visible_voxels(scene, src)
    uncovered = scene.free_mask() & ~covered
    while uncovered.any():
        candidates = np.argwhere(uncovered)
        pick = candidates[rng.integers(len(candidates))]
        src = scene.voxel_center(pick)
        sources.append(src)
        covered |= visible_voxels(scene, src)
        uncovered = scene.free_mask() & ~covered
    return sources


def make_splits(
    scene: VoxelScene,
    seed: int = 0,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    runs: int = 3,
) -> tuple[list, list, list]:
    """Disjoint train/validation/test source lists.

    The stochastic sampler runs ``runs`` times with consecutive seeds; the
    deduplicated pool is shuffled and split by ``fractions``.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError("split fractions must sum to 1")
    seen = set()
    pool = []
    for r in range(runs):
        for src in sample_sources(scene, seed=seed + r):
            key = scene.voxel_of(src)
            if key not in seen:
                seen.add(key)
                pool.append(src)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    pool = [pool[i] for i in order]
    n = len(pool)
    n_train = max(1, int(round(fractions[0] * n)))
    n_val = max(1, int(round(fractions[1] * n)))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)
    train = pool[:n_train]
    val = pool[n_train : n_train + n_val]
    test = pool[n_train + n_val :]
    return train, val, test


def build_dataset(scene: VoxelScene, sources, split: str = "train") -> Dataset:
    """Bake the five oracle parameter fields for every source."""
    fields = [bake_source(scene, src) for src in sources]
    return Dataset(scene=scene, sources=list(sources), fields=fields, split=split)


# ---------------------------------------------------------------------------
# Losses and metrics
# ---------------------------------------------------------------------------


def mse_loss(pred: FieldVolume, truth: FieldVolume) -> float:
    """Mean squared error over voxels valid in both fields."""
    if pred.values.shape != truth.values.shape:
        raise InputError("field shapes differ")
    valid = pred.valid_mask() & truth.valid_mask()
    if not valid.any():
        raise InputError("no valid voxels to compare")
    diff = pred.values[valid] - truth.values[valid]
    return float(np.mean(diff * diff))


def _latent_at(bundle: ModelBundle, p) -> np.ndarray:
    """Latent vector at ``p``: direct lookup on centers, masked interp off."""
    scene = bundle.scene
    idx = scene.voxel_of(p)
    center = scene.voxel_center(idx)
    if np.allclose(center, np.asarray(p, dtype=float), atol=1e-9 * scene.spacing):
        return bundle.grid.values[idx].copy()
    return interp_latent(bundle.grid, scene, p).latent


def predict_fields(bundle: ModelBundle, source) -> dict[str, FieldVolume]:
    """Predicted receiver fields of this bundle's heads for one source."""
    scene = bundle.scene
    u = _latent_at(bundle, source)
    free = scene.free_indices()
    V = bundle.grid.values[free[:, 0], free[:, 1], free[:, 2]]
    U = np.broadcast_to(u, V.shape)
    preds = bundle.head.predict(U, V)
    out = {}
    for head, vals in preds.items():
        grid_vals = np.full(scene.dims, np.nan)
        grid_vals[free[:, 0], free[:, 1], free[:, 2]] = vals
        out[head] = FieldVolume(
            source=np.asarray(source, dtype=float),
            kind="path-distance" if head == "pi" else ("level" if head.startswith("l_") else "decay-time"),
            values=grid_vals,
            spacing=scene.spacing,
            origin=scene.origin,
        )
    return out


def evaluate_mae(bundle: ModelBundle, ds: Dataset) -> dict[str, float]:
    """Mean absolute error per head, averaged over the dataset's sources."""
    totals = {h: 0.0 for h in GROUP_HEADS[bundle.group]}
    for src, fields in zip(ds.sources, ds.fields):
        preds = predict_fields(bundle, src)
        for head in totals:
            truth = fields[head]
            valid = truth.valid_mask() & preds[head].valid_mask()
            totals[head] += float(
                np.mean(np.abs(preds[head].values[valid] - truth.values[valid]))
            )
    return {h: t / max(len(ds), 1) for h, t in totals.items()}


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    bundle: ModelBundle
    history: list = field(default_factory=list)  # (epoch, group, loss, val_mae)
    checkpoints: list = field(default_factory=list)


def _prepare_source(bundle: ModelBundle, scene: VoxelScene, src, fields):
    """Receiver index list, truth rows and source voxel for one source."""
    heads = GROUP_HEADS[bundle.group]
    valid = scene.free_mask()
    for head in heads:
        valid &= fields[head].valid_mask()
    recv = np.argwhere(valid)
    truths = {
        h: fields[h].values[recv[:, 0], recv[:, 1], recv[:, 2]] for h in heads
    }
    return scene.voxel_of(src), recv, truths


def train(
    bundle: ModelBundle,
    train_ds: Dataset,
    cfg: TrainConfig = TrainConfig(),
    val_ds: Dataset | None = None,
) -> TrainResult:
    """Minimize the per-source field MSE with two-tier learning rates.

    Decoder parameters use ``lr_decoder``; the latent grid uses the smaller
    ``lr_grid``. Gradients reaching the source-position latent through the
    source lookup are dropped when ``stop_gradient_at_source`` is set.
    Raises ``DivergenceError`` (carrying the last finite snapshot) if the
    loss goes non-finite.
    """
    scene = bundle.scene
    if bundle.grid.dims != scene.dims:
        raise ConfigurationError("grid dims do not match the scene")
    heads = GROUP_HEADS[bundle.group]
    prepared = [
        _prepare_source(bundle, scene, src, fields)
        for src, fields in zip(train_ds.sources, train_ds.fields)
    ]
    occupied = scene.occupancy

    params = bundle.trainable()
    lrs = {name: (cfg.lr_grid if name == "grid" else cfg.lr_decoder) for name in params}
    opt = Adam(params, lrs, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(bundle=bundle)
    last_good = bundle.snapshot()
    n_heads = len(heads)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(prepared))
        epoch_loss = 0.0
        n_batches = 0
        for b0 in range(0, len(order), cfg.batch_sources):
            batch = order[b0 : b0 + cfg.batch_sources]
            grads = {name: np.zeros_like(p) for name, p in params.items()}
            grid_grad = grads["grid"]
            batch_loss = 0.0
            for si in batch:
                src_voxel, recv, truths = prepared[si]
                u = bundle.grid.values[src_voxel].copy()
                V = bundle.grid.values[recv[:, 0], recv[:, 1], recv[:, 2]]
                U = np.broadcast_to(u, V.shape)
                preds = bundle.head.predict(U, V)
                upstream = {}
                for h in heads:
                    r = preds[h] - truths[h]
                    batch_loss += float(np.mean(r * r)) / n_heads
                    upstream[h] = 2.0 * r / (r.size * n_heads * len(batch))
                gU, gV, gP = bundle.head.backward(U, V, upstream)
                np.add.at(grid_grad, (recv[:, 0], recv[:, 1], recv[:, 2]), gV)
                if not cfg.stop_gradient_at_source:
                    grid_grad[src_voxel] += gU.sum(axis=0)
                for name, g in gP.items():
                    grads[name] += g
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                bundle.restore(last_good)
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}", last_good=last_good
                )
            grid_grad[occupied] = 0.0  # obstacle vertices stay frozen
            opt.step(grads)
            epoch_loss += batch_loss
            n_batches += 1
        epoch_loss /= max(n_batches, 1)

        if cfg.eval_interval and (epoch % cfg.eval_interval == 0 or epoch == cfg.epochs):
            val_mae = evaluate_mae(bundle, val_ds) if val_ds is not None else None
            mean_val = (
                float(np.mean(list(val_mae.values()))) if val_mae is not None else None
            )
            result.checkpoints.append(
                {
                    "epoch": epoch,
                    "params": bundle.snapshot(),
                    "val_mae": val_mae,
                    "mean_val_mae": mean_val,
                }
            )
            last_good = result.checkpoints[-1]["params"]
            result.history.append((epoch, bundle.group, epoch_loss, mean_val))
        else:
            result.history.append((epoch, bundle.group, epoch_loss, None))
    return result


def select_best(checkpoints: list) -> dict:
    """Checkpoint with the lowest mean validation MAE (earliest on ties)."""
    if not checkpoints:
        raise InputError("no checkpoints to select from")
    scored = [c for c in checkpoints if c.get("mean_val_mae") is not None]
    if not scored:
        return checkpoints[-1]
    best = scored[0]
    for c in scored[1:]:
        if c["mean_val_mae"] < best["mean_val_mae"]:
            best = c
    return best
