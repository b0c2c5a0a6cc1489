"""Voxelized scenes and line-of-sight queries.

Scenes are axis-aligned occupancy grids with a uniform physical spacing.
The y axis is treated as "up" throughout the package, matching grids whose
vertical extent is much smaller than the horizontal ones.

Conventions
-----------
* Voxel ``(i, j, k)`` has its center at ``origin + (i, j, k) * spacing`` and
  occupies the closed cube of side ``spacing`` around that center.
* A scene's bounding box is the union of all voxel cubes.
* Occupancy ``True`` means obstacle.

Scenes are immutable after construction; every query here is read-only and
safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

# Tie tolerance for the voxel traversal (in cell units). Crossings closer
# than this to a cell edge are treated as touching every adjacent voxel.
_TIE_EPS = 1e-9


@dataclass(frozen=True)
class RegionAcoustics:
    """Per-region constants consumed by the synthetic-field oracle.

    Attributes
    ----------
    tau_er : float
        Early-reflections decay time in seconds.
    tau_lr : float
        Late-reflections decay time in seconds.
    l_er_ref : float
        Reference early-reflections level in dB at unit path distance.
    """

    tau_er: float
    tau_lr: float
    l_er_ref: float


@dataclass(frozen=True)
class VoxelScene:
    """Immutable occupancy grid with physical placement.

    Attributes
    ----------
    dims : (int, int, int)
        Grid size ``(nx, ny, nz)``; every axis must be >= 2.
    spacing : float
        Edge length of one voxel in meters.
    origin : ndarray, shape (3,)
        Position of the center of voxel ``(0, 0, 0)`` in meters.
    occupancy : ndarray of bool, shape (nx, ny, nz)
        ``True`` marks an obstacle voxel.
    regions : ndarray of int32 or None, shape (nx, ny, nz)
        Region id per voxel, used by the synthetic oracle. Only meaningful
        on free voxels.
    region_params : dict[int, RegionAcoustics] or None
        Acoustic constants per region id.
    """

    dims: tuple[int, int, int]
    spacing: float
    origin: np.ndarray
    occupancy: np.ndarray
    regions: np.ndarray | None = None
    region_params: dict[int, RegionAcoustics] | None = None

    def __post_init__(self):
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 2:
            raise ConfigurationError(f"scene dims must all be >= 2, got {self.dims}")
        if not (self.spacing > 0) or not math.isfinite(self.spacing):
            raise ConfigurationError(f"spacing must be positive, got {self.spacing}")
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != (nx, ny, nz):
            raise ConfigurationError(
                f"occupancy shape {occ.shape} does not match dims {self.dims}"
            )
        if occ.all():
            raise ConfigurationError("scene has no free voxel")
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        if self.regions is not None:
            reg = np.asarray(self.regions, dtype=np.int32)
            if reg.shape != (nx, ny, nz):
                raise ConfigurationError("region map shape does not match dims")
            object.__setattr__(self, "regions", reg)

    # -- geometry helpers -------------------------------------------------

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def diagonal(self) -> float:
        """Length of the bounding-box diagonal in meters."""
        ext = (np.asarray(self.dims, dtype=float)) * self.spacing
        return float(np.linalg.norm(ext))

    def voxel_center(self, index) -> np.ndarray:
        """Center of voxel ``index`` (a length-3 integer sequence) in meters."""
        return self.origin + np.asarray(index, dtype=float) * self.spacing

    def voxel_centers(self) -> np.ndarray:
        """Centers of all voxels as an ``(nx, ny, nz, 3)`` array."""
        nx, ny, nz = self.dims
        ii, jj, kk = np.meshgrid(
            np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
        )
        idx = np.stack([ii, jj, kk], axis=-1).astype(float)
        return self.origin + idx * self.spacing

    def voxel_of(self, p) -> tuple[int, int, int]:
        """Index of the voxel whose cube contains point ``p``.

        Raises
        ------
        InputError
            If ``p`` lies outside the scene bounding box.
        """
        p = np.asarray(p, dtype=float)
        c = (p - self.origin) / self.spacing + 0.5
        idx = np.floor(c).astype(int)
        # Points on the far face of the last voxel still belong to it.
        for a in range(3):
            if idx[a] == self.dims[a] and c[a] - self.dims[a] <= _TIE_EPS:
                idx[a] -= 1
        if np.any(idx < 0) or np.any(idx >= self.dims):
            raise InputError(f"point {p.tolist()} is outside the scene bounding box")
        return int(idx[0]), int(idx[1]), int(idx[2])

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        lo = self.origin - 0.5 * self.spacing
        hi = self.origin + (np.asarray(self.dims) - 0.5) * self.spacing
        return bool(np.all(p >= lo) and np.all(p <= hi))

    def is_free(self, index) -> bool:
        i, j, k = index
        return not bool(self.occupancy[i, j, k])

    def free_mask(self) -> np.ndarray:
        return ~self.occupancy

    def free_indices(self) -> np.ndarray:
        """Indices of free voxels as an ``(m, 3)`` int array, in C order."""
        return np.argwhere(~self.occupancy)

    def region_of(self, index) -> int:
        if self.regions is None:
            raise ConfigurationError("scene carries no region annotations")
        i, j, k = index
        return int(self.regions[i, j, k])


SCENE_KINDS = (
    "empty-box",
    "wall-with-aperture",
    "maze",
    "coupled-rooms",
    "cylinder-forest",
)

# Default acoustic constants per scene kind and region id. Decay times stay
# well inside the renderer's (0, K] range; coupled rooms contrast a dead
# room (region 1) with a live one (region 2).
_DEFAULT_REGIONS = {
    "empty-box": {1: RegionAcoustics(0.30, 0.80, -6.0)},
    "wall-with-aperture": {
        1: RegionAcoustics(0.25, 0.70, -6.0),
        2: RegionAcoustics(0.35, 0.90, -8.0),
    },
    "maze": {1: RegionAcoustics(0.20, 0.60, -9.0)},
    "coupled-rooms": {
        1: RegionAcoustics(0.15, 0.40, -12.0),
        2: RegionAcoustics(0.50, 1.40, -3.0),
    },
    "cylinder-forest": {1: RegionAcoustics(0.25, 0.75, -7.0)},
}


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one synthetic scene.

    ``geometry`` carries kind-specific parameters:

    * ``wall-with-aperture``: ``wall_axis`` (default 0), ``aperture`` size in
      voxels (default 1; 0 seals the wall).
    * ``maze``: corridors carved on the horizontal plane, seeded.
    * ``coupled-rooms``: ``door`` slit size in voxels (default 1).
    * ``cylinder-forest``: ``n_cylinders``, ``radius`` in voxels.
    """

    kind: str
    dims: tuple[int, int, int]
    spacing: float = 1.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0
    geometry: dict = field(default_factory=dict)
    region_acoustics: dict[int, RegionAcoustics] | None = None

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ConfigurationError(
                f"unknown scene kind {self.kind!r}; expected one of {SCENE_KINDS}"
            )
        if len(self.dims) != 3 or min(self.dims) < 2:
            raise ConfigurationError(f"invalid dims {self.dims}")
        if not (self.spacing > 0):
            raise ConfigurationError(f"invalid spacing {self.spacing}")

    def acoustics(self) -> dict[int, RegionAcoustics]:
        if self.region_acoustics is not None:
            return dict(self.region_acoustics)
        return dict(_DEFAULT_REGIONS[self.kind])


def _shell(occ: np.ndarray) -> None:
    """Occupy the one-voxel boundary shell in place."""
    occ[0, :, :] = occ[-1, :, :] = True
    occ[:, 0, :] = occ[:, -1, :] = True
    occ[:, :, 0] = occ[:, :, -1] = True


def _build_empty_box(spec: SceneSpec):
    occ = np.zeros(spec.dims, dtype=bool)
    _shell(occ)
    reg = np.ones(spec.dims, dtype=np.int32)
    return occ, reg


def _build_wall_with_aperture(spec: SceneSpec):
    nx, ny, nz = spec.dims
    axis = int(spec.geometry.get("wall_axis", 0))
    aperture = int(spec.geometry.get("aperture", 1))
    if axis not in (0, 2):
        raise ConfigurationError("wall_axis must be 0 or 2 (walls are vertical)")
    occ = np.zeros(spec.dims, dtype=bool)
    _shell(occ)
    mid = spec.dims[axis] // 2
    if axis == 0:
        occ[mid, :, :] = True
    else:
        occ[:, :, mid] = True
    if aperture > 0:
        # Free column through the wall, centered in the two other axes.
        jc = ny // 2
        j0, j1 = jc - (aperture - 1) // 2, jc + aperture // 2 + 1
        j0, j1 = max(j0, 1), min(j1, ny - 1)
        if axis == 0:
            kc = nz // 2
            k0, k1 = max(kc - (aperture - 1) // 2, 1), min(kc + aperture // 2 + 1, nz - 1)
            occ[mid, j0:j1, k0:k1] = False
        else:
            ic = nx // 2
            i0, i1 = max(ic - (aperture - 1) // 2, 1), min(ic + aperture // 2 + 1, nx - 1)
            occ[i0:i1, j0:j1, mid] = False
    reg = np.ones(spec.dims, dtype=np.int32)
    if axis == 0:
        reg[mid + 1 :, :, :] = 2
    else:
        reg[:, :, mid + 1 :] = 2
    return occ, reg


def _build_maze(spec: SceneSpec):
    """Depth-first maze on the horizontal plane, extruded vertically.

    Cells sit on the odd sub-lattice of the interior, walls live between
    them; every carved voxel is reachable from every other by construction.
    """
    nx, ny, nz = spec.dims
    if nx < 7 or nz < 7:
        raise ConfigurationError("maze scenes need dims >= 7 in x and z")
    rng = np.random.default_rng(spec.seed)
    occ = np.ones(spec.dims, dtype=bool)

    cx = (nx - 2 + 1) // 2  # cells fit at x = 1, 3, ...
    cz = (nz - 2 + 1) // 2
    carved = np.zeros((cx, cz), dtype=bool)
    stack = [(0, 0)]
    carved[0, 0] = True
    while stack:
        a, b = stack[-1]
        options = []
        for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            na, nb = a + da, b + db
            if 0 <= na < cx and 0 <= nb < cz and not carved[na, nb]:
                options.append((na, nb))
        if not options:
            stack.pop()
            continue
        na, nb = options[rng.integers(len(options))]
        carved[na, nb] = True
        # Carve the destination cell and the wall voxel between the cells.
        x0, z0 = 1 + 2 * a, 1 + 2 * b
        x1, z1 = 1 + 2 * na, 1 + 2 * nb
        xm, zm = (x0 + x1) // 2, (z0 + z1) // 2
        occ[x0, 1 : ny - 1, z0] = False
        occ[xm, 1 : ny - 1, zm] = False
        occ[x1, 1 : ny - 1, z1] = False
        stack.append((na, nb))

    reg = np.ones(spec.dims, dtype=np.int32)
    return occ, reg


def _build_coupled_rooms(spec: SceneSpec):
    nx, ny, nz = spec.dims
    door = int(spec.geometry.get("door", 1))
    occ = np.zeros(spec.dims, dtype=bool)
    _shell(occ)
    mid = nx // 2
    occ[mid, :, :] = True
    if door > 0:
        jc = ny // 2
        kc = nz // 2
        j0, j1 = max(jc - (door - 1) // 2, 1), min(jc + door // 2 + 1, ny - 1)
        k0, k1 = max(kc - (door - 1) // 2, 1), min(kc + door // 2 + 1, nz - 1)
        occ[mid, j0:j1, k0:k1] = False
    reg = np.ones(spec.dims, dtype=np.int32)
    reg[mid:, :, :] = 2
    return occ, reg


def _build_cylinder_forest(spec: SceneSpec):
    nx, ny, nz = spec.dims
    n_cyl = int(spec.geometry.get("n_cylinders", max(4, (nx * nz) // 64)))
    radius = float(spec.geometry.get("radius", 1.0))
    rng = np.random.default_rng(spec.seed)
    occ = np.zeros(spec.dims, dtype=bool)
    _shell(occ)
    xs = np.arange(nx)
    zs = np.arange(nz)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    for _ in range(n_cyl):
        cx = rng.uniform(2 + radius, nx - 3 - radius)
        cz = rng.uniform(2 + radius, nz - 3 - radius)
        disk = (gx - cx) ** 2 + (gz - cz) ** 2 <= radius**2
        occ |= disk[:, None, :]
    _shell(occ)
    reg = np.ones(spec.dims, dtype=np.int32)
    return occ, reg


_BUILDERS = {
    "empty-box": _build_empty_box,
    "wall-with-aperture": _build_wall_with_aperture,
    "maze": _build_maze,
    "coupled-rooms": _build_coupled_rooms,
    "cylinder-forest": _build_cylinder_forest,
}


def build_scene(spec: SceneSpec) -> VoxelScene:
    """Construct the deterministic scene described by ``spec``.

    The returned scene carries the region annotation map and the per-region
    acoustic constants needed by the synthetic-field oracle.
    """
    occ, reg = _BUILDERS[spec.kind](spec)
    return VoxelScene(
        dims=tuple(spec.dims),
        spacing=float(spec.spacing),
        origin=np.asarray(spec.origin, dtype=float),
        occupancy=occ,
        regions=reg,
        region_params=spec.acoustics(),
    )


def line_of_sight(scene: VoxelScene, p, q) -> bool:
    """True iff the segment from ``p`` to ``q`` crosses no occupied voxel.

    Traversal is an incremental voxel walk (3D DDA) in cell coordinates.
    A voxel blocks if the closed segment touches its closed cube, so exact
    edge or corner grazing resolves to "blocked"; this is conservative and
    prevents leakage across diagonal wall seams. Endpoints inside an
    occupied voxel yield ``False`` rather than an error.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise InputError("line-of-sight endpoints must be finite")
    if not (scene.contains(p) and scene.contains(q)):
        raise InputError("line-of-sight endpoints must lie inside the scene")

    occ = scene.occupancy
    nx, ny, nz = scene.dims
    inv_h = 1.0 / scene.spacing
    # Cell coordinates: voxel (i, j, k) spans [i, i+1) x [j, j+1) x [k, k+1).
    # Plain Python floats keep the traversal loop free of numpy scalars.
    ax = float((p[0] - scene.origin[0]) * inv_h + 0.5)
    ay = float((p[1] - scene.origin[1]) * inv_h + 0.5)
    az = float((p[2] - scene.origin[2]) * inv_h + 0.5)
    bx = float((q[0] - scene.origin[0]) * inv_h + 0.5)
    by = float((q[1] - scene.origin[1]) * inv_h + 0.5)
    bz = float((q[2] - scene.origin[2]) * inv_h + 0.5)
    dx, dy, dz = bx - ax, by - ay, bz - az

    def cell(v, n):
        c = int(math.floor(v))
        if c == n and v - n <= _TIE_EPS:
            c = n - 1
        return min(max(c, 0), n - 1)

    ix, iy, iz = cell(ax, nx), cell(ay, ny), cell(az, nz)
    ex, ey, ez = cell(bx, nx), cell(by, ny), cell(bz, nz)
    if occ[ix, iy, iz] or occ[ex, ey, ez]:
        return False
    if ix == ex and iy == ey and iz == ez:
        return True

    step_x = 1 if dx > 0 else (-1 if dx < 0 else 0)
    step_y = 1 if dy > 0 else (-1 if dy < 0 else 0)
    step_z = 1 if dz > 0 else (-1 if dz < 0 else 0)

    inf = math.inf
    if step_x:
        t_max_x = ((ix + (step_x > 0)) - ax) / dx
        t_dx = abs(1.0 / dx)
    else:
        t_max_x, t_dx = inf, inf
    if step_y:
        t_max_y = ((iy + (step_y > 0)) - ay) / dy
        t_dy = abs(1.0 / dy)
    else:
        t_max_y, t_dy = inf, inf
    if step_z:
        t_max_z = ((iz + (step_z > 0)) - az) / dz
        t_dz = abs(1.0 / dz)
    else:
        t_max_z, t_dz = inf, inf

    while True:
        t_min = min(t_max_x, t_max_y, t_max_z)
        if t_min > 1.0 + _TIE_EPS:
            return True
        # Conservative tie handling: when the segment leaves the cell through
        # an edge or corner, every voxel adjacent to the crossing is touched.
        tie_x = t_max_x - t_min <= _TIE_EPS
        tie_y = t_max_y - t_min <= _TIE_EPS
        tie_z = t_max_z - t_min <= _TIE_EPS
        n_ties = tie_x + tie_y + tie_z
        if n_ties > 1:
            for probe in _tie_probes(ix, iy, iz, step_x, step_y, step_z, tie_x, tie_y, tie_z):
                px, py, pz = probe
                if 0 <= px < nx and 0 <= py < ny and 0 <= pz < nz and occ[px, py, pz]:
                    return False
        if tie_x:
            ix += step_x
            t_max_x += t_dx
        if tie_y:
            iy += step_y
            t_max_y += t_dy
        if tie_z:
            iz += step_z
            t_max_z += t_dz
        if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
            return True
        if occ[ix, iy, iz]:
            return False
        if ix == ex and iy == ey and iz == ez:
            return True


def _tie_probes(ix, iy, iz, sx, sy, sz, tx, ty, tz):
    """Voxels touched when a traversal crossing hits an edge or corner."""
    probes = []
    if tx:
        probes.append((ix + sx, iy, iz))
    if ty:
        probes.append((ix, iy + sy, iz))
    if tz:
        probes.append((ix, iy, iz + sz))
    if tx and ty:
        probes.append((ix + sx, iy + sy, iz))
    if tx and tz:
        probes.append((ix + sx, iy, iz + sz))
    if ty and tz:
        probes.append((ix, iy + sy, iz + sz))
    return probes


def visible_voxels(scene: VoxelScene, p) -> np.ndarray:
    """Boolean mask of voxels whose centers are visible from ``p``.

    Occupied voxels are always ``False``. If ``p`` sits inside an occupied
    voxel the whole mask is ``False`` (defined fallback, not an error).
    """
    p = np.asarray(p, dtype=float)
    if not scene.contains(p):
        raise InputError("query point outside the scene bounding box")
    mask = np.zeros(scene.dims, dtype=bool)
    if scene.occupancy[scene.voxel_of(p)]:
        return mask
    for idx in scene.free_indices():
        i, j, k = int(idx[0]), int(idx[1]), int(idx[2])
        mask[i, j, k] = line_of_sight(scene, p, scene.voxel_center((i, j, k)))
    return mask
