"""Rectangular multi-resolution geometry for the diffusion simulator.

Builds the static subvolume partition that the mesoscopic engine runs on:

1. The environment is a closed rectangle covered exactly by a set of
   disjoint regions, each a rectangle or a rectangular ring.
2. A mesoscopic region is tiled with square subvolumes of a per-region
   width; a microscopic region stays continuous and holds no subvolumes.
3. Neighbor links are directional and carry the geometric face overlap
   between the two squares, which is all the rate formula needs.  Links
   across regions of different subvolume width are found by matching
   coincident faces, so non-conforming meshes work without special cases.
4. A mesoscopic subvolume whose full face lies on a microscopic region
   is an interface subvolume.  It gets one extra virtual link
   (destination -1) and a mirror rectangle on the microscopic side where
   outgoing molecules are placed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "TILE_TOL",
    "GeometryError",
    "Environment",
    "Rect",
    "Ring",
    "Region",
    "Partition",
    "build_partition",
    "locate",
    "interface_subvolumes",
    "subvolume_rect",
]

# Tolerance for tileability and face-coincidence checks.  Coordinates are
# quantized to this grid when matching faces, so two faces closer than
# TILE_TOL are treated as coincident.
TILE_TOL = 1e-9


class GeometryError(ValueError):
    """Raised when a region layout cannot be turned into a valid partition."""


###############################################################################
# Basic shapes
###############################################################################


@dataclass(frozen=True)
class Environment:
    """Closed rectangular domain [0, width] x [0, height] with reflective walls."""

    width: float
    height: float

    def __post_init__(self):
        if not (np.isfinite(self.width) and np.isfinite(self.height)):
            raise GeometryError("environment dimensions must be finite")
        if self.width <= 0.0 or self.height <= 0.0:
            raise GeometryError("environment dimensions must be positive")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle (x0, y0) .. (x1, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 - self.x0 <= 0.0 or self.y1 - self.y0 <= 0.0:
            raise GeometryError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Ring:
    """Rectangular ring: the outer rectangle minus the inner one."""

    outer: Rect
    inner: Rect

    def __post_init__(self):
        o, i = self.outer, self.inner
        if not (o.x0 <= i.x0 and i.x1 <= o.x1 and o.y0 <= i.y0 and i.y1 <= o.y1):
            raise GeometryError("ring inner rectangle must sit inside the outer one")
        if i.x0 - o.x0 < TILE_TOL and o.x1 - i.x1 < TILE_TOL \
                and i.y0 - o.y0 < TILE_TOL and o.y1 - i.y1 < TILE_TOL:
            raise GeometryError("ring has no area")

    @property
    def area(self) -> float:
        return self.outer.area - self.inner.area


Extent = Union[Rect, Ring]

MICRO = "micro"
MESO = "meso"


@dataclass(frozen=True)
class Region:
    """One region of the environment, either mesoscopic or microscopic."""

    region_id: int
    extent: Extent
    regime: str
    subvolume_width: float = 0.0

    def __post_init__(self):
        if self.regime not in (MICRO, MESO):
            raise GeometryError(f"unknown regime {self.regime!r}")
        if self.regime == MESO and self.subvolume_width <= 0.0:
            raise GeometryError(
                f"region {self.region_id}: mesoscopic region needs a positive "
                f"subvolume width"
            )

    @property
    def is_micro(self) -> bool:
        return self.regime == MICRO


def _decompose(extent: Extent) -> list[Rect]:
    """Split an extent into non-overlapping rectangles (a ring into <= 4).

    Ring strips are emitted bottom, left, right, top; zero-width strips
    (inner edge flush with the outer one) are dropped.
    """
    if isinstance(extent, Rect):
        return [extent]
    o, i = extent.outer, extent.inner
    rects = []
    if i.y0 - o.y0 > TILE_TOL:
        rects.append(Rect(o.x0, o.y0, o.x1, i.y0))
    if i.x0 - o.x0 > TILE_TOL:
        rects.append(Rect(o.x0, i.y0, i.x0, i.y1))
    if o.x1 - i.x1 > TILE_TOL:
        rects.append(Rect(i.x1, i.y0, o.x1, i.y1))
    if o.y1 - i.y1 > TILE_TOL:
        rects.append(Rect(o.x0, i.y1, o.x1, o.y1))
    return rects


def _extent_origin(extent: Extent) -> tuple[float, float]:
    if isinstance(extent, Rect):
        return extent.x0, extent.y0
    return extent.outer.x0, extent.outer.y0


def _boundary_faces(extent: Extent) -> list[tuple[str, float, float, float]]:
    """Directed boundary faces of an extent as (side, coord, lo, hi).

    ``side`` names the outward direction seen from inside the extent, so a
    neighbor touching the 'left' face lies at smaller x.  Ring extents also
    expose the four faces of the inner hole (outward there means into the
    hole).
    """
    faces = []

    def rect_faces(r: Rect, flip: bool):
        # flip=True describes the hole of a ring: the ring material sits
        # outside r, so the face normals point into r.
        if not flip:
            faces.append(("left", r.x0, r.y0, r.y1))
            faces.append(("right", r.x1, r.y0, r.y1))
            faces.append(("down", r.y0, r.x0, r.x1))
            faces.append(("up", r.y1, r.x0, r.x1))
        else:
            faces.append(("right", r.x0, r.y0, r.y1))
            faces.append(("left", r.x1, r.y0, r.y1))
            faces.append(("up", r.y0, r.x0, r.x1))
            faces.append(("down", r.y1, r.x0, r.x1))

    if isinstance(extent, Rect):
        rect_faces(extent, False)
    else:
        rect_faces(extent.outer, False)
        rect_faces(extent.inner, True)
    return faces


def _q(v: float) -> int:
    # Quantize a coordinate for exact-match bookkeeping.
    return int(round(v / TILE_TOL))


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


###############################################################################
# Partition
###############################################################################


@dataclass(frozen=True)
class Partition:
    """Immutable product of :func:`build_partition`.

    Subvolume data lives in flat arrays indexed by subvolume id.  Links are
    stored directionally in CSR form: the links leaving subvolume ``i`` are
    ``link_dest[link_start[i]:link_start[i+1]]``, ordered by destination id
    with the virtual link (destination -1) last.  ``link_mirror`` indexes
    into ``mirror_rects`` for virtual links and is -1 elsewhere.

    ``rect_*`` arrays describe the tiling rectangles used for point lookup
    (mesoscopic rectangles know their id base; microscopic ones carry -1).
    ``iface_ids``/``iface_offsets`` list interface subvolume ids grouped by
    the mesoscopic region they belong to, ascending within each region.
    """

    env: Environment
    regions: tuple[Region, ...]

    n_subvolumes: int
    origins: np.ndarray        # (n, 2) lower-left corner
    centers: np.ndarray        # (n, 2)
    widths: np.ndarray         # (n,)
    region_ids: np.ndarray     # (n,) int64
    is_interface: np.ndarray   # (n,) bool
    region_counts: np.ndarray  # (n_regions,) int64

    link_start: np.ndarray     # (n+1,) int64
    link_dest: np.ndarray      # (m,) int64, -1 for virtual
    link_overlap: np.ndarray   # (m,)
    link_dest_width: np.ndarray  # (m,)
    link_mirror: np.ndarray    # (m,) int64 index into mirror_rects, -1 if none
    mirror_rects: np.ndarray   # (n_virtual, 4) x0 y0 x1 y1

    rect_bounds: np.ndarray    # (n_rects, 4) x0 y0 x1 y1
    rect_width: np.ndarray     # (n_rects,) subvolume width, 0 for micro
    rect_nx: np.ndarray        # (n_rects,) int64
    rect_base: np.ndarray      # (n_rects,) int64 first subvolume id, -1 for micro
    rect_region: np.ndarray    # (n_rects,) int64 index into ``regions``
    rect_is_micro: np.ndarray  # (n_rects,) bool

    iface_offsets: np.ndarray  # (n_regions+1,) int64
    iface_ids: np.ndarray      # int64

    @property
    def has_micro(self) -> bool:
        return bool(self.rect_is_micro.any())

    @property
    def n_links(self) -> int:
        return int(self.link_dest.size)


def _validate_layout(env: Environment, regions: tuple[Region, ...]) -> None:
    if not regions:
        raise GeometryError("at least one region is required")
    seen = set()
    for reg in regions:
        if reg.region_id in seen:
            raise GeometryError(f"duplicate region id {reg.region_id}")
        seen.add(reg.region_id)

    pieces: list[tuple[int, Rect]] = []
    for reg in regions:
        for r in _decompose(reg.extent):
            if r.x0 < -TILE_TOL or r.y0 < -TILE_TOL \
                    or r.x1 > env.width + TILE_TOL or r.y1 > env.height + TILE_TOL:
                raise GeometryError(
                    f"region {reg.region_id} extends outside the environment"
                )
            pieces.append((reg.region_id, r))

    # Pairwise interior disjointness.
    for k, (rid_a, a) in enumerate(pieces):
        for rid_b, b in pieces[k + 1:]:
            ox = min(a.x1, b.x1) - max(a.x0, b.x0)
            oy = min(a.y1, b.y1) - max(a.y0, b.y0)
            if ox > TILE_TOL and oy > TILE_TOL:
                raise GeometryError(
                    f"regions {rid_a} and {rid_b} overlap"
                )

    # Disjoint pieces inside the environment must add up to the full area,
    # otherwise there is a gap somewhere.
    total = sum(r.area for _, r in pieces)
    if abs(total - env.width * env.height) > TILE_TOL * max(1.0, env.width * env.height):
        raise GeometryError(
            f"regions cover {total:g} of {env.width * env.height:g}; "
            f"the environment has a gap"
        )


def build_partition(env: Environment, regions) -> Partition:
    """Validate a region layout and assemble the full partition.

    Raises :class:`GeometryError` on non-tileable regions, overlaps, gaps,
    microscopic regions that are not fully enclosed by mesoscopic regions
    or the environment boundary, and interface subvolumes of mixed width.
    """
    regions = tuple(regions)
    _validate_layout(env, regions)

    # --- tile mesoscopic regions -------------------------------------------
    origins, widths, region_of = [], [], []
    rect_rows = []  # (x0, y0, x1, y1, h, nx, base, region_index, is_micro)
    region_counts = {}

    next_id = 0
    for pos, reg in enumerate(regions):
        count = 0
        if reg.is_micro:
            for r in _decompose(reg.extent):
                rect_rows.append((r.x0, r.y0, r.x1, r.y1, 0.0, 0, -1, pos, True))
        else:
            h = reg.subvolume_width
            ox, oy = _extent_origin(reg.extent)
            for r in _decompose(reg.extent):
                for v, what in ((r.x0 - ox, "x0"), (r.y0 - oy, "y0"),
                                (r.width, "width"), (r.height, "height")):
                    if not _is_multiple(v, h):
                        raise GeometryError(
                            f"region {reg.region_id}: {what} of tile "
                            f"{(r.x0, r.y0, r.x1, r.y1)} is not a multiple of "
                            f"subvolume width {h}"
                        )
                nx = int(round(r.width / h))
                ny = int(round(r.height / h))
                rect_rows.append((r.x0, r.y0, r.x1, r.y1, h, nx, next_id, pos, False))
                for iy in range(ny):
                    for ix in range(nx):
                        origins.append((r.x0 + ix * h, r.y0 + iy * h))
                        widths.append(h)
                        region_of.append(reg.region_id)
                count += nx * ny
                next_id += nx * ny
        region_counts[reg.region_id] = count

    n = next_id
    origins = np.asarray(origins, dtype=np.float64).reshape(n, 2)
    widths = np.asarray(widths, dtype=np.float64)
    region_ids = np.asarray(region_of, dtype=np.int64)
    centers = origins + 0.5 * widths[:, None]

    # --- mesoscopic adjacency via coincident faces --------------------------
    # Directional entries (src, dest, overlap, dest_width, mirror_index).
    entries: list[list[tuple[int, float, float, int]]] = [[] for _ in range(n)]

    def match_axis(lo_face, hi_face, lo_lo, lo_hi):
        """Pair faces at the same coordinate: hi_face of i against lo_face of j.

        lo_face/hi_face map quantized face coordinate -> subvolume ids; the
        perpendicular extent of subvolume s is [lo_lo[s], lo_hi[s]].
        """
        for key, left_ids in hi_face.items():
            right_ids = lo_face.get(key)
            if not right_ids:
                continue
            for i in left_ids:
                for j in right_ids:
                    ov = min(lo_hi[i], lo_hi[j]) - max(lo_lo[i], lo_lo[j])
                    if ov > TILE_TOL:
                        entries[i].append((j, ov, widths[j], -1))
                        entries[j].append((i, ov, widths[i], -1))

    right_face: dict[int, list[int]] = {}
    left_face: dict[int, list[int]] = {}
    top_face: dict[int, list[int]] = {}
    bottom_face: dict[int, list[int]] = {}
    for s in range(n):
        x0, y0 = origins[s]
        h = widths[s]
        left_face.setdefault(_q(x0), []).append(s)
        right_face.setdefault(_q(x0 + h), []).append(s)
        bottom_face.setdefault(_q(y0), []).append(s)
        top_face.setdefault(_q(y0 + h), []).append(s)

    ylo = origins[:, 1]
    yhi = origins[:, 1] + widths
    xlo = origins[:, 0]
    xhi = origins[:, 0] + widths
    match_axis(left_face, right_face, ylo, yhi)
    match_axis(bottom_face, top_face, xlo, xhi)

    # --- microscopic interfaces ---------------------------------------------
    micro_regions = [reg for reg in regions if reg.is_micro]
    is_interface = np.zeros(n, dtype=bool)
    mirror_list: list[tuple[float, float, float, float]] = []
    iface_by_region: dict[int, list[int]] = {}
    face_of = {"left": left_face, "right": right_face,
               "down": bottom_face, "up": top_face}
    # Opposite subvolume face that can lie on a given micro boundary face.
    opposite = {"left": right_face, "right": left_face,
                "down": top_face, "up": bottom_face}

    micro_cover = {reg.region_id: 0.0 for reg in micro_regions}
    for reg in micro_regions:
        for side, coord, lo, hi in _boundary_faces(reg.extent):
            key = _q(coord)
            # Environment walls count as enclosure.
            if side in ("left", "right"):
                wall = 0.0 if side == "left" else env.width
            else:
                wall = 0.0 if side == "down" else env.height
            if key == _q(wall):
                micro_cover[reg.region_id] += hi - lo
                continue
            for s in opposite[side].get(key, ()):
                if side in ("left", "right"):
                    slo, shi = ylo[s], yhi[s]
                else:
                    slo, shi = xlo[s], xhi[s]
                ov = min(hi, shi) - max(lo, slo)
                if ov <= TILE_TOL:
                    continue
                micro_cover[reg.region_id] += ov
                h = widths[s]
                if abs(ov - h) > TILE_TOL:
                    raise GeometryError(
                        f"subvolume {s} only partially faces microscopic region "
                        f"{reg.region_id}; meshes must line up along an interface"
                    )
                if is_interface[s]:
                    raise GeometryError(
                        f"subvolume {s} has more than one interface face"
                    )
                is_interface[s] = True
                # Mirror image of the subvolume across the shared face, on
                # the microscopic side.  ``side`` is the micro region's face,
                # so the subvolume (and its reflection) sit opposite to it:
                # e.g. a cell beyond the "left" face mirrors one cell right.
                x0, y0 = origins[s]
                if side == "left":
                    mirror = (x0 + h, y0, x0 + 2 * h, y0 + h)
                elif side == "right":
                    mirror = (x0 - h, y0, x0, y0 + h)
                elif side == "down":
                    mirror = (x0, y0 + h, x0 + h, y0 + 2 * h)
                else:
                    mirror = (x0, y0 - h, x0 + h, y0)
                entries[s].append((-1, h, h, len(mirror_list)))
                mirror_list.append(mirror)
                iface_by_region.setdefault(int(region_ids[s]), []).append(s)

        # A micro region must see mesoscopic faces or walls along its whole
        # boundary, otherwise molecules could cross into nothing.
        perimeter = sum(hi - lo for _, _, lo, hi in _boundary_faces(reg.extent))
        if abs(micro_cover[reg.region_id] - perimeter) > 1e-6 * max(1.0, perimeter):
            raise GeometryError(
                f"microscopic region {reg.region_id} is not fully surrounded "
                f"by mesoscopic regions or the environment boundary"
            )

    # Interface subvolumes facing one micro region must share one width.
    for reg in micro_regions:
        ws = {float(widths[s]) for ss in iface_by_region.values() for s in ss
              if _touches(origins[s], widths[s], reg.extent)}
        if len(ws) > 1:
            raise GeometryError(
                f"microscopic region {reg.region_id} has interface subvolumes "
                f"of mixed width {sorted(ws)}"
            )

    # --- freeze links in CSR form -------------------------------------------
    link_start = np.zeros(n + 1, dtype=np.int64)
    dest_l, over_l, dwidth_l, mirror_l = [], [], [], []
    for s in range(n):
        # Destination order, virtual link last (destination -1 sorts first,
        # so order by (is_virtual, dest)).
        entries[s].sort(key=lambda e: (e[0] < 0, e[0]))
        link_start[s + 1] = link_start[s] + len(entries[s])
        for dest, ov, dw, mi in entries[s]:
            dest_l.append(dest)
            over_l.append(ov)
            dwidth_l.append(dw)
            mirror_l.append(mi)

    iface_offsets = np.zeros(len(regions) + 1, dtype=np.int64)
    iface_flat: list[int] = []
    for k, reg in enumerate(regions):
        ids = sorted(iface_by_region.get(reg.region_id, []))
        iface_flat.extend(ids)
        iface_offsets[k + 1] = len(iface_flat)

    rect_rows_arr = np.asarray([(r[0], r[1], r[2], r[3]) for r in rect_rows], dtype=np.float64)
    return Partition(
        env=env,
        regions=regions,
        n_subvolumes=n,
        origins=origins,
        centers=centers,
        widths=widths,
        region_ids=region_ids,
        is_interface=is_interface,
        region_counts=np.asarray([region_counts[r.region_id] for r in regions], dtype=np.int64),
        link_start=link_start,
        link_dest=np.asarray(dest_l, dtype=np.int64),
        link_overlap=np.asarray(over_l, dtype=np.float64),
        link_dest_width=np.asarray(dwidth_l, dtype=np.float64),
        link_mirror=np.asarray(mirror_l, dtype=np.int64),
        mirror_rects=np.asarray(mirror_list, dtype=np.float64).reshape(len(mirror_list), 4),
        rect_bounds=rect_rows_arr.reshape(len(rect_rows), 4),
        rect_width=np.asarray([r[4] for r in rect_rows], dtype=np.float64),
        rect_nx=np.asarray([r[5] for r in rect_rows], dtype=np.int64),
        rect_base=np.asarray([r[6] for r in rect_rows], dtype=np.int64),
        rect_region=np.asarray([r[7] for r in rect_rows], dtype=np.int64),
        rect_is_micro=np.asarray([r[8] for r in rect_rows], dtype=bool),
        iface_offsets=iface_offsets,
        iface_ids=np.asarray(iface_flat, dtype=np.int64),
    )


def _touches(origin, h, extent: Extent) -> bool:
    """True if the square (origin, h) has a full face on the extent boundary."""
    x0, y0 = origin
    for side, coord, lo, hi in _boundary_faces(extent):
        if side in ("left", "right"):
            face = x0 + h if side == "left" else x0
            if _q(face) == _q(coord) and min(hi, y0 + h) - max(lo, y0) > TILE_TOL:
                return True
        else:
            face = y0 + h if side == "down" else y0
            if _q(face) == _q(coord) and min(hi, x0 + h) - max(lo, x0) > TILE_TOL:
                return True
    return False


###############################################################################
# Point lookup
###############################################################################


def locate(partition: Partition, x: float, y: float) -> tuple[int, int]:
    """Map a point to (region id, subvolume id); subvolume id is -1 in micro.

    Membership is half-open, [x0, x0+h) x [y0, y0+h), except on the top and
    right environment boundary, which are closed so every point of the
    closed domain belongs to exactly one subvolume.
    """
    env = partition.env
    if not (np.isfinite(x) and np.isfinite(y)):
        raise GeometryError(f"point ({x}, {y}) is not finite")
    if x < 0.0 or x > env.width or y < 0.0 or y > env.height:
        raise GeometryError(f"point ({x}, {y}) lies outside the environment")

    rb = partition.rect_bounds
    for k in range(rb.shape[0]):
        x0, y0, x1, y1 = rb[k]
        in_x = (x0 <= x < x1) or (x == x1 == env.width)
        in_y = (y0 <= y < y1) or (y == y1 == env.height)
        if not (in_x and in_y):
            continue
        region = partition.regions[int(partition.rect_region[k])].region_id
        if partition.rect_is_micro[k]:
            return region, -1
        h = partition.rect_width[k]
        nx = int(partition.rect_nx[k])
        ny_max = int(round((y1 - y0) / h)) - 1
        ix = min(int((x - x0) / h), nx - 1)
        iy = min(int((y - y0) / h), ny_max)
        return region, int(partition.rect_base[k]) + iy * nx + ix
    raise GeometryError(f"point ({x}, {y}) not covered by any region")


def interface_subvolumes(partition: Partition, region_id: int) -> np.ndarray:
    """Ids of interface subvolumes belonging to mesoscopic region ``region_id``."""
    for k, reg in enumerate(partition.regions):
        if reg.region_id == region_id:
            if reg.is_micro:
                raise GeometryError(
                    f"region {region_id} is microscopic and holds no subvolumes"
                )
            lo, hi = partition.iface_offsets[k], partition.iface_offsets[k + 1]
            return partition.iface_ids[lo:hi].copy()
    raise GeometryError(f"no region with id {region_id}")


def subvolume_rect(partition: Partition, sv: int) -> Rect:
    x0, y0 = partition.origins[sv]
    h = partition.widths[sv]
    return Rect(x0, y0, x0 + h, y0 + h)
