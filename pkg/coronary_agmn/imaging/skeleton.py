"""Centerline extraction: thinning, radii, key points and segment splitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi
from skimage.morphology import skeletonize as _zhang_thinning

from coronary_agmn.core.errors import StructuralError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.imaging.pgm import BinaryMask

logger = get_logger(__name__)

Coord = tuple[int, int]  # (x, y)

EIGHT_NEIGHBOR_OFFSETS: tuple[tuple[int, int], ...] = (
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
)
_NEIGHBOR_KERNEL = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.int32)
_EIGHT_CONNECTIVITY = np.ones((3, 3), dtype=bool)


def row_major_key(coord: Coord) -> tuple[int, int]:
    return coord[1], coord[0]


@dataclass(frozen=True)
class Skeleton:
    """One-pixel-wide centerline. Points are (x, y), sorted row-major."""

    points: np.ndarray
    shape: tuple[int, int]  # (height, width) of the source mask
    radius: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.int64).reshape(-1, 2))
        if self.radius is not None:
            radius = np.asarray(self.radius, dtype=np.float64)
            if radius.shape != (len(self.points),):
                raise StructuralError("radius must have one entry per skeleton point")
            object.__setattr__(self, "radius", radius)

    def __len__(self) -> int:
        return len(self.points)

    def as_image(self) -> np.ndarray:
        image = np.zeros(self.shape, dtype=bool)
        if len(self.points):
            image[self.points[:, 1], self.points[:, 0]] = True
        return image

    def radius_image(self) -> np.ndarray:
        image = np.zeros(self.shape, dtype=np.float64)
        if self.radius is not None and len(self.points):
            image[self.points[:, 1], self.points[:, 0]] = self.radius
        return image

    def point_set(self) -> set[Coord]:
        return {(int(x), int(y)) for x, y in self.points}


@dataclass(frozen=True)
class KeyPointSet:
    """Endpoints and bifurcations of a skeleton.

    Adjacent pixels with three or more neighbours form one junction. Its pixel
    nearest the junction centroid is the bifurcation; the other pixels map to it
    in `junction_members`.
    """

    bifurcations: list[Coord]
    endpoints: list[Coord]
    junction_members: dict[Coord, Coord] = field(default_factory=dict)

    def kind(self, coord: Coord) -> str | None:
        if coord in self._bifurcation_set:
            return "bifurcation"
        if coord in self._endpoint_set:
            return "endpoint"
        return None

    @property
    def _bifurcation_set(self) -> frozenset[Coord]:
        return frozenset(self.bifurcations)

    @property
    def _endpoint_set(self) -> frozenset[Coord]:
        return frozenset(self.endpoints)

    def all_points(self) -> list[Coord]:
        return sorted([*self.bifurcations, *self.endpoints], key=row_major_key)

    def owner(self) -> dict[Coord, Coord]:
        """Every key-point or junction pixel mapped to the key point it belongs to."""
        owners = {point: point for point in self.all_points()}
        owners.update(self.junction_members)
        return owners


@dataclass(frozen=True)
class CenterlineSegment:
    """Interior centerline pixels between two terminal key points.

    Terminal key points are not part of `pixels`. `flagged` marks components that do
    not attach to exactly two key-point slots (isolated loops); those carry no terminals.
    """

    pixels: np.ndarray
    radii: np.ndarray
    terminal_keypoints: tuple[Coord, ...]
    flagged: bool = False
    id: int = field(default=-1, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=np.float64).reshape(-1))
        if len(self.pixels) != len(self.radii):
            raise StructuralError("segment pixels and radii differ in length")

    @property
    def pixel_count(self) -> int:
        return int(len(self.pixels))

    @property
    def max_diameter(self) -> float:
        return float(2.0 * self.radii.max()) if len(self.radii) else 0.0

    @property
    def mean_diameter(self) -> float:
        return float(2.0 * self.radii.mean()) if len(self.radii) else 0.0

    @property
    def is_self_loop(self) -> bool:
        return len(self.terminal_keypoints) == 2 and self.terminal_keypoints[0] == self.terminal_keypoints[1]


def _remove_staircase_corners(thin: np.ndarray) -> np.ndarray:
    """Deletes 4-connected corner pixels whose removal keeps local 8-connectivity.

    Zhang-Suen output can keep L-shaped steps where both step pixels see three
    neighbours; those would read as spurious bifurcations.
    """
    out = np.pad(thin.copy(), 1)
    removed = 0
    while True:
        counts = ndi.convolve(out.astype(np.int32), _NEIGHBOR_KERNEL, mode="constant")
        ys, xs = np.nonzero(out & (counts >= 2))
        removed_this_pass = 0
        for y, x in zip(ys.tolist(), xs.tolist()):
            window = out[y - 1 : y + 2, x - 1 : x + 2].copy()
            window[1, 1] = False
            if window.sum() < 2:
                continue
            north, south, west, east = window[0, 1], window[2, 1], window[1, 0], window[1, 2]
            if not ((north and east) or (east and south) or (south and west) or (west and north)):
                continue
            _, components = ndi.label(window, structure=_EIGHT_CONNECTIVITY)
            if components == 1:
                out[y, x] = False
                removed_this_pass += 1
        removed += removed_this_pass
        if not removed_this_pass:
            break
    if removed:
        logger.debug(f"Removed {removed} staircase corner pixels")
    return out[1:-1, 1:-1]


def skeletonize(mask: BinaryMask) -> Skeleton:
    """Connectivity-preserving two-subiteration thinning of the mask foreground."""
    if not mask.foreground.any():
        return Skeleton(np.empty((0, 2), dtype=np.int64), (mask.height, mask.width))
    # the mask's array is read-only and skimage needs a writable buffer
    thin = _zhang_thinning(mask.foreground.copy())
    thin = _remove_staircase_corners(thin) & mask.foreground
    ys, xs = np.nonzero(thin)  # np.nonzero walks row-major
    return Skeleton(np.column_stack([xs, ys]), (mask.height, mask.width))


def compute_radii(mask: BinaryMask, skeleton: Skeleton) -> Skeleton:
    """Radius = exact Euclidean distance to the nearest background pixel centre.

    The image is framed by one background pixel so foreground touching the border
    still gets a finite radius.
    """
    if skeleton.shape != (mask.height, mask.width):
        raise StructuralError(f"Skeleton shape {skeleton.shape} does not match mask {(mask.height, mask.width)}")
    if len(skeleton) and not mask.foreground[skeleton.points[:, 1], skeleton.points[:, 0]].all():
        raise StructuralError("Skeleton contains points outside the mask foreground")
    distance = ndi.distance_transform_edt(np.pad(mask.foreground, 1))[1:-1, 1:-1]
    radius = distance[skeleton.points[:, 1], skeleton.points[:, 0]] if len(skeleton) else np.empty(0)
    return Skeleton(skeleton.points, skeleton.shape, radius)


def neighbor_counts(skeleton: Skeleton) -> np.ndarray:
    image = skeleton.as_image().astype(np.int32)
    counts = ndi.convolve(image, _NEIGHBOR_KERNEL, mode="constant")
    return counts[skeleton.points[:, 1], skeleton.points[:, 0]] if len(skeleton) else np.empty(0, dtype=np.int32)


def detect_keypoints(skeleton: Skeleton) -> KeyPointSet:
    """Endpoints have exactly one 8-neighbour; bifurcations have three or more.

    Touching bifurcation pixels are one junction, represented by the pixel
    nearest their centroid (ties in row-major order).
    """
    counts = neighbor_counts(skeleton)
    points = [(int(x), int(y)) for x, y in skeleton.points]
    endpoints = [p for p, c in zip(points, counts) if c == 1]

    crowded = np.zeros(skeleton.shape, dtype=bool)
    for (x, y), c in zip(points, counts):
        if c >= 3:
            crowded[y, x] = True
    labels, n_junctions = ndi.label(crowded, structure=_EIGHT_CONNECTIVITY)
    bifurcations: list[Coord] = []
    members: dict[Coord, Coord] = {}
    for label in range(1, n_junctions + 1):
        ys, xs = np.nonzero(labels == label)
        cluster = [(int(x), int(y)) for x, y in zip(xs, ys)]
        cx, cy = xs.mean(), ys.mean()
        representative = min(cluster, key=lambda p: ((p[0] - cx) ** 2 + (p[1] - cy) ** 2, row_major_key(p)))
        bifurcations.append(representative)
        members.update({p: representative for p in cluster if p != representative})
    bifurcations.sort(key=row_major_key)
    if members:
        logger.debug(f"Collapsed {len(members) + len(bifurcations)} junction pixels into {len(bifurcations)} bifurcations")
    return KeyPointSet(bifurcations=bifurcations, endpoints=endpoints, junction_members=members)


def _neighbors(coord: Coord, pool: set[Coord] | dict[Coord, Coord]) -> list[Coord]:
    x, y = coord
    return [(x + dx, y + dy) for dx, dy in EIGHT_NEIGHBOR_OFFSETS if (x + dx, y + dy) in pool]


def split_segments(skeleton: Skeleton, keypoints: KeyPointSet) -> list[CenterlineSegment]:
    """Removes key points and turns every remaining 8-connected component into a segment.

    Junction pixels other than the bifurcation itself join the one segment they
    touch, or stay with the junction when they touch none or several. Key points
    whose pixels touch each other directly yield a segment with no interior pixels.
    """
    owner = keypoints.owner()
    skeleton_set = skeleton.point_set()
    if not set(owner) <= skeleton_set:
        raise StructuralError("Key points are not all skeleton points")
    radius_image = skeleton.radius_image()

    interior = skeleton.as_image()
    for x, y in owner:
        interior[y, x] = False
    labels, n_components = ndi.label(interior, structure=_EIGHT_CONNECTIVITY)

    # junction pixels handed to the single component they touch
    handed: dict[int, list[Coord]] = {}
    for member in sorted(keypoints.junction_members, key=row_major_key):
        touching = {int(labels[y, x]) for x, y in _neighbors(member, skeleton_set) if labels[y, x]}
        if len(touching) == 1:
            handed.setdefault(touching.pop(), []).append(member)

    segments: list[CenterlineSegment] = []
    if n_components:
        component_pixels: dict[int, list[Coord]] = {}
        ys, xs = np.nonzero(labels)
        for y, x in zip(ys.tolist(), xs.tolist()):
            component_pixels.setdefault(int(labels[y, x]), []).append((x, y))
        for label in sorted(component_pixels):
            segments.append(
                _trace_component(component_pixels[label], owner, handed.get(label, []), keypoints, radius_image)
            )

    touching_pairs: set[tuple[Coord, Coord]] = set()
    for pixel, key in owner.items():
        for neighbor in _neighbors(pixel, owner):
            other = owner[neighbor]
            if other != key:
                touching_pairs.add(tuple(sorted((key, other), key=row_major_key)))  # type: ignore[arg-type]
    for first, second in sorted(touching_pairs, key=lambda pair: (row_major_key(pair[0]), row_major_key(pair[1]))):
        segments.append(CenterlineSegment(np.empty((0, 2)), np.empty(0), (first, second)))

    segments.sort(key=_segment_sort_key)
    segments = [_with_id(segment, i) for i, segment in enumerate(segments)]
    flagged = sum(segment.flagged or segment.is_self_loop for segment in segments)
    logger.debug(f"Split skeleton of {len(skeleton)} points into {len(segments)} segments ({flagged} flagged)")
    return segments


def _with_id(segment: CenterlineSegment, segment_id: int) -> CenterlineSegment:
    return CenterlineSegment(segment.pixels, segment.radii, segment.terminal_keypoints, segment.flagged, segment_id)


def _segment_sort_key(segment: CenterlineSegment) -> tuple:
    terminals = tuple(row_major_key(t) for t in segment.terminal_keypoints)
    first_pixel = row_major_key(tuple(segment.pixels[0])) if len(segment.pixels) else (-1, -1)
    return (segment.flagged, terminals, first_pixel)


def _adjacent(first: Coord, second: Coord) -> bool:
    return max(abs(first[0] - second[0]), abs(first[1] - second[1])) == 1


def _attachments(pixels: list[Coord], pool: set[Coord], owner: dict[Coord, Coord]) -> list[tuple[Coord, Coord]]:
    """(component pixel, key point) per place the component meets a key point.

    Neighbouring pixels touching the same key point count once; the one with the
    fewest component neighbours (the path end) is kept.
    """
    touches: dict[Coord, list[list[Coord]]] = {}
    for pixel in sorted(pixels, key=row_major_key):
        for key in sorted({owner[n] for n in _neighbors(pixel, owner)}, key=row_major_key):
            clumps = touches.setdefault(key, [])
            clump = next((c for c in clumps if any(_adjacent(pixel, p) for p in c)), None)
            if clump is None:
                clumps.append([pixel])
            else:
                clump.append(pixel)
    attachments = []
    for key, clumps in touches.items():
        for clump in clumps:
            end = min(clump, key=lambda p: (len(_neighbors(p, pool)), row_major_key(p)))
            attachments.append((end, key))
    attachments.sort(key=lambda item: (row_major_key(item[1]), row_major_key(item[0])))
    return attachments


def _trace_component(
    pixels: list[Coord],
    owner: dict[Coord, Coord],
    handed: list[Coord],
    keypoints: KeyPointSet,
    radius_image: np.ndarray,
) -> CenterlineSegment:
    pool = set(pixels)
    attachments = _attachments(pixels, pool, owner)

    if len(attachments) != 2:
        ordered = sorted(pixels, key=row_major_key)
        walk = _walk(ordered[0], pool)
        radii = np.array([radius_image[y, x] for x, y in walk])
        return CenterlineSegment(np.array(walk), radii, tuple(sorted({k for _, k in attachments}, key=row_major_key)), True)

    walk = _walk(attachments[0][0], pool)
    terminals = (attachments[0][1], attachments[1][1])
    head = next((m for m in handed if keypoints.junction_members[m] == terminals[0] and _adjacent(m, walk[0])), None)
    tail = next(
        (m for m in handed if m != head and keypoints.junction_members[m] == terminals[1] and _adjacent(m, walk[-1])),
        None,
    )
    walk = ([head] if head else []) + walk + ([tail] if tail else [])
    radii = np.array([radius_image[y, x] for x, y in walk])
    return CenterlineSegment(np.array(walk), radii, terminals)


def _walk(start: Coord, pool: set[Coord]) -> list[Coord]:
    walk = [start]
    visited = {start}
    current = start
    while True:
        candidates = [n for n in _neighbors(current, pool) if n not in visited]
        if not candidates:
            break
        # Prefer 4-adjacent steps so the walk never skips a pixel of the path
        candidates.sort(key=lambda n: (abs(n[0] - current[0]) + abs(n[1] - current[1]), row_major_key(n)))
        current = candidates[0]
        walk.append(current)
        visited.add(current)
    if len(walk) != len(pool):
        # Remaining pixels (only possible on malformed input) are appended in row-major order
        walk.extend(sorted(pool - visited, key=row_major_key))
    return walk


def dump_skeleton(skeleton: Skeleton, path: Path | str | None = None) -> str:
    """Text table `x y radius`, one point per line."""
    radius = skeleton.radius if skeleton.radius is not None else np.zeros(len(skeleton))
    text = "".join(f"{x} {y} {r:.6f}\n" for (x, y), r in zip(skeleton.points.tolist(), radius.tolist()))
    if path is not None:
        Path(path).write_text(text)
    return text
