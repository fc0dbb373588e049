"""Network geometry: device layout, user placement and user-to-device association.

Device indices are shared by every module: 0 is the track-side base station,
1..rnum are the mobile relays in left-to-right order.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise InvalidArgumentError(f"non-finite point ({self.x}, {self.y})")

    def distance(self, other: "Point2D") -> float:
        return float(np.hypot(self.x - other.x, self.y - other.y))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable snapshot of device/user positions and the serving association.

    ``users`` is an (M, 2) array of coordinates, ``association[k]`` the device
    serving user k. ``reassociated[k]`` is True when user k was moved to its
    second-nearest device by blockage sampling.
    """

    area_side: float
    bs_position: Point2D
    mr_positions: tuple[Point2D, ...]
    users: np.ndarray
    association: np.ndarray
    seed: int = 0
    reassociated: np.ndarray | None = field(default=None)

    def __post_init__(self):
        users = np.asarray(self.users, dtype=float).reshape(-1, 2)
        assoc = np.asarray(self.association, dtype=np.int64).reshape(-1)
        if users.shape[0] != assoc.shape[0]:
            raise InvalidArgumentError("one association entry is required per user")
        if assoc.size and (assoc.min() < 0 or assoc.max() > len(self.mr_positions)):
            raise InvalidArgumentError("association index out of range")
        if not np.all(np.isfinite(users)):
            raise InvalidArgumentError("user coordinates must be finite")
        re = (np.zeros(assoc.shape, dtype=bool) if self.reassociated is None
              else np.asarray(self.reassociated, dtype=bool).reshape(-1))
        if re.shape != assoc.shape:
            raise InvalidArgumentError("reassociated mask must have one entry per user")
        object.__setattr__(self, "mr_positions", tuple(self.mr_positions))
        object.__setattr__(self, "users", _frozen(users))
        object.__setattr__(self, "association", _frozen(assoc))
        object.__setattr__(self, "reassociated", _frozen(re))

    @property
    def rnum(self) -> int:
        return len(self.mr_positions)

    @property
    def n_devices(self) -> int:
        return self.rnum + 1

    @property
    def n_users(self) -> int:
        return int(self.users.shape[0])

    @cached_property
    def device_xy(self) -> np.ndarray:
        pts = [self.bs_position, *self.mr_positions]
        return _frozen(np.array([[p.x, p.y] for p in pts], dtype=float))

    @cached_property
    def user_counts(self) -> np.ndarray:
        """M_s for every device s (M_BS first)."""
        return _frozen(np.bincount(self.association, minlength=self.n_devices))

    @cached_property
    def serving_distances(self) -> np.ndarray:
        """Distance from every user to its serving device."""
        d = self.users - self.device_xy[self.association]
        return _frozen(np.hypot(d[:, 0], d[:, 1]))

    def user(self, k: int) -> Point2D:
        return Point2D(float(self.users[k, 0]), float(self.users[k, 1]))

    def device(self, s: int) -> Point2D:
        return self.bs_position if s == 0 else self.mr_positions[s - 1]


def build_layout(area_side: float, rnum: int, bs_offset: float = 50.0,
                 rail_offset: float = 50.0) -> tuple[Point2D, tuple[Point2D, ...]]:
    """Place the BS above the area centre and ``rnum`` relays on a rail line below it.

    Relays are evenly spaced over x in [area_side/10, 9*area_side/10]; a single
    relay sits at the horizontal centre.
    """
    if not area_side > 0:
        raise InvalidArgumentError("area_side must be positive")
    if rnum < 1:
        raise InvalidArgumentError("at least one relay is required")
    half = area_side / 2
    for name, off in (("bs_offset", bs_offset), ("rail_offset", rail_offset)):
        if not 0 <= off < half:
            raise InvalidArgumentError(f"{name}={off} places a device outside the area")
    bs = Point2D(half, half + bs_offset)
    y = half - rail_offset
    if rnum == 1:
        xs = np.array([half])
    else:
        xs = np.linspace(area_side / 10, 9 * area_side / 10, rnum)
    return bs, tuple(Point2D(float(x), y) for x in xs)


def place_users(area_side: float, m: int, seed: int) -> np.ndarray:
    """Draw ``m`` users uniformly on the square [0, area_side]^2."""
    if m < 1:
        raise InvalidArgumentError("m must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, area_side, size=(m, 2))


def _distance_matrix(devices: np.ndarray, users: np.ndarray) -> np.ndarray:
    diff = users[:, None, :] - devices[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def _as_xy(points: Sequence[Point2D] | np.ndarray) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=float).reshape(-1, 2)
    return np.array([[p.x, p.y] for p in points], dtype=float).reshape(-1, 2)


def associate_nearest(bs: Point2D, mrs: Sequence[Point2D], users) -> np.ndarray:
    """Index of the nearest device for each user; ties go to the lowest index."""
    devices = _as_xy([bs, *mrs])
    # argmin returns the first minimum, which is the lowest device index
    return np.argmin(_distance_matrix(devices, _as_xy(users)), axis=1)


def make_scenario(area_side: float = 500.0, rnum: int = 9, m: int = 200, seed: int = 0,
                  bs_offset: float = 50.0, rail_offset: float = 50.0) -> Scenario:
    bs, mrs = build_layout(area_side, rnum, bs_offset, rail_offset)
    users = place_users(area_side, m, seed)
    return Scenario(area_side, bs, mrs, users, associate_nearest(bs, mrs, users), seed)


def sample_blockage_reassociate(scenario: Scenario, p_b: float, seed: int) -> Scenario:
    """Block each serving link with probability ``p_b`` and move blocked users
    to their second-nearest device."""
    if not 0.0 <= p_b <= 1.0:
        raise InvalidArgumentError("p_b must lie in [0, 1]")
    if p_b == 0.0:
        return scenario
    if scenario.n_devices < 2:
        raise InvalidArgumentError("blockage re-association needs at least two devices")
    rng = np.random.default_rng(seed)
    blocked = rng.random(scenario.n_users) < p_b
    dist = _distance_matrix(scenario.device_xy, scenario.users)
    # stable sort keeps the lowest-index tie-break for both ranks
    order = np.argsort(dist, axis=1, kind="stable")
    assoc = np.where(blocked, order[:, 1], order[:, 0])
    return replace(scenario, association=assoc, reassociated=blocked)


def write_scenario(scenario: Scenario, path: str | Path) -> None:
    lines = [f"area_side {scenario.area_side:.6f}", f"seed {scenario.seed}",
             f"bs {scenario.bs_position.x:.6f} {scenario.bs_position.y:.6f}"]
    for i, p in enumerate(scenario.mr_positions, start=1):
        lines.append(f"mr {i} {p.x:.6f} {p.y:.6f}")
    for k, ((x, y), s) in enumerate(zip(scenario.users, scenario.association)):
        lines.append(f"user {k} {x:.6f} {y:.6f} {s}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scenario(path: str | Path) -> Scenario:
    area = seed = bs = None
    mrs: dict[int, Point2D] = {}
    users, assoc = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "area_side":
                area = float(parts[1])
            elif tag == "seed":
                seed = int(parts[1])
            elif tag == "bs":
                bs = Point2D(float(parts[1]), float(parts[2]))
            elif tag == "mr":
                mrs[int(parts[1])] = Point2D(float(parts[2]), float(parts[3]))
            elif tag == "user":
                users.append((float(parts[2]), float(parts[3])))
                assoc.append(int(parts[4]))
            else:
                raise InvalidArgumentError(f"line {lineno}: unknown record '{tag}'")
        except (IndexError, ValueError) as exc:
            raise InvalidArgumentError(f"line {lineno}: malformed record: {raw!r}") from exc
    if area is None or bs is None or seed is None:
        raise InvalidArgumentError("scenario file lacks area_side, seed or bs header")
    mr_list = tuple(mrs[i] for i in sorted(mrs))
    return Scenario(area, bs, mr_list, np.array(users, dtype=float).reshape(-1, 2),
                    np.array(assoc, dtype=np.int64), seed)
