"""Problem instances: generation, benchmark-file parsing and serialization.

Nodes are dense zero-based integers.  For CVRP node 0 is the depot.
"""
from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateInstanceError,
    InvalidSizeError,
    InvalidSpecError,
    ParseError,
    UnsupportedFormatError,
    ValidationError,
)
from .rng import make_rng


class Kind(str, enum.Enum):
    TSP = "TSP"
    CVRP = "CVRP"


class DistanceMode(str, enum.Enum):
    EUCLID_REAL = "EUCLID_REAL"
    EUCLID_ROUNDED = "EUCLID_ROUNDED"


class DepotMode(str, enum.Enum):
    CENTRAL = "CENTRAL"
    ECCENTRIC = "ECCENTRIC"
    RANDOM = "RANDOM"


class CustomerMode(str, enum.Enum):
    RANDOM = "RANDOM"
    CLUSTERED = "CLUSTERED"
    RANDOM_CLUSTERED = "RANDOM_CLUSTERED"


# vehicle capacity per customer count used for generated CVRP instances
SMALL_CVRP_CAPACITY = {20: 20, 50: 30, 100: 40}
LARGE_CVRP_CAPACITY = 50

CLUSTER_SEEDS = (3, 8)
CLUSTER_SIGMA = 0.07


def default_capacity(n: int) -> int:
    if n in SMALL_CVRP_CAPACITY:
        return SMALL_CVRP_CAPACITY[n]
    if n < 20:
        return 20
    if n < 200:
        # linear between the tabulated small sizes
        return int(round(np.interp(n, [20, 50, 100], [20, 30, 40])))
    return LARGE_CVRP_CAPACITY


def _nint(x):
    return np.floor(np.asarray(x) + 0.5)


@dataclass(frozen=True, eq=False)
class RoutingInstance:
    """An immutable TSP or CVRP instance.

    ``coords`` live in the working (usually normalized) frame; raw
    coordinates are ``coords * scale + offset``.  Rounded distances are
    computed on the raw coordinates and divided by ``scale`` so that costs in
    the working frame times ``scale`` are exact raw costs.
    """

    kind: Kind
    coords: np.ndarray
    demands: np.ndarray | None = None
    capacity: int | None = None
    name: str = ""
    scale: float = 1.0
    offset: tuple[float, float] = (0.0, 0.0)
    distance_mode: DistanceMode = DistanceMode.EUCLID_REAL
    comment: str = field(default="", compare=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        coords = np.array(self.coords, dtype=float).reshape(-1, 2)
        coords.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "distance_mode", DistanceMode(self.distance_mode))
        object.__setattr__(self, "offset", (float(self.offset[0]), float(self.offset[1])))
        if not np.all(np.isfinite(coords)):
            raise ValidationError("non-finite coordinates")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError("scale must be positive")
        n = len(coords)
        if kind is Kind.TSP:
            if n < 3:
                raise InvalidSizeError(f"TSP needs at least 3 nodes, got {n}")
            object.__setattr__(self, "demands", None)
            object.__setattr__(self, "capacity", None)
            return
        if n < 2:
            raise InvalidSizeError(f"CVRP needs at least 1 customer, got {n - 1}")
        if self.demands is None or self.capacity is None:
            raise ValidationError("CVRP instance needs demands and capacity")
        demands = np.array(self.demands, dtype=np.int64).reshape(-1)
        demands.setflags(write=False)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacity", int(self.capacity))
        if len(demands) != n:
            raise ValidationError(f"{len(demands)} demands for {n} nodes")
        if self.capacity <= 0:
            raise ValidationError("capacity must be positive")
        if demands[0] != 0:
            raise ValidationError(f"depot demand must be 0, got {demands[0]}")
        bad = np.flatnonzero((demands[1:] <= 0) | (demands[1:] > self.capacity)) + 1
        if len(bad):
            raise ValidationError(f"customer demands outside (0, {self.capacity}] at nodes {bad.tolist()}")

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def n_customers(self) -> int:
        return self.n - 1 if self.kind is Kind.CVRP else self.n

    @property
    def raw_coords(self) -> np.ndarray:
        return self.coords * self.scale + np.asarray(self.offset)

    @cached_property
    def dist(self) -> np.ndarray:
        """Dense symmetric distance matrix in the working frame."""
        if self.distance_mode is DistanceMode.EUCLID_ROUNDED:
            raw = self.raw_coords
            diff = raw[:, None, :] - raw[None, :, :]
            d = _nint(np.sqrt((diff**2).sum(-1))) / self.scale
        else:
            diff = self.coords[:, None, :] - self.coords[None, :, :]
            d = np.sqrt((diff**2).sum(-1))
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        d.setflags(write=False)
        return d

    def distance(self, i: int, j: int) -> float:
        return distance(self, i, j)

    def with_coords(self, coords, scale: float, offset) -> "RoutingInstance":
        return RoutingInstance(
            kind=self.kind,
            coords=coords,
            demands=self.demands,
            capacity=self.capacity,
            name=self.name,
            scale=scale,
            offset=offset,
            distance_mode=self.distance_mode,
            comment=self.comment,
        )

    def denormalized(self) -> "RoutingInstance":
        if self.scale == 1.0 and self.offset == (0.0, 0.0):
            return self
        return self.with_coords(self.raw_coords, 1.0, (0.0, 0.0))

    def __eq__(self, other):
        if not isinstance(other, RoutingInstance):
            return NotImplemented
        same_demands = (self.demands is None and other.demands is None) or (
            self.demands is not None
            and other.demands is not None
            and np.array_equal(self.demands, other.demands)
        )
        return (
            self.kind == other.kind
            and np.array_equal(self.coords, other.coords)
            and same_demands
            and self.capacity == other.capacity
            and self.name == other.name
            and self.scale == other.scale
            and self.offset == other.offset
            and self.distance_mode == other.distance_mode
        )

    __hash__ = None

    # -- internal JSON format ------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "name": self.name,
            "coords": self.coords.tolist(),
            "demands": None if self.demands is None else self.demands.tolist(),
            "capacity": self.capacity,
            "distance_mode": self.distance_mode.value,
            "scale": self.scale,
            "offset": list(self.offset),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoutingInstance":
        return cls(
            kind=data["kind"],
            coords=data["coords"],
            demands=data.get("demands"),
            capacity=data.get("capacity"),
            name=data.get("name", ""),
            scale=data.get("scale", 1.0),
            offset=tuple(data.get("offset", (0.0, 0.0))),
            distance_mode=data.get("distance_mode", DistanceMode.EUCLID_REAL.value),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str | bytes) -> "RoutingInstance":
        return cls.from_dict(json.loads(text))


def distance(inst: RoutingInstance, i: int, j: int) -> float:
    n = inst.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node id out of range [0, {n}): {i}, {j}")
    return float(inst.dist[i, j])


# -- generation ---------------------------------------------------------------


@dataclass(frozen=True)
class GenSpec:
    """Parameters of a random CVRP instance.  ``n`` counts customers."""

    n: int
    seed: int = 0
    depot_mode: DepotMode = DepotMode.RANDOM
    customer_mode: CustomerMode = CustomerMode.RANDOM
    capacity: int | None = None
    demand_range: tuple[int, int] = (1, 9)

    def resolved_capacity(self) -> int:
        return default_capacity(self.n) if self.capacity is None else int(self.capacity)


def generate_uniform_tsp(n: int, seed: int) -> RoutingInstance:
    if n < 3:
        raise InvalidSizeError(f"TSP needs at least 3 nodes, got {n}")
    rng = make_rng(seed)
    return RoutingInstance(Kind.TSP, rng.random((n, 2)), name=f"tsp{n}-{seed}")


def _clustered(rng: np.random.Generator, count: int) -> np.ndarray:
    k = int(rng.integers(CLUSTER_SEEDS[0], CLUSTER_SEEDS[1] + 1))
    seeds = rng.random((k, 2))
    which = rng.integers(0, k, size=count)
    pts = seeds[which] + rng.normal(0.0, CLUSTER_SIGMA, size=(count, 2))
    return np.clip(pts, 0.0, 1.0)


def generate_cvrp(spec: GenSpec) -> RoutingInstance:
    n = spec.n
    if n < 2:
        raise InvalidSpecError(f"CVRP needs at least 2 customers, got {n}")
    cap = spec.resolved_capacity()
    lo, hi = spec.demand_range
    if cap <= 0:
        raise InvalidSpecError("capacity must be positive")
    if not (1 <= lo <= hi <= cap):
        raise InvalidSpecError(f"demand range {spec.demand_range} not within [1, {cap}]")
    rng = make_rng(spec.seed)
    depot_mode = DepotMode(spec.depot_mode)
    customer_mode = CustomerMode(spec.customer_mode)

    if depot_mode is DepotMode.CENTRAL:
        depot = np.array([0.5, 0.5])
    elif depot_mode is DepotMode.ECCENTRIC:
        depot = np.array([0.0, 0.0])
    else:
        depot = rng.random(2)

    if customer_mode is CustomerMode.RANDOM:
        cust = rng.random((n, 2))
    elif customer_mode is CustomerMode.CLUSTERED:
        cust = _clustered(rng, n)
    else:
        n_clustered = n // 2
        cust = np.vstack([_clustered(rng, n_clustered), rng.random((n - n_clustered, 2))])
        cust = cust[rng.permutation(n)]

    demands = np.concatenate([[0], rng.integers(lo, hi + 1, size=n)])
    name = f"cvrp{n}-{depot_mode.value[0]}{customer_mode.value[0]}-{spec.seed}"
    return RoutingInstance(Kind.CVRP, np.vstack([depot, cust]), demands, cap, name=name)


# -- normalization --------------------------------------------------------------


def normalize(inst: RoutingInstance) -> RoutingInstance:
    """Map coordinates into the unit square, keeping the aspect ratio.

    Instances already inside the unit square are returned unchanged.
    """
    c = inst.coords
    if c.min() >= 0.0 and c.max() <= 1.0:
        return inst
    lo = c.min(axis=0)
    span = float((c.max(axis=0) - lo).max())
    if span <= 0.0:
        raise DegenerateInstanceError("all nodes coincide")
    offset = np.asarray(inst.offset) + lo * inst.scale
    return inst.with_coords((c - lo) / span, inst.scale * span, tuple(offset))


# -- TSPLIB / CVRPLIB ---------------------------------------------------------

_SECTIONS = {
    "NODE_COORD_SECTION",
    "DEMAND_SECTION",
    "DEPOT_SECTION",
    "EDGE_WEIGHT_SECTION",
    "DISPLAY_DATA_SECTION",
    "TOUR_SECTION",
    "FIXED_EDGES_SECTION",
    "EOF",
}


def _decode(text) -> str:
    if isinstance(text, (bytes, bytearray)):
        return bytes(text).decode("utf-8", errors="replace")
    return text


def _scan(text):
    """Split a TSPLIB-style file into header fields and numbered section lines."""
    header: dict[str, tuple[str, int]] = {}
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(_decode(text).splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        word = line.split()[0].rstrip(":").upper()
        if word == "EOF":
            break
        if word in _SECTIONS:
            current = word
            sections[current] = []
            continue
        if ":" in line and not _numeric_start(line):
            key, _, value = line.partition(":")
            header[key.strip().upper()] = (value.strip(), lineno)
            current = None
            continue
        if current is None:
            raise ParseError(f"unexpected line {line!r}", lineno)
        sections[current].append((lineno, line))
    return header, sections


def _numeric_start(line: str) -> bool:
    c = line.lstrip()[:1]
    return c.isdigit() or c in "+-."


def _require(header, key):
    if key not in header:
        raise ParseError(f"missing {key}")
    return header[key]


def _parse_coords(rows, dimension):
    ids, xy = [], []
    for lineno, line in rows:
        parts = line.split()
        if len(parts) < 3:
            raise ParseError(f"malformed coordinate line {line!r}", lineno)
        try:
            ids.append(int(parts[0]))
            xy.append((float(parts[1]), float(parts[2])))
        except ValueError:
            raise ParseError(f"malformed coordinate line {line!r}", lineno) from None
    if len(ids) != dimension:
        raise ParseError(f"expected {dimension} coordinates, found {len(ids)}")
    if sorted(ids) != list(range(1, dimension + 1)):
        raise ParseError("node ids must be 1..DIMENSION")
    coords = np.empty((dimension, 2))
    coords[np.asarray(ids) - 1] = xy
    return coords


def _edge_mode(header) -> DistanceMode:
    value, _ = header.get("EDGE_WEIGHT_TYPE", ("", None))
    value = value.upper()
    if value == "EUC_2D":
        return DistanceMode.EUCLID_ROUNDED
    if value == "EXACT_2D":  # unrounded Euclidean, used when writing generated instances
        return DistanceMode.EUCLID_REAL
    raise UnsupportedFormatError("EDGE_WEIGHT_TYPE", value)


def parse_tsplib(text) -> RoutingInstance:
    header, sections = _scan(text)
    name = _require(header, "NAME")[0]
    mode = _edge_mode(header)
    dim_text, dim_line = _require(header, "DIMENSION")
    try:
        dimension = int(dim_text)
    except ValueError:
        raise ParseError(f"bad DIMENSION {dim_text!r}", dim_line) from None
    if "NODE_COORD_SECTION" not in sections:
        raise ParseError("missing NODE_COORD_SECTION")
    coords = _parse_coords(sections["NODE_COORD_SECTION"], dimension)
    comment = header.get("COMMENT", ("", None))[0]
    return RoutingInstance(Kind.TSP, coords, name=name, distance_mode=mode, comment=comment)


def parse_cvrplib(text) -> RoutingInstance:
    header, sections = _scan(text)
    name = header.get("NAME", ("", None))[0]
    mode = _edge_mode(header)
    cap_text, cap_line = _require(header, "CAPACITY")
    try:
        capacity = int(float(cap_text))
    except ValueError:
        raise ParseError(f"bad CAPACITY {cap_text!r}", cap_line) from None
    for sec in ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"):
        if sec not in sections:
            raise ParseError(f"missing {sec}")
    rows = sections["NODE_COORD_SECTION"]
    dimension = int(_require(header, "DIMENSION")[0]) if "DIMENSION" in header else len(rows)
    coords = _parse_coords(rows, dimension)

    demands = np.full(dimension, -1, dtype=np.int64)
    for lineno, line in sections["DEMAND_SECTION"]:
        parts = line.split()
        try:
            node, dem = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise ParseError(f"malformed demand line {line!r}", lineno) from None
        if not 1 <= node <= dimension:
            raise ParseError(f"demand for unknown node {node}", lineno)
        demands[node - 1] = dem
    missing = np.flatnonzero(demands < 0) + 1
    if len(missing):
        raise ParseError(f"DEMAND_SECTION missing nodes {missing.tolist()}")

    depots = []
    for lineno, line in sections["DEPOT_SECTION"]:
        for tok in line.split():
            try:
                v = int(tok)
            except ValueError:
                raise ParseError(f"malformed depot line {line!r}", lineno) from None
            if v == -1:
                break
            depots.append(v)
    if len(depots) != 1:
        raise ParseError(f"expected exactly one depot, found {len(depots)}")
    depot = depots[0] - 1
    if not 0 <= depot < dimension:
        raise ParseError(f"depot {depots[0]} out of range")
    if demands[depot] != 0:
        raise ValidationError(f"depot demand must be 0, got {demands[depot]}")
    order = [depot] + [i for i in range(dimension) if i != depot]
    comment = header.get("COMMENT", ("", None))[0]
    return RoutingInstance(
        Kind.CVRP, coords[order], demands[order], capacity, name=name, distance_mode=mode, comment=comment
    )


def _fmt(v: float) -> str:
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def write_tsplib(inst: RoutingInstance) -> str:
    raw = inst.raw_coords
    lines = [
        f"NAME : {inst.name}",
        "TYPE : TSP" if inst.kind is Kind.TSP else "TYPE : CVRP",
        f"DIMENSION : {inst.n}",
        "EDGE_WEIGHT_TYPE : " + ("EUC_2D" if inst.distance_mode is DistanceMode.EUCLID_ROUNDED else "EXACT_2D"),
    ]
    if inst.kind is Kind.CVRP:
        lines.append(f"CAPACITY : {inst.capacity}")
    lines.append("NODE_COORD_SECTION")
    lines += [f"{i + 1} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(raw)]
    if inst.kind is Kind.CVRP:
        lines.append("DEMAND_SECTION")
        lines += [f"{i + 1} {d}" for i, d in enumerate(inst.demands)]
        lines += ["DEPOT_SECTION", "1", "-1"]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


write_cvrplib = write_tsplib


def load_instance(path) -> RoutingInstance:
    """Read a ``.tsp``/``.vrp`` benchmark file or an internal ``.json`` instance."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if path.endswith(".json"):
        return RoutingInstance.from_json(data)
    header, _ = _scan(data)
    kind = header.get("TYPE", ("TSP", None))[0].upper()
    return parse_cvrplib(data) if kind.startswith("CVRP") else parse_tsplib(data)
