"""Grid network construction: halves, pairing, clusters, coloring, admissibility.

Geometry conventions used throughout the package:

* Nodes sit on the integer grid, coordinates ``(col, row)`` with
  ``1 <= col, row <= side`` and ``side = m**3``.  Node ids are 0-based and
  row-major: ``id = (row - 1) * side + (col - 1)``.
* The transmit half is the left ``ceil(side / 2)`` columns, the receive half
  the remaining columns.  For odd ``m`` the halves differ by one column of
  nodes and the source map is a bijection from the receive half into a
  subset of the transmit half.
* Receive clusters are disjoint ``M x M`` node blocks tiled from the receive
  half's minimum corner.  For odd ``m`` only ``m * (m // 2)`` full blocks
  fit; leftover receive nodes are dropped (their paired sources stay
  unserved).  Each cluster splits into ``M`` sub-blocks of ``sqrt(M) x
  sqrt(M)`` nodes.  Clusters, sub-blocks within a cluster, and nodes within a
  sub-block are all indexed row-major.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ColoringOverflowError, ConfigError
from .rng import substream

COLOR_CAP = 19


@dataclass(frozen=True)
class NetworkParams:
    m: int
    alpha: float = 3.0
    snr0: float = 10.0
    k0: int = 2
    b: int = 100
    c0_cap: int = COLOR_CAP

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ConfigError(f"m must be an integer >= 2, got {self.m}")
        if not self.alpha > 2:
            raise ConfigError(f"alpha must exceed 2, got {self.alpha}")
        if not self.snr0 > 0:
            raise ConfigError(f"snr0 must be positive, got {self.snr0}")
        if int(self.k0) != self.k0 or self.k0 < 0:
            raise ConfigError(f"k0 must be a non-negative integer, got {self.k0}")
        if int(self.b) != self.b or self.b < 1:
            raise ConfigError(f"b must be a positive integer, got {self.b}")
        # a large exclusion radius empties the admissible sets; that is
        # reported (served counts go to zero) rather than fatal
        if self.k0 >= self.n ** (1.0 / 6.0):
            warnings.warn(
                f"k0={self.k0} >= n^(1/6)={self.n ** (1/6):.3f}; "
                "admissible source sets may be empty",
                stacklevel=2,
            )

    @property
    def M(self) -> int:
        return self.m * self.m

    @property
    def n(self) -> int:
        return self.M**3

    @property
    def side(self) -> int:
        return self.m**3


@dataclass(frozen=True)
class GridTopology:
    params: NetworkParams
    n: int
    side: int
    positions: np.ndarray  # (n, 2) int, (col, row), 1-based
    transmit_half: np.ndarray  # node ids, row-major order
    receive_half: np.ndarray
    d_max: float
    d_max_convention: str = "diagonal"

    def node_id(self, col: int, row: int) -> int:
        return (row - 1) * self.side + (col - 1)


@dataclass(frozen=True)
class Pairing:
    src_of: dict  # receive node id -> transmit node id
    dst_of: dict  # transmit node id -> receive node id (partial for odd side)
    d_max_realized: float


@dataclass(frozen=True)
class ClusterPlan:
    params: NetworkParams
    topology: GridTopology
    n_clusters: int
    cluster_corners: np.ndarray  # (n_clusters, 2) min (col, row) of each block
    sub_corners: np.ndarray  # (n_clusters * M, 2), global sub index = cluster*M + local
    cluster_nodes: list  # per cluster: (M*M,) node ids, row-major
    sub_nodes: list  # per global sub index: (M,) node ids, row-major
    cluster_of: np.ndarray = field(repr=False, default=None)  # node id -> cluster or -1
    sub_of: np.ndarray = field(repr=False, default=None)  # node id -> global sub or -1

    @property
    def M(self) -> int:
        return self.params.M

    def cluster_center(self, c: int) -> np.ndarray:
        return self.cluster_corners[c] + (self.M - 1) / 2.0

    def sub_center(self, s: int) -> np.ndarray:
        return self.sub_corners[s] + (self.params.m - 1) / 2.0


@dataclass(frozen=True)
class GroupAssignment:
    level: str  # "cluster" | "sub_cluster"
    color_of: np.ndarray  # block index -> color
    c0: int
    threshold: float

    def groups(self) -> list:
        return [np.flatnonzero(self.color_of == c) for c in range(self.c0)]


@dataclass(frozen=True)
class AdmissibleSources:
    k0: int
    sources: list  # per cluster: transmit node ids with d(v, center) >= k0*M
    receive_nodes: list  # per cluster: the paired receive node of each source
    served_total: int


def build_grid(params: NetworkParams, d_max_convention: str = "diagonal") -> GridTopology:
    """Lay out the n = M^3 nodes and split them into transmit/receive halves."""
    if d_max_convention not in ("diagonal", "realized"):
        raise ConfigError(f"unknown d_max convention {d_max_convention!r}")
    side = params.side
    n = params.n
    cols = np.tile(np.arange(1, side + 1), side)
    rows = np.repeat(np.arange(1, side + 1), side)
    positions = np.column_stack([cols, rows])
    tw = math.ceil(side / 2)
    transmit = np.flatnonzero(cols <= tw)
    receive = np.flatnonzero(cols > tw)
    # pairing-independent default; "realized" is refined by pair_sources
    d_max = math.sqrt(2.0) * (side - 1)
    return GridTopology(
        params=params,
        n=n,
        side=side,
        positions=positions,
        transmit_half=transmit,
        receive_half=receive,
        d_max=d_max,
        d_max_convention=d_max_convention,
    )


def pair_sources(topology: GridTopology, seed: int) -> Pairing:
    """Uniform random injection of the receive half into the transmit half.

    For even side lengths this is the bijection between equal halves; for odd
    side lengths the transmit half is one column larger and the unmatched
    transmit nodes simply have no destination.
    """
    rng = substream(seed, "pairing")
    rx = topology.receive_half
    tx = topology.transmit_half
    chosen = rng.permutation(tx.size)[: rx.size]
    srcs = tx[chosen]
    src_of = {int(w): int(v) for w, v in zip(rx, srcs)}
    dst_of = {int(v): int(w) for w, v in zip(rx, srcs)}
    d = np.linalg.norm(
        topology.positions[rx].astype(float) - topology.positions[srcs], axis=1
    )
    realized = float(d.max())
    if topology.d_max_convention == "realized":
        object.__setattr__(topology, "d_max", realized)
    return Pairing(src_of=src_of, dst_of=dst_of, d_max_realized=realized)


def partition_clusters(topology: GridTopology) -> ClusterPlan:
    """Tile the receive half with M x M clusters and their sqrt(M) sub-blocks."""
    params = topology.params
    M, m, side = params.M, params.m, params.side
    tw = math.ceil(side / 2)
    rx0 = tw + 1  # first receive column
    rwidth = side - tw
    across = rwidth // M
    down = side // M
    if across < 1:
        raise ConfigError(f"receive half too narrow for {M}x{M} clusters (m={params.m})")

    cluster_corners = []
    sub_corners = []
    cluster_nodes = []
    sub_nodes = []
    cluster_of = np.full(topology.n, -1, dtype=np.int64)
    sub_of = np.full(topology.n, -1, dtype=np.int64)
    # row-major over the cluster grid: scan block-rows, then block-columns
    cidx = 0
    for bd in range(down):
        for ba in range(across):
            x0 = rx0 + ba * M
            y0 = 1 + bd * M
            cluster_corners.append((x0, y0))
            ids = np.empty(M * M, dtype=np.int64)
            k = 0
            for r in range(M):
                for c in range(M):
                    nid = (y0 + r - 1) * side + (x0 + c - 1)
                    ids[k] = nid
                    k += 1
            cluster_nodes.append(ids)
            cluster_of[ids] = cidx
            # sub-blocks, row-major within the cluster
            for sr in range(m):
                for sc in range(m):
                    sx0 = x0 + sc * m
                    sy0 = y0 + sr * m
                    sub_corners.append((sx0, sy0))
                    sid = len(sub_corners) - 1
                    sids = np.empty(M, dtype=np.int64)
                    k = 0
                    for r in range(m):
                        for c in range(m):
                            nid = (sy0 + r - 1) * side + (sx0 + c - 1)
                            sids[k] = nid
                            k += 1
                    sub_nodes.append(sids)
                    sub_of[sids] = sid
            cidx += 1

    return ClusterPlan(
        params=params,
        topology=topology,
        n_clusters=cidx,
        cluster_corners=np.asarray(cluster_corners, dtype=np.int64),
        sub_corners=np.asarray(sub_corners, dtype=np.int64),
        cluster_nodes=cluster_nodes,
        sub_nodes=sub_nodes,
        cluster_of=cluster_of,
        sub_of=sub_of,
    )


def _block_gap(corner_a, side_a, corner_b, side_b) -> float:
    """Minimum Euclidean distance between two axis-aligned node blocks.

    Equals the brute-force minimum over node pairs because the blocks are
    full integer rectangles.
    """
    ax0, ay0 = corner_a
    bx0, by0 = corner_b
    dx = max(0, bx0 - (ax0 + side_a - 1), ax0 - (bx0 + side_b - 1))
    dy = max(0, by0 - (ay0 + side_a - 1), ay0 - (by0 + side_b - 1))
    return math.hypot(dx, dy)


def cluster_distance(plan: ClusterPlan, a: int, b: int, level: str = "cluster") -> float:
    """Minimum node-pair distance between blocks ``a`` and ``b`` of a level."""
    if level == "cluster":
        return _block_gap(plan.cluster_corners[a], plan.M, plan.cluster_corners[b], plan.M)
    return _block_gap(plan.sub_corners[a], plan.params.m, plan.sub_corners[b], plan.params.m)


def default_threshold(M: int, level: str) -> float:
    """Separation below which two blocks of a level may not share a color.

    Scales with the block side: ``2*sqrt(2)*M`` for ``M x M`` clusters and
    ``2*sqrt(2)*sqrt(M) = 2*sqrt(2M)`` for ``sqrt(M)``-sided sub-blocks.  The
    sub-block value is also the inner radius of the first interference
    annulus used by the exchange-noise model, so same-colored sub-blocks are
    exactly the ones at annulus index >= 1 of each other.
    """
    if level == "cluster":
        return 2.0 * math.sqrt(2.0) * M
    return 2.0 * math.sqrt(2.0 * M)


def color_groups(plan: ClusterPlan, level: str, threshold: float | None = None) -> GroupAssignment:
    """Color blocks so same-colored ones are at least ``threshold`` apart.

    Two candidate colorings are built: a greedy pass over a global row-major
    scan of the block lattice, and a period-4 lattice coloring (at most 16
    colors, valid whenever 3*block_side + 1 >= threshold, since same-colored
    blocks then sit >= 4 lattice steps apart).  The one using fewer colors
    wins; exceeding the 19-color cap fails loudly.
    """
    if level not in ("cluster", "sub_cluster"):
        raise ConfigError(f"unknown level {level!r}")
    M = plan.M
    if threshold is None:
        threshold = default_threshold(M, "cluster" if level == "cluster" else "sub")
    if level == "cluster":
        corners = plan.cluster_corners
        bside = M
    else:
        corners = plan.sub_corners
        bside = plan.params.m

    # lattice coordinates of each block within the tiling
    origin = corners.min(axis=0)
    gx = (corners[:, 0] - origin[0]) // bside
    gy = (corners[:, 1] - origin[1]) // bside
    scan = np.lexsort((gx, gy))  # row-major over the block lattice

    colors = _greedy_colors(corners, bside, threshold, scan)
    if 3 * bside + 1 >= threshold:
        lattice = _compact_colors((gx % 4) + 4 * (gy % 4))
        if lattice.max() < colors.max():
            colors = lattice
    c0 = int(colors.max()) + 1
    if c0 > COLOR_CAP:
        raise ColoringOverflowError(
            f"{level} coloring needs {c0} colors (cap {COLOR_CAP})"
        )
    return GroupAssignment(level=level, color_of=colors, c0=c0, threshold=float(threshold))


def _greedy_colors(corners, bside, threshold, scan) -> np.ndarray:
    n = corners.shape[0]
    colors = np.full(n, -1, dtype=np.int64)
    pts = corners.astype(float)
    for idx in scan:
        d = np.maximum(
            0.0,
            np.maximum(pts[:, 0] - (pts[idx, 0] + bside - 1), pts[idx, 0] - (pts[:, 0] + bside - 1)),
        )
        dy = np.maximum(
            0.0,
            np.maximum(pts[:, 1] - (pts[idx, 1] + bside - 1), pts[idx, 1] - (pts[:, 1] + bside - 1)),
        )
        dist = np.hypot(d, dy)
        near = (dist < threshold) & (colors >= 0)
        used = set(colors[near].tolist())
        c = 0
        while c in used:
            c += 1
        colors[idx] = c
    return colors


def _compact_colors(colors: np.ndarray) -> np.ndarray:
    _, out = np.unique(colors, return_inverse=True)
    return out.astype(np.int64)


def admissible_sources(plan: ClusterPlan, pairing: Pairing, params: NetworkParams) -> AdmissibleSources:
    """Per cluster, the paired sources at distance >= k0*M from its center.

    The distance is measured to the cluster center, matching the power
    control rule (transmit power keyed to the center distance) whose
    perturbation bound requires exactly that quantity to be >= k0*M.
    """
    topo = plan.topology
    M = plan.M
    radius = params.k0 * M
    sources, rx_nodes = [], []
    total = 0
    for c in range(plan.n_clusters):
        center = plan.cluster_center(c)
        ws = plan.cluster_nodes[c]
        vs = np.array([pairing.src_of[int(w)] for w in ws], dtype=np.int64)
        d = np.linalg.norm(topo.positions[vs] - center, axis=1)
        keep = d >= radius
        sources.append(vs[keep])
        rx_nodes.append(ws[keep])
        total += int(keep.sum())
    return AdmissibleSources(
        k0=params.k0, sources=sources, receive_nodes=rx_nodes, served_total=total
    )


def build_collections(plan: ClusterPlan, group: np.ndarray) -> list:
    """The M node collections of a sub-block group.

    Collection p takes the p-th node (row-major) of every sub-block in the
    group; together the collections partition the group's nodes.
    """
    M = plan.M
    return [np.array([plan.sub_nodes[int(s)][p] for s in group]) for p in range(M)]


def plan_to_jsonable(topology: GridTopology, plan: ClusterPlan, colorings: dict) -> dict:
    """JSON-friendly dump of the topology and partition for the CLI."""
    return {
        "m": topology.params.m,
        "M": plan.M,
        "n": topology.n,
        "side": topology.side,
        "d_max": topology.d_max,
        "d_max_convention": topology.d_max_convention,
        "transmit_half": topology.transmit_half.tolist(),
        "receive_half": topology.receive_half.tolist(),
        "n_clusters": plan.n_clusters,
        "cluster_corners": plan.cluster_corners.tolist(),
        "sub_corners": plan.sub_corners.tolist(),
        "cluster_nodes": [ids.tolist() for ids in plan.cluster_nodes],
        "c0_cluster": colorings["cluster"].c0,
        "c0_sub": colorings["sub_cluster"].c0,
        "cluster_colors": colorings["cluster"].color_of.tolist(),
        "sub_colors": colorings["sub_cluster"].color_of.tolist(),
    }
