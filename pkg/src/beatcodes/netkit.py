"""Transition networks over codewords and their topology metrics.

Networks are undirected simple graphs: a link joins two codewords that occur
on consecutive beats of the same track, self-transitions are dropped, and
repeat transitions accumulate as integer edge weights. All metrics
(shortest paths, clustering, assortativity) are unweighted; the weights are
retained for export only. Path lengths use exact all-source BFS, which is
cheap at vocabulary scale (<= 4096 nodes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .distfit import PowerLawFit, fit_degree_powerlaw
from .sampler import Sample, stream_key

_STREAM_REWIRE = 2

__all__ = [
    "TransitionNetwork",
    "NetworkMetrics",
    "NullMetrics",
    "DegreeStats",
    "build_network",
    "avg_shortest_path",
    "clustering",
    "assortativity_ratio",
    "degree_stats",
    "network_metrics",
    "rewired_realizations",
    "rewire_null",
    "small_worldness",
    "edge_list_csv",
]


@dataclass(frozen=True, eq=False)
class TransitionNetwork:
    """Undirected simple graph over codeword ids with edge multiplicities.

    `ids` holds the sorted node labels; `edge_a`/`edge_b` are index pairs
    into `ids` with edge_a < edge_b, each distinct edge exactly once.
    """

    facet: str
    ids: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray
    weights: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.ids.size)

    @property
    def n_edges(self) -> int:
        return int(self.edge_a.size)

    @property
    def edge_node_ratio(self) -> float:
        return self.n_edges / self.n_nodes if self.n_nodes else 0.0

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        np.add.at(deg, self.edge_a, 1)
        np.add.at(deg, self.edge_b, 1)
        return deg

    @classmethod
    def from_edges(cls, pairs: Iterable[tuple[int, int]], weights: Sequence[int] | None = None,
                   nodes: Iterable[int] | None = None, facet: str = "pitch") -> "TransitionNetwork":
        """Build from codeword-id pairs; self-loops rejected, duplicates merged."""
        pair_list = [(int(a), int(b)) for a, b in pairs]
        for a, b in pair_list:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
        if weights is None:
            weights = [1] * len(pair_list)
        node_set = set(nodes) if nodes is not None else set()
        for a, b in pair_list:
            node_set.add(a)
            node_set.add(b)
        ids = np.asarray(sorted(node_set), dtype=np.int64)
        acc: dict[tuple[int, int], int] = {}
        for (a, b), w in zip(pair_list, weights):
            key = (a, b) if a < b else (b, a)
            acc[key] = acc.get(key, 0) + int(w)
        if acc:
            keys = sorted(acc)
            ea = np.searchsorted(ids, np.asarray([k[0] for k in keys], dtype=np.int64))
            eb = np.searchsorted(ids, np.asarray([k[1] for k in keys], dtype=np.int64))
            wts = np.asarray([acc[k] for k in keys], dtype=np.int64)
        else:
            ea = eb = np.array([], dtype=np.int64)
            wts = np.array([], dtype=np.int64)
        return cls(facet=facet, ids=ids, edge_a=ea, edge_b=eb, weights=wts)

    def _replace_edges(self, pairs: list[tuple[int, int]]) -> "TransitionNetwork":
        # pairs are index pairs (a < b) in this network's node space
        pairs = sorted(pairs)
        ea = np.asarray([p[0] for p in pairs], dtype=np.int64)
        eb = np.asarray([p[1] for p in pairs], dtype=np.int64)
        return TransitionNetwork(facet=self.facet, ids=self.ids, edge_a=ea, edge_b=eb,
                                 weights=np.ones(len(pairs), dtype=np.int64))


def build_network(sample: Sample) -> TransitionNetwork:
    """Transition network of a sample; no edge crosses a track boundary."""
    if sample.total_beats == 0:
        raise ValueError("empty sample")
    firsts = []
    seconds = []
    for seq in sample.sequences:
        if seq.shape[0] >= 2:
            a = seq[:-1]
            b = seq[1:]
            keep = a != b
            firsts.append(a[keep])
            seconds.append(b[keep])
    all_codes = sample.concatenated()
    ids = np.unique(all_codes).astype(np.int64)
    if firsts:
        a = np.concatenate(firsts).astype(np.int64)
        b = np.concatenate(seconds).astype(np.int64)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        stacked = np.stack([lo, hi], axis=1)
        uniq, counts = np.unique(stacked, axis=0, return_counts=True)
        ea = np.searchsorted(ids, uniq[:, 0])
        eb = np.searchsorted(ids, uniq[:, 1])
        order = np.lexsort((eb, ea))
        ea, eb, counts = ea[order], eb[order], counts[order]
    else:
        ea = eb = np.array([], dtype=np.int64)
        counts = np.array([], dtype=np.int64)
    return TransitionNetwork(facet=sample.facet, ids=ids, edge_a=ea, edge_b=eb,
                             weights=counts.astype(np.int64))


def _kept_after_hub_removal(net: TransitionNetwork, exclude_top_hubs: int) -> np.ndarray:
    if exclude_top_hubs < 0:
        raise ValueError("exclude_top_hubs must be >= 0")
    if exclude_top_hubs == 0:
        return np.arange(net.n_nodes)
    if exclude_top_hubs >= net.n_nodes:
        raise ValueError("hub exclusion would remove every node")
    deg = net.degrees()
    # highest degree first, ties resolved by ascending codeword id
    order = np.lexsort((net.ids, -deg))
    removed = set(order[:exclude_top_hubs].tolist())
    return np.asarray([i for i in range(net.n_nodes) if i not in removed], dtype=np.int64)


def _subgraph_csr(net: TransitionNetwork, keep: np.ndarray):
    """CSR adjacency of the induced subgraph, nodes relabeled 0..m-1."""
    m = keep.size
    relabel = -np.ones(net.n_nodes, dtype=np.int64)
    relabel[keep] = np.arange(m)
    a = relabel[net.edge_a]
    b = relabel[net.edge_b]
    mask = (a >= 0) & (b >= 0)
    a, b = a[mask], b[mask]
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst, m


def _bfs(indptr: np.ndarray, indices: np.ndarray, m: int, src: int):
    """Level-synchronous BFS; returns (sum of distances, nodes reached, visited mask)."""
    visited = np.zeros(m, dtype=bool)
    visited[src] = True
    frontier = np.asarray([src], dtype=np.int64)
    level = 0
    dist_sum = 0
    reached = 0
    while frontier.size:
        level += 1
        starts = indptr[frontier]
        ends = indptr[frontier + 1]
        lens = ends - starts
        total = int(lens.sum())
        if total == 0:
            break
        offsets = np.repeat(ends - np.cumsum(lens), lens) + np.arange(total)
        neigh = indices[offsets]
        fresh = np.unique(neigh[~visited[neigh]])
        if fresh.size == 0:
            break
        visited[fresh] = True
        dist_sum += level * int(fresh.size)
        reached += int(fresh.size)
        frontier = fresh
    return dist_sum, reached, visited


def _largest_component(indptr: np.ndarray, indices: np.ndarray, m: int) -> np.ndarray:
    seen = np.zeros(m, dtype=bool)
    best: np.ndarray | None = None
    for start in range(m):
        if seen[start]:
            continue
        _, _, visited = _bfs(indptr, indices, m, start)
        comp = np.nonzero(visited & ~seen)[0]
        seen |= visited
        if best is None or comp.size > best.size:
            best = comp
    assert best is not None
    return best


def _path_stats(net: TransitionNetwork, exclude_top_hubs: int) -> tuple[float, int, int]:
    keep = _kept_after_hub_removal(net, exclude_top_hubs)
    indptr, indices, m = _subgraph_csr(net, keep)
    if m == 0:
        raise ValueError("empty graph after hub removal")
    comp = _largest_component(indptr, indices, m)
    if comp.size < 2:
        raise ValueError("largest component has fewer than 2 nodes")
    total = 0
    for src in comp:
        s, _, _ = _bfs(indptr, indices, m, int(src))
        total += s
    pairs = comp.size * (comp.size - 1)
    return total / pairs, int(comp.size), int(m)


def avg_shortest_path(net: TransitionNetwork, exclude_top_hubs: int = 0) -> float:
    """Mean BFS distance over ordered reachable pairs of the largest component.

    Hub removal (highest degree first, ties by ascending codeword id) happens
    before component extraction.
    """
    l, _, _ = _path_stats(net, exclude_top_hubs)
    return l


def clustering(net: TransitionNetwork, exclude_top_hubs: int = 0) -> float:
    """Mean local clustering coefficient; degree < 2 contributes 0."""
    keep = _kept_after_hub_removal(net, exclude_top_hubs)
    if keep.size == 0:
        raise ValueError("empty graph")
    kept = set(keep.tolist())
    adj: dict[int, set[int]] = {int(i): set() for i in keep}
    for a, b in zip(net.edge_a.tolist(), net.edge_b.tolist()):
        if a in kept and b in kept:
            adj[a].add(b)
            adj[b].add(a)
    acc = 0.0
    for v, neigh in adj.items():
        k = len(neigh)
        if k < 2:
            continue
        closed = sum(len(neigh & adj[u]) for u in neigh)
        acc += closed / (k * (k - 1))
    return acc / len(adj)


def assortativity_ratio(net: TransitionNetwork) -> float:
    """Node-averaged mean neighbor degree over its uncorrelated expectation.

    Gamma = mean_v(knn_v) / (<k^2>/<k>); exactly 1 for any regular graph
    (returned as the exact constant). Isolated nodes carry no edges and drop
    out of both sides.
    """
    if net.n_edges < 1:
        raise ValueError("assortativity needs at least one edge")
    deg = net.degrees().astype(np.float64)
    pos = deg > 0
    if np.ptp(deg[pos]) == 0.0:
        return 1.0
    knn_sum = np.zeros(net.n_nodes, dtype=np.float64)
    np.add.at(knn_sum, net.edge_a, deg[net.edge_b])
    np.add.at(knn_sum, net.edge_b, deg[net.edge_a])
    knn_mean = float((knn_sum[pos] / deg[pos]).mean())
    expectation = float((deg ** 2).sum() / deg.sum())
    return knn_mean / expectation


@dataclass(frozen=True)
class DegreeStats:
    median_degree: float
    fit: PowerLawFit | None
    fit_error: str | None


def degree_stats(net: TransitionNetwork, k_min_candidates=None, min_tail: int = 50) -> DegreeStats:
    """Median degree plus the degree power-law fit; fit failure is recorded, not fatal."""
    if net.n_nodes == 0:
        raise ValueError("empty graph")
    deg = net.degrees()
    median = float(np.median(deg))
    try:
        fit = fit_degree_powerlaw(deg, k_min_candidates, min_tail=min_tail)
        return DegreeStats(median_degree=median, fit=fit, fit_error=None)
    except (ValueError, RuntimeError) as exc:
        return DegreeStats(median_degree=median, fit=None, fit_error=str(exc))


@dataclass(frozen=True)
class NetworkMetrics:
    """Topology summary; l and C honor the hub-exclusion setting, the rest are full-graph."""

    median_degree: float
    degree_fit: PowerLawFit | None
    degree_fit_error: str | None
    l: float
    C: float
    Gamma: float
    component_fraction: float
    hub_excluded: bool
    edge_node_ratio: float

    def as_dict(self) -> dict:
        return {
            "median_degree": self.median_degree,
            "degree_fit": self.degree_fit.as_dict() if self.degree_fit else None,
            "degree_fit_error": self.degree_fit_error,
            "l": self.l,
            "C": self.C,
            "Gamma": self.Gamma,
            "component_fraction": self.component_fraction,
            "hub_excluded": self.hub_excluded,
            "edge_node_ratio": self.edge_node_ratio,
        }


def network_metrics(net: TransitionNetwork, exclude_top_hubs: int = 0,
                    k_min_candidates=None, degree_min_tail: int = 50) -> NetworkMetrics:
    """Assemble the full metric set for one network."""
    ds = degree_stats(net, k_min_candidates, min_tail=degree_min_tail)
    l, comp_size, kept = _path_stats(net, exclude_top_hubs)
    c = clustering(net, exclude_top_hubs)
    gamma_ratio = assortativity_ratio(net)
    return NetworkMetrics(
        median_degree=ds.median_degree,
        degree_fit=ds.fit,
        degree_fit_error=ds.fit_error,
        l=l,
        C=c,
        Gamma=gamma_ratio,
        component_fraction=comp_size / kept,
        hub_excluded=exclude_top_hubs > 0,
        edge_node_ratio=net.edge_node_ratio,
    )


def _double_edge_swaps(pairs: list[tuple[int, int]], rng: np.random.Generator,
                       attempts: int) -> tuple[list[tuple[int, int]], int]:
    """Degree-preserving double-edge swaps; rejects self-loops and duplicates."""
    edges = list(pairs)
    present = set(edges)
    n_edges = len(edges)
    successes = 0
    for _ in range(attempts):
        i = int(rng.integers(n_edges))
        j = int(rng.integers(n_edges))
        if i == j:
            continue
        a, b = edges[i]
        c, d = edges[j]
        if rng.random() < 0.5:
            c, d = d, c
        # proposal: {a, d}, {c, b}
        if a == d or c == b:
            continue
        e1 = (a, d) if a < d else (d, a)
        e2 = (c, b) if c < b else (b, c)
        if e1 == e2 or e1 in present or e2 in present:
            continue
        present.discard(edges[i])
        present.discard(edges[j])
        edges[i] = e1
        edges[j] = e2
        present.add(e1)
        present.add(e2)
        successes += 1
    return edges, successes


def rewired_realizations(net: TransitionNetwork, swaps_per_edge: int = 10,
                         realizations: int = 10, seed: int = 0):
    """Yield degree-preserving randomized copies of the simple graph.

    Each realization applies swaps_per_edge * E attempted swaps with an RNG
    stream keyed by (seed, realization), then yields (network, successes).
    """
    if net.n_edges < 2:
        raise ValueError("rewiring needs at least 2 edges")
    base = list(zip(net.edge_a.tolist(), net.edge_b.tolist()))
    attempts = swaps_per_edge * net.n_edges
    for r in range(realizations):
        rng = np.random.default_rng(stream_key(seed, _STREAM_REWIRE, r))
        pairs, successes = _double_edge_swaps(base, rng, attempts)
        yield net._replace_edges(pairs), successes


@dataclass(frozen=True)
class NullMetrics:
    """l and C statistics over degree-preserving randomized realizations."""

    l_rand_mean: float
    l_rand_sd: float
    C_rand_mean: float
    C_rand_sd: float
    realizations: int
    swaps_per_edge: int
    degenerate: bool

    def as_dict(self) -> dict:
        return {
            "l_rand_mean": self.l_rand_mean,
            "l_rand_sd": self.l_rand_sd,
            "C_rand_mean": self.C_rand_mean,
            "C_rand_sd": self.C_rand_sd,
            "realizations": self.realizations,
            "swaps_per_edge": self.swaps_per_edge,
            "degenerate": self.degenerate,
        }


def rewire_null(net: TransitionNetwork, swaps_per_edge: int = 10, realizations: int = 10,
                seed: int = 0, exclude_top_hubs: int = 0) -> NullMetrics:
    """Null-model baselines for l and C under the same hub-exclusion setting.

    Graphs admitting no legal swap come back flagged degenerate with the
    unmodified graph's metrics.
    """
    if realizations < 1:
        raise ValueError("need at least 1 realization")
    ls: list[float] = []
    cs: list[float] = []
    total_successes = 0
    for rewired, successes in rewired_realizations(net, swaps_per_edge, realizations, seed):
        total_successes += successes
        ls.append(avg_shortest_path(rewired, exclude_top_hubs))
        cs.append(clustering(rewired, exclude_top_hubs))
    l_arr = np.asarray(ls)
    c_arr = np.asarray(cs)
    return NullMetrics(
        l_rand_mean=float(l_arr.mean()),
        l_rand_sd=float(l_arr.std(ddof=0)),
        C_rand_mean=float(c_arr.mean()),
        C_rand_sd=float(c_arr.std(ddof=0)),
        realizations=realizations,
        swaps_per_edge=swaps_per_edge,
        degenerate=total_successes == 0,
    )


def small_worldness(m: NetworkMetrics, null: NullMetrics) -> float:
    """S = (C / C_rand) / (l / l_rand) against the degree-preserving null."""
    if null.degenerate:
        raise ValueError("null model is degenerate (no legal swap exists)")
    if null.C_rand_mean <= 0.0 or null.l_rand_mean <= 0.0:
        raise ValueError("null means must be positive")
    return (m.C / null.C_rand_mean) / (m.l / null.l_rand_mean)


def edge_list_csv(net: TransitionNetwork) -> str:
    """Edge list with codeword ids: id_a,id_b,weight (id_a < id_b, sorted)."""
    lines = ["id_a,id_b,weight"]
    for a, b, w in zip(net.edge_a.tolist(), net.edge_b.tolist(), net.weights.tolist()):
        lines.append(f"{int(net.ids[a])},{int(net.ids[b])},{int(w)}")
    return "\n".join(lines) + "\n"
