"""
Graph-diffusion environment: a ring-lattice graph with a sensitive arc, and
one step of stimulus injection, windowed cascade firing and delayed harm.
"""

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from typing import Any, Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..utility.errors import InvalidArgumentError, ProtocolError
from ..utility.streams import PURPOSE_GRAPH, PURPOSE_SENSITIVE, PURPOSE_STIMULUS, make_rng
from .deformation import DeformationSpec, apply_mode, conductance_vector, edge_gates, gated_edge_mask
from .harm_memory import HarmFields

MIN_NODES = 10
MIN_OUT_DEGREE = 3
MAX_OUT_DEGREE = 5
RING_REACH = 5
BETA_A, BETA_B = 2.0, 5.0
PROB_FLOOR = 1e-9
STIMULUS_COUNT = 20
DEFAULT_K_SEED = 3
DEFAULT_FIRING_WINDOW = 20
SEED_BAND = (0.35, 0.5)
HARM_PER_NODE = 0.1
OBS_DIM = 4


class Action(IntEnum):
    AGGRESSIVE = 0
    MODERATE = 1
    CONSERVATIVE = 2


ACTION_COST = (0.002, 0.001, 0.0)


@dataclass(frozen=True, eq=False)
class DiffusionGraph:
    """
    Immutable directed diffusion graph.

    Edges are stored as parallel arrays sorted by (source, target). Regions are
    node-level: region r is node r, numbered from 0.

    Args:
        node_count (int): Number of nodes.
        src (np.ndarray): Edge sources.
        dst (np.ndarray): Edge targets.
        prob (np.ndarray): Edge activation probabilities in (0, 1).
        sensitive (np.ndarray): Boolean mask of V_sens.
        seed (int): Seed the graph was generated from.
        branching_target (float): mean(p) x mean(out-degree) the probabilities were scaled to.
    """
    node_count: int
    src: np.ndarray
    dst: np.ndarray
    prob: np.ndarray
    sensitive: np.ndarray
    seed: int = 0
    branching_target: float = 0.0

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Tuple[int, int, float]],
                   sensitive: Iterable[int] = (), seed: int = 0,
                   branching_target: float = 0.0) -> "DiffusionGraph":
        """Build a graph from explicit (u, v, p) triples. No degree constraint is enforced."""
        triples = sorted((int(u), int(v), float(p)) for u, v, p in edges)
        for u, v, p in triples:
            if not (0 <= u < node_count and 0 <= v < node_count) or u == v:
                raise InvalidArgumentError(f"Edge ({u}, {v}) is not a valid edge on {node_count} nodes.")
            if not 0.0 < p < 1.0:
                raise InvalidArgumentError(f"Edge ({u}, {v}) has probability {p} outside (0, 1).")
        mask = np.zeros(node_count, dtype=bool)
        mask[list(sensitive)] = True
        return cls(
            node_count=node_count,
            src=np.array([t[0] for t in triples], dtype=np.int64),
            dst=np.array([t[1] for t in triples], dtype=np.int64),
            prob=np.array([t[2] for t in triples], dtype=np.float64),
            sensitive=mask,
            seed=seed,
            branching_target=branching_target,
        )

    @property
    def edge_count(self) -> int:
        return int(self.src.size)

    @property
    def region_count(self) -> int:
        return self.node_count

    @cached_property
    def region_map(self) -> np.ndarray:
        return np.arange(self.node_count, dtype=np.int64)

    @property
    def sensitive_set(self) -> FrozenSet[int]:
        return frozenset(int(v) for v in np.flatnonzero(self.sensitive))

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.node_count)

    def out_edges(self, u: int) -> List[Tuple[int, float]]:
        idx = np.flatnonzero(self.src == u)
        return [(int(self.dst[i]), float(self.prob[i])) for i in idx]

    @cached_property
    def edge_rank(self) -> np.ndarray:
        """Rank of each edge among its source's out-edges by descending p, ties by target index."""
        rank = np.zeros(self.edge_count, dtype=np.int64)
        for u in range(self.node_count):
            idx = np.flatnonzero(self.src == u)
            order = sorted(idx, key=lambda i: (-self.prob[i], self.dst[i]))
            rank[order] = np.arange(len(order))
        return rank

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_weighted_edges_from(zip(self.src.tolist(), self.dst.tolist(), self.prob.tolist()), weight="p")
        return graph

    @cached_property
    def hop_distance(self) -> np.ndarray:
        """All-pairs directed BFS hop distances; -1 where unreachable."""
        hops = np.full((self.node_count, self.node_count), -1, dtype=np.int64)
        for source, lengths in nx.all_pairs_shortest_path_length(self.to_networkx()):
            for target, length in lengths.items():
                hops[source, target] = length
        return hops

    def hop_distance_from(self, sources: Iterable[int]) -> np.ndarray:
        """Multi-source hop distance to every node; unreachable nodes get node_count."""
        rows = self.hop_distance[list(sources)]
        rows = np.where(rows < 0, self.node_count, rows)
        return rows.min(axis=0)

    def with_sensitive(self, nodes: Iterable[int]) -> "DiffusionGraph":
        mask = np.zeros(self.node_count, dtype=bool)
        mask[list(nodes)] = True
        return replace(self, sensitive=mask)

    def to_json(self) -> Dict[str, Any]:
        return {
            "nodes": self.node_count,
            "edges": [{"u": int(u), "v": int(v), "p": float(p)}
                      for u, v, p in zip(self.src, self.dst, self.prob)],
            "sensitive": sorted(self.sensitive_set),
            "seed": self.seed,
            "branching_target": self.branching_target,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "DiffusionGraph":
        return cls.from_edges(
            data["nodes"],
            ((e["u"], e["v"], e["p"]) for e in data["edges"]),
            sensitive=data.get("sensitive", []),
            seed=data.get("seed", 0),
            branching_target=data.get("branching_target", 0.0),
        )


def generate_graph(node_count: int, branching_target: float = 0.24, seed: int = 0,
                   sens_fraction: float = 0.20) -> DiffusionGraph:
    """
    Generate a directed ring-lattice diffusion graph.

    Node u always links to u + 1 (mod N) and to d_u - 1 more distinct targets
    among u + 2 .. u + 5, with d_u uniform on {3, 4, 5}. Raw edge probabilities
    are Beta(2, 5) and are scaled by one common factor so that
    mean(p) x mean(out-degree) equals ``branching_target``, then clipped into
    (0, 1). The sensitive arc covering ``sens_fraction`` of the nodes is grown
    from the same seed.

    Raises:
        InvalidArgumentError: node_count < 10, or a branching target so large
            that every scaled probability reaches 1.
    """
    if node_count < MIN_NODES:
        raise InvalidArgumentError(f"A diffusion graph needs at least {MIN_NODES} nodes, got {node_count}.")
    if not branching_target > 0:
        raise InvalidArgumentError(f"Branching target must be positive, got {branching_target}.")
    rng = make_rng(PURPOSE_GRAPH, seed)
    degrees = rng.integers(MIN_OUT_DEGREE, MAX_OUT_DEGREE + 1, size=node_count)
    offsets = np.arange(2, RING_REACH + 1)
    src, dst = [], []
    for u in range(node_count):
        extra = rng.choice(offsets, size=int(degrees[u]) - 1, replace=False)
        targets = np.sort((u + np.concatenate(([1], extra))) % node_count)
        src.extend([u] * targets.size)
        dst.extend(targets.tolist())
    raw = rng.beta(BETA_A, BETA_B, size=len(src))
    factor = branching_target / (raw.mean() * degrees.mean())
    scaled = raw * factor
    if np.all(scaled >= 1.0):
        raise InvalidArgumentError(
            f"Branching target {branching_target} pushes every edge probability to 1 or above."
        )
    prob = np.clip(scaled, PROB_FLOOR, 1.0 - PROB_FLOOR)
    graph = DiffusionGraph(
        node_count=node_count,
        src=np.asarray(src, dtype=np.int64),
        dst=np.asarray(dst, dtype=np.int64),
        prob=prob,
        sensitive=np.zeros(node_count, dtype=bool),
        seed=seed,
        branching_target=float(branching_target),
    )
    return graph.with_sensitive(select_sensitive_subgraph(graph, sens_fraction, seed))


def bfs_grow(undirected: nx.Graph, start: int, size: int) -> List[int]:
    """Breadth-first growth from ``start`` visiting neighbours in ascending order; first ``size`` nodes."""
    seen = {start}
    order = [start]
    queue = deque([start])
    while queue and len(order) < size:
        node = queue.popleft()
        for neighbour in sorted(undirected.neighbors(node)):
            if neighbour not in seen:
                seen.add(neighbour)
                order.append(neighbour)
                queue.append(neighbour)
                if len(order) == size:
                    break
    return order


def ring_backbone(graph: DiffusionGraph) -> nx.Graph:
    """Undirected graph of the edges u -> u + 1 (mod N) present in ``graph``."""
    backbone = nx.Graph()
    backbone.add_nodes_from(range(graph.node_count))
    step = (graph.src + 1) % graph.node_count == graph.dst
    backbone.add_edges_from(zip(graph.src[step].tolist(), graph.dst[step].tolist()))
    return backbone


def select_sensitive_subgraph(graph: DiffusionGraph, fraction: float, seed: int) -> FrozenSet[int]:
    """
    Pick a connected (undirected sense) node subset of size round(fraction x |V|).

    The start node is drawn from the seed and the set grows breadth-first along
    the ring backbone, which gives a contiguous arc. Without a long enough
    backbone the growth runs over the whole undirected graph, and when even
    that component is too small it is returned whole with a warning.
    """
    if not 0.15 <= fraction <= 0.25:
        raise InvalidArgumentError(f"Sensitive fraction must lie in [0.15, 0.25], got {fraction}.")
    size = int(round(fraction * graph.node_count))
    start = int(make_rng(PURPOSE_SENSITIVE, seed).integers(graph.node_count))
    grown = bfs_grow(ring_backbone(graph), start, size)
    if len(grown) < size:
        grown = bfs_grow(graph.to_networkx().to_undirected(), start, size)
    if len(grown) < size:
        logging.warning(
            f"Sensitive subgraph: component of node {start} has {len(grown)} nodes, wanted {size}; "
            f"using the whole component."
        )
    return frozenset(grown)


def ring_distance_to_sensitive(graph: DiffusionGraph) -> np.ndarray:
    """Forward ring distance (s - u) mod N from every node to the nearest sensitive node ahead; N without V_sens."""
    sensitive = np.flatnonzero(graph.sensitive)
    if not sensitive.size:
        return np.full(graph.node_count, graph.node_count, dtype=np.int64)
    nodes = np.arange(graph.node_count)
    return ((sensitive[None, :] - nodes[:, None]) % graph.node_count).min(axis=1)


def stimulus_seed_set(z: int, graph: DiffusionGraph, k_seed: int = DEFAULT_K_SEED) -> Tuple[int, ...]:
    """
    The fixed seed set of stimulus ``z`` on ``graph``.

    Seeds come from the upstream band: non-sensitive nodes with a directed path
    into V_sens whose forward ring distance to it lies in [0.35 N, 0.5 N].
    When that pool is too small, the non-sensitive nodes with an edge into
    V_sens are used, then all non-sensitive nodes, then all nodes. The draw
    uses an RNG keyed by (graph seed, z): same graph and z, same set.
    """
    if not 1 <= z <= STIMULUS_COUNT:
        raise InvalidArgumentError(f"Stimulus id must lie in 1..{STIMULUS_COUNT}, got {z}.")
    if not 1 <= k_seed <= graph.node_count:
        raise InvalidArgumentError(f"k_seed must lie in 1..{graph.node_count}, got {k_seed}.")
    ahead = ring_distance_to_sensitive(graph)
    low, high = int(np.ceil(SEED_BAND[0] * graph.node_count)), int(np.floor(SEED_BAND[1] * graph.node_count))
    reaches = (graph.hop_distance[:, graph.sensitive] >= 0).any(axis=1)
    band = (ahead >= low) & (ahead <= high) & reaches & ~graph.sensitive
    into_sensitive = np.zeros(graph.node_count, dtype=bool)
    into_sensitive[graph.src[graph.sensitive[graph.dst]]] = True
    for pool_mask in (band, into_sensitive & ~graph.sensitive, ~graph.sensitive,
                      np.ones(graph.node_count, dtype=bool)):
        pool = np.flatnonzero(pool_mask)
        if pool.size >= k_seed:
            break
    rng = make_rng(PURPOSE_STIMULUS, graph.seed, z)
    return tuple(sorted(int(v) for v in rng.choice(pool, size=k_seed, replace=False)))


@dataclass(frozen=True, eq=False)
class EnvState:
    """
    Environment state of one episode.

    ``firing`` counts, per node, the steps its out-edges still get an
    activation attempt. ``delay_buffer`` holds the active sets A_{t-D} .. A_t
    (fewer while warming up).
    """
    active: np.ndarray
    firing: np.ndarray
    time: int
    phase_time: int
    phase_horizon: int
    stimulus_z: int
    stimulus_on: bool
    seeds: Tuple[int, ...]
    seed_hops: np.ndarray
    delay: int
    injection_window: int
    firing_window: int = DEFAULT_FIRING_WINDOW
    delay_buffer: Tuple[np.ndarray, ...] = field(default=())

    @property
    def frontier(self) -> np.ndarray:
        return self.firing > 0

    @property
    def warmed_up(self) -> bool:
        return len(self.delay_buffer) == self.delay + 1


def initial_state(graph: DiffusionGraph, z: int, delay: int = 50, phase_horizon: int = 500,
                  injection_window: int = 10, k_seed: int = DEFAULT_K_SEED,
                  stimulus_on: bool = True, firing_window: int = DEFAULT_FIRING_WINDOW) -> EnvState:
    """State at the start of an episode: nothing active, empty delay history."""
    if firing_window < 1:
        raise InvalidArgumentError(f"Firing window must be at least 1, got {firing_window}.")
    seeds = stimulus_seed_set(z, graph, k_seed)
    empty = np.zeros(graph.node_count, dtype=bool)
    return EnvState(
        active=empty,
        firing=np.zeros(graph.node_count, dtype=np.int64),
        time=0,
        phase_time=0,
        phase_horizon=phase_horizon,
        stimulus_z=z,
        stimulus_on=stimulus_on,
        seeds=seeds,
        seed_hops=graph.hop_distance_from(seeds),
        delay=delay,
        injection_window=injection_window,
        firing_window=firing_window,
        delay_buffer=(empty,),
    )


def reset_phase(state: EnvState, stimulus_on: bool, phase_horizon: int,
                truncate_buffer: bool = False) -> EnvState:
    """
    Move to the reset observable x*: empty active set, nothing firing, phase clock zero.

    The delay buffer (and the global clock) carry over unless ``truncate_buffer``.
    """
    empty = np.zeros_like(state.active)
    buffer = (empty,) if truncate_buffer else state.delay_buffer
    return replace(state, active=empty, firing=np.zeros_like(state.firing), phase_time=0,
                   phase_horizon=phase_horizon, stimulus_on=stimulus_on, delay_buffer=buffer)


def set_stimulus(state: EnvState, on: bool, phase_horizon: Optional[int] = None) -> EnvState:
    """Switch the stimulus without touching the active set (start of the Decay phase)."""
    horizon = state.phase_horizon if phase_horizon is None else phase_horizon
    return replace(state, stimulus_on=on, phase_time=0, phase_horizon=horizon)


def observe(state: EnvState) -> np.ndarray:
    """Observation x_t: (reach fraction, hop centroid, hop spread, phase time fraction)."""
    node_count = state.active.size
    hops = state.seed_hops[state.active].astype(np.float64)
    reach = hops.size / node_count
    centroid = float(hops.mean()) if hops.size else 0.0
    spread = float(hops.std()) if hops.size else 0.0
    return np.array([reach, centroid, spread, state.phase_time / state.phase_horizon], dtype=np.float64)


def draws_per_step(graph: DiffusionGraph) -> int:
    """Uniforms one env_step consumes: one per edge plus two for injection choices."""
    return graph.edge_count + 2


def categorical_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from a probability vector."""
    return int(min(np.searchsorted(np.cumsum(probs), u, side="right"), probs.size - 1))


def injection_nodes(action: Action, seeds: Sequence[int], graph: DiffusionGraph, psi: np.ndarray,
                    deform: DeformationSpec, u: np.ndarray) -> np.ndarray:
    """
    Nodes injected by ``action``.

    Moderate injects every seed, Conservative one seed drawn uniformly, and
    Aggressive every seed plus one out-neighbour of the seeds drawn with
    probability proportional to its best incoming p. Both draws go through the
    deformation's categorical reweighting.
    """
    chosen = np.zeros(graph.node_count, dtype=bool)
    seeds = np.asarray(seeds, dtype=np.int64)
    regions = graph.region_map
    if action == Action.CONSERVATIVE:
        nominal = np.full(seeds.size, 1.0 / seeds.size)
        probs = apply_mode(nominal, psi[regions[seeds]], deform, regions=regions[seeds])
        chosen[seeds[categorical_index(probs, u[0])]] = True
        return chosen
    chosen[seeds] = True
    if action == Action.AGGRESSIVE:
        from_seed = np.isin(graph.src, seeds) & ~np.isin(graph.dst, seeds)
        if from_seed.any():
            weight = np.zeros(graph.node_count)
            np.maximum.at(weight, graph.dst[from_seed], graph.prob[from_seed])
            candidates = np.flatnonzero(weight)
            nominal = weight[candidates] / weight[candidates].sum()
            probs = apply_mode(nominal, psi[regions[candidates]], deform, regions=regions[candidates])
            chosen[candidates[categorical_index(probs, u[1])]] = True
    return chosen


def harmful_entry_prob(state: EnvState, graph: DiffusionGraph, edge_gate: np.ndarray) -> Tuple[float, float]:
    """
    Probability that at least one inactive sensitive node activates this step.

    p = 1 - prod over frontier edges into inactive sensitive nodes of (1 - p'_uv);
    q = 1 - p. Computed exactly from the edge probabilities.
    """
    mask = state.frontier[graph.src] & ~state.active[graph.dst] & graph.sensitive[graph.dst]
    log_q = float(np.log1p(-edge_gate[mask]).sum())
    return float(-np.expm1(log_q)), float(np.exp(log_q))


def diffuse(active: np.ndarray, frontier: np.ndarray, graph: DiffusionGraph, edge_gate: np.ndarray,
            edge_u: np.ndarray) -> np.ndarray:
    """Nodes newly activated when every frontier edge into an inactive node fires with its gated probability."""
    live = frontier[graph.src] & ~active[graph.dst]
    fired = live & (edge_u < edge_gate)
    newly = np.zeros_like(active)
    newly[graph.dst[fired]] = True
    return newly


class StepOdds(NamedTuple):
    """Harmful-entry probabilities under the gated and nominal kernels, and the scar gap they are bounded by."""
    p: float
    q: float
    p0: float
    q0: float
    h_star: float
    h_zero: float


class StepOutcome(NamedTuple):
    state: EnvState
    reward: float
    harm: float
    causal_set: np.ndarray
    odds: StepOdds


def scar_gap(state: EnvState, graph: DiffusionGraph, fields: HarmFields, deform: DeformationSpec) -> Tuple[float, float]:
    """
    (h*, h0) over the live frontier edges of ``state``.

    h* is the smallest scar among the sensitive destinations, counting
    destinations the deformation does not gate as unscarred; h0 the largest
    scar among the other destinations. Both are 0 when their set is empty.
    """
    live = frontier_edges(state, graph)
    harmful = live & graph.sensitive[graph.dst]
    safe = live & ~graph.sensitive[graph.dst]
    scars = fields.H[graph.region_map[graph.dst]]
    h_star = float(np.where(gated_edge_mask(graph, deform), scars, 0.0)[harmful].min()) if harmful.any() else 0.0
    h_zero = float(scars[safe].max()) if safe.any() else 0.0
    return h_star, h_zero


def env_step(state: EnvState, action: Action, graph: DiffusionGraph, fields: HarmFields,
             deform: DeformationSpec, stream) -> StepOutcome:
    """
    Advance the environment by one step.

    Injected nodes fire in the step they are injected, nodes reached by the
    cascade from the next step on, each for ``state.firing_window`` steps.
    Consumes exactly ``draws_per_step(graph)`` uniforms from ``stream``.

    Returns:
        StepOutcome: next state, reward |A_{t+1} minus A_t|/|V| minus the action
        cost, delayed harm min(0.1 |A_{t-D} & V_sens|, 1) (zero before the buffer
        is warm), the causal set A_{t-D} & V_sens, and the harmful-entry odds
        under the gated and nominal kernels.
    """
    action = Action(action)
    draws = stream.take(draws_per_step(graph))
    edge_u, inject_u = draws[:graph.edge_count], draws[graph.edge_count:]
    psi = conductance_vector(fields, deform)

    active = state.active.copy()
    firing = state.firing.copy()
    if state.stimulus_on and state.phase_time < state.injection_window:
        injected = injection_nodes(action, state.seeds, graph, psi, deform, inject_u) & ~active
        active |= injected
        firing[injected] = state.firing_window

    gated = edge_gates(graph, psi, deform)
    pre_diffusion = replace(state, active=active, firing=firing)
    p, q = harmful_entry_prob(pre_diffusion, graph, gated)
    p0, q0 = harmful_entry_prob(pre_diffusion, graph, graph.prob)
    h_star, h_zero = scar_gap(pre_diffusion, graph, fields, deform)

    newly = diffuse(active, firing > 0, graph, gated, edge_u)
    active |= newly
    firing = np.maximum(firing - 1, 0)
    firing[newly] = state.firing_window

    reward = float((active & ~state.active).sum()) / graph.node_count - ACTION_COST[action]

    if state.warmed_up:
        causal = state.delay_buffer[0] & graph.sensitive
        harm = min(HARM_PER_NODE * int(causal.sum()), 1.0)
    else:
        causal = np.zeros(graph.node_count, dtype=bool)
        harm = 0.0
    if harm > 0 and not causal.any():
        raise ProtocolError("Positive harm with an empty causal set.")

    buffer = (state.delay_buffer + (active,))[-(state.delay + 1):]
    next_state = replace(state, active=active, firing=firing, time=state.time + 1,
                         phase_time=state.phase_time + 1, delay_buffer=buffer)
    return StepOutcome(next_state, reward, harm, causal, StepOdds(p, q, p0, q0, h_star, h_zero))


def frontier_edges(state: EnvState, graph: DiffusionGraph) -> np.ndarray:
    """Mask of edges out of the firing nodes into inactive nodes."""
    return state.frontier[graph.src] & ~state.active[graph.dst]


def frontier_conductance(state: EnvState, graph: DiffusionGraph, psi: np.ndarray) -> float:
    """Mean conductance over the destinations of the frontier edges; 1.0 with no frontier."""
    mask = frontier_edges(state, graph)
    if not mask.any():
        return 1.0
    return float(psi[graph.region_map[graph.dst[mask]]].mean())


def truncate_delay_buffer(state: EnvState) -> EnvState:
    """Forget the delay history; only the current active set remains in the buffer."""
    return replace(state, delay_buffer=(state.active.copy(),))
