"""Bounded, mass-preserving transition reweighting by a clipped conductance."""

from dataclasses import dataclass, field, replace
from typing import FrozenSet, Iterable, Optional

import numpy as np

from ..utility.errors import InvalidArgumentError

MODES = ("full", "topk", "local", "off")
NORM_TOL = 1e-12


@dataclass(frozen=True)
class DeformationSpec:
    """
    Conductance weights and deployment mode.

    Args:
        w_G (float): Weight on the harm trace.
        w_H (float): Weight on the scar.
        psi_min (float): Conductance floor in (0, 1].
        mode (str): 'full', 'topk', 'local' or 'off'.
        k (int): Destinations gated per choice in 'topk' mode.
        regions (FrozenSet[int]): Regions gated in 'local' mode.
    """
    w_G: float = 1.0
    w_H: float = 2.0
    psi_min: float = 0.01
    mode: str = "full"
    k: int = 2
    regions: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"Unknown deformation mode '{self.mode}', expected one of {MODES}.")
        if not 0.0 < self.psi_min <= 1.0:
            raise InvalidArgumentError(f"psi_min must lie in (0, 1], got {self.psi_min}.")
        if self.w_G < 0 or self.w_H < 0:
            raise InvalidArgumentError("Conductance weights must be nonnegative.")
        if self.mode == "topk" and self.k < 1:
            raise InvalidArgumentError(f"Top-k deformation needs k >= 1, got {self.k}.")
        if self.mode == "local" and not self.regions:
            raise InvalidArgumentError("Local deformation needs a nonempty region subset.")

    @property
    def active(self) -> bool:
        return self.mode != "off"

    def with_mode(self, mode: str, k: Optional[int] = None, regions: Optional[Iterable[int]] = None) -> "DeformationSpec":
        return replace(self, mode=mode, k=self.k if k is None else k,
                       regions=self.regions if regions is None else frozenset(regions))

    def to_json(self):
        return {"w_G": self.w_G, "w_H": self.w_H, "psi_min": self.psi_min, "mode": self.mode,
                "k": self.k, "regions": sorted(self.regions)}


def conductance(region: int, fields, spec: DeformationSpec) -> float:
    """psi = clip(exp(-w_G G_r - w_H H_r), psi_min, 1); 1 when the mode is off."""
    if not spec.active:
        return 1.0
    value = np.exp(-spec.w_G * fields.G[region] - spec.w_H * fields.H[region])
    return float(np.clip(value, spec.psi_min, 1.0))


def conductance_vector(fields, spec: DeformationSpec) -> np.ndarray:
    """Conductance of every region at once."""
    if not spec.active:
        return np.ones(fields.region_count)
    return np.clip(np.exp(-spec.w_G * fields.G - spec.w_H * fields.H), spec.psi_min, 1.0)


def _check_nominal(nominal: np.ndarray) -> np.ndarray:
    nominal = np.asarray(nominal, dtype=np.float64)
    if nominal.ndim != 1 or nominal.size == 0:
        raise InvalidArgumentError("Nominal distribution must be a nonempty vector.")
    if np.any(nominal < 0) or abs(nominal.sum() - 1.0) > NORM_TOL:
        raise InvalidArgumentError(f"Nominal distribution must be nonnegative and sum to 1, sums to {nominal.sum()!r}.")
    return nominal


def reweight_categorical(nominal: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """P(y) = nominal(y) psi(y) / sum_y' nominal(y') psi(y')."""
    nominal = _check_nominal(nominal)
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != nominal.shape or np.any(psi <= 0) or np.any(psi > 1):
        raise InvalidArgumentError("Conductance must match the nominal shape with entries in (0, 1].")
    weighted = nominal * psi
    return weighted / weighted.sum()


def apply_mode(nominal: np.ndarray, psi: np.ndarray, spec: DeformationSpec,
               regions: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Reweight according to the deployment mode.

    'topk' keeps psi only on the k most probable nominal destinations (ties by
    index), 'local' only on destinations whose region is in the subset
    (``regions`` gives each destination's region), 'off' returns the nominal.
    """
    nominal = _check_nominal(nominal)
    if spec.mode == "off":
        return nominal
    psi = np.array(psi, dtype=np.float64)
    if spec.mode == "topk":
        order = np.lexsort((np.arange(nominal.size), -nominal))
        keep = np.zeros(nominal.size, dtype=bool)
        keep[order[:spec.k]] = True
        psi[~keep] = 1.0
    elif spec.mode == "local":
        if regions is None:
            raise InvalidArgumentError("Local deformation needs the destinations' regions.")
        inside = np.isin(np.asarray(regions), list(spec.regions))
        psi[~inside] = 1.0
    return reweight_categorical(nominal, psi)


def gate_edge_prob(p_uv, psi_v):
    """Gated edge probability p' = p * psi (works elementwise on arrays)."""
    return p_uv * psi_v


def gated_edge_mask(graph, spec: DeformationSpec) -> np.ndarray:
    """
    Edges the deformation applies to.

    No edges when the mode is off, each source's k most probable out-edges in
    'topk', edges into the region subset in 'local', every edge otherwise.
    """
    if not spec.active:
        return np.zeros(graph.edge_count, dtype=bool)
    if spec.mode == "topk":
        return graph.edge_rank < spec.k
    if spec.mode == "local":
        return np.isin(graph.region_map[graph.dst], list(spec.regions))
    return np.ones(graph.edge_count, dtype=bool)


def edge_gates(graph, psi: np.ndarray, spec: DeformationSpec) -> np.ndarray:
    """Gated probability of every edge of ``graph``; edges outside ``gated_edge_mask`` keep p."""
    if not spec.active:
        return graph.prob
    dest_psi = np.where(gated_edge_mask(graph, spec), psi[graph.region_map[graph.dst]], 1.0)
    return gate_edge_prob(graph.prob, dest_psi)


def odds_contraction_bound(w_H: float, h_star: float, h_zero: float) -> float:
    """Factor exp(-w_H (h* - h0)) bounding the harmful-entry odds ratio."""
    return float(np.exp(-w_H * (h_star - h_zero)))


def safe_mass_bound(delta: float, w_H: float, h_zero: float, h_star: float) -> float:
    """Lower bound on the deformed safe mass when the nominal safe mass is at least delta."""
    safe = delta * np.exp(-w_H * h_zero)
    return float(safe / (safe + (1.0 - delta) * np.exp(-w_H * h_star)))


def clipped_odds_bound(spec: DeformationSpec, h_star: float, h_zero: float) -> float:
    """The odds bound once the conductance floor applies: max(exp(-w_H (h* - h0)), psi_min)."""
    return max(odds_contraction_bound(spec.w_H, h_star, h_zero), spec.psi_min)
