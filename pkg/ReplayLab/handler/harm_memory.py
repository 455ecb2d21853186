"""
Persistent environment-side memory: the decaying harm trace G and the scar H.

Per step the order is fixed: ``attribute_harm`` (decay plus delayed, attributed
injection), then ``update_scar`` reading the post-injection trace.
"""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterable, Tuple, Union

import numpy as np

from ..utility.errors import InvalidArgumentError

TOP_REGIONS = 10


@dataclass(frozen=True)
class FieldParams:
    """
    Update parameters of the harm fields.

    Args:
        decay (float): Trace decay lambda in (0, 1).
        gain (float): Injection gain alpha > 0.
        scar_rate (float): Scar growth eta > 0.
        scar_threshold (float): Trace level tau > 0 above which scars grow.
        retention (float): Scar retention delta in [0.95, 1.0]; 1.0 is the irreversible scar.
        delay (int): Harm delay D in steps.
    """
    decay: float = 0.1
    gain: float = 0.5
    scar_rate: float = 0.05
    scar_threshold: float = 0.3
    retention: float = 1.0
    delay: int = 50

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise InvalidArgumentError(f"Trace decay must lie in (0, 1), got {self.decay}.")
        if not self.gain > 0:
            raise InvalidArgumentError(f"Injection gain must be positive, got {self.gain}.")
        if not self.scar_rate > 0:
            raise InvalidArgumentError(f"Scar rate must be positive, got {self.scar_rate}.")
        if not self.scar_threshold > 0:
            raise InvalidArgumentError(f"Scar threshold must be positive, got {self.scar_threshold}.")
        if not 0.95 <= self.retention <= 1.0:
            raise InvalidArgumentError(f"Scar retention must lie in [0.95, 1.0], got {self.retention}.")
        if int(self.delay) != self.delay or self.delay < 1:
            raise InvalidArgumentError(f"Harm delay must be a positive integer, got {self.delay}.")


@dataclass(frozen=True, eq=False)
class HarmFields:
    """Trace G and scar H over R regions, with their update parameters."""
    G: np.ndarray
    H: np.ndarray
    params: FieldParams

    @classmethod
    def zeros(cls, region_count: int, params: FieldParams = FieldParams()) -> "HarmFields":
        return cls(np.zeros(region_count), np.zeros(region_count), params)

    @property
    def region_count(self) -> int:
        return int(self.G.size)

    def snapshot(self, step: int) -> Dict[str, Any]:
        """Compact view for the scar-evolution log: sums and the most scarred regions."""
        order = sorted(range(self.region_count), key=lambda r: (-self.H[r], r))[:TOP_REGIONS]
        return {
            "step": int(step),
            "g_sum": float(self.G.sum()),
            "h_sum": float(self.H.sum()),
            "top_h": [[int(r), float(self.H[r])] for r in order],
        }

    def to_json(self) -> Dict[str, Any]:
        return {"G": self.G.tolist(), "H": self.H.tolist(), "params": vars(self.params).copy()}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "HarmFields":
        return cls(np.asarray(data["G"], dtype=np.float64), np.asarray(data["H"], dtype=np.float64),
                   FieldParams(**data["params"]))


def _as_mask(causal_set: Union[np.ndarray, Iterable[int]], region_count: int) -> np.ndarray:
    if isinstance(causal_set, np.ndarray) and causal_set.dtype == bool:
        return causal_set
    mask = np.zeros(region_count, dtype=bool)
    mask[list(causal_set)] = True
    return mask


def attribute_harm(harm: float, causal_set: Union[np.ndarray, Iterable[int]], fields: HarmFields) -> HarmFields:
    """
    G'_r = (1 - lambda) G_r + alpha * harm * w(r), w uniform on the causal set.

    With an empty causal set the update is pure decay.
    """
    if not 0.0 <= harm <= 1.0:
        raise InvalidArgumentError(f"Harm must lie in [0, 1], got {harm}.")
    mask = _as_mask(causal_set, fields.region_count)
    G = (1.0 - fields.params.decay) * fields.G
    count = int(mask.sum())
    if count:
        G = G + fields.params.gain * harm * mask / count
    elif harm > 0:
        logging.warning(f"Harm {harm:.3f} arrived with an empty causal set; applying pure decay.")
    return replace(fields, G=G)


def scar_injection(fields: HarmFields) -> np.ndarray:
    """Per-region scar growth eta * max(0, G - tau)."""
    return fields.params.scar_rate * np.maximum(0.0, fields.G - fields.params.scar_threshold)


def update_scar(fields: HarmFields) -> HarmFields:
    """H'_r = delta H_r + eta max(0, G_r - tau)."""
    return replace(fields, H=fields.params.retention * fields.H + scar_injection(fields))


def step_fields(fields: HarmFields, harm: float, causal_set: np.ndarray) -> Tuple[HarmFields, float]:
    """One field step in the fixed order. Returns the new fields and the scar-growth cost."""
    fields = attribute_harm(harm, causal_set, fields)
    cost = float(scar_injection(fields).sum())
    return update_scar(fields), cost
