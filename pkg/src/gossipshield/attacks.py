"""Byzantine message falsification strategies.

A Byzantine agent participates in the round protocol only through the
messages it publishes; each strategy here computes, from a read-only
snapshot of the current models, the vector (or silence) that replaces the
honest half-step in its receivers' inboxes.

Receiver-specific strategies (sign flip, dissensus) produce a different
message per reliable receiver; the others broadcast one message per
Byzantine sender per round. The 'none' kind means the labeled agents run
the honest protocol, which is what makes attack-free equivalence testable
bit for bit.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError
from .topology import Network

__all__ = [
    "ATTACK_KINDS",
    "AttackSpec",
    "AttackPlan",
    "sign_flip_msg",
    "alie_coefficient",
    "alie_msg",
    "dissensus_msg",
    "perturbed_dup_msg",
]

ATTACK_KINDS = ("none", "sign_flip", "alie", "dissensus", "perturbed_dup", "silent")


@dataclasses.dataclass(frozen=True)
class AttackSpec:
    """Attack kind plus its hyperparameters.

    p_mult and p_add accept a constant or any schedule object with an
    alpha(k) method, so perturbations can decay over rounds. victim None
    rotates over the sender's reliable neighbors round-robin; an explicit
    id pins it. omniscient=False withholds the global model view, which
    demotes the population statistics attack to its neighborhood-local
    variant.
    """

    kind: str = "none"
    s_b: float = 1.0
    d_r: float = 1.0
    p_mult: float | object = 1.0
    p_add: float | object = 0.0
    victim: int | None = None
    alie_local: bool = False
    omniscient: bool = True

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(
                f"unknown attack kind {self.kind!r}; expected one of {ATTACK_KINDS}"
            )
        if self.kind == "sign_flip" and self.s_b < 0:
            raise ConfigError(f"sign-flip scale must be nonnegative, got {self.s_b}")


def _value_at(param, k: int) -> float:
    alpha = getattr(param, "alpha", None)
    if callable(alpha):
        return float(alpha(k))
    return float(param)


def sign_flip_msg(neighborhood_states: np.ndarray, s_b: float) -> np.ndarray:
    """Negative scaled mean of the receiver's reliable neighborhood
    (receiver included)."""
    arr = np.asarray(neighborhood_states, dtype=float)
    if arr.shape[0] == 0:
        raise ValueError("sign flip needs a nonempty neighborhood")
    return -s_b * arr.mean(axis=0)


def alie_coefficient(n_total: int, n_reliable: int) -> float:
    """Largest deviation that still hides inside the honest majority.

    Inverse standard normal CDF at (|V| - floor(|V|/2 + 1)) / |R|; a
    threshold outside (0, 1) has no valid deviation and degrades to 0.
    """
    threshold = (n_total - (n_total // 2 + 1)) / n_reliable
    if not 0.0 < threshold < 1.0:
        warnings.warn(
            f"population-statistics threshold {threshold} outside (0, 1); "
            "using zero deviation",
            stacklevel=2,
        )
        return 0.0
    return float(ndtri(threshold))


def alie_msg(reliable_states: np.ndarray, a: float) -> np.ndarray:
    """Mean minus a times the population standard deviation, per
    coordinate, over the given reliable models."""
    arr = np.asarray(reliable_states, dtype=float)
    return arr.mean(axis=0) - a * arr.std(axis=0)


def dissensus_msg(
    x_r: np.ndarray,
    rel_states: np.ndarray,
    rel_weights: np.ndarray,
    byz_weight_sum: float,
    d_r: float,
) -> np.ndarray:
    """Receiver's own model pushed against its consensus direction."""
    if byz_weight_sum <= 0.0:
        raise ValueError("dissensus needs positive Byzantine weight at the receiver")
    x_r = np.asarray(x_r, dtype=float)
    rel_states = np.asarray(rel_states, dtype=float)
    w = np.asarray(rel_weights, dtype=float)
    drift = w @ (rel_states - x_r)
    return x_r - d_r * drift / byz_weight_sum


def perturbed_dup_msg(victim_state: np.ndarray, p_mult: float, p_add: float) -> np.ndarray:
    """Victim's model, rescaled and offset."""
    return p_mult * np.asarray(victim_state, dtype=float) + p_add


class AttackPlan:
    """Per-network precomputation that fills Byzantine message columns.

    Built once per run; apply(messages, k, models) overwrites column b of
    the round's message matrix for every Byzantine b. Entries at
    weight-zero pairs are written too but never read by aggregation.
    Everything is a pure function of (k, models), so replays are exact.
    """

    def __init__(self, spec: AttackSpec, net: Network):
        self.spec = spec
        self.net = net
        self.byz = list(net.byzantine)
        self.rel = list(net.reliable)
        n = net.n_agents

        # receiver's reliable closed neighborhood, row-normalized
        rel_mask = np.zeros(n, dtype=bool)
        rel_mask[self.rel] = True
        closed = net.adjacency & rel_mask[None, :]
        np.fill_diagonal(closed, rel_mask)
        counts = closed.sum(axis=1)
        self._nbhd_mean = closed / np.maximum(counts, 1)[:, None]

        w_rel = net.weights * rel_mask[None, :]
        np.fill_diagonal(w_rel, 0.0)
        self._w_rel = w_rel
        self._w_rel_sum = w_rel.sum(axis=1)
        byz_mask = ~rel_mask
        w_byz = net.weights * byz_mask[None, :]
        np.fill_diagonal(w_byz, 0.0)
        self._byz_wsum = w_byz.sum(axis=1)

        if spec.kind == "alie":
            self._alie_a = alie_coefficient(n, len(self.rel))
            self._alie_global = spec.omniscient and not spec.alie_local

        if spec.kind == "perturbed_dup":
            if spec.victim is not None and spec.victim not in self.rel:
                raise ConfigError(f"fixed victim {spec.victim} is not reliable")
            self._victims = {}
            for b in self.byz:
                members = sorted(set(net.neighbors(b)) & set(self.rel))
                self._victims[b] = members if members else [b]

    def apply(self, messages: np.ndarray, k: int, models: np.ndarray) -> None:
        kind = self.spec.kind
        if kind == "none" or not self.byz:
            return
        if kind == "silent":
            for b in self.byz:
                messages[:, b] = 0.0
            return
        if kind == "sign_flip":
            vals = -self.spec.s_b * (self._nbhd_mean @ models)
            for b in self.byz:
                messages[:, b] = vals
            return
        if kind == "alie":
            if self._alie_global:
                val = alie_msg(models[self.rel], self._alie_a)
                for b in self.byz:
                    messages[:, b] = val
            else:
                mean = self._nbhd_mean @ models
                second = self._nbhd_mean @ (models**2)
                std = np.sqrt(np.maximum(second - mean**2, 0.0))
                vals = mean - self._alie_a * std
                for b in self.byz:
                    messages[:, b] = vals
            return
        if kind == "dissensus":
            safe = np.where(self._byz_wsum > 0.0, self._byz_wsum, 1.0)
            scale = self.spec.d_r / safe
            if models.ndim > 1:
                drift = self._w_rel @ models - self._w_rel_sum[:, None] * models
                vals = models - scale[:, None] * drift
            else:
                drift = self._w_rel @ models - self._w_rel_sum * models
                vals = models - scale * drift
            # receivers without Byzantine neighbors never read these entries
            for b in self.byz:
                messages[:, b] = vals
            return
        if kind == "perturbed_dup":
            p_mult = _value_at(self.spec.p_mult, k)
            p_add = _value_at(self.spec.p_add, k)
            for b in self.byz:
                if self.spec.victim is not None:
                    victim = self.spec.victim
                else:
                    members = self._victims[b]
                    victim = members[k % len(members)]
                messages[:, b] = perturbed_dup_msg(models[victim], p_mult, p_add)
            return
        raise ConfigError(f"unhandled attack kind {kind!r}")
