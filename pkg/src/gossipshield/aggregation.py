"""Clipped self-centered aggregation and the plain gossip baseline.

Per-agent reference implementations operate on an Inbox (what one agent
holds at the end of a communication round); the *_round helpers apply the
same rules to a whole message matrix at once and are what the engine runs.
Matrix and per-agent paths are equivalence-tested against each other.

Silent peers are represented by zero vectors in the inbox; that
substitution happens at delivery time, before aggregation sees anything.
"""

from __future__ import annotations

import dataclasses
from typing import Iterable, Mapping

import numpy as np

TAU_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True)
class Inbox:
    """One agent's view after a round: its own half-step and every
    neighbor's delivered model, zero-substituted when nothing arrived."""

    self_model: np.ndarray
    received: Mapping[int, np.ndarray]

    def __post_init__(self):
        object.__setattr__(
            self, "self_model", np.atleast_1d(np.asarray(self.self_model, dtype=float))
        )
        clean = {}
        for j, v in self.received.items():
            arr = np.atleast_1d(np.asarray(v, dtype=float))
            if arr.shape != self.self_model.shape:
                raise ValueError(
                    f"message from {j} has shape {arr.shape}, "
                    f"self model has {self.self_model.shape}"
                )
            clean[int(j)] = arr
        object.__setattr__(self, "received", clean)


def clip(v: np.ndarray, tau: float) -> np.ndarray:
    """Scale v down to norm tau when it is longer; zero stays zero."""
    if tau <= 0:
        raise ValueError(f"clip threshold must be positive, got {tau}")
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm <= tau:
        return v.copy()
    return v * (tau / norm)


def _check_row(i: int, inbox: Inbox, weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    total = w[i] + sum(w[j] for j in inbox.received)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(
            f"weights over agent {i}'s closed neighborhood sum to {total}, not 1; "
            "inbox keys must cover exactly the weighted neighbors"
        )
    return w


def scc_aggregate(i: int, inbox: Inbox, weights: np.ndarray, tau: float) -> np.ndarray:
    """Weighted average of neighbor models, each pulled toward self first.

    Every neighbor contribution is the self model plus the clipped
    difference, so a single outlier moves the output by at most its weight
    times tau.
    """
    w = _check_row(i, inbox, weights)
    out = inbox.self_model.copy()
    for j, msg in inbox.received.items():
        out += w[j] * clip(msg - inbox.self_model, tau)
    return out


def gossip_mean(i: int, inbox: Inbox, weights: np.ndarray) -> np.ndarray:
    """Plain weighted mean over the closed neighborhood, no protection."""
    w = _check_row(i, inbox, weights)
    out = w[i] * inbox.self_model
    for j, msg in inbox.received.items():
        out = out + w[j] * msg
    return out


def tau_corollary1(
    i: int, inbox: Inbox, weights: np.ndarray, byzantine: Iterable[int]
) -> float | None:
    """Clipping radius balancing reliable spread against Byzantine weight.

    sqrt of (reliable-weighted squared distances to self) / (total
    Byzantine neighbor weight). Needs ground-truth labels, so it is a
    simulation-only oracle. Returns None when the agent has no Byzantine
    neighbor (caller falls back to a manual radius); floors at TAU_FLOOR
    when every reliable neighbor sits exactly at self.
    """
    byz = set(byzantine)
    w = np.asarray(weights, dtype=float)
    den = sum(w[j] for j in inbox.received if j in byz)
    if den == 0.0:
        return None
    num = sum(
        w[j] * float(np.sum((msg - inbox.self_model) ** 2))
        for j, msg in inbox.received.items()
        if j not in byz
    )
    if num == 0.0:
        return TAU_FLOOR
    return float(np.sqrt(num / den))


def tau_remark4(
    i: int, inbox: Inbox, weights: np.ndarray, reliable: Iterable[int]
) -> float:
    """Conservative radius: reliable-weighted squared spread around self.

    Quadratic in the spread (not a distance), so it collapses toward the
    floor once neighbors agree. Ground-truth labels again, oracle only.
    """
    rel = set(reliable)
    w = np.asarray(weights, dtype=float)
    tau = sum(
        w[j] * float(np.sum((msg - inbox.self_model) ** 2))
        for j, msg in inbox.received.items()
        if j in rel
    )
    return max(float(tau), TAU_FLOOR)


# --- whole-round matrix forms -------------------------------------------------
#
# messages[i, j] = model of agent j as delivered to agent i (already
# zero-substituted for silence); shape (A, A) for scalar states or
# (A, A, d) in general. The diagonal is ignored: the self term always uses
# self_models. weights is the full (A, A) mixing matrix.


def _diff_norms(messages: np.ndarray, self_models: np.ndarray):
    if messages.ndim == 2:
        diffs = messages - self_models[:, None]
        return diffs, np.abs(diffs)
    diffs = messages - self_models[:, None, :]
    return diffs, np.sqrt(np.sum(diffs * diffs, axis=2))


def scc_round(
    messages: np.ndarray,
    self_models: np.ndarray,
    weights: np.ndarray,
    taus: np.ndarray,
) -> np.ndarray:
    """scc_aggregate for every row at once; taus is one radius per agent."""
    taus = np.asarray(taus, dtype=float)
    if np.any(taus <= 0.0):
        raise ValueError("clip thresholds must be positive")
    diffs, norms = _diff_norms(messages, self_models)
    col = taus[:, None]
    # where norms exceed tau they are strictly positive, so the division
    # inside the branch never sees zero
    denom = np.where(norms > col, norms, 1.0)
    factors = np.where(norms > col, col / denom, 1.0)
    np.fill_diagonal(factors, 0.0)
    if messages.ndim == 2:
        return self_models + np.sum(weights * factors * diffs, axis=1)
    return self_models + np.einsum("ij,ij,ijd->id", weights, factors, diffs)


def mean_round(
    messages: np.ndarray, self_models: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """gossip_mean for every row at once."""
    diffs, _ = _diff_norms(messages, self_models)
    if messages.ndim == 2:
        out = self_models + np.sum(weights * diffs, axis=1) - weights.diagonal() * diffs.diagonal()
        return out
    core = np.einsum("ij,ijd->id", weights, diffs)
    core -= weights.diagonal()[:, None] * np.einsum("iid->id", diffs)
    return self_models + core


def tau_round(
    messages: np.ndarray,
    self_models: np.ndarray,
    weights: np.ndarray,
    byz_mask: np.ndarray,
    kind: str,
) -> np.ndarray:
    """Oracle clipping radii for every agent from the full message matrix.

    kind 'corollary1' returns NaN where an agent has no Byzantine
    neighbor; the engine substitutes its manual fallback there. kind
    'remark4' never falls back.
    """
    _, norms = _diff_norms(messages, self_models)
    sq = norms * norms
    rel_w = weights * ~byz_mask[None, :]
    np.fill_diagonal(rel_w, 0.0)
    num = np.sum(rel_w * sq, axis=1)
    if kind == "remark4":
        return np.maximum(num, TAU_FLOOR)
    if kind != "corollary1":
        raise ValueError(f"unknown oracle radius kind: {kind}")
    byz_w = weights * byz_mask[None, :]
    np.fill_diagonal(byz_w, 0.0)
    den = np.sum(byz_w, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.sqrt(num / den)
    tau = np.where(den > 0.0, tau, np.nan)
    return np.where(den > 0.0, np.maximum(tau, TAU_FLOOR), np.nan)
