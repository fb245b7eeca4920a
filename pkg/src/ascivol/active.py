"""Uncertainty-driven selection of scans for the next annotation round.

Scans are scored from their predicted probability maps and the top-k most
uncertain move from the unlabeled to the labeled pool. The default score
is mean per-voxel binary entropy (natural log, so it lives in [0, ln 2]);
1 minus the mean max-probability is available as an alternative
aggregation. Ties break on ascending scan id so rounds replay exactly.
Retraining between rounds is the caller's job; this module only manages
scores and pool membership.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlreadyLabeledError, KTooLargeError, UnknownIdError
from .grid import VoxelGrid

LN2 = math.log(2.0)

SCORE_METHODS = ("entropy", "max-prob")


@dataclass(frozen=True)
class UncertaintyScore:
    scan_id: str
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score) or self.score < 0:
            raise ValueError(f"score must be finite and >= 0, got {self.score}")


def uncertainty_score(
    prob: VoxelGrid, scan_id: str = "", method: str = "entropy"
) -> UncertaintyScore:
    """Scalar uncertainty of one probability map.

    "entropy": mean over voxels of -(p ln p + (1-p) ln(1-p)), with
    0*ln(0) = 0, bounded by [0, ln 2]. "max-prob": 1 - mean(max(p, 1-p)),
    bounded by [0, 1/2].
    """
    p = prob.values
    if method == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = -(
                np.where(p > 0.0, p * np.log(p), 0.0)
                + np.where(p < 1.0, (1.0 - p) * np.log(1.0 - p), 0.0)
            )
        score = float(np.mean(terms))
        score = min(max(score, 0.0), LN2)  # shave float round-off at the ends
    elif method == "max-prob":
        score = float(1.0 - np.mean(np.maximum(p, 1.0 - p)))
    else:
        raise ValueError(f"unknown scoring method {method!r}; use {SCORE_METHODS}")
    return UncertaintyScore(scan_id=scan_id, score=score)


def rank_for_annotation(scores, k: int) -> list[str]:
    """Top-k scan ids by descending score, ties by ascending scan id."""
    scores = list(scores)
    if k > len(scores):
        raise KTooLargeError(f"k={k} exceeds the {len(scores)} scored scans")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    ordered = sorted(scores, key=lambda s: (-s.score, s.scan_id))
    return [s.scan_id for s in ordered[:k]]


@dataclass(frozen=True)
class PoolState:
    """Labeled/unlabeled scan ids plus the selection history."""

    labeled: frozenset[str]
    unlabeled: frozenset[str]
    round: int = 0
    history: tuple[tuple[int, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labeled", frozenset(self.labeled))
        object.__setattr__(self, "unlabeled", frozenset(self.unlabeled))
        overlap = self.labeled & self.unlabeled
        if overlap:
            raise ValueError(f"ids in both pools: {sorted(overlap)[:5]}")
        if self.round < 0:
            raise ValueError("round must be >= 0")

    @property
    def total(self) -> int:
        return len(self.labeled) + len(self.unlabeled)

    def to_dict(self) -> dict:
        return {
            "labeled": sorted(self.labeled),
            "unlabeled": sorted(self.unlabeled),
            "round": self.round,
            "history": [
                {"round": r, "selected": list(ids)} for r, ids in self.history
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PoolState":
        return cls(
            labeled=frozenset(doc.get("labeled", [])),
            unlabeled=frozenset(doc.get("unlabeled", [])),
            round=int(doc.get("round", 0)),
            history=tuple(
                (int(h["round"]), tuple(h["selected"]))
                for h in doc.get("history", [])
            ),
        )


def advance_round(pool: PoolState, selected) -> PoolState:
    """Move the selected ids to the labeled pool and bump the round."""
    selected = list(selected)
    chosen = set(selected)
    if len(chosen) != len(selected):
        raise ValueError("selected ids contain duplicates")
    already = chosen & pool.labeled
    if already:
        raise AlreadyLabeledError(f"already labeled: {sorted(already)[:5]}")
    unknown = chosen - pool.unlabeled
    if unknown:
        raise UnknownIdError(f"not in the unlabeled pool: {sorted(unknown)[:5]}")
    new_round = pool.round + 1
    return PoolState(
        labeled=pool.labeled | chosen,
        unlabeled=pool.unlabeled - chosen,
        round=new_round,
        history=pool.history + ((new_round, tuple(selected)),),
    )
