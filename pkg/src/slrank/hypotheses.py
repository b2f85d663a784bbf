"""Per-domain hypothesis vectors and ordered hypothesis lists.

Fixed 160-slot feature layout:

    [0:4)     sl_confidence, intent_confidence, viterbi_path_score,
              avg_slot_confidence
    [4:54)    domain embedding
    [54:104)  intent embedding
    [104:154) summed slot embeddings
    [154:158) user flags: enabled, used within 7 / 14 / 30 days
    [158:160) domain index: popularity, quality
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, ParameterError
from .label_embeddings import combine_slot_embeddings

EMBED_DIM = 50
FEATURE_DIM = 160
N_CROSS_FEATURES = 3

SCORES = slice(0, 4)
DOMAIN_EMB = slice(4, 54)
INTENT_EMB = slice(54, 104)
SLOT_EMB = slice(104, 154)
USER_FLAGS = slice(154, 158)
DOMAIN_INDEX = slice(158, 160)

RECENCY_WINDOWS = (7, 14, 30)

# Slot overwritten by the planted perfectly-informative gold indicator
# (test instrumentation); it replaces the quality feature.
ORACLE_FEATURE_SLOT = 159


@dataclass
class NluSignals:
    """Simulated interpreter outputs for one (utterance, candidate) pair."""

    sl_confidence: float
    intent_confidence: float
    viterbi_path_score: float
    avg_slot_confidence: float
    intent_id: int
    slot_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        for name in ("sl_confidence", "intent_confidence", "viterbi_path_score",
                     "avg_slot_confidence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {v}")
        if not self.slot_ids and self.avg_slot_confidence != 0.0:
            raise ContractError("avg_slot_confidence must be 0 when no slots are tagged")


@dataclass
class UserProfile:
    enabled_domains: set[int] = field(default_factory=set)
    last_use_days: dict[int, int] = field(default_factory=dict)  # absent = never

    def __post_init__(self):
        for d, days in self.last_use_days.items():
            if days < 0 or not np.isfinite(days):
                raise ContractError(f"last_use_days[{d}] must be a finite non-negative count")


@dataclass
class DomainIndexEntry:
    popularity: float
    quality: float

    def __post_init__(self):
        for name in ("popularity", "quality"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1] after normalization, got {v}")


@dataclass
class HypothesisVector:
    domain_id: int
    features: np.ndarray
    slot_count: int = 0

    def __post_init__(self):
        if self.features.shape != (FEATURE_DIM,):
            raise ContractError(f"hypothesis features must have length {FEATURE_DIM}")

    @property
    def sl_confidence(self):
        return float(self.features[0])


@dataclass
class HypothesisList:
    hypotheses: list[HypothesisVector]

    def __post_init__(self):
        ids = [h.domain_id for h in self.hypotheses]
        if len(set(ids)) != len(ids):
            raise ContractError("hypothesis list contains duplicate domains")
        confs = [h.sl_confidence for h in self.hypotheses]
        if any(a < b for a, b in zip(confs, confs[1:])):
            raise ContractError("hypotheses must be ordered by non-increasing shortlister score")

    @property
    def k(self):
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def __getitem__(self, i):
        return self.hypotheses[i]

    def feature_matrix(self):
        return np.stack([h.features for h in self.hypotheses])


def recency_flags(last_use_days):
    """Cumulative [<=7d, <=14d, <=30d] flags; None means never triggered."""
    if last_use_days is None:
        return np.zeros(len(RECENCY_WINDOWS))
    return np.array([1.0 if last_use_days <= w else 0.0 for w in RECENCY_WINDOWS])


def build_hypothesis(domain_id, nlu, user, index, domain_table, intent_table, slot_table):
    """Assemble one hypothesis vector in the fixed layout."""
    feats = np.empty(FEATURE_DIM)
    feats[SCORES] = (nlu.sl_confidence, nlu.intent_confidence,
                     nlu.viterbi_path_score, nlu.avg_slot_confidence)
    feats[DOMAIN_EMB] = domain_table.row(domain_id)
    feats[INTENT_EMB] = intent_table.row(nlu.intent_id)
    feats[SLOT_EMB] = combine_slot_embeddings(nlu.slot_ids, slot_table)
    enabled = 1.0 if domain_id in user.enabled_domains else 0.0
    feats[USER_FLAGS] = np.concatenate([[enabled],
                                        recency_flags(user.last_use_days.get(domain_id))])
    feats[DOMAIN_INDEX] = (index.popularity, index.quality)
    return HypothesisVector(domain_id, feats, slot_count=len(nlu.slot_ids))


def build_hypothesis_list(kbest, nlu_by_domain, user, index_by_domain,
                          domain_table, intent_table, slot_table,
                          oracle_gold=None):
    """One hypothesis per k-best entry, in k-best order.

    The shortlister confidence of each hypothesis is taken from its k-best
    score, overriding whatever the NLU simulation carried. ``oracle_gold``
    plants a perfectly-informative gold indicator into the oracle slot
    (evaluation instrumentation only).
    """
    if len(kbest) < 1:
        raise ContractError("cannot build hypotheses from an empty k-best list")
    hyps = []
    for domain_id, score in kbest:
        nlu = replace(nlu_by_domain[domain_id], sl_confidence=float(score))
        hyp = build_hypothesis(domain_id, nlu, user, index_by_domain[domain_id],
                               domain_table, intent_table, slot_table)
        if oracle_gold is not None:
            hyp.features[ORACLE_FEATURE_SLOT] = 1.0 if domain_id == oracle_gold else 0.0
        hyps.append(hyp)
    return HypothesisList(hyps)


def manual_cross_features(hlist):
    """Three hand-built cross-hypothesis features per hypothesis.

    [score / max score, slot count - mean slot count, normalized rank]
    with rank feature 0 for a singleton list.
    """
    if hlist.k < 1:
        raise ContractError("cross features need a non-empty list")
    confs = np.array([h.sl_confidence for h in hlist])
    slots = np.array([h.slot_count for h in hlist], dtype=np.float64)
    max_conf = confs.max()
    ratio = confs / max_conf if max_conf > 0 else np.ones_like(confs)
    rel_slots = slots - slots.mean()
    if hlist.k == 1:
        rank = np.zeros(1)
    else:
        rank = np.arange(hlist.k) / (hlist.k - 1)
    return np.stack([ratio, rel_slots, rank], axis=1)
