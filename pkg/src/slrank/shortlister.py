"""Domain scoring heads over the utterance encoder, losses, and k-best lists.

Two output variants: ``softmax_a`` normalizes one softmax across all n
domains; ``softmax_b`` gives each domain an independent two-class
(in-domain / out-of-domain) softmax, which for two classes reduces to a
sigmoid of the logit difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .errors import ContractError, NumericError, ParameterError

VARIANT_A = "softmax_a"
VARIANT_B = "softmax_b"

LOG_EPS = 1e-12


@dataclass
class ShortlisterModel:
    encoder: enc.EncoderParams
    variant: str
    n_domains: int
    # softmax_a: proj_w (n, 2H), proj_b (n,)
    # softmax_b: proj_w (2n, 2H) with in-domain rows first, proj_b (2n,)
    proj_w: ad.Tensor
    proj_b: ad.Tensor

    @classmethod
    def init(cls, rng, n_chars, n_words, n_domains, variant=VARIANT_A, config=None):
        if n_domains < 2:
            raise ParameterError(f"need at least 2 domains, got {n_domains}")
        if variant not in (VARIANT_A, VARIANT_B):
            raise ParameterError(f"unknown shortlister variant {variant!r}")
        encoder = enc.EncoderParams.init(rng, n_chars, n_words, config)
        hdim = encoder.config.utterance_dim
        out = n_domains if variant == VARIANT_A else 2 * n_domains
        return cls(encoder=encoder, variant=variant, n_domains=n_domains,
                   proj_w=ad.parameter(ad.glorot(rng, out, hdim), "proj_w"),
                   proj_b=ad.parameter(np.zeros(out), "proj_b"))

    def trainable(self):
        return self.encoder.trainable() + [self.proj_w, self.proj_b]

    def named(self):
        out = self.encoder.named()
        out["proj_w"] = self.proj_w
        out["proj_b"] = self.proj_b
        return out


def score_domain_pairs(h, model):
    """softmax_b in/out probabilities per domain, each pair summing to 1."""
    if model.variant != VARIANT_B:
        raise ContractError("pair scores are only defined for softmax_b")
    n = model.n_domains
    z = ad.add(ad.matvec(model.proj_w, h), model.proj_b)
    diff = ad.sub(ad.narrow(z, 0, n), ad.narrow(z, n, n))
    return ad.sigmoid(diff), ad.sigmoid(ad.neg(diff))


def score_domains(h, model):
    """Per-domain confidence vector of length n.

    softmax_a: a probability distribution over domains. softmax_b: each
    domain's independent in-domain probability (does not sum to 1).
    """
    if h.value.shape != (model.encoder.config.utterance_dim,):
        raise ContractError(f"utterance vector must have length {model.encoder.config.utterance_dim}")
    if model.variant == VARIANT_A:
        return ad.softmax(ad.add(ad.matvec(model.proj_w, h), model.proj_b))
    o1, _ = score_domain_pairs(h, model)
    return o1


def _check_one_hot(l, n):
    l = np.asarray(l, dtype=np.float64)
    if l.shape != (n,) or not np.all((l == 0.0) | (l == 1.0)) or l.sum() != 1.0:
        raise ContractError(f"label must be a one-hot vector of length {n}")
    return l


def loss_a(o, l):
    """Cross entropy -sum(l * log o), computed in log space with an eps clamp."""
    l = _check_one_hot(l, o.value.shape[0])
    return ad.neg(ad.weighted_sum(ad.clamped_log(o, LOG_EPS), l))


def negative_term_weights(l):
    """Coefficients (1 - l_i) / (n - 1) on the out-of-domain log terms.

    The n-1 nonzero entries carry total mass exactly 1, balancing the
    single positive term against the negatives.
    """
    l = np.asarray(l, dtype=np.float64)
    n = l.shape[0]
    if n < 2:
        raise ParameterError("per-domain losses need n >= 2")
    return (1.0 - l) / (n - 1)


def negative_term_weights_exact(l):
    """Fraction-valued twin of :func:`negative_term_weights`, for audits."""
    n = len(l)
    return [Fraction(1 - int(v), n - 1) for v in l]


def loss_b(o_in, o_out, l):
    """Per-domain two-class cross entropy with 1/(n-1) negative weighting."""
    n = o_in.value.shape[0]
    if o_out.value.shape[0] != n:
        raise ContractError("in/out probability vectors must have equal length")
    pair_sums = o_in.value + o_out.value
    if not np.allclose(pair_sums, 1.0, atol=1e-9):
        raise ContractError("each (in, out) pair must sum to 1")
    l = _check_one_hot(l, n)
    pos = ad.weighted_sum(ad.clamped_log(o_in, LOG_EPS), l)
    negs = ad.weighted_sum(ad.clamped_log(o_out, LOG_EPS), negative_term_weights(l))
    return ad.neg(ad.add(pos, negs))


@dataclass
class KBestList:
    """Top-k (domain id, confidence) entries, scores non-increasing."""

    domain_ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        if len(self.domain_ids) != len(self.scores):
            raise ContractError("k-best ids and scores must align")
        if len(set(self.domain_ids.tolist())) != len(self.domain_ids):
            raise ContractError("k-best domains must be distinct")
        if np.any(np.diff(self.scores) > 0):
            raise ContractError("k-best scores must be non-increasing")

    def __len__(self):
        return len(self.domain_ids)

    def __iter__(self):
        return iter(zip(self.domain_ids.tolist(), self.scores.tolist()))


def k_best(scores, k):
    """Top-k domains by score; ties broken toward the lower domain id."""
    s = scores.value if isinstance(scores, ad.Tensor) else np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    if not np.all(np.isfinite(s)):
        raise NumericError("k_best needs finite scores")
    order = np.argsort(-s, kind="stable")[:k]
    return KBestList(order, s[order])
