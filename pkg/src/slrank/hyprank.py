"""List-wise BiLSTM reranker over hypothesis lists, plus the comparison
rerankers: binary logistic regression, neural point-wise, neural pair-wise
tournament, and the manual cross-feature variants.

Variants of the list-wise model differ in what feeds the shared scoring
head at each position: the BiLSTM output alone (``lstm_o``), a residual
sum with the hypothesis vector (``lstm_s``), their concatenation
(``lstm_c``), or the concatenation including manual cross features
(``lstm_ch``, which also feeds those features to the BiLSTM).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ParameterError
from .hypotheses import FEATURE_DIM, N_CROSS_FEATURES, manual_cross_features
from .shortlister import LOG_EPS

LSTM_O = "lstm_o"
LSTM_S = "lstm_s"
LSTM_C = "lstm_c"
LSTM_CH = "lstm_ch"
LISTWISE_VARIANTS = (LSTM_O, LSTM_S, LSTM_C, LSTM_CH)

LR = "lr"
N_PO = "n_po"
N_PA = "n_pa"
N_CH = "n_ch"
BASELINE_KINDS = (LR, N_PO, N_PA, N_CH)


@dataclass
class HypRankModel:
    variant: str
    feature_dim: int
    fwd: ad.LstmParams
    bwd: ad.LstmParams
    ff_w1: ad.Tensor          # (F, g_dim)
    ff_b1: ad.Tensor
    ff_w2: ad.Tensor          # (1, F)
    ff_b2: ad.Tensor
    sum_proj: ad.Tensor | None = None  # lstm_s only: (feature_dim, 2H)
    sum_bias: ad.Tensor | None = None

    @property
    def input_dim(self):
        """BiLSTM input width: hypothesis features, plus manual cross features for lstm_ch."""
        return self.feature_dim + (N_CROSS_FEATURES if self.variant == LSTM_CH else 0)

    @classmethod
    def init(cls, rng, variant, feature_dim=FEATURE_DIM, state_dim=64, ff_hidden=64):
        if variant not in LISTWISE_VARIANTS:
            raise ParameterError(f"unknown list-wise variant {variant!r}")
        in_dim = feature_dim + (N_CROSS_FEATURES if variant == LSTM_CH else 0)
        two_h = 2 * state_dim
        g_dim = {LSTM_O: two_h, LSTM_S: feature_dim,
                 LSTM_C: feature_dim + two_h, LSTM_CH: in_dim + two_h}[variant]
        sum_proj = sum_bias = None
        if variant == LSTM_S:
            sum_proj = ad.parameter(ad.glorot(rng, feature_dim, two_h), "sum_proj")
            sum_bias = ad.parameter(np.zeros(feature_dim), "sum_bias")
        return cls(
            variant=variant, feature_dim=feature_dim,
            fwd=ad.init_lstm(rng, in_dim, state_dim, "rank_fwd"),
            bwd=ad.init_lstm(rng, in_dim, state_dim, "rank_bwd"),
            ff_w1=ad.parameter(ad.glorot(rng, ff_hidden, g_dim), "ff_w1"),
            ff_b1=ad.parameter(np.zeros(ff_hidden), "ff_b1"),
            ff_w2=ad.parameter(ad.glorot(rng, 1, ff_hidden), "ff_w2"),
            ff_b2=ad.parameter(np.zeros(1), "ff_b2"),
            sum_proj=sum_proj, sum_bias=sum_bias,
        )

    def trainable(self):
        out = self.fwd.trainable() + self.bwd.trainable()
        out += [self.ff_w1, self.ff_b1, self.ff_w2, self.ff_b2]
        if self.sum_proj is not None:
            out += [self.sum_proj, self.sum_bias]
        return out

    def named(self):
        out = {}
        out.update(self.fwd.named("rank_fwd"))
        out.update(self.bwd.named("rank_bwd"))
        out.update({"ff_w1": self.ff_w1, "ff_b1": self.ff_b1,
                    "ff_w2": self.ff_w2, "ff_b2": self.ff_b2})
        if self.sum_proj is not None:
            out.update({"sum_proj": self.sum_proj, "sum_bias": self.sum_bias})
        return out


def _list_inputs(hlist, model):
    feats = hlist.feature_matrix()
    if model.variant == LSTM_CH:
        feats = np.concatenate([feats, manual_cross_features(hlist)], axis=1)
    return feats


def _ff_score(model, g):
    hidden = ad.selu(ad.add(ad.matvec(model.ff_w1, g), model.ff_b1))
    return ad.add(ad.matvec(model.ff_w2, hidden), model.ff_b2)


def score_list(hlist, model, dropout_mask=None):
    """Softmax-normalized scores over the k hypotheses (tape-aware)."""
    if hlist.k < 1:
        raise ContractError("cannot rerank an empty hypothesis list")
    feats = _list_inputs(hlist, model)
    if dropout_mask is not None:
        feats = feats * dropout_mask  # one mask row reused at every position
    xs = ad.constant(feats)
    hs_f = ad.lstm_sequence(xs, model.fwd)
    hs_b = ad.lstm_sequence(xs, model.bwd, reverse=True)
    scores = []
    for i in range(hlist.k):
        h_i = ad.concat([ad.row(hs_f, i), ad.row(hs_b, i)])
        p_i = ad.constant(feats[i])
        if model.variant == LSTM_O:
            g_i = h_i
        elif model.variant == LSTM_S:
            g_i = ad.add(p_i, ad.add(ad.matvec(model.sum_proj, h_i), model.sum_bias))
        else:  # lstm_c, lstm_ch
            g_i = ad.concat([p_i, h_i])
        scores.append(_ff_score(model, g_i))
    return ad.softmax(ad.concat(scores))


def rerank_listwise(hlist, model, dropout_mask=None):
    """Probabilities over the list and the predicted index (ties to lowest)."""
    o = score_list(hlist, model, dropout_mask)
    probs = o.value
    return probs, int(np.argmax(probs))


def loss_r(o, l):
    """Cross entropy over the k reranker outputs; l marks the gold position."""
    l = np.asarray(l, dtype=np.float64)
    k = o.value.shape[0]
    if l.shape != (k,) or not np.all((l == 0.0) | (l == 1.0)) or l.sum() != 1.0:
        raise ContractError(f"label must be a one-hot vector of length {k}")
    return ad.neg(ad.weighted_sum(ad.clamped_log(o, LOG_EPS), l))


def listwise_loss(hlist, model, gold_pos, dropout_mask=None):
    l = np.zeros(hlist.k)
    l[gold_pos] = 1.0
    return loss_r(score_list(hlist, model, dropout_mask), l)


# ---------------------------------------------------------------------------
# Comparison rerankers.
# ---------------------------------------------------------------------------

@dataclass
class BaselineModel:
    kind: str
    feature_dim: int
    w1: ad.Tensor            # lr: (1, d); n_po/n_ch: (F, d); n_pa: (F, 2d)
    b1: ad.Tensor
    w2: ad.Tensor | None     # hidden->output for the neural kinds
    b2: ad.Tensor | None

    @property
    def input_dim(self):
        if self.kind == N_CH:
            return self.feature_dim + N_CROSS_FEATURES
        return self.feature_dim

    @classmethod
    def init(cls, rng, kind, feature_dim=FEATURE_DIM, ff_hidden=64):
        if kind not in BASELINE_KINDS:
            raise ParameterError(f"unknown baseline kind {kind!r}")
        d = feature_dim + (N_CROSS_FEATURES if kind == N_CH else 0)
        if kind == LR:
            return cls(kind, feature_dim,
                       w1=ad.parameter(np.zeros((1, d)), "lr_w"),
                       b1=ad.parameter(np.zeros(1), "lr_b"), w2=None, b2=None)
        in_dim = 2 * d if kind == N_PA else d
        out_dim = 2 if kind == N_PA else 1
        return cls(kind, feature_dim,
                   w1=ad.parameter(ad.glorot(rng, ff_hidden, in_dim), "base_w1"),
                   b1=ad.parameter(np.zeros(ff_hidden), "base_b1"),
                   w2=ad.parameter(ad.glorot(rng, out_dim, ff_hidden), "base_w2"),
                   b2=ad.parameter(np.zeros(out_dim), "base_b2"))

    def trainable(self):
        out = [self.w1, self.b1]
        if self.w2 is not None:
            out += [self.w2, self.b2]
        return out

    def named(self):
        out = {"w1": self.w1, "b1": self.b1}
        if self.w2 is not None:
            out.update({"w2": self.w2, "b2": self.b2})
        return out


def _pointwise_inputs(hlist, model):
    feats = hlist.feature_matrix()
    if model.kind == N_CH:
        feats = np.concatenate([feats, manual_cross_features(hlist)], axis=1)
    return feats


def _pointwise_prob(model, x):
    """In-domain probability of a single hypothesis feature vector."""
    if model.kind == LR:
        z = ad.add(ad.matvec(model.w1, x), model.b1)
    else:
        hidden = ad.selu(ad.add(ad.matvec(model.w1, x), model.b1))
        z = ad.add(ad.matvec(model.w2, hidden), model.b2)
    return ad.sigmoid(z)


def pointwise_scores(hlist, model):
    if model.kind not in (LR, N_PO, N_CH):
        raise ContractError(f"{model.kind} is not a point-wise model")
    feats = _pointwise_inputs(hlist, model)
    return [_pointwise_prob(model, ad.constant(feats[i])) for i in range(hlist.k)]


def rerank_pointwise(hlist, model):
    """Score each hypothesis independently, pick the highest (ties to lowest)."""
    if hlist.k < 1:
        raise ContractError("cannot rerank an empty hypothesis list")
    scores = np.array([float(s.value[0]) for s in pointwise_scores(hlist, model)])
    return int(np.argmax(scores))


def rerank_pointwise_ch(hlist, model):
    if model.kind != N_CH:
        raise ContractError("rerank_pointwise_ch needs an n_ch model")
    return rerank_pointwise(hlist, model)


def pointwise_loss(hlist, model, gold_pos):
    """Mean binary cross entropy over the k in/out targets."""
    losses = []
    for i, prob in enumerate(pointwise_scores(hlist, model)):
        if i == gold_pos:
            term = ad.clamped_log(prob, LOG_EPS)
        else:
            term = ad.clamped_log(ad.sub(ad.constant(np.ones(1)), prob), LOG_EPS)
        losses.append(term)
    return ad.scale(ad.neg(ad.total(ad.concat(losses))), 1.0 / hlist.k)


def _match_probs(model, a, b):
    """Two-way softmax over (champion, challenger) concatenated features."""
    x = ad.concat([a, b])
    hidden = ad.selu(ad.add(ad.matvec(model.w1, x), model.b1))
    return ad.softmax(ad.add(ad.matvec(model.w2, hidden), model.b2))


def tournament_with_count(hlist, model):
    """Run the k-1 tournament matches; returns (winner index, match count)."""
    if model.kind != N_PA:
        raise ContractError(f"tournament needs an n_pa model, got {model.kind}")
    if hlist.k < 1:
        raise ContractError("cannot rerank an empty hypothesis list")
    feats = hlist.feature_matrix()
    champion = 0
    matches = 0
    for challenger in range(1, hlist.k):
        probs = _match_probs(model, ad.constant(feats[champion]),
                             ad.constant(feats[challenger])).value
        matches += 1
        if probs[1] > probs[0]:  # strict win required to dethrone
            champion = challenger
    return champion, matches


def rerank_pairwise_tournament(hlist, model):
    return tournament_with_count(hlist, model)[0]


def pairwise_loss(hlist, model, gold_pos):
    """Cross entropy over (gold, other) matches presented in both orders."""
    if hlist.k < 2:
        raise ContractError("pairwise training needs k >= 2")
    feats = hlist.feature_matrix()
    gold = ad.constant(feats[gold_pos])
    terms = []
    for j in range(hlist.k):
        if j == gold_pos:
            continue
        other = ad.constant(feats[j])
        terms.append(ad.clamped_log(ad.narrow(_match_probs(model, gold, other), 0, 1), LOG_EPS))
        terms.append(ad.clamped_log(ad.narrow(_match_probs(model, other, gold), 1, 1), LOG_EPS))
    return ad.scale(ad.neg(ad.total(ad.concat(terms))), 1.0 / len(terms))


def predict(hlist, model, dropout_mask=None):
    """Dispatch to the right reranking rule for the model type."""
    if isinstance(model, HypRankModel):
        return rerank_listwise(hlist, model, dropout_mask)[1]
    if model.kind == N_PA:
        return rerank_pairwise_tournament(hlist, model)
    return rerank_pointwise(hlist, model)
