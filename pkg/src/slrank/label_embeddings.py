"""Pre-trained domain / intent / slot label embeddings.

A word-level BiLSTM classifier (25 per direction) is trained to predict the
label from the utterance; the rows of its output projection are then
extracted as 50-dim label embeddings. Slots are multi-label, handled as
one-vs-rest binary targets over the slot vocabulary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ParameterError

KIND_DOMAIN = "domain"
KIND_INTENT = "intent"
KIND_SLOT = "slot"
KINDS = (KIND_DOMAIN, KIND_INTENT, KIND_SLOT)


@dataclass
class LabelEmbeddingTable:
    kind: str
    table: np.ndarray  # (n_labels, embed_dim)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown embedding kind {self.kind!r}")
        if not np.all(np.isfinite(self.table)):
            raise ContractError("embedding table contains non-finite rows")

    @property
    def n_labels(self):
        return self.table.shape[0]

    @property
    def dim(self):
        return self.table.shape[1]

    def row(self, label_id):
        if not 0 <= label_id < self.n_labels:
            raise ParameterError(f"label id {label_id} out of range for {self.n_labels} {self.kind} labels")
        return self.table[label_id]


@dataclass
class PretrainConfig:
    n_labels: int
    n_words: int
    embed_dim: int = 50     # projection rows; BiLSTM state is embed_dim / 2
    word_dim: int = 100
    epochs: int = 2
    lr: float = 4e-4
    batch_size: int = 32
    dropout: float = 0.2
    seed: int = 0
    max_utterances: int = 0  # 0 = use the whole corpus

    def __post_init__(self):
        if self.embed_dim % 2:
            raise ParameterError("embed_dim must be even (two BiLSTM directions)")


@dataclass
class _PretrainModel:
    word_emb: ad.Tensor
    fwd: ad.LstmParams
    bwd: ad.LstmParams
    proj: ad.Tensor  # (n_labels, embed_dim)
    bias: ad.Tensor

    def trainable(self):
        return [self.word_emb, self.proj, self.bias] + self.fwd.trainable() + self.bwd.trainable()


def _init_model(rng, cfg):
    state = cfg.embed_dim // 2
    return _PretrainModel(
        word_emb=ad.parameter(rng.normal(0.0, 0.1, size=(cfg.n_words, cfg.word_dim)), "pre.word_emb"),
        fwd=ad.init_lstm(rng, cfg.word_dim, state, "pre.fwd"),
        bwd=ad.init_lstm(rng, cfg.word_dim, state, "pre.bwd"),
        proj=ad.parameter(rng.normal(0.0, 0.1, size=(cfg.n_labels, cfg.embed_dim)), "pre.proj"),
        bias=ad.parameter(np.zeros(cfg.n_labels), "pre.bias"),
    )


def _labels_of(example):
    labels = example[1]
    return list(labels) if isinstance(labels, (list, tuple, set, frozenset)) else [labels]


def _forward_logits(word_ids, model, mask=None):
    xs = ad.rows(model.word_emb, word_ids)
    if mask is not None:
        xs = ad.mul(xs, mask)
    finals = ad.bilstm_finals(xs, model.fwd, model.bwd)
    return ad.add(ad.matvec(model.proj, finals), model.bias)


def _example_loss(logits, labels, kind, n_labels):
    if kind == KIND_SLOT:
        y = np.zeros(n_labels)
        y[labels] = 1.0
        pos = ad.weighted_sum(ad.clamped_log(ad.sigmoid(logits)), y)
        neg = ad.weighted_sum(ad.clamped_log(ad.sigmoid(ad.neg(logits))), 1.0 - y)
        return ad.scale(ad.neg(ad.add(pos, neg)), 1.0 / n_labels)
    onehot = np.zeros(n_labels)
    onehot[labels[0]] = 1.0
    return ad.neg(ad.weighted_sum(ad.clamped_log(ad.softmax(logits)), onehot))


def pretrain_label_embeddings(corpus, kind, config):
    """Train the classifier and extract its projection rows as embeddings.

    ``corpus``: iterable of (word_ids, label) for domain/intent kinds, or
    (word_ids, slot_id_list) for the slot kind. Labels missing from the
    corpus get a warning and a zeroed row. Returns (table, epoch_losses).
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown embedding kind {kind!r}")
    corpus = list(corpus)
    if config.max_utterances and len(corpus) > config.max_utterances:
        corpus = corpus[:config.max_utterances]
    if not corpus:
        raise ContractError("pretraining corpus is empty")

    seen = set()
    for example in corpus:
        seen.update(_labels_of(example))
    missing = sorted(set(range(config.n_labels)) - seen)
    if missing:
        warnings.warn(f"{kind} labels absent from pretraining corpus, zeroing rows: {missing}")

    rng = np.random.default_rng(config.seed)
    model = _init_model(rng, config)
    params = model.trainable()
    adam = ad.AdamState(params, lr=config.lr)
    order_rng = np.random.default_rng(config.seed + 1)
    mask_rng = np.random.default_rng(config.seed + 2)

    losses = []
    for _ in range(config.epochs):
        total = 0.0
        order = order_rng.permutation(len(corpus))
        pending = 0
        for idx in order:
            word_ids, _ = corpus[idx]
            labels = _labels_of(corpus[idx])
            mask = None
            if config.dropout > 0.0:
                m = ad.variational_dropout_mask((config.word_dim,), config.dropout, mask_rng)
                mask = ad.constant(np.broadcast_to(m.value, (len(word_ids), config.word_dim)).copy())
            with ad.Tape() as tape:
                loss = _example_loss(_forward_logits(word_ids, model, mask), labels,
                                     kind, config.n_labels)
            tape.backward(loss, seed=1.0 / config.batch_size)
            total += float(loss.value)
            pending += 1
            if pending == config.batch_size:
                ad.adam_step(adam)
                ad.zero_grads(params)
                pending = 0
        if pending:
            ad.adam_step(adam)
            ad.zero_grads(params)
        losses.append(total / len(corpus))

    table = model.proj.value.copy()
    for label in missing:
        table[label] = 0.0
    return LabelEmbeddingTable(kind, table), losses


def combine_slot_embeddings(slot_ids, table):
    """Sum the embedding rows of the given slots; empty input gives zeros."""
    if table.kind != KIND_SLOT:
        raise ContractError(f"slot combination needs a slot table, got kind {table.kind!r}")
    out = np.zeros(table.dim)
    for sid in slot_ids:
        out += table.row(sid)
    return out
