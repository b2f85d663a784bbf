"""Orthography-sensitive word vectors and the utterance-level BiLSTM encoder.

A word is represented by the final states of a character BiLSTM concatenated
with its word embedding; an utterance by the final states of a word-level
BiLSTM over those vectors. Default dimensions are 25 (char), 100 (word
embedding), 150 (word vector), 100 per direction, 200 for the utterance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError

UNK = "<unk>"


@dataclass
class CharVocab:
    id_of: dict[str, int]
    unk_id: int

    @classmethod
    def build(cls, chars):
        ordered = sorted(set(chars))
        ids = {c: i for i, c in enumerate(ordered)}
        unk = len(ids)
        ids[UNK] = unk
        return cls(ids, unk)

    def __len__(self):
        return len(self.id_of)

    def encode(self, word):
        return [self.id_of.get(c, self.unk_id) for c in word]

    def tokens(self):
        out = [None] * len(self.id_of)
        for tok, i in self.id_of.items():
            out[i] = tok
        return out


@dataclass
class WordVocab:
    id_of: dict[str, int]
    unk_id: int

    @classmethod
    def build(cls, words):
        ordered = sorted(set(words))
        ids = {w: i for i, w in enumerate(ordered)}
        unk = len(ids)
        ids[UNK] = unk
        return cls(ids, unk)

    def __len__(self):
        return len(self.id_of)

    def encode(self, word):
        return self.id_of.get(word, self.unk_id)

    def tokens(self):
        out = [None] * len(self.id_of)
        for tok, i in self.id_of.items():
            out[i] = tok
        return out


@dataclass
class Utterance:
    """Word ids plus per-word character ids; m >= 1, every word non-empty."""

    words: list[int]
    chars: list[list[int]]

    def __post_init__(self):
        if len(self.words) < 1:
            raise ContractError("utterance must contain at least one word")
        if len(self.chars) != len(self.words):
            raise ContractError("per-word char sequences must align with words")
        for cs in self.chars:
            if len(cs) < 1:
                raise ContractError("every word needs at least one character")

    @classmethod
    def from_tokens(cls, tokens, word_vocab, char_vocab):
        return cls([word_vocab.encode(t) for t in tokens],
                   [char_vocab.encode(t) for t in tokens])


@dataclass
class EncoderConfig:
    char_dim: int = 25
    char_state: int = 25
    word_dim: int = 100
    word_state: int = 100

    @property
    def word_vec_dim(self):
        return 2 * self.char_state + self.word_dim

    @property
    def utterance_dim(self):
        return 2 * self.word_state


@dataclass
class EncoderParams:
    """Embedding tables and the four LSTMs (char fwd/bwd, word fwd/bwd)."""

    config: EncoderConfig
    char_embeddings: ad.Tensor   # (|C|, char_dim)
    word_embeddings: ad.Tensor   # (|W|, word_dim)
    char_fwd: ad.LstmParams
    char_bwd: ad.LstmParams
    word_fwd: ad.LstmParams
    word_bwd: ad.LstmParams

    @classmethod
    def init(cls, rng, n_chars, n_words, config=None):
        cfg = config or EncoderConfig()
        return cls(
            config=cfg,
            char_embeddings=ad.parameter(rng.normal(0.0, 0.1, size=(n_chars, cfg.char_dim)), "char_emb"),
            word_embeddings=ad.parameter(rng.normal(0.0, 0.1, size=(n_words, cfg.word_dim)), "word_emb"),
            char_fwd=ad.init_lstm(rng, cfg.char_dim, cfg.char_state, "char_fwd"),
            char_bwd=ad.init_lstm(rng, cfg.char_dim, cfg.char_state, "char_bwd"),
            word_fwd=ad.init_lstm(rng, cfg.word_vec_dim, cfg.word_state, "word_fwd"),
            word_bwd=ad.init_lstm(rng, cfg.word_vec_dim, cfg.word_state, "word_bwd"),
        )

    def trainable(self):
        out = [self.char_embeddings, self.word_embeddings]
        for lstm in (self.char_fwd, self.char_bwd, self.word_fwd, self.word_bwd):
            out.extend(lstm.trainable())
        return out

    def named(self):
        out = {"char_emb": self.char_embeddings, "word_emb": self.word_embeddings}
        for prefix, lstm in (("char_fwd", self.char_fwd), ("char_bwd", self.char_bwd),
                             ("word_fwd", self.word_fwd), ("word_bwd", self.word_bwd)):
            out.update(lstm.named(prefix))
        return out


def embed_word(char_ids, word_id, params):
    """Word vector [char-fwd final | char-bwd final | word embedding]."""
    if len(char_ids) < 1:
        raise ContractError("cannot embed an empty word")
    ce = ad.rows(params.char_embeddings, char_ids)
    char_states = ad.bilstm_finals(ce, params.char_fwd, params.char_bwd)
    word_vec = ad.row(ad.rows(params.word_embeddings, [word_id]), 0)
    return ad.concat([char_states, word_vec])


def encode_utterance(utt, params, dropout_mask=None, word_cache=None):
    """Utterance vector [word-fwd final | word-bwd final], length 2*word_state.

    ``dropout_mask``: optional variational mask over word vectors, applied
    identically at every position (training only). ``word_cache``: id ->
    word-vector Tensor, valid only while parameters are frozen.
    """
    vs = []
    for wid, cids in zip(utt.words, utt.chars):
        if word_cache is not None:
            v = word_cache.get(wid)
            if v is None:
                v = embed_word(cids, wid, params)
                word_cache[wid] = v
        else:
            v = embed_word(cids, wid, params)
        if dropout_mask is not None:
            v = ad.mul(v, dropout_mask)
        vs.append(v)
    xs = ad.stack(vs)
    return ad.bilstm_finals(xs, params.word_fwd, params.word_bwd)
