"""Two-stage neural domain routing: shortlist with a char/word BiLSTM, then
rerank the k-best hypotheses list-wise with contextual features."""

__version__ = "0.1.0"
