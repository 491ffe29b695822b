"""Per-user tweet documents, TF-IDF cosine similarity and log-normal standardization."""
from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping
from urllib.parse import unquote

import numpy as np
from scipy import sparse

from .events import KIND_CODES, EventKind, TemporalGraph

_STRIP = string.punctuation + "“”‘’…"


def tokenize(text: str) -> list[str]:
    """Whitespace tokens with surrounding punctuation removed.

    ``#tags`` and ``@mentions`` keep their prefix, URLs are dropped, short
    all-caps words (acronyms up to 5 letters) keep their case and everything
    else is lowercased.
    """
    out = []
    for raw in text.split():
        if raw.lower().startswith("http"):
            continue
        prefix = ""
        core = raw.lstrip(_STRIP)
        lead = raw[: len(raw) - len(core)]
        if lead and lead[-1] in "#@":
            prefix = lead[-1]
        core = core.rstrip(_STRIP)
        if not core:
            continue
        if prefix:
            out.append(prefix + core.lower())
        elif core.isupper() and len(core) <= 5:
            out.append(core)
        else:
            out.append(core.lower())
    return out


@dataclass
class UserDocument:
    user: str
    token_counts: Counter


@dataclass
class TfIdfVector:
    weights: dict[str, float]
    norm: float

    @classmethod
    def from_weights(cls, weights: Mapping[str, float]) -> "TfIdfVector":
        w = {t: float(v) for t, v in weights.items() if v != 0}
        return cls(w, math.sqrt(sum(v * v for v in w.values())))


def cosine(a: TfIdfVector, b: TfIdfVector) -> float:
    """Cosine of two sparse vectors; zero when either is the zero vector."""
    if a.norm == 0 or b.norm == 0:
        return 0.0
    shared = sorted(a.weights.keys() & b.weights.keys())
    dot = math.fsum(a.weights[t] * b.weights[t] for t in shared)
    return min(1.0, max(0.0, dot / (a.norm * b.norm)))


def build_documents(g: TemporalGraph, include_retweets: bool = False) -> dict[str, UserDocument]:
    """Aggregate the tokens of every tweet a user authored.

    Retweet texts are left out unless ``include_retweets``; then they count
    towards the retweeting user's document.
    """
    counts: dict[int, Counter] = {}
    kinds = [KIND_CODES[EventKind.TWEET]] + ([KIND_CODES[EventKind.RETWEET]] if include_retweets else [])
    for k in np.flatnonzero(np.isin(g.ev_kind, kinds)).tolist():
        text = g.ev_text[k]
        if not text:
            continue
        u = int(g.ev_actor[k])
        c = counts.get(u)
        if c is None:
            c = counts[u] = Counter()
        c.update(tokenize(text))
    return {g.users[u]: UserDocument(g.users[u], counts[u]) for u in sorted(counts)}


class TfIdfVectors(Mapping):
    """TF-IDF vectors for a corpus, backed by a sparse matrix.

    Behaves as a read-only mapping ``user -> TfIdfVector``; users outside the
    corpus map to the zero vector.  Bulk similarity queries go through
    :meth:`similarities`.
    """

    def __init__(self, users: list[str], vocab: list[str], weights: sparse.csr_matrix):
        self.users = users
        self.row = {u: k for k, u in enumerate(users)}
        self.vocab = vocab
        self.matrix = weights.tocsr()
        norms = np.sqrt(np.asarray(self.matrix.multiply(self.matrix).sum(axis=1)).ravel())
        self.norms = norms
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        self.unit = sparse.diags(inv) @ self.matrix
        self.unit = self.unit.tocsr()
        self._graph_rows: np.ndarray | None = None

    def __getitem__(self, user: str) -> TfIdfVector:
        k = self.row.get(user)
        if k is None:
            return TfIdfVector({}, 0.0)
        r = self.matrix.getrow(k)
        return TfIdfVector({self.vocab[j]: float(v) for j, v in zip(r.indices, r.data) if v != 0},
                           float(self.norms[k]))

    def __iter__(self) -> Iterator[str]:
        return iter(self.users)

    def __len__(self) -> int:
        return len(self.users)

    def empty_users(self) -> list[str]:
        return [u for u, n in zip(self.users, self.norms) if n == 0]

    def bind(self, g: TemporalGraph) -> "TfIdfVectors":
        """Map graph user indices to matrix rows (-1 for users without a document)."""
        self._graph_rows = np.array([self.row.get(u, -1) for u in g.users], dtype=np.int64)
        return self

    def similarities_idx(self, i: int, js: np.ndarray) -> np.ndarray:
        """Cosine similarity between graph user ``i`` and each graph user in ``js``."""
        rows = self._graph_rows
        js = np.asarray(js, dtype=np.int64)
        out = np.zeros(js.size)
        ri = rows[i]
        if ri < 0 or js.size == 0:
            return out
        rj = rows[js]
        ok = rj >= 0
        if ok.any():
            vals = self.unit[rj[ok]] @ self.unit[ri].T
            out[ok] = np.asarray(vals.todense()).ravel()
        return np.clip(out, 0.0, 1.0)

    def pairwise_idx(self, js: np.ndarray) -> np.ndarray:
        """Dense cosine matrix among graph users ``js``."""
        rows = self._graph_rows[np.asarray(js, dtype=np.int64)]
        out = np.zeros((rows.size, rows.size))
        ok = np.flatnonzero(rows >= 0)
        if ok.size:
            sub = self.unit[rows[ok]]
            out[np.ix_(ok, ok)] = (sub @ sub.T).toarray()
        return np.clip(out, 0.0, 1.0)

    def has_vector_idx(self, js: np.ndarray) -> np.ndarray:
        rows = self._graph_rows[np.asarray(js, dtype=np.int64)]
        ok = rows >= 0
        ok[ok] = self.norms[rows[ok]] > 0
        return ok


def tfidf(documents: Mapping[str, UserDocument] | Iterable[UserDocument]) -> TfIdfVectors:
    """Raw-count TF times ``ln(N / df)`` IDF; tokens in every document weigh zero."""
    docs = list(documents.values()) if isinstance(documents, Mapping) else list(documents)
    vocab_index: dict[str, int] = {}
    indptr, indices, data = [0], [], []
    for d in docs:
        for tok in sorted(d.token_counts):
            c = d.token_counts[tok]
            if c <= 0:
                continue
            j = vocab_index.setdefault(tok, len(vocab_index))
            indices.append(j)
            data.append(c)
        indptr.append(len(indices))
    n_docs = len(docs)
    tf = sparse.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                            np.asarray(indptr, dtype=np.int64)), shape=(n_docs, len(vocab_index)))
    df = np.bincount(tf.indices, minlength=len(vocab_index))
    with np.errstate(divide="ignore"):
        idf = np.log(n_docs / np.maximum(df, 1))
    idf[df == n_docs] = 0.0
    weights = tf @ sparse.diags(idf)
    vocab = [None] * len(vocab_index)
    for tok, j in vocab_index.items():
        vocab[j] = tok
    return TfIdfVectors([d.user for d in docs], vocab, sparse.csr_matrix(weights))


_ESCAPES = {"%": "%25", ",": "%2C", ":": "%3A", "\t": "%09", "\n": "%0A"}


def _escape(tok: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in tok)


def write_vectors(path, vectors: Mapping[str, TfIdfVector]) -> None:
    """Cache format: ``user<TAB>token:weight,token:weight,...`` (tokens sorted).

    ``%``, ``,``, ``:``, tab and newline inside tokens are percent-escaped.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in vectors:
            v = vectors[u]
            items = ",".join(f"{_escape(t)}:{v.weights[t]!r}" for t in sorted(v.weights))
            fh.write(f"{u}\t{items}\n")


def read_vectors(path) -> dict[str, TfIdfVector]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            user, _, body = line.partition("\t")
            w = {}
            if body:
                for item in body.split(","):
                    tok, _, val = item.rpartition(":")
                    w[unquote(tok)] = float(val)
            out[user] = TfIdfVector.from_weights(w)
    return out


# ---------------------------------------------------------------------------
# standardization


@dataclass
class SimilarityStats:
    user: str
    mu: float
    sigma: float
    n_followers: int
    n_zero: int = 0

    @property
    def defined(self) -> bool:
        return self.n_followers >= 2 and math.isfinite(self.mu)

    @property
    def degenerate(self) -> bool:
        return self.defined and self.sigma == 0


def stats_from_similarities(user: str, sims: np.ndarray) -> SimilarityStats:
    """Population mean and std of ``ln S`` over the positive similarities."""
    sims = np.asarray(sims, dtype=np.float64)
    pos = sims[sims > 0]
    n_zero = int(sims.size - pos.size)
    if pos.size < 2:
        return SimilarityStats(user, math.nan, math.nan, int(pos.size), n_zero)
    logs = np.log(pos)
    mu = float(logs.mean())
    sigma = float(np.sqrt(np.mean((logs - mu) ** 2)))
    if sigma < 1e-12 * max(1.0, abs(mu)):
        sigma = 0.0
    return SimilarityStats(user, mu, sigma, int(pos.size), n_zero)


def similarity_stats(g: TemporalGraph, i: str, t: int, vectors: TfIdfVectors) -> SimilarityStats:
    """Log-similarity moments of ``i`` against its followers at time ``t``."""
    k = g.index.get(i)
    if k is None:
        return stats_from_similarities(i, np.zeros(0))
    if vectors._graph_rows is None or len(vectors._graph_rows) != g.n_users:
        vectors.bind(g)
    f1 = g.followers_idx(k, t)
    return stats_from_similarities(i, vectors.similarities_idx(k, f1))


def y_score(S, stats: SimilarityStats):
    """``(ln S - mu) / sigma``; raises when the score is undefined."""
    if not stats.defined or not stats.sigma > 0:
        raise ValueError(f"similarity stats for {stats.user!r} are undefined or degenerate")
    S = np.asarray(S, dtype=np.float64)
    if np.any(S <= 0):
        raise ValueError("y_score needs S > 0")
    y = (np.log(S) - stats.mu) / stats.sigma
    return float(y) if y.ndim == 0 else y
