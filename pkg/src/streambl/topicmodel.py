"""Online LDA with a growable vocabulary.

Streaming variational Bayes in the style of Hoffman, Blei & Bach (2010):
each mini-batch runs a per-document E-step against the current topic-term
parameter ``lam`` and blends the batch estimate in with step size
``(tau0 + t) ** -kappa``.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .corpus import Document

log = logging.getLogger(__name__)


class EmptyBatch(ValueError):
    pass


class NoTokens(ValueError):
    pass


@dataclass(frozen=True)
class LdaConfig:
    k: int = 100
    alpha: float | None = None  # None -> 1/k
    eta: float | None = None  # None -> 1/k
    kappa: float = 0.75
    tau0: float = 1.0
    seed: int = 0
    e_step_iters: int = 100
    e_step_tol: float = 1e-3
    corpus_weight: float = 1.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0.5 < self.kappa <= 1.0:
            raise ValueError("kappa must lie in (0.5, 1.0]")
        if self.tau0 < 0:
            raise ValueError("tau0 must be >= 0")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.corpus_weight <= 0:
            raise ValueError("corpus_weight must be positive")

    @property
    def alpha_(self) -> float:
        return 1.0 / self.k if self.alpha is None else self.alpha

    @property
    def eta_(self) -> float:
        return 1.0 / self.k if self.eta is None else self.eta


CHANGESET_DEFAULTS = LdaConfig(k=100, kappa=0.75)
BUG_REPORT_DEFAULTS = LdaConfig(k=50, kappa=1.0)


@dataclass
class Vocabulary:
    terms: list[str] = field(default_factory=list)
    ids: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.ids

    def add(self, term: str) -> int:
        tid = self.ids.get(term)
        if tid is None:
            tid = len(self.terms)
            self.ids[term] = tid
            self.terms.append(term)
        return tid

    @classmethod
    def from_terms(cls, terms: Iterable[str]) -> "Vocabulary":
        v = cls()
        for t in terms:
            if t in v.ids:
                raise ValueError(f"duplicate vocabulary term {t!r}")
            v.add(t)
        return v


def dirichlet_expectation(a: np.ndarray) -> np.ndarray:
    """E[log x] for x ~ Dir(a), row-wise for 2-d input."""
    if a.ndim == 1:
        return digamma(a) - digamma(a.sum())
    return digamma(a) - digamma(a.sum(axis=1))[:, None]


def step_size(t: int, tau0: float, kappa: float) -> float:
    return (tau0 + t) ** -kappa


class TopicModel:
    def __init__(self, config: LdaConfig, vocab: Vocabulary | None = None,
                 lam: np.ndarray | None = None, t: int = 0):
        self.config = config
        self.vocab = vocab if vocab is not None else Vocabulary()
        if lam is None:
            lam = np.full((config.k, len(self.vocab)), config.eta_, dtype=np.float64)
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape != (config.k, len(self.vocab)):
            raise ValueError(f"lambda shape {lam.shape} does not match k={config.k}, V={len(self.vocab)}")
        if lam.size and not np.all(lam > 0):
            raise ValueError("lambda entries must be positive")
        self.lam = lam
        self.t = t
        self._exp_elog_beta: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def num_terms(self) -> int:
        return len(self.vocab)

    def _expelogbeta(self) -> np.ndarray:
        if self._exp_elog_beta is None:
            self._exp_elog_beta = np.exp(dirichlet_expectation(self.lam))
        return self._exp_elog_beta

    def _touch(self):
        self._exp_elog_beta = None

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.lam).tobytes())
        h.update("\0".join(self.vocab.terms).encode())
        h.update(str(self.t).encode())
        return h.hexdigest()

    # -- vocabulary ---------------------------------------------------------

    def expand_vocabulary(self, terms: Iterable[str]) -> int:
        """Give unseen terms ids and eta-valued columns. Returns the number added."""
        before = len(self.vocab)
        for term in sorted(set(terms) - self.vocab.ids.keys()):
            self.vocab.add(term)
        added = len(self.vocab) - before
        if added:
            fresh = np.full((self.k, added), self.config.eta_)
            self.lam = np.hstack([self.lam, fresh])
            self._touch()
        return added

    def _bow(self, doc: Document, strict: bool) -> tuple[np.ndarray, np.ndarray]:
        ids, cts = [], []
        for term, c in doc.term_counts.items():
            tid = self.vocab.ids.get(term)
            if tid is None:
                if strict:
                    raise KeyError(f"{doc.source_id}: term {term!r} not in vocabulary")
                continue
            ids.append(tid)
            cts.append(c)
        order = np.argsort(ids, kind="stable")
        return np.asarray(ids, dtype=np.int64)[order], np.asarray(cts, dtype=np.float64)[order]

    # -- variational inference ----------------------------------------------

    def _e_step(self, bows: Sequence[tuple[np.ndarray, np.ndarray]],
                rng: np.random.Generator | None, collect: bool):
        """Per-document E-step. Returns (gamma, sstats or None)."""
        k = self.k
        alpha = self.config.alpha_
        expelogbeta = self._expelogbeta()
        gamma = np.empty((len(bows), k))
        sstats = np.zeros_like(self.lam) if collect else None
        for d, (ids, cts) in enumerate(bows):
            if rng is not None:
                g = rng.gamma(100.0, 1.0 / 100.0, k)
            else:
                g = np.ones(k)
            if len(ids) == 0:
                gamma[d] = alpha
                continue
            eb = expelogbeta[:, ids]
            et = np.exp(dirichlet_expectation(g))
            phinorm = et @ eb + 1e-100
            for _ in range(self.config.e_step_iters):
                last = g
                g = alpha + et * ((cts / phinorm) @ eb.T)
                et = np.exp(dirichlet_expectation(g))
                phinorm = et @ eb + 1e-100
                if np.mean(np.abs(g - last)) < self.config.e_step_tol:
                    break
            gamma[d] = g
            if collect:
                sstats[:, ids] += np.outer(et, cts / phinorm)
        if collect:
            sstats *= expelogbeta
        return gamma, sstats

    def update(self, batch: Sequence[Document]) -> float:
        """Apply one mini-batch. Returns the step size used.

        All batch terms must already be in the vocabulary
        (see :meth:`expand_vocabulary` or :meth:`learn`).
        """
        if not batch:
            raise EmptyBatch("update called with an empty batch")
        bows = [self._bow(doc, strict=True) for doc in batch]
        rng = np.random.default_rng([self.config.seed, self.t])
        _, sstats = self._e_step(bows, rng, collect=True)
        rho = step_size(self.t, self.config.tau0, self.config.kappa)
        lam_hat = self.config.eta_ + self.config.corpus_weight * sstats
        if rho == 1.0:
            self.lam = lam_hat
        else:
            self.lam = (1.0 - rho) * self.lam + rho * lam_hat
        self.t += 1
        self._touch()
        return rho

    def learn(self, batch: Sequence[Document]) -> float:
        """Expand the vocabulary with the batch's terms, then update."""
        terms: set[str] = set()
        for doc in batch:
            terms.update(doc.term_counts)
        self.expand_vocabulary(terms)
        return self.update(batch)

    def infer_many(self, docs: Sequence[Document]) -> np.ndarray:
        """Normalized document-topic posteriors; out-of-vocabulary terms are ignored."""
        gamma, _ = self._e_step([self._bow(d, strict=False) for d in docs], None, collect=False)
        return gamma / gamma.sum(axis=1, keepdims=True)

    def infer(self, doc: Document) -> np.ndarray:
        return self.infer_many([doc])[0]

    def perplexity(self, heldout: Sequence[Document]) -> float:
        """Per-token perplexity of held-out documents.

        Each document's likelihood uses the posterior-mean topic mixture
        and the posterior-mean topic-term distributions, so a model whose
        topics are uniform over V terms scores exactly V.
        """
        bows = [self._bow(d, strict=False) for d in heldout]
        n_tokens = sum(float(c.sum()) for _, c in bows)
        if n_tokens == 0:
            raise NoTokens("held-out set has no in-vocabulary tokens")
        gamma, _ = self._e_step(bows, None, collect=False)
        theta = gamma / gamma.sum(axis=1, keepdims=True)
        beta = self.lam / self.lam.sum(axis=1, keepdims=True)
        log_lik = 0.0
        for d, (ids, cts) in enumerate(bows):
            if len(ids):
                log_lik += float(cts @ np.log(theta[d] @ beta[:, ids]))
        return float(np.exp(-log_lik / n_tokens))

    def variational_bound(self, docs: Sequence[Document], total_docs: float | None = None) -> float:
        """Evidence lower bound on ``docs`` (scaled to ``total_docs`` for the topic terms)."""
        bows = [self._bow(d, strict=False) for d in docs]
        gamma, _ = self._e_step(bows, None, collect=False)
        alpha, eta = self.config.alpha_, self.config.eta_
        elogbeta = dirichlet_expectation(self.lam)
        elogtheta = dirichlet_expectation(gamma)
        score = 0.0
        for d, (ids, cts) in enumerate(bows):
            if len(ids):
                x = elogtheta[d][:, None] + elogbeta[:, ids]
                xmax = x.max(axis=0)
                score += float(cts @ (np.log(np.exp(x - xmax).sum(axis=0)) + xmax))
        score += float(np.sum((alpha - gamma) * elogtheta))
        score += float(np.sum(gammaln(gamma) - gammaln(alpha)))
        score += float(np.sum(gammaln(alpha * self.k) - gammaln(gamma.sum(axis=1))))
        scale = (total_docs / len(docs)) if total_docs else 1.0
        score *= scale
        score += float(np.sum((eta - self.lam) * elogbeta))
        score += float(np.sum(gammaln(self.lam) - gammaln(eta)))
        score += float(np.sum(gammaln(eta * self.num_terms) - gammaln(self.lam.sum(axis=1))))
        return score

    def top_terms(self, topic: int, n: int = 10) -> list[tuple[str, float]]:
        row = self.lam[topic] / self.lam[topic].sum()
        idx = np.argsort(-row, kind="stable")[:n]
        return [(self.vocab.terms[i], float(row[i])) for i in idx]

    def copy(self) -> "TopicModel":
        return TopicModel(self.config, Vocabulary(list(self.vocab.terms), dict(self.vocab.ids)),
                          self.lam.copy(), self.t)


def rebuild(config: LdaConfig, docs: Iterable[Document], batch_size: int = 1) -> TopicModel:
    """Build a fresh model by streaming ``docs`` from scratch."""
    model = TopicModel(config)
    batch: list[Document] = []
    for doc in docs:
        batch.append(doc)
        if len(batch) == batch_size:
            model.learn(batch)
            batch = []
    if batch:
        model.learn(batch)
    return model
