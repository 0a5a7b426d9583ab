import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import digamma

from streambl.corpus import Document
from streambl.synthetic import separable_corpus
from streambl.topicmodel import EmptyBatch, LdaConfig, NoTokens, TopicModel, rebuild, step_size


def _model(k=3, terms=("a", "b", "c"), **kw):
    m = TopicModel(LdaConfig(k=k, **kw))
    m.expand_vocabulary(terms)
    return m


def test_config_validation():
    with pytest.raises(ValueError):
        LdaConfig(k=1)
    with pytest.raises(ValueError):
        LdaConfig(kappa=0.5)
    with pytest.raises(ValueError):
        LdaConfig(kappa=1.01)
    with pytest.raises(ValueError):
        LdaConfig(tau0=-1)
    assert LdaConfig(k=4).alpha_ == 0.25 and LdaConfig(k=4).eta_ == 0.25


def test_expand_empty_set_is_noop():
    m = _model()
    before = m.lam.copy()
    assert m.expand_vocabulary(set()) == 0
    np.testing.assert_array_equal(m.lam, before)


def test_expand_adds_eta_columns():
    m = TopicModel(LdaConfig(k=4, eta=0.3))
    m.expand_vocabulary([f"t{i}" for i in range(10)])
    m.lam[:] = np.arange(40).reshape(4, 10) + 1.0
    old = m.lam.copy()
    m.expand_vocabulary({"x", "y", "z"})
    assert m.num_terms == 13
    np.testing.assert_array_equal(m.lam[:, :10], old)
    np.testing.assert_array_equal(m.lam[:, 10:], 0.3)


def test_expand_existing_term_is_idempotent():
    m = _model()
    m.expand_vocabulary({"a"})
    assert m.num_terms == 3
    assert m.vocab.terms == ["a", "b", "c"]


def test_empty_batch_leaves_model_untouched():
    m = _model()
    before = m.fingerprint()
    with pytest.raises(EmptyBatch):
        m.update([])
    assert m.fingerprint() == before and m.t == 0


def test_update_requires_known_terms():
    with pytest.raises(KeyError):
        _model().update([Document("d", {"zzz": 1})])


def _naive_lambda_hat(model, doc, rng_seed):
    """Token-level variational updates written out per word and topic."""
    k = model.k
    alpha, eta = model.config.alpha_, model.config.eta_
    lam = model.lam
    elogbeta = np.array([[digamma(lam[i, w]) - digamma(lam[i].sum()) for w in range(lam.shape[1])]
                         for i in range(k)])
    gamma = np.random.default_rng(rng_seed).gamma(100.0, 0.01, k)
    words = [(model.vocab.ids[t], c) for t, c in doc.term_counts.items()]
    for _ in range(model.config.e_step_iters):
        elogtheta = digamma(gamma) - digamma(gamma.sum())
        phi = {}
        for w, _c in words:
            raw = np.array([math.exp(elogtheta[i] + elogbeta[i, w]) for i in range(k)])
            phi[w] = raw / raw.sum()
        new = alpha + sum(c * phi[w] for w, c in words)
        done = np.mean(np.abs(new - gamma)) < model.config.e_step_tol
        gamma = new
        if done:
            break
    elogtheta = digamma(gamma) - digamma(gamma.sum())
    hat = np.full_like(lam, eta)
    for w, c in words:
        raw = np.array([math.exp(elogtheta[i] + elogbeta[i, w]) for i in range(k)])
        hat[:, w] += c * raw / raw.sum()
    return hat


def test_unit_step_replaces_lambda_with_batch_estimate():
    m = _model(k=3, terms=("a", "b", "c", "d"), tau0=1.0, kappa=1.0, seed=7)
    m.lam = np.random.default_rng(1).gamma(2.0, 1.0, m.lam.shape)
    doc = Document("d", {"a": 3, "c": 1, "d": 2})
    expected = _naive_lambda_hat(m, doc, [7, 0])
    assert step_size(0, 1.0, 1.0) == 1.0
    m.update([doc])
    np.testing.assert_allclose(m.lam, expected, rtol=1e-9, atol=1e-12)
    assert m.t == 1


def test_blended_update_matches_step_size():
    m = _model(k=3, tau0=4.0, kappa=0.75, seed=3)
    m.lam = np.random.default_rng(2).gamma(2.0, 1.0, m.lam.shape)
    old = m.lam.copy()
    doc = Document("d", {"a": 2, "b": 1})
    hat = _naive_lambda_hat(m, doc, [3, 0])
    rho = m.update([doc])
    assert rho == pytest.approx(4.0 ** -0.75)
    np.testing.assert_allclose(m.lam, (1 - rho) * old + rho * hat, rtol=1e-9)


@given(st.integers(0, 10_000), st.floats(0.0, 100.0), st.floats(0.51, 1.0))
def test_step_sizes_strictly_decrease(t, tau0, kappa):
    if tau0 + t == 0:
        return
    assert step_size(t + 1, tau0, kappa) < step_size(t, tau0, kappa)


def test_updates_are_deterministic():
    docs = separable_corpus(20)
    a = rebuild(LdaConfig(k=2, seed=5), docs)
    b = rebuild(LdaConfig(k=2, seed=5), docs)
    np.testing.assert_array_equal(a.lam, b.lam)


def test_infer_out_of_vocabulary_is_uniform():
    m = rebuild(LdaConfig(k=4), separable_corpus(10))
    np.testing.assert_allclose(m.infer(Document("q", {"zzz": 5})), 0.25, atol=0)


def test_infer_does_not_mutate():
    m = rebuild(LdaConfig(k=3), separable_corpus(10))
    before = m.fingerprint()
    m.infer(Document("q", {"a": 2, "b": 1}))
    m.perplexity([Document("q", {"a": 2})])
    assert m.fingerprint() == before


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.sampled_from(["a", "b", "zz"]), st.integers(1, 20), min_size=1))
def test_infer_returns_distribution(counts):
    m = rebuild(LdaConfig(k=3, seed=1), separable_corpus(10))
    p = m.infer(Document("q", counts))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-9


def test_sklearn_batch_lda_separates_the_corpus():
    """Independent batch LDA on the same corpus gives two pure topics."""
    from sklearn.decomposition import LatentDirichletAllocation

    X = np.array([[3, 0] if i % 2 == 0 else [0, 3] for i in range(100)])
    lda = LatentDirichletAllocation(n_components=2, doc_topic_prior=0.1, topic_word_prior=0.5,
                                    learning_method="batch", max_iter=50, random_state=0)
    theta = lda.fit_transform(X)
    assert theta[0].max() >= 0.9 and theta[1].max() >= 0.9
    assert theta[0].argmax() != theta[1].argmax()


def test_streamed_model_separates_pure_documents():
    m = TopicModel(LdaConfig(k=2, alpha=0.1, seed=0))
    m.expand_vocabulary({"a", "b"})
    for doc in separable_corpus(100):
        m.update([doc])
    pa = m.infer(Document("q", {"a": 3}))
    pb = m.infer(Document("q", {"b": 3}))
    assert pa.max() >= 0.9 and pb.max() >= 0.9
    assert pa.argmax() != pb.argmax()
    # the winning topic for "a" puts most of its weight on term a
    row = m.lam[pa.argmax()]
    assert row[m.vocab.ids["a"]] > row[m.vocab.ids["b"]]


def test_uniform_topics_have_perplexity_v():
    m = TopicModel(LdaConfig(k=3), lam=np.full((3, 0), 1.0))
    m.expand_vocabulary([f"w{i}" for i in range(7)])
    m.lam[:] = 2.5
    docs = [Document("h", {"w0": 3, "w4": 1}), Document("g", {"w6": 2})]
    assert m.perplexity(docs) == pytest.approx(7.0, rel=1e-12)


def test_perplexity_invariant_to_duplication():
    m = rebuild(LdaConfig(k=2, seed=2), separable_corpus(30))
    held = [Document("h1", {"a": 2, "b": 1}), Document("h2", {"b": 4})]
    assert m.perplexity(held) == pytest.approx(m.perplexity(held + held), rel=1e-12)


def test_perplexity_without_tokens():
    m = rebuild(LdaConfig(k=2), separable_corpus(4))
    with pytest.raises(NoTokens):
        m.perplexity([Document("h", {"unknown": 1})])


def test_perplexity_falls_with_more_batches():
    m = TopicModel(LdaConfig(k=2, alpha=0.1, seed=0))
    m.expand_vocabulary({"a", "b"})
    held = [Document("h1", {"a": 3}), Document("h2", {"b": 3})]
    scores = {}
    for i, doc in enumerate(separable_corpus(10), 1):
        m.update([doc])
        scores[i] = m.perplexity(held)
    # recorded: 1.5403 after one batch, 1.2809 after ten
    assert scores[10] < scores[1]
    assert scores[1] == pytest.approx(1.5403, abs=1e-3)
    assert scores[10] == pytest.approx(1.2809, abs=1e-3)


def test_variational_bound_is_finite_and_improves():
    m = TopicModel(LdaConfig(k=2, alpha=0.1, seed=0))
    m.expand_vocabulary({"a", "b"})
    held = [Document("h1", {"a": 3}), Document("h2", {"b": 3})]
    m.update([separable_corpus(1)[0]])
    early = m.variational_bound(held)
    for doc in separable_corpus(50):
        m.update([doc])
    assert np.isfinite(early)
    assert m.variational_bound(held) > early


def test_top_terms():
    m = TopicModel(LdaConfig(k=2, alpha=0.1, seed=0))
    m.expand_vocabulary({"a", "b"})
    for doc in separable_corpus(40):
        m.update([doc])
    firsts = {m.top_terms(i, 1)[0][0] for i in range(2)}
    assert firsts == {"a", "b"}
