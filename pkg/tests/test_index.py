import math
import random
from importlib import resources

import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_bm25
from qrw.errors import DuplicateDocumentError, FormatError, UnknownDocumentError, ValidationError
from qrw.index import (
    BM25Params,
    Document,
    InvertedIndex,
    Ranking,
    TokenizerConfig,
    WeightedQuery,
    bm25_score,
    build_index,
    load_stopwords,
    read_corpus,
    search,
    tokenize,
    write_corpus,
)
from conftest import WORDS, random_corpus

NO_STOP = TokenizerConfig(stopwords=False)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_lowercase_split_no_stopwords(self):
        assert tokenize("Do Goldfish grow?", NO_STOP) == ["do", "goldfish", "grow"]

    def test_default_drops_stopwords(self):
        assert tokenize("do goldfish grow") == ["goldfish", "grow"]

    def test_do_is_in_bundled_list(self):
        text = resources.files("qrw.data").joinpath("stopwords_en_v1.txt").read_text()
        assert "do" in text.split()
        assert "do" in load_stopwords()

    def test_split_on_underscore_and_punctuation(self):
        assert tokenize("snake_case, kebab-case;x", NO_STOP) == ["snake", "case", "kebab", "case", "x"]

    def test_case_kept_when_lowercase_off(self):
        assert tokenize("The Goldfish", TokenizerConfig(lowercase=False)) == ["Goldfish"]

    def test_stemming(self):
        pytest.importorskip("nltk")
        assert tokenize("growing goldfish", TokenizerConfig(stem=True)) == ["grow", "goldfish"]

    @given(st.text())
    def test_deterministic_and_nonempty_tokens(self, text):
        toks = tokenize(text)
        assert toks == tokenize(text)
        assert all(toks)


class TestBuildIndex:
    def test_empty(self):
        idx = build_index([])
        assert idx.doc_count == 0 and idx.postings == {} and idx.avg_doc_len == 0.0

    def test_two_docs(self):
        idx = build_index([Document("d1", "a b a"), Document("d2", "b c")], NO_STOP)
        assert idx.postings == {"a": [("d1", 2)], "b": [("d1", 1), ("d2", 1)], "c": [("d2", 1)]}
        assert idx.avg_doc_len == 2.5
        assert idx.doc_lengths == {"d1": 3, "d2": 2}

    def test_duplicate_rejected_with_id(self):
        with pytest.raises(DuplicateDocumentError, match="d7"):
            build_index([Document("d7", "x"), Document("d7", "y")])

    def test_permutation_invariant(self, rng):
        docs = random_corpus(rng, 100)
        shuffled = list(docs)
        random.Random(99).shuffle(shuffled)
        assert build_index(docs).stats() == build_index(shuffled).stats()

    def test_invariants(self, rng):
        idx = build_index(random_corpus(rng, 60), NO_STOP)
        for term, plist in idx.postings.items():
            assert [d for d, _ in plist] == sorted(d for d, _ in plist)
            for d, tf in plist:
                assert d in idx.doc_lengths and tf >= 1
        assert abs(idx.avg_doc_len - sum(idx.doc_lengths.values()) / idx.doc_count) < 1e-9
        for d, n in idx.doc_lengths.items():
            assert n == len(tokenize(idx.document(d).text, NO_STOP))

    def test_snapshot_round_trip(self, tmp_path, rng):
        idx = build_index(random_corpus(rng, 40))
        idx.save(tmp_path / "a.json")
        loaded = InvertedIndex.load(tmp_path / "a.json")
        assert loaded == idx
        loaded.save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_snapshot_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(FormatError):
            InvertedIndex.load(tmp_path / "x.json")

    def test_corpus_jsonl(self, tmp_path):
        docs = [Document("a", "héllo wörld"), Document("b", "")]
        write_corpus(docs, tmp_path / "c.jsonl")
        assert list(read_corpus(tmp_path / "c.jsonl")) == docs
        (tmp_path / "bad.jsonl").write_text('{"doc_id": "a", "text": "x"}\n{"text": "y"}\n')
        with pytest.raises(FormatError, match="line 2"):
            list(read_corpus(tmp_path / "bad.jsonl"))


class TestBM25:
    def test_single_doc_hand_value(self):
        # N=1, df=1: idf = ln(0.5/1.5 + 1) = ln(4/3); tf=1, len=avg: tf part = 2.2/2.2 = 1
        idx = build_index([Document("d", "a")], NO_STOP)
        assert bm25_score(idx, WeightedQuery("q", [("a", 1.0)]), "d") == pytest.approx(0.287682072451780927, abs=1e-15)

    def test_absent_term_scores_zero(self):
        idx = build_index([Document("d", "a b")], NO_STOP)
        q = WeightedQuery("q", [("zzz", 1.0)])
        assert bm25_score(idx, q, "d") == 0.0
        assert search(idx, q).entries == []

    def test_unknown_doc(self):
        idx = build_index([Document("d", "a")])
        with pytest.raises(UnknownDocumentError, match="nope"):
            bm25_score(idx, WeightedQuery("q", [("a", 1.0)]), "nope")

    def test_weight_linearity(self, rng):
        idx = build_index(random_corpus(rng, 30), NO_STOP)
        for d in list(idx.doc_lengths)[:10]:
            one = bm25_score(idx, WeightedQuery("q", [("alpha", 1.0)]), d)
            two = bm25_score(idx, WeightedQuery("q", [("alpha", 2.0)]), d)
            assert two == pytest.approx(2 * one, abs=1e-12)

    def test_robertson_idf_option(self):
        idx = build_index([Document("d1", "a"), Document("d2", "b"), Document("d3", "b")], NO_STOP)
        lucene = bm25_score(idx, WeightedQuery("q", [("a", 1.0)]), "d1")
        robertson = bm25_score(idx, WeightedQuery("q", [("a", 1.0)]), "d1", BM25Params(idf="robertson"))
        assert lucene == pytest.approx(math.log(2.5 / 1.5 + 1))
        assert robertson == pytest.approx(math.log(2.5 / 1.5))

    def test_bad_params(self):
        with pytest.raises(ValidationError):
            BM25Params(b=1.5)


class TestSearch:
    def test_empty_query(self, rng):
        idx = build_index(random_corpus(rng, 10))
        assert search(idx, WeightedQuery("q", [])).entries == []

    def test_k_must_be_positive(self):
        with pytest.raises(ValidationError):
            search(build_index([]), WeightedQuery("q", []), k=0)

    def test_ties_by_doc_id(self):
        idx = build_index([Document("b", "x y"), Document("a", "x y"), Document("c", "y y")], NO_STOP)
        ranking = search(idx, WeightedQuery("q", [("x", 1.0)]))
        assert ranking.doc_ids == ["a", "b"]
        assert ranking.entries[0].score == ranking.entries[1].score

    def test_matches_brute_force_100_docs(self, rng):
        docs = random_corpus(rng, 100)
        idx = build_index(docs, NO_STOP)
        query = [("alpha", 1.0), ("mu", 0.5), ("alpha", 0.25), ("zzz", 1.0)]
        got = search(idx, WeightedQuery("q", query), k=1000)
        expected = brute_force_bm25({d.doc_id: d.text for d in docs}, query)
        assert got.doc_ids == [d for d, _ in expected]
        for entry, (_, s) in zip(got.entries, expected):
            assert abs(entry.score - s) < 1e-9
        got.check()

    def test_cutoff_is_prefix(self, rng):
        idx = build_index(random_corpus(rng, 50), NO_STOP)
        q = WeightedQuery("q", [("beta", 1.0), ("gamma", 1.0)])
        full = search(idx, q, k=1000)
        assert search(idx, q, k=5).entries == full.entries[:5]

    def test_added_irrelevant_doc_matches_recomputation(self, rng):
        docs = random_corpus(rng, 40, vocab=WORDS[:10])
        query = [("alpha", 1.0), ("beta", 1.0)]
        extra = Document("zz-new", "rho sigma tau")
        idx = build_index(docs + [extra], NO_STOP)
        expected = dict(brute_force_bm25({d.doc_id: d.text for d in docs + [extra]}, query))
        got = search(idx, WeightedQuery("q", query))
        assert "zz-new" not in got.doc_ids
        for e in got.entries:
            assert abs(e.score - expected[e.doc_id]) < 1e-9
        before = build_index(docs, NO_STOP)
        assert all(before.df(t) == idx.df(t) for t, _ in query)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.lists(st.sampled_from(WORDS[:8]), max_size=12), min_size=1, max_size=25),
    st.lists(st.tuples(st.sampled_from(WORDS[:10]), st.floats(0, 3)), max_size=6),
)
def test_search_equals_brute_force_property(doc_words, query):
    docs = {f"d{i}": " ".join(ws) for i, ws in enumerate(doc_words)}
    idx = build_index([Document(d, t) for d, t in docs.items()], NO_STOP)
    got = search(idx, WeightedQuery("q", query), k=1000)
    expected = brute_force_bm25(docs, query)
    assert got.doc_ids == [d for d, _ in expected]
    assert all(abs(e.score - s) < 1e-9 for e, (_, s) in zip(got.entries, expected))


def test_ranking_from_scores_and_check():
    r = Ranking.from_scores("q", {"b": 1.0, "a": 1.0, "c": 2.0})
    assert r.doc_ids == ["c", "a", "b"] and [e.rank for e in r.entries] == [1, 2, 3]
    r.check()
    bad = Ranking("q", [r.entries[1], r.entries[0]])
    with pytest.raises(ValidationError):
        bad.check()
