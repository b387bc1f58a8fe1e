import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccadecode.phrase_table import (
    BEGIN,
    END,
    ContextEntry,
    ContextTable,
    context_prob,
    estimate_context_table,
    extract_phrases,
    load_context_table,
    load_phrase_inventory,
    sample_phrase,
    save_context_table,
    tokenize,
)


def captions(*texts):
    return [tokenize(t) for t in texts]


class TestTokenize:
    def test_lowercase_and_split(self):
        assert tokenize("Mike IS   holding the Bucket.") == \
            ("mike", "is", "holding", "the", "bucket.")

    def test_empty(self):
        assert tokenize("   ") == ()


class TestInventory:
    def test_dedup(self, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_text("is holding\nis holding\n")
        inv = load_phrase_inventory(path)
        assert inv == {("is", "holding")}

    def test_empty_line_reports_lineno(self, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_text("is holding\n\nthe owl\n")
        with pytest.raises(ValueError, match=":2"):
            load_phrase_inventory(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_phrase_inventory(path)


class TestExtractPhrases:
    def test_small_enumeration(self):
        got = extract_phrases(captions("a b"), 2)
        assert got == {("a",), ("b",), ("a", "b")}

    def test_dedup_repeats(self):
        assert extract_phrases(captions("a a a"), 1) == {("a",)}

    def test_matches_bruteforce_enumerator(self):
        rng = np.random.default_rng(5)
        vocab = ["w%d" % k for k in range(6)]
        corpus = [tuple(rng.choice(vocab, size=rng.integers(1, 9)))
                  for _ in range(10)]
        max_len = 4
        got = extract_phrases(corpus, max_len)
        expected = set()
        for c in corpus:
            for length in range(1, max_len + 1):
                for start in range(0, len(c) - length + 1):
                    expected.add(tuple(c[start:start + length]))
        assert got == expected

    def test_bad_max_len(self):
        with pytest.raises(ValueError):
            extract_phrases([], 0)


class TestEstimate:
    def test_symmetric_toy_counts(self):
        corpus = captions("a b c", "a d c")
        table = estimate_context_table(corpus, {("b",), ("d",)})
        assert context_prob(table, "a", "c", ("b",)) == pytest.approx(0.5)
        assert context_prob(table, "a", "c", ("d",)) == pytest.approx(0.5)
        assert table.domain_size == 2
        assert table.num_contexts == 1

    def test_boundary_markers(self):
        corpus = captions("a b", "c b")
        table = estimate_context_table(corpus, extract_phrases(corpus, 2))
        assert context_prob(table, BEGIN, "b", ("a",)) == pytest.approx(0.5)
        assert context_prob(table, BEGIN, "b", ("c",)) == pytest.approx(0.5)
        assert context_prob(table, "a", END, ("b",)) == pytest.approx(1.0)
        assert context_prob(table, BEGIN, END, ("a", "b")) == pytest.approx(0.5)

    def test_overlapping_occurrences_all_counted(self):
        corpus = captions("a a a")
        table = estimate_context_table(corpus, {("a",)})
        # occurrences: (<begin>,a), (a,a), (a,<end>) -> one count each
        assert context_prob(table, "a", "a", ("a",)) == 1.0
        assert context_prob(table, BEGIN, "a", ("a",)) == 1.0
        assert context_prob(table, "a", END, ("a",)) == 1.0

    def _random_corpus(self, seed, n=30):
        rng = np.random.default_rng(seed)
        vocab = ["w%d" % k for k in range(5)]
        return [tuple(rng.choice(vocab, size=rng.integers(1, 7)))
                for _ in range(n)]

    def test_probs_sum_to_one_and_rational(self):
        corpus = self._random_corpus(11)
        table = estimate_context_table(corpus, extract_phrases(corpus, 3))
        for entry in table.entries.values():
            assert abs(float(entry.probs.sum()) - 1.0) <= 1e-12
            total = int(entry.counts.sum())
            for k in range(len(entry.phrases)):
                assert entry.probs[k] == int(entry.counts[k]) / total

    def test_corpus_order_invariance(self):
        corpus = self._random_corpus(13)
        inv = extract_phrases(corpus, 3)
        a = estimate_context_table(corpus, inv)
        b = estimate_context_table(corpus[::-1], inv)
        assert set(a.entries) == set(b.entries)
        for ctx in a.entries:
            assert a.entries[ctx].phrases == b.entries[ctx].phrases
            assert np.array_equal(a.entries[ctx].counts, b.entries[ctx].counts)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            estimate_context_table([], set())


class TestSampling:
    def test_degenerate_categorical(self):
        table = ContextTable({("l", "r"): ContextEntry.from_counts({("p",): 3})})
        rng = np.random.default_rng(0)
        for _ in range(25):
            assert sample_phrase(table, "l", "r", rng) == ("p",)

    def test_frequencies_match_stored_probs(self):
        table = ContextTable({("l", "r"): ContextEntry.from_counts(
            {("x",): 3, ("y",): 1})})  # probs 0.75 / 0.25
        rng = np.random.default_rng(123)
        draws = 100_000
        hits = sum(sample_phrase(table, "l", "r", rng) == ("x",)
                   for _ in range(draws))
        assert abs(hits / draws - 0.75) <= 0.01

    def test_unseen_context_is_none(self):
        table = ContextTable({("l", "r"): ContextEntry.from_counts({("p",): 1})})
        assert sample_phrase(table, "l", "zzz", np.random.default_rng(0)) is None

    def test_never_samples_zero_prob(self):
        corpus = [tokenize("a b c"), tokenize("a d c"), tokenize("a d c")]
        table = estimate_context_table(corpus, {("b",), ("d",)})
        rng = np.random.default_rng(7)
        for _ in range(500):
            p = sample_phrase(table, "a", "c", rng)
            assert context_prob(table, "a", "c", p) > 0.0


class TestContextProb:
    def test_absent_entry_zero(self):
        corpus = captions("a b c")
        table = estimate_context_table(corpus, {("b",)})
        assert context_prob(table, "a", "c", ("zzz",)) == 0.0
        assert context_prob(table, "q", "r", ("b",)) == 0.0

    def test_multiword_segment_must_be_single_phrase(self):
        corpus = captions("a b c d")
        table = estimate_context_table(corpus, {("b", "c"), ("b",), ("c",)})
        assert context_prob(table, "a", "d", ("b", "c")) == 1.0
        # "b c" as two separate phrases is not summed over
        assert context_prob(table, "a", "c", ("b",)) == 1.0
        assert context_prob(table, "a", "d", ("b",)) == 0.0


class TestSerialization:
    def _table(self):
        corpus = captions("mike is holding the owl",
                          "jenny is holding the owl",
                          "mike is near the table")
        return estimate_context_table(corpus, extract_phrases(corpus, 3))

    def test_roundtrip(self, tmp_path):
        table = self._table()
        path = tmp_path / "q.tsv"
        save_context_table(table, path)
        back = load_context_table(path)
        assert set(back.entries) == set(table.entries)
        for ctx in table.entries:
            a, b = table.entries[ctx], back.entries[ctx]
            assert a.phrases == b.phrases
            assert np.array_equal(a.counts, b.counts)
            assert np.array_equal(a.probs, b.probs)
        assert back.domain_size == table.domain_size

    def test_roundtrip_validates_inventory(self, tmp_path):
        table = self._table()
        path = tmp_path / "q.tsv"
        save_context_table(table, path)
        with pytest.raises(ValueError, match="inventory"):
            load_context_table(path, inventory={("mike",)})

    def test_rejects_unnormalized_probs(self, tmp_path):
        path = tmp_path / "q.tsv"
        path.write_text("a\tb\tc\t1\t0.4\na\td\tc\t1\t0.6\n")
        with pytest.raises(ValueError, match="count/total"):
            load_context_table(path)

    def test_rejects_malformed_lines(self, tmp_path):
        path = tmp_path / "q.tsv"
        path.write_text("a\tb\tc\t1\n")
        with pytest.raises(ValueError, match="5 tab-separated"):
            load_context_table(path)
        path.write_text("a\tb\tc\t1\t1.0\na\tb\tc\t1\t1.0\n")
        with pytest.raises(ValueError, match="duplicate"):
            load_context_table(path)

    def test_markers_written_literally(self, tmp_path):
        corpus = captions("a b")
        table = estimate_context_table(corpus, extract_phrases(corpus, 2))
        path = tmp_path / "q.tsv"
        save_context_table(table, path)
        text = path.read_text()
        assert "<begin>\ta b\t<end>\t" in text


@settings(max_examples=40)
@given(st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=5),
                min_size=1, max_size=8))
def test_q_normalization_property(raw_corpus):
    corpus = [tuple(c) for c in raw_corpus]
    table = estimate_context_table(corpus, extract_phrases(corpus, 3))
    for entry in table.entries.values():
        assert abs(float(entry.probs.sum()) - 1.0) <= 1e-12
        total = int(entry.counts.sum())
        assert all(entry.probs[k] == int(entry.counts[k]) / total
                   for k in range(len(entry.phrases)))
