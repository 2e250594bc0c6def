import math
import random

import numpy as np
import pytest

from mnemo.retrieval import VECTOR_DIM, RetrievalIndex, embed

from conftest import make_entry

SEED = 42

WORDS = [
    "coffee", "rain", "walk", "cat", "plant", "friend", "book", "river",
    "music", "dinner", "exam", "garden", "train", "letter", "photo",
]


def _random_text(rng, n_words=6):
    return " ".join(rng.choice(WORDS) for _ in range(n_words))


class TestEmbed:
    def test_empty_text_zero_vector(self):
        vec = embed("", SEED)
        assert vec.shape == (VECTOR_DIM,)
        assert not vec.any()

    def test_identical_texts_cosine_one(self):
        a, b = embed("tea and toast", SEED), embed("tea and toast", SEED)
        assert np.array_equal(a, b)
        assert math.isclose(float(a @ b), 1.0)

    def test_bag_of_words_order_invariance(self):
        assert np.array_equal(embed("red green blue", SEED), embed("blue red green", SEED))

    def test_unit_norm_or_zero(self):
        for text in ("one", "one two three", "", "a a a a"):
            norm = float(np.linalg.norm(embed(text, SEED)))
            assert math.isclose(norm, 1.0) or norm == 0.0

    def test_seed_changes_space(self):
        assert not np.array_equal(embed("coffee rain walk", 1), embed("coffee rain walk", 2))


def _build_index(texts, t0=0.0):
    index = RetrievalIndex(SEED)
    entries = []
    for i, text in enumerate(texts, start=1):
        entry = make_entry(entry_id=i, t=t0 + i * 60.0, text=text)
        index.add(entry)
        entries.append(entry)
    return index, entries


class TestKeywordScore:
    # Fixture: N=5, df(apple)=2, df(banana)=2, df(cherry)=2, df(date)=1.
    FIXTURE = [
        "apple banana apple",
        "banana cherry",
        "cherry date",
        "apple",
        "elderberry fig grape",
    ]

    def test_disjoint_vocabulary_scores_zero(self):
        index, _ = _build_index(self.FIXTURE)
        for entry_id in range(1, 6):
            assert index.keyword_score(["kumquat"], entry_id) == 0.0

    def test_unique_single_token_entry_is_maximal(self):
        index, _ = _build_index(["zebra", "yak cow", "cow bull"])
        scores = [index.keyword_score(["zebra"], i) for i in (1, 2, 3)]
        assert scores[0] == max(scores) > 0
        assert scores[1] == scores[2] == 0.0

    def test_hand_computed_tf_idf_table(self):
        index, _ = _build_index(self.FIXTURE)
        idf = math.log(1 + 5 / 2)  # shared tokens below all have df=2
        query = ["apple", "banana"]
        expected = {
            1: (2 * idf + 1 * idf) / 3,
            2: (1 * idf) / 2,
            3: 0.0,
            4: (1 * idf) / 1,
            5: 0.0,
        }
        for entry_id, want in expected.items():
            assert math.isclose(index.keyword_score(query, entry_id), want, abs_tol=1e-12)


class TestSearch:
    def test_empty_store(self):
        index = RetrievalIndex(SEED)
        assert index.search("anything", 5, 0.5) == []

    def test_k_larger_than_store_returns_all_ranked(self):
        index, entries = _build_index(["apple pie", "banana split", "apple juice"])
        result = index.search("apple", 10, 0.5)
        assert len(result) == 3
        assert result[0][1] >= result[1][1] >= result[2][1]

    def test_k_must_be_positive(self):
        index, _ = _build_index(["a"])
        with pytest.raises(ValueError):
            index.search("a", 0, 0.5)

    def test_matches_exhaustive_oracle_on_random_stores(self):
        rng = random.Random(7)
        for trial in range(10):
            texts = [_random_text(rng) for _ in range(20)]
            alpha = rng.choice([0.0, 0.3, 0.5, 1.0])
            index, entries = _build_index(texts)
            query = _random_text(rng, 3)
            got = index.search(query, 5, alpha)

            # Exhaustive scoring in plain python, recomputed from the texts.
            from mnemo.textutils import tokenize

            q_tokens = set(tokenize(query))
            q_vec = embed(query, SEED)
            n = len(texts)
            df = {}
            for text in texts:
                for token in set(tokenize(text)):
                    df[token] = df.get(token, 0) + 1
            scored = []
            for entry in entries:
                tokens = tokenize(entry.text)
                kw = sum(
                    tokens.count(tok) * math.log(1 + n / df[tok]) for tok in q_tokens if tok in tokens
                ) / len(tokens)
                cos = math.fsum(float(x) * float(y) for x, y in zip(q_vec, embed(entry.text, SEED)))
                scored.append((entry.id, alpha * kw + (1 - alpha) * cos))
            scored.sort(key=lambda p: (-p[1], -entries[p[0] - 1].t_start, p[0]))
            want = scored[:5]
            assert [i for i, _ in got] == [i for i, _ in want]
            for (_, a), (_, b) in zip(got, want):
                assert math.isclose(a, b, abs_tol=1e-9)

    def test_tie_break_newer_then_smaller_id(self):
        index = RetrievalIndex(SEED)
        index.add(make_entry(entry_id=1, t=100.0, text="same words"))
        index.add(make_entry(entry_id=2, t=200.0, text="same words"))
        index.add(make_entry(entry_id=3, t=200.0, text="same words"))
        result = index.search("same words", 3, 0.5)
        assert [i for i, _ in result] == [2, 3, 1]

    def test_deterministic(self):
        index, _ = _build_index(["apple pie", "banana bread", "cherry cake"])
        first = index.search("apple cake", 3, 0.5)
        assert index.search("apple cake", 3, 0.5) == first


class TestIndexConsistency:
    def test_incremental_equals_rebuild_after_mutations(self):
        rng = random.Random(11)
        incremental = RetrievalIndex(SEED)
        live = {}
        next_id = 1
        for step in range(120):
            action = rng.random()
            if action < 0.6 or not live:
                entry = make_entry(entry_id=next_id, t=float(step), text=_random_text(rng))
                incremental.add(entry)
                live[next_id] = entry
                next_id += 1
            elif action < 0.8:
                victim = rng.choice(sorted(live))
                incremental.remove(victim)
                del live[victim]
            else:
                target = rng.choice(sorted(live))
                updated = make_entry(
                    entry_id=target, t=live[target].t_start, text=_random_text(rng)
                )
                incremental.replace(updated)
                live[target] = updated

        rebuilt = RetrievalIndex(SEED)
        for entry in live.values():
            rebuilt.add(entry)
        assert incremental._doc_tokens == rebuilt._doc_tokens
        assert incremental._postings == rebuilt._postings
        query = "coffee rain cat"
        assert incremental.search(query, 10, 0.5) == rebuilt.search(query, 10, 0.5)
