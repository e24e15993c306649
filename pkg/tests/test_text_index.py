import pytest

from trr.errors import EmptyCorpusError, UnknownIdError
from trr.knowledge_base import PresetRecord
from trr.text_index import (
    build_text_index,
    score_all,
    text_confidence,
    text_score,
    tokenize,
)

from oracles import ref_tfidf_cosine


def record(rid, style, feature=""):
    return PresetRecord(
        record_id=rid,
        song_name="song",
        style=style,
        feature_text=feature,
        parameters={"Gain": 0.5},
        resolved_audio_path=f"/p/{rid}.wav",
    )


class TestTokenizer:
    def test_basic(self):
        assert tokenize("Blues Solo") == ["blues", "solo"]

    def test_punctuation_and_runs(self):
        assert tokenize("Warm-Vintage  tone!") == ["warm", "vintage", "tone"]

    def test_digits_kept_underscore_split(self):
        assert tokenize("mk2_fuzz") == ["mk2", "fuzz"]

    def test_empty(self):
        assert tokenize("  --  ") == []

    def test_unicode_lowercase(self):
        assert tokenize("Überdrive") == ["überdrive"]


class TestIndexBuild:
    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            build_text_index([])

    def test_token_multisets(self):
        index = build_text_index([record("r1", "Blues Solo", "solo lead")])
        counts = index.token_counts["r1"]
        assert counts == {"blues": 1, "solo": 2, "lead": 1}

    def test_document_frequency(self):
        index = build_text_index([
            record("r1", "big reverb"),
            record("r2", "small reverb"),
            record("r3", "dry"),
        ])
        assert index.doc_freq["reverb"] == 2
        assert index.doc_freq["dry"] == 1
        assert index.n_docs == 3

    def test_adding_record_keeps_existing_tokens(self):
        a = build_text_index([record("r1", "warm tone")])
        b = build_text_index([record("r1", "warm tone"), record("r2", "cold fuzz")])
        assert a.token_counts["r1"] == b.token_counts["r1"]


class TestScoring:
    def test_self_query_scores_one(self):
        index = build_text_index([
            record("r1", "crunchy blues drive"),
            record("r2", "clean shimmer"),
        ])
        assert text_score(index, "crunchy blues drive", "r1") == pytest.approx(1.0)

    def test_disjoint_query_scores_zero(self):
        index = build_text_index([record("r1", "crunchy blues drive")])
        assert text_score(index, "icy glacier", "r1") == 0.0

    def test_unknown_record(self):
        index = build_text_index([record("r1", "a")])
        with pytest.raises(UnknownIdError):
            text_score(index, "a", "ghost")

    def test_matches_reference_oracle(self):
        docs = {
            "r1": "warm tube drive warm",
            "r2": "bright clean chime",
            "r3": "warm clean pad",
        }
        index = build_text_index([record(rid, text) for rid, text in docs.items()])
        doc_tokens = {rid: tokenize(text) for rid, text in docs.items()}
        for query in ("warm clean", "tube", "warm warm drive", "chime pad warm"):
            for rid in docs:
                expected = ref_tfidf_cosine(doc_tokens, tokenize(query), rid)
                assert text_score(index, query, rid) == pytest.approx(expected, abs=1e-9)

    def test_token_order_irrelevant(self):
        index = build_text_index([record("r1", "warm tube drive")])
        assert text_score(index, "drive warm tube", "r1") == pytest.approx(
            text_score(index, "tube drive warm", "r1")
        )

    def test_scores_in_unit_interval(self):
        index = build_text_index([
            record("r1", "fat fuzz wall"),
            record("r2", "thin sparkle"),
        ])
        for query in ("fat sparkle", "wall wall wall", "nothing matches"):
            for score in score_all(index, query).values():
                assert 0.0 <= score <= 1.0


class TestConfidence:
    def test_perfect_match(self):
        index = build_text_index([record("r1", "unique phrase"), record("r2", "other words")])
        assert text_confidence(index, "unique phrase") == pytest.approx(1.0)

    def test_out_of_vocabulary(self):
        index = build_text_index([record("r1", "warm tone")])
        assert text_confidence(index, "zxqv") == 0.0

    def test_equals_max_over_records(self):
        index = build_text_index([
            record("r1", "warm guitar lead"),
            record("r2", "warm pad"),
            record("r3", "metal chug"),
        ])
        query = "warm guitar tone"
        brute = max(text_score(index, query, rid) for rid in ("r1", "r2", "r3"))
        assert text_confidence(index, query) == pytest.approx(brute)
