import numpy as np
import pytest

from cahmc import textprep as tp
from cahmc.errors import ContractError
from cahmc.textprep import (
    CLS,
    PAD,
    SEP,
    UNK,
    EmojiTable,
    Vocab,
    build_vocab,
    default_emoji_table,
    encode,
    preprocess,
    strip_entities,
    transliterate_emojis,
)

# 25 curated input/output pairs covering emoji, mentions, URLs, hashtags
# and mixed cases.  Expected values were derived by hand from the stated
# pipeline rules.
PREPROCESS_FIXTURES = [
    ("@bob I have a migraine!! http://t.co/x #sick", "i have a migraine sick"),
    ("plain lowercase words", "plain lowercase words"),
    ("@a @b https://x.y", ""),
    ("ok \U0001f637 then", "ok face_with_medical_mask then"),
    ("no emojis here", "no emojis here"),
    ("\U0001f637", "face_with_medical_mask"),
    ("@u \U0001f637 #flu", "face_with_medical_mask flu"),
    ("", ""),
    ("I LOVE this!!!", "i love this"),
    ("check www.example.com now", "check now"),
    ("fever & chills... day 3", "fever chills day 3"),
    ("#StayHome #COVID19 wash your hands", "stayhome covid19 wash your hands"),
    ("don't worry it's fine", "don't worry it's fine"),
    (
        "\U0001f912\U0001f915 feeling rough",
        "face_with_thermometer face_with_head_bandage feeling rough",
    ),
    (
        "RT @news: stroke awareness week https://news.example.org",
        "rt stroke awareness week",
    ),
    (
        "my head hurts \U0001f62d\U0001f62d\U0001f62d",
        "my head hurts loudly_crying_face loudly_crying_face loudly_crying_face",
    ),
    ("100% done with this fever \U0001f912", "100 done with this fever face_with_thermometer"),
    ("⚠️ health alert ⚠️", "warning health alert warning"),
    ("Émile café naïve", "mile caf nave"),
    ("heart attack \U0001f494 but just figuratively", "heart attack broken_heart but just figuratively"),
    ("@doc @nurse thanks \U0001f64f", "thanks folded_hands"),
    ("surgery went well ✅ recovering \U0001f3e5", "surgery went well check_mark_button recovering hospital"),
    ("u+1F9EA test tube \U0001f9ea unknown", "u1f9ea test tube unknown"),
    ("multiple    spaces\tand tabs", "multiple spaces and tabs"),
    ("#mixed @case WWW.SITE.COM http://x \U0001f637 DONE", "mixed face_with_medical_mask done"),
]


@pytest.fixture(scope="module")
def table():
    return default_emoji_table()


class TestEmojiTable:
    def test_shipped_table_is_valid(self, table):
        assert len(table.mapping) >= 60
        for name in table.mapping.values():
            assert name and all(c.islower() or c.isdigit() or c == "_" for c in name)

    def test_invalid_name_rejected(self):
        with pytest.raises(ContractError):
            EmojiTable({"\U0001f637": "Face-Mask"})

    def test_multi_codepoint_sequences_match_longest_first(self, table):
        # frowning face with variation selector must not leave the selector behind
        out = transliterate_emojis("☹️", table)
        assert out.strip() == "frowning_face"


class TestTransliterate:
    def test_known_emoji_replaced(self, table):
        assert transliterate_emojis("ok \U0001f637 then", table) == "ok  face_with_medical_mask  then"

    def test_plain_text_unchanged(self, table):
        assert transliterate_emojis("no emojis here", table) == "no emojis here"

    def test_lone_emoji_becomes_its_name(self, table):
        assert transliterate_emojis("\U0001f637", table).strip() == "face_with_medical_mask"

    def test_unknown_emoji_removed(self, table):
        assert transliterate_emojis("a \U0001f9ea b", table) == "a  b"


class TestStripEntities:
    def test_spec_example(self):
        assert (
            strip_entities("@bob I have a migraine!! http://t.co/x #sick")
            == "i have a migraine sick"
        )

    def test_identity_on_clean_text(self):
        assert strip_entities("plain lowercase words") == "plain lowercase words"

    def test_everything_removable(self):
        assert strip_entities("@a @b https://x.y") == ""

    def test_hashtag_word_retained(self):
        assert strip_entities("#flu season") == "flu season"

    def test_apostrophe_kept(self):
        assert strip_entities("don't stop") == "don't stop"


class TestPreprocess:
    @pytest.mark.parametrize("text,expected", PREPROCESS_FIXTURES)
    def test_fixture_pairs(self, table, text, expected):
        assert preprocess(text, table) == expected

    @pytest.mark.parametrize("text,expected", PREPROCESS_FIXTURES)
    def test_idempotent_on_all_fixtures(self, table, text, expected):
        once = preprocess(text, table)
        assert preprocess(once, table) == once


class TestVocab:
    def test_forced_ordering(self):
        v = build_vocab(["a a b"], min_count=1)
        assert v.tokens == ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "b"]
        assert (v.id("a"), v.id("b")) == (4, 5)

    def test_min_count_filters(self):
        v = build_vocab(["a a b"], min_count=2)
        assert "a" in v and "b" not in v

    def test_lexicographic_tie_break(self):
        v = build_vocab(["b a"], min_count=1)
        assert (v.id("a"), v.id("b")) == (4, 5)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ContractError):
            build_vocab([""], min_count=1)

    def test_roundtrip_through_file(self, tmp_path):
        v = build_vocab(["fever cough fever"], min_count=1)
        path = tmp_path / "vocab.txt"
        v.save(path)
        loaded = Vocab.load(path)
        assert loaded.tokens == v.tokens

    def test_id_token_roundtrip(self):
        v = build_vocab(["x y z z"], min_count=1)
        for i in range(len(v)):
            assert v.id(v.token(i)) == i

    def test_unknown_maps_to_unk(self):
        v = build_vocab(["known"], min_count=1)
        assert v.id("unknown_word") == UNK


class TestEncode:
    @pytest.fixture
    def vocab(self):
        return build_vocab(["fever cough headache"], min_count=1)

    def test_empty_text(self, vocab):
        np.testing.assert_array_equal(encode("", vocab, 5), [CLS, SEP, PAD, PAD, PAD])

    def test_single_token(self, vocab):
        ids = encode("fever", vocab, 5)
        assert ids[0] == CLS and ids[1] == vocab.id("fever") and ids[2] == SEP
        np.testing.assert_array_equal(ids[3:], [PAD, PAD])

    def test_truncation_to_max_len(self, vocab):
        text = " ".join(["fever"] * 100)
        ids = encode(text, vocab, 64)
        assert len(ids) == 64
        assert ids[63] == SEP
        assert np.sum(ids == vocab.id("fever")) == 62

    def test_exactly_one_sep_and_leading_cls(self, vocab):
        for text in ("", "fever", "cough headache fever", "a b c d e f g h"):
            ids = encode(text, vocab, 8)
            assert len(ids) == 8
            assert ids[0] == CLS
            assert np.sum(ids == SEP) == 1

    def test_max_len_too_small(self, vocab):
        with pytest.raises(ContractError):
            encode("x", vocab, 2)

    def test_attention_length(self, vocab):
        ids = encode("fever cough", vocab, 6)
        assert tp.attention_length(ids) == 4
