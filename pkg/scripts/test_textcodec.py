"""
Tests for the tokenizer and vocabulary.
"""

import pytest

from agents.textcodec import PAD_ID, UNK_ID, Vocabulary, build_vocab, decode, encode, tokenize


def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("Open the Door, please!") == ["open", "the", "door", "please"]
    assert tokenize("  ...  ") == []


def test_build_vocab_assigns_ids_in_corpus_order():
    vocab = build_vocab(["go to kitchen", "go to hallway"])
    assert vocab.tokens == ["go", "to", "kitchen", "hallway"]
    assert vocab.id("go") == 2
    assert vocab.id("<pad>") == PAD_ID


def test_build_vocab_rejects_empty_corpus():
    with pytest.raises(ValueError):
        build_vocab(["", "!!"])


def test_encode_maps_unknown_words_to_unk_and_truncates():
    vocab = build_vocab(["pick up apple"])
    assert encode("pick up mango", vocab, max_len=8) == [vocab.id("pick"), vocab.id("up"), UNK_ID]
    assert len(encode("pick up apple pick up apple", vocab, max_len=4)) == 4
    assert encode("", vocab, max_len=4) == []


def test_encode_rejects_non_positive_max_len():
    with pytest.raises(ValueError):
        encode("pick up apple", build_vocab(["apple"]), max_len=0)


def test_decode_inverts_encode_for_known_words():
    vocab = build_vocab(["focus on red apple"])
    assert decode(encode("focus on red apple", vocab, 16), vocab) == ["focus", "on", "red", "apple"]
    with pytest.raises(ValueError):
        decode([len(vocab)], vocab)


def test_save_and_load(tmp_path):
    vocab = build_vocab(["move metal pot to stove"])
    path = tmp_path / "vocab.txt"
    vocab.save(str(path))
    assert path.read_text(encoding="utf-8").splitlines()[:2] == ["<pad>\t0", "<unk>\t1"]
    assert Vocabulary.load(str(path)) == vocab


def test_load_rejects_gaps(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("<pad>\t0\n<unk>\t1\napple\t3\n", encoding="utf-8")
    with pytest.raises(ValueError):
        Vocabulary.load(str(path))


def test_reserved_tokens_cannot_be_added():
    with pytest.raises(ValueError):
        Vocabulary(["<unk>"])
