import hashlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evoqa.errors import DocumentTooLarge, EmptyDocument, FileNotReadable, NotUtf8
from evoqa.ingest import estimate_tokens, fingerprint, load_document


def test_load_document_counts(tmp_path):
    path = tmp_path / "doc.txt"
    path.write_text("Hello world.", encoding="utf-8")
    doc = load_document(path)
    assert doc.char_count == 12
    assert doc.token_estimate == 3
    assert doc.text == "Hello world."
    assert doc.origin_path == str(path)


def test_load_document_recomputable_id(tmp_path):
    path = tmp_path / "doc.txt"
    path.write_text("some content here", encoding="utf-8")
    doc = load_document(path)
    assert doc.doc_id == fingerprint(doc.text)


def test_whitespace_only_rejected(tmp_path):
    path = tmp_path / "doc.txt"
    path.write_text("\n\n \t", encoding="utf-8")
    with pytest.raises(EmptyDocument):
        load_document(path)


def test_10k_chars(tmp_path):
    path = tmp_path / "doc.txt"
    path.write_text("a" * 10_000, encoding="utf-8")
    assert load_document(path).token_estimate == 2500


def test_missing_file(tmp_path):
    with pytest.raises(FileNotReadable):
        load_document(tmp_path / "nope.txt")


def test_not_utf8(tmp_path):
    path = tmp_path / "doc.txt"
    path.write_bytes(b"\xff\xfe\x00bad")
    with pytest.raises(NotUtf8):
        load_document(path)


def test_char_cap(tmp_path):
    path = tmp_path / "doc.txt"
    path.write_text("x" * 101, encoding="utf-8")
    with pytest.raises(DocumentTooLarge):
        load_document(path, max_chars=100)


def test_markdown_ingested_verbatim(tmp_path):
    md = "# Title\n\n- item *one*\n"
    path = tmp_path / "doc.md"
    path.write_text(md, encoding="utf-8")
    assert load_document(path, format_hint="markdown").text == md


def test_roundtrip_preserves_text(tmp_path):
    text = "line one\nline two\n\tunicode: é中\n"
    path = tmp_path / "doc.txt"
    path.write_text(text, encoding="utf-8")
    assert load_document(path).text == text


def test_estimate_tokens_rule():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2


@given(st.text(), st.text())
def test_estimate_tokens_monotone(a, b):
    assert estimate_tokens(a) <= estimate_tokens(a + b)


def test_fingerprint_matches_sha256():
    # independent oracle: hashlib applied directly
    for text in ["", "a", "b", "hello é"]:
        assert fingerprint(text) == hashlib.sha256(text.encode("utf-8")).hexdigest()
    assert fingerprint("") == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")


@given(st.lists(st.text(), max_size=30, unique=True))
def test_fingerprint_injective_on_corpus(texts):
    digests = {fingerprint(t) for t in texts}
    assert len(digests) == len(texts)
