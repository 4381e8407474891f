"""Source document loading, validation, and fingerprinting.

Every prompt in the pipeline is grounded in one SourceDocument; the
document fingerprint doubles as a cache key for judge evaluations.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DocumentTooLarge, EmptyDocument, FileNotReadable, NotUtf8

DEFAULT_MAX_CHARS = 400_000


def fingerprint(text: str) -> str:
    """Lowercase hex SHA-256 of the UTF-8 bytes; stable across platforms."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def estimate_tokens(text: str) -> int:
    """Rough token count: ceil(chars / 4). Order-of-magnitude budgeting only."""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    text: str
    char_count: int
    token_estimate: int
    origin_path: str

    @classmethod
    def from_text(cls, text: str, origin_path: str = "<memory>") -> "SourceDocument":
        if not text.strip():
            raise EmptyDocument(f"document is empty or whitespace-only: {origin_path}")
        return cls(
            doc_id=fingerprint(text),
            text=text,
            char_count=len(text),
            token_estimate=estimate_tokens(text),
            origin_path=origin_path,
        )


def load_document(path, format_hint: str = "plain",
                  max_chars: int = DEFAULT_MAX_CHARS) -> SourceDocument:
    """Load a UTF-8 plain-text or markdown file verbatim.

    Markdown is not stripped; the hint exists only for provenance. Files
    larger than max_chars are rejected rather than chunked.
    """
    if format_hint not in ("plain", "markdown"):
        raise ValueError(f"unknown format_hint: {format_hint}")
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise FileNotReadable(f"cannot read {p}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NotUtf8(f"{p} is not valid UTF-8: {exc}") from exc
    if len(text) > max_chars:
        raise DocumentTooLarge(
            f"{p} has {len(text)} chars, cap is {max_chars}; split upstream")
    return SourceDocument.from_text(text, origin_path=str(p))
