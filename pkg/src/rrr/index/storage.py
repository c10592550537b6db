"""Single-file binary index format. See docs/index-format.md."""

from __future__ import annotations

import io
import struct
from pathlib import Path

from .analysis import IndexParams
from .bm25 import InvertedIndex

MAGIC = b"RRRBM25\x00"
VERSION = 1


class IndexFormatError(ValueError):
    pass


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps(index: InvertedIndex) -> bytes:
    p = index.params
    parm = struct.pack("<ddBB", p.k1, p.b, p.stemming, p.stopwords)

    docs = io.BytesIO()
    docs.write(struct.pack("<I", index.doc_count))
    for doc_id, length in zip(index.doc_ids, index.doc_lengths):
        docs.write(_str(doc_id))
        docs.write(struct.pack("<I", length))

    terms = io.BytesIO()
    terms.write(struct.pack("<I", len(index.postings)))
    for term in sorted(index.postings):
        plist = index.postings[term]
        terms.write(_str(term))
        terms.write(struct.pack("<I", len(plist)))
        terms.write(struct.pack(f"<{2 * len(plist)}I", *(x for pair in plist for x in pair)))

    return b"".join([
        MAGIC,
        struct.pack("<H", VERSION),
        _section(b"PARM", parm),
        _section(b"DOCS", docs.getvalue()),
        _section(b"TERM", terms.getvalue()),
    ])


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError("truncated index file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def loads(data: bytes) -> InvertedIndex:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise IndexFormatError(f"unsupported index version {version}")

    sections: dict[bytes, bytes] = {}
    while r.pos < len(data):
        tag = r.take(4)
        (length,) = r.unpack("<Q")
        sections[tag] = r.take(length)
    missing = {b"PARM", b"DOCS", b"TERM"} - sections.keys()
    if missing:
        raise IndexFormatError(f"missing sections: {sorted(m.decode() for m in missing)}")

    k1, b, stemming, stopwords = struct.unpack("<ddBB", sections[b"PARM"])
    params = IndexParams(k1=k1, b=b, stemming=bool(stemming), stopwords=bool(stopwords))

    dr = _Reader(sections[b"DOCS"])
    (count,) = dr.unpack("<I")
    doc_ids, lengths = [], []
    for _ in range(count):
        doc_ids.append(dr.string())
        lengths.append(dr.unpack("<I")[0])

    tr = _Reader(sections[b"TERM"])
    (nterms,) = tr.unpack("<I")
    postings = {}
    for _ in range(nterms):
        term = tr.string()
        (n,) = tr.unpack("<I")
        flat = tr.unpack(f"<{2 * n}I")
        postings[term] = list(zip(flat[::2], flat[1::2]))
    return InvertedIndex(params=params, doc_ids=doc_ids, doc_lengths=lengths, postings=postings)


def save(index: InvertedIndex, path: str | Path) -> None:
    Path(path).write_bytes(dumps(index))


def load(path: str | Path) -> InvertedIndex:
    return loads(Path(path).read_bytes())
