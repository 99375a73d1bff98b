"""File formats: layered-embedding binaries (LEB), TSV manifests,
CM score text files and named-tensor checkpoints.

All binary formats are little-endian. Parsers reject malformed input
as a whole and report where it broke.
"""
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LEB_MAGIC = b"LEB1"
LEB_VERSION = 1
LEB_HEADER = struct.Struct("<4sIIIIB")  # 21 bytes
CKPT_MAGIC = b"MFAC"
CKPT_VERSION = 1

LABELS = ("spoof", "bonafide")


class FormatError(ValueError):
    """Base class for parse failures."""


class BadMagicError(FormatError):
    pass


class BadVersionError(FormatError):
    pass


class BadDtypeError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class SizeMismatchError(FormatError):
    pass


class DuplicateNameError(FormatError):
    pass


class ManifestError(FormatError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ScoreFileError(FormatError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _read_source(source):
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if hasattr(source, "read"):
        return source.read()
    return Path(source).read_bytes()


def _write_dest(destination, data):
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        Path(destination).write_bytes(data)
    return len(data)


# ---------------------------------------------------------------- LEB


def leb_bytes(values):
    values = np.asarray(values)
    if values.ndim != 3 or min(values.shape) < 1:
        raise ValueError(f"embeddings must be a non-empty L x T x D stack, got {values.shape}")
    L, T, D = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    return LEB_HEADER.pack(LEB_MAGIC, LEB_VERSION, L, T, D, 0) + payload


def write_leb(values, destination):
    """Write an ``L x T x D`` float32 stack; returns the byte count."""
    return _write_dest(destination, leb_bytes(values))


def read_leb(source):
    data = _read_source(source)
    if len(data) < LEB_HEADER.size:
        if data[:4] != LEB_MAGIC[: len(data[:4])]:
            raise BadMagicError(f"bad magic {data[:4]!r}")
        raise TruncatedError(f"header needs {LEB_HEADER.size} bytes, got {len(data)}")
    magic, version, L, T, D, dtype = LEB_HEADER.unpack_from(data)
    if magic != LEB_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != LEB_VERSION:
        raise BadVersionError(f"unsupported LEB version {version}")
    if dtype != 0:
        raise BadDtypeError(f"unsupported dtype code {dtype}")
    if min(L, T, D) < 1:
        raise SizeMismatchError(f"zero extent in header ({L}, {T}, {D})")
    need = 4 * L * T * D
    payload = data[LEB_HEADER.size:]
    if len(payload) < need:
        raise TruncatedError(f"payload has {len(payload)} bytes, header declares {need}")
    if len(payload) > need:
        raise SizeMismatchError(f"{len(payload) - need} trailing bytes after payload")
    arr = np.frombuffer(payload, dtype="<f4").reshape(L, T, D)
    return arr.astype(np.float32)


# ----------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    path: str
    label: str

    @property
    def target(self):
        """1 for bonafide, 0 for spoof."""
        return LABELS.index(self.label)


def parse_manifest(text):
    entries = []
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ManifestError(lineno, f"expected 3 tab-separated fields, got {len(fields)}")
        utt_id, path, label = fields
        if not utt_id or any(c.isspace() for c in utt_id):
            raise ManifestError(lineno, f"invalid utterance id {utt_id!r}")
        if not path:
            raise ManifestError(lineno, "empty path")
        if label not in LABELS:
            raise ManifestError(lineno, f"unknown label {label!r}")
        if utt_id in seen:
            raise ManifestError(lineno, f"duplicate utterance id {utt_id!r} (first at line {seen[utt_id]})")
        seen[utt_id] = lineno
        entries.append(ManifestEntry(utt_id, path, label))
    return entries


def format_manifest(entries):
    return "".join(f"{e.utt_id}\t{e.path}\t{e.label}\n" for e in entries)


def read_manifest(path):
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


# ------------------------------------------------------------- scores


def write_scores(records):
    """Format ``(utt_id, score)`` pairs as ASVspoof CM score lines."""
    lines = []
    for utt_id, score in records:
        score = float(score)
        if not math.isfinite(score):
            raise ValueError(f"non-finite score for {utt_id}")
        lines.append(f"{utt_id} {score:#.6g}\n")
    return "".join(lines)


def read_scores(text):
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ScoreFileError(lineno, f"expected 'utt_id score', got {line!r}")
        try:
            score = float(fields[1])
        except ValueError:
            raise ScoreFileError(lineno, f"unparseable score {fields[1]!r}") from None
        if not math.isfinite(score):
            raise ScoreFileError(lineno, "non-finite score")
        records.append((fields[0], score))
    return records


# --------------------------------------------------------- checkpoint


def checkpoint_bytes(tensors):
    items = list(tensors.items()) if hasattr(tensors, "items") else list(tensors)
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise DuplicateNameError(f"duplicate tensor name {dup!r}")
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(items))]
    for name, value in items:
        value = np.asarray(value)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(tensors, destination):
    """Write an ordered name -> array mapping (or ``(name, array)`` pairs);
    returns the byte count."""
    return _write_dest(destination, checkpoint_bytes(tensors))


def load_checkpoint(source):
    data = _read_source(source)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedError(f"truncated while reading {what} at byte {pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    magic = data[:4]
    if magic != CKPT_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    pos = 4
    version, count = struct.unpack("<II", take(8, "header"))
    if version != CKPT_VERSION:
        raise BadVersionError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        if name in tensors:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name}"))
        n = int(np.prod(dims, dtype=np.int64))
        raw = take(4 * n, f"data of {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(data):
        raise SizeMismatchError(f"{len(data) - pos} trailing bytes after {count} tensors")
    return tensors
