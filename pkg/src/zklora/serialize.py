"""Binary wire format for proof bundles.

A bundle file is the magic ``ZKLB``, one version byte, then a single
recursively encoded value.  Values carry one tag byte each; composite
values are dataclasses from a fixed registry, encoded as their fields in
declaration order.  Integers are minimal-length little-endian and
varints are minimal-length LEB128, and the decoder rejects non-minimal
forms, so the encoding is canonical: two distinct byte strings never
decode to equal bundles.

Decoding is defensive -- every length is bounds-checked against the
remaining input and nesting depth is capped -- so arbitrary bytes either
decode or raise ParseError; they never crash or hang.
"""

import dataclasses
import io

from .commit import Commitment, OpeningProof
from .gadgets import (
    ElementprodProof,
    MataddProof,
    MatmulProof,
    Opening,
    RescaleProof,
    RowSliceProof,
    RsqrtProof,
    SoftmaxRowProof,
    SwigluProof,
    TensorRef,
    TransposeProof,
)
from .lookup import LookupProof
from .pipeline import BUNDLE_VERSION, EpochProof, ProofBundle, SoundnessBudget
from .sumcheck import RoundPolynomial, SumcheckProof

MAGIC = b"ZKLB"
MAX_DEPTH = 64

_T_NONE = 0
_T_FALSE = 1
_T_TRUE = 2
_T_INT = 3
_T_NEGINT = 4
_T_BYTES = 5
_T_STR = 6
_T_TUPLE = 7
_T_LIST = 8
_T_OBJ = 9

# Registry order is part of the wire format; append only.
_CLASSES = (
    Commitment,
    OpeningProof,
    Opening,
    RoundPolynomial,
    SumcheckProof,
    LookupProof,
    TensorRef,
    MatmulProof,
    MataddProof,
    ElementprodProof,
    TransposeProof,
    RowSliceProof,
    RescaleProof,
    SwigluProof,
    RsqrtProof,
    SoftmaxRowProof,
    SoundnessBudget,
    EpochProof,
    ProofBundle,
)
_CLASS_ID = {cls: i for i, cls in enumerate(_CLASSES)}
_FIELDS = {cls: tuple(f.name for f in dataclasses.fields(cls)) for cls in _CLASSES}


class ParseError(ValueError):
    """The byte stream is not a well-formed bundle."""


class VersionMismatch(ParseError):
    """The file is a bundle, but from an unsupported format version."""


class TruncatedFile(ParseError):
    """The byte stream ends mid-value."""


# ---------------------------------------------------------------------------
# encoding


def _write_uvarint(out, value):
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.write(bytes((byte | 0x80,)))
        else:
            out.write(bytes((byte,)))
            return


def _encode(out, value):
    if value is None:
        out.write(bytes((_T_NONE,)))
    elif value is True:
        out.write(bytes((_T_TRUE,)))
    elif value is False:
        out.write(bytes((_T_FALSE,)))
    elif isinstance(value, int):
        magnitude = value if value >= 0 else -value
        raw = magnitude.to_bytes((magnitude.bit_length() + 7) // 8, "little")
        out.write(bytes((_T_INT if value >= 0 else _T_NEGINT,)))
        _write_uvarint(out, len(raw))
        out.write(raw)
    elif isinstance(value, bytes):
        out.write(bytes((_T_BYTES,)))
        _write_uvarint(out, len(value))
        out.write(value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out.write(bytes((_T_STR,)))
        _write_uvarint(out, len(raw))
        out.write(raw)
    elif isinstance(value, (tuple, list)):
        out.write(bytes((_T_TUPLE if isinstance(value, tuple) else _T_LIST,)))
        _write_uvarint(out, len(value))
        for item in value:
            _encode(out, item)
    elif type(value) in _CLASS_ID:
        out.write(bytes((_T_OBJ,)))
        _write_uvarint(out, _CLASS_ID[type(value)])
        for name in _FIELDS[type(value)]:
            _encode(out, getattr(value, name))
    else:
        raise TypeError("cannot serialize %r" % type(value).__name__)


def dump_value(value, magic):
    """Serialize any supported value under a four-byte file magic."""
    if len(magic) != 4:
        raise ValueError("file magic must be four bytes")
    out = io.BytesIO()
    out.write(magic)
    out.write(bytes((BUNDLE_VERSION,)))
    _encode(out, value)
    return out.getvalue()


def dumps(bundle):
    """Serialize a proof bundle to bytes."""
    if not isinstance(bundle, ProofBundle):
        raise TypeError("expected a ProofBundle, got %r" % type(bundle).__name__)
    return dump_value(bundle, MAGIC)


def save_bundle(bundle, path):
    data = dumps(bundle)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


# ---------------------------------------------------------------------------
# decoding


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def remaining(self):
        return len(self.data) - self.pos

    def take(self, count):
        if count > self.remaining():
            raise TruncatedFile(
                "need %d bytes at offset %d, have %d"
                % (count, self.pos, self.remaining())
            )
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def byte(self):
        return self.take(1)[0]

    def uvarint(self):
        result = 0
        shift = 0
        while True:
            byte = self.byte()
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                if byte == 0 and shift:
                    raise ParseError("non-minimal varint")
                return result
            shift += 7
            if shift > 63:
                raise ParseError("varint too large")


def _decode(reader, depth):
    if depth > MAX_DEPTH:
        raise ParseError("nesting too deep")
    tag = reader.byte()
    if tag == _T_NONE:
        return None
    if tag == _T_TRUE:
        return True
    if tag == _T_FALSE:
        return False
    if tag in (_T_INT, _T_NEGINT):
        length = reader.uvarint()
        raw = reader.take(length)
        if length and raw[-1] == 0:
            raise ParseError("non-minimal integer")
        value = int.from_bytes(raw, "little")
        if tag == _T_NEGINT:
            if value == 0:
                raise ParseError("negative zero")
            value = -value
        return value
    if tag == _T_BYTES:
        return reader.take(reader.uvarint())
    if tag == _T_STR:
        try:
            return reader.take(reader.uvarint()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("bad string: %s" % exc) from None
    if tag in (_T_TUPLE, _T_LIST):
        count = reader.uvarint()
        if count > reader.remaining():
            raise TruncatedFile("collection of %d items cannot fit" % count)
        items = [_decode(reader, depth + 1) for _ in range(count)]
        return tuple(items) if tag == _T_TUPLE else items
    if tag == _T_OBJ:
        class_id = reader.uvarint()
        if class_id >= len(_CLASSES):
            raise ParseError("unknown object kind %d" % class_id)
        cls = _CLASSES[class_id]
        values = [_decode(reader, depth + 1) for _ in _FIELDS[cls]]
        try:
            return cls(*values)
        except (TypeError, ValueError) as exc:
            raise ParseError("bad %s: %s" % (cls.__name__, exc)) from None
    raise ParseError("unknown tag %d" % tag)


def load_value(data, magic):
    """Parse bytes written by dump_value under the same file magic."""
    reader = _Reader(data)
    if reader.take(4) != magic:
        raise ParseError("bad file magic (expected %r)" % magic)
    version = reader.byte()
    if version != BUNDLE_VERSION:
        raise VersionMismatch(
            "file format version %d, supported version %d"
            % (version, BUNDLE_VERSION)
        )
    value = _decode(reader, 0)
    if reader.remaining():
        raise ParseError("%d trailing bytes after value" % reader.remaining())
    return value


def loads(data):
    """Parse bundle bytes; raises ParseError (or a subclass) on bad input."""
    bundle = load_value(data, MAGIC)
    if not isinstance(bundle, ProofBundle):
        raise ParseError("top-level value is not a proof bundle")
    return bundle


def load_bundle(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


# ---------------------------------------------------------------------------
# commitment key files


KEY_MAGIC = b"ZKCK"


def save_key(key, path):
    """Write a commitment key: derivation seed plus derived generators."""
    payload = (
        key.group.order,
        key.max_vars,
        key.seed,
        key.generators,
        key.blinding_generator,
    )
    data = dump_value(payload, KEY_MAGIC)
    with open(path, "wb") as fh:
        fh.write(data)


def load_key(path):
    """Read a key file; re-derives from the seed and fails on mismatch."""
    from .commit import keygen
    from .group import group_for_modulus

    with open(path, "rb") as fh:
        payload = load_value(fh.read(), KEY_MAGIC)
    try:
        order, max_vars, seed, generators, blind = payload
        rebuilt = keygen(max_vars, seed, group_for_modulus(order))
    except (TypeError, ValueError) as exc:
        raise ParseError("bad key file: %s" % exc) from None
    if rebuilt.generators != generators or rebuilt.blinding_generator != blind:
        raise ParseError("key file generators do not match their derivation seed")
    return rebuilt
