"""Feature banks and the "OODB" binary file format.

A bank holds the penultimate-layer features of n samples, optionally their
classification logits and integer labels, and optionally the final linear
layer (W, b) of the classifier that produced them.

File format ("OODB", version 1)
-------------------------------
All multi-byte integers are little-endian. The header is exactly 28 bytes::

    offset  size  field
    0       4     magic, ASCII "OODB"
    4       4     version, uint32 = 1
    8       4     n, uint32 (sample count)
    12      4     d, uint32 (feature dimension)
    16      4     K, uint32 (class count)
    20      1     flags, uint8: bit0 has_logits, bit1 has_labels, bit2 has_head
    21      7     zero padding

The payload follows immediately, with no other bytes before, between, or
after the sections:

1. features: n*d float32 LE, row-major
2. logits:   n*K float32 LE, row-major      (present iff bit0)
3. labels:   n   int32 LE                   (present iff bit1)
4. head:     K*d float32 LE row-major (W), then K float32 LE (b)
                                            (present iff bit2)

Values are float32 on disk and widened to float64 in memory.

Subsampling RNG
---------------
``subsample_bank`` draws ``ceil(alpha_percent/100 * n)`` distinct row
indices with ``numpy.random.Generator(numpy.random.PCG64(seed))`` via
``Generator.choice(n, size=count, replace=False)`` and returns the rows in
ascending original order. PCG64 plus NumPy's choice algorithm is the
documented, deterministic rule; any implementation reproducing it will
select identical rows for identical (n, alpha_percent, seed).
"""

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BankFormatError, DataError
from .validation import as_float_matrix, as_float_vector, as_int_vector

MAGIC = b"OODB"
VERSION = 1
HEADER_STRUCT = struct.Struct("<4sIIIIB7x")
HEADER_SIZE = HEADER_STRUCT.size  # 28

FLAG_LOGITS = 1
FLAG_LABELS = 2
FLAG_HEAD = 4


@dataclass
class FeatureBank:
    """n feature vectors with optional logits and labels.

    features: (n, d) float64; logits: (n, K) float64 or None;
    labels: (n,) int64 with values in [0, K) or None.
    """

    features: np.ndarray
    K: int
    logits: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = as_float_matrix(self.features, "features")
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise DataError(f"bank must have n >= 1 and d >= 1, got {n}x{d}")
        self.K = int(self.K)
        if self.K < 1:
            raise DataError(f"K must be >= 1, got {self.K}")
        if self.logits is not None:
            self.logits = as_float_matrix(self.logits, "logits")
            if self.logits.shape != (n, self.K):
                raise DataError(
                    f"logits shape {self.logits.shape} != ({n}, {self.K})"
                )
        if self.labels is not None:
            self.labels = as_int_vector(self.labels, "labels")
            if self.labels.shape != (n,):
                raise DataError(f"labels shape {self.labels.shape} != ({n},)")
            if self.labels.min() < 0 or self.labels.max() >= self.K:
                raise DataError("labels must lie in [0, K)")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def take(self, rows):
        """Bank restricted to the given row indices (order preserved)."""
        rows = np.asarray(rows)
        return FeatureBank(
            features=self.features[rows],
            K=self.K,
            logits=None if self.logits is None else self.logits[rows],
            labels=None if self.labels is None else self.labels[rows],
        )


@dataclass
class ClassifierHead:
    """Final linear layer: W is (K, d), b is (K,)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = as_float_matrix(self.W, "W")
        self.b = as_float_vector(self.b, "b")
        if self.b.shape[0] != self.W.shape[0]:
            raise DataError(
                f"b has length {self.b.shape[0]}, W has {self.W.shape[0]} rows"
            )

    @property
    def K(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    def logits(self, features):
        """W @ z + b for one feature vector or a batch."""
        features = np.asarray(features, dtype=np.float64)
        return features @ self.W.T + self.b


def with_logits(bank: FeatureBank, head: ClassifierHead) -> FeatureBank:
    """New bank whose logits are recomputed from the head."""
    if head.d != bank.d:
        raise DataError(f"head dimension {head.d} != bank dimension {bank.d}")
    return FeatureBank(
        features=bank.features,
        K=head.K,
        logits=head.logits(bank.features),
        labels=bank.labels,
    )


def _check_head_matches(bank: FeatureBank, head: ClassifierHead):
    if head.d != bank.d or head.K != bank.K:
        raise DataError(
            f"head is {head.K}x{head.d}, bank expects K={bank.K}, d={bank.d}"
        )


def write_bank(bank: FeatureBank, head: ClassifierHead | None, path) -> None:
    """Write a bank (and optional head) in the OODB format."""
    if head is not None:
        _check_head_matches(bank, head)
    flags = 0
    if bank.logits is not None:
        flags |= FLAG_LOGITS
    if bank.labels is not None:
        flags |= FLAG_LABELS
    if head is not None:
        flags |= FLAG_HEAD
    header = HEADER_STRUCT.pack(MAGIC, VERSION, bank.n, bank.d, bank.K, flags)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(bank.features, dtype="<f4").tobytes())
        if bank.logits is not None:
            fh.write(np.ascontiguousarray(bank.logits, dtype="<f4").tobytes())
        if bank.labels is not None:
            fh.write(np.ascontiguousarray(bank.labels, dtype="<i4").tobytes())
        if head is not None:
            fh.write(np.ascontiguousarray(head.W, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(head.b, dtype="<f4").tobytes())


def expected_payload_size(n, d, K, flags):
    size = 4 * n * d
    if flags & FLAG_LOGITS:
        size += 4 * n * K
    if flags & FLAG_LABELS:
        size += 4 * n
    if flags & FLAG_HEAD:
        size += 4 * K * d + 4 * K
    return size


def read_bank(path):
    """Read an OODB file. Returns (FeatureBank, ClassifierHead or None)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise BankFormatError(f"file has {len(raw)} bytes, header needs {HEADER_SIZE}")
    magic, version, n, d, K, flags = HEADER_STRUCT.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BankFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise BankFormatError(f"unsupported version {version}")
    payload = raw[HEADER_SIZE:]
    expected = expected_payload_size(n, d, K, flags)
    if len(payload) < expected:
        raise BankFormatError(
            f"truncated payload: {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise BankFormatError(
            f"oversized payload: {len(payload)} bytes, header declares {expected}"
        )

    pos = 0

    def section(count, dtype):
        nonlocal pos
        nbytes = count * 4
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=pos)
        pos += nbytes
        return arr

    features = section(n * d, "<f4").reshape(n, d).astype(np.float64)
    logits = None
    labels = None
    head = None
    if flags & FLAG_LOGITS:
        logits = section(n * K, "<f4").reshape(n, K).astype(np.float64)
    if flags & FLAG_LABELS:
        labels = section(n, "<i4").astype(np.int64)
    if flags & FLAG_HEAD:
        W = section(K * d, "<f4").reshape(K, d).astype(np.float64)
        b = section(K, "<f4").astype(np.float64)
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise BankFormatError("head contains non-finite entries")
        head = ClassifierHead(W=W, b=b)

    if not np.all(np.isfinite(features)):
        raise BankFormatError("features contain non-finite entries")
    if logits is not None and not np.all(np.isfinite(logits)):
        raise BankFormatError("logits contain non-finite entries")
    try:
        bank = FeatureBank(features=features, K=K, logits=logits, labels=labels)
    except DataError as exc:
        raise BankFormatError(str(exc)) from exc
    return bank, head


def subsample_count(n, alpha_percent):
    return int(math.ceil(alpha_percent / 100.0 * n))


def subsample_bank(
    bank: FeatureBank, alpha_percent: float, seed: int, stratified: bool = False
) -> FeatureBank:
    """Uniform subsample of ceil(alpha_percent/100 * n) rows without
    replacement, deterministic per seed (see module docstring for the RNG
    rule). Rows are returned in ascending original order.

    With ``stratified=True`` (requires labels) the same rule is applied
    class by class in ascending class id, taking the per-class ceiling, so
    the total may slightly exceed the global count.
    """
    if not (0.0 < alpha_percent <= 100.0):
        raise DataError(f"alpha_percent must be in (0, 100], got {alpha_percent}")
    if bank.n < 1:
        raise DataError("bank is empty")
    rng = np.random.Generator(np.random.PCG64(seed))
    if stratified:
        if bank.labels is None:
            raise DataError("stratified subsampling requires labels")
        picked = []
        for cls in np.unique(bank.labels):
            rows = np.flatnonzero(bank.labels == cls)
            count = subsample_count(rows.size, alpha_percent)
            picked.append(rows[rng.choice(rows.size, size=count, replace=False)])
        rows = np.sort(np.concatenate(picked))
    else:
        count = subsample_count(bank.n, alpha_percent)
        rows = np.sort(rng.choice(bank.n, size=count, replace=False))
    return bank.take(rows)


def read_bank_csv(path, n_features, n_logits=0, has_label=False, K=None):
    """Read a bank from CSV laid out as: feature columns, then logit
    columns, then an optional integer label column. Column counts are not
    inferred; they come from the caller (the command line).
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            rows.append([float(cell) for cell in rec])
    if not rows:
        raise DataError(f"{path} holds no data rows")
    data = np.asarray(rows, dtype=np.float64)
    expected = n_features + n_logits + (1 if has_label else 0)
    if data.shape[1] != expected:
        raise DataError(
            f"{path} has {data.shape[1]} columns, layout expects {expected}"
        )
    features = data[:, :n_features]
    logits = data[:, n_features : n_features + n_logits] if n_logits else None
    labels = None
    if has_label:
        labels = data[:, -1]
        if np.any(labels != np.round(labels)):
            raise DataError("label column must hold integers")
        labels = labels.astype(np.int64)
    if K is None:
        if n_logits:
            K = n_logits
        elif labels is not None:
            K = int(labels.max()) + 1
        else:
            raise DataError("K must be given when the CSV has no logits or labels")
    return FeatureBank(features=features, K=K, logits=logits, labels=labels)
