"""Problem data: return panels, preference coefficients and panel file I/O.

A :class:`ReturnPanel` stores the raw returns ``R`` (periods x assets), the
sample mean ``mu`` and the centered matrix ``A = R - 1 mu^T``.  Every moment
of a portfolio is a function of ``z = A x``, so the panel is the only data
object the solver ever touches.

Two on-disk formats are supported:

* CSV, UTF-8, comma separated, one period per line, with an optional single
  header row of asset identifiers.
* Binary: the 4 magic bytes ``b"MVSK"``, little-endian ``u32 T``, ``u32 n``,
  then ``T*n`` little-endian float64 values in row-major order.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_coefficients, check_returns
from .exceptions import DataError, DomainError, ParseError

MAGIC = b"MVSK"
_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Immutable return panel.

    Attributes
    ----------
    R : ndarray of shape (T, n)
        Simple returns, one row per period.
    mu : ndarray of shape (n,)
        Sample mean ``R.T @ 1 / T``.
    A : ndarray of shape (T, n)
        Centered returns ``R - 1 mu^T``.
    asset_ids : list of str or None
    """

    R: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    asset_ids: list | None = None

    def __post_init__(self):
        for arr in (self.R, self.mu, self.A):
            arr.setflags(write=False)

    @property
    def T(self):
        return self.R.shape[0]

    @property
    def n(self):
        return self.R.shape[1]

    def __repr__(self):
        return f"ReturnPanel(T={self.T}, n={self.n})"


def center_panel(R, asset_ids=None):
    """Build a :class:`ReturnPanel` from raw returns.

    Raises
    ------
    DimensionError
        If ``T < 2``.
    DataError
        If any entry is non-finite.
    """
    R = np.array(check_returns(R), dtype=np.float64, order="C", copy=True)
    mu = R.mean(axis=0)
    # a constant column has that constant as its exact mean; the summed mean can be off by an ulp
    const = R.min(axis=0) == R.max(axis=0)
    mu[const] = R[0, const]
    A = np.ascontiguousarray(R - mu[np.newaxis, :])
    if asset_ids is not None:
        asset_ids = [str(a) for a in asset_ids]
        if len(asset_ids) != R.shape[1]:
            raise DataError(f"{len(asset_ids)} asset ids for {R.shape[1]} columns")
    return ReturnPanel(R=R, mu=mu, A=A, asset_ids=asset_ids)


@dataclass(frozen=True)
class PreferenceCoefficients:
    """Nonnegative weights on the four moments.

    ``origin`` records where the weights came from: ``"crra(6)"``, a stress
    profile name such as ``"balanced"``, or ``"custom"``.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    origin: str = field(default="custom", compare=False)

    def __post_init__(self):
        check_coefficients(self.as_array())

    def as_array(self):
        return np.array([self.c1, self.c2, self.c3, self.c4], dtype=np.float64)

    def __iter__(self):
        return iter((self.c1, self.c2, self.c3, self.c4))

    @classmethod
    def coerce(cls, coeffs):
        if isinstance(coeffs, cls):
            return coeffs
        c = check_coefficients(coeffs)
        return cls(*map(float, c))


def crra_coefficients(gamma):
    """Standard CRRA calibration ``(1, g/2, g(g+1)/6, g(g+1)(g+2)/24)``."""
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0:
        raise DomainError(f"CRRA risk aversion must be positive, got {gamma}")
    return PreferenceCoefficients(
        1.0,
        gamma / 2.0,
        gamma * (gamma + 1.0) / 6.0,
        gamma * (gamma + 1.0) * (gamma + 2.0) / 24.0,
        origin=f"crra({gamma:g})",
    )


def _parse_float(cell, row, col):
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r}", row=row, column=col) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite cell {cell!r}", row=row, column=col)
    return value


def _is_numeric(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv(path):
    rows = []
    asset_ids = None
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            cells = [c.strip() for c in raw]
            if width is None:
                width = len(cells)
                if not all(_is_numeric(c) for c in cells if c):
                    asset_ids = cells
                    continue
            if len(cells) != width:
                raise ParseError(
                    f"ragged row with {len(cells)} fields, expected {width}", row=lineno
                )
            row = []
            for j, cell in enumerate(cells, start=1):
                if cell == "":
                    raise ParseError("missing cell", row=lineno, column=j)
                row.append(_parse_float(cell, lineno, j))
            rows.append(row)
    if not rows:
        raise ParseError(f"no data rows in {path}")
    return np.array(rows, dtype=np.float64), asset_ids


def read_binary(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, T, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * T * n
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for T={T}, n={n}, got {len(data)}")
    R = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(T, n)
    return R.astype(np.float64), None


def _infer_format(path):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return "csv"
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary" if head == MAGIC else "csv"


def load_returns(path, format=None):
    """Read a return panel from ``path`` (``format`` is ``"csv"`` or ``"binary"``)."""
    fmt = format or _infer_format(path)
    if fmt == "csv":
        R, ids = read_csv(path)
    elif fmt in ("binary", "binary-f64", "bin"):
        R, ids = read_binary(path)
    else:
        raise ValueError(f"unknown panel format {fmt!r}")
    return center_panel(R, asset_ids=ids)


def save_returns(panel_or_R, path, format=None):
    """Write raw returns; binary round-trips bit-exactly."""
    R = panel_or_R.R if isinstance(panel_or_R, ReturnPanel) else np.asarray(panel_or_R, float)
    ids = panel_or_R.asset_ids if isinstance(panel_or_R, ReturnPanel) else None
    fmt = format or ("csv" if str(path).lower().endswith(".csv") else "binary")
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if ids:
                writer.writerow(ids)
            for row in R:
                writer.writerow([repr(float(v)) for v in row])
    else:
        T, n = R.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, T, n))
            fh.write(np.ascontiguousarray(R, dtype="<f8").tobytes())
