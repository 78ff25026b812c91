"""Arithmetic over GF(2^8) and a small linear solver.

The field is fixed: reduction polynomial 0x11B, log/antilog tables built
from the generator 0x03.  Addition is XOR.  All heavy operations go
through numpy uint8 arrays and a precomputed 256x256 product table, which
is fast enough for desk-scale decoding.
"""

from __future__ import annotations

import numpy as np

POLY = 0x11B
GENERATOR = 0x03

_exp = np.zeros(510, dtype=np.uint8)
_log = np.zeros(256, dtype=np.int64)
_x = 1
for _i in range(255):
    _exp[_i] = _x
    _log[_x] = _i
    _x = (_x << 1) ^ _x  # multiply by 0x03
    if _x & 0x100:
        _x ^= POLY
    _x &= 0xFF
_exp[255:510] = _exp[:255]

EXP = _exp
LOG = _log

# full product table: MUL[a, b] = a*b in GF(256); 64 KiB, built once
MUL = np.zeros((256, 256), dtype=np.uint8)
_nz = np.arange(1, 256)
MUL[1:, 1:] = EXP[(LOG[_nz][:, None] + LOG[_nz][None, :]) % 255]

INV = np.zeros(256, dtype=np.uint8)
INV[1:] = EXP[255 - LOG[_nz]]


def gf_mul(a: int, b: int) -> int:
    """Product of two field elements."""
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    """Multiplicative inverse; a must be nonzero."""
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(2^8)")
    return int(INV[a])


def gf_dot(coefs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """XOR-accumulated product of coefs (n,) with values (n,) or (n, L)."""
    if len(coefs) == 0:
        width = values.shape[1:] if values.ndim > 1 else ()
        return np.zeros(width, dtype=np.uint8)
    if values.ndim == 1:
        return np.bitwise_xor.reduce(MUL[coefs, values])
    return np.bitwise_xor.reduce(MUL[coefs[:, None], values], axis=0)


class SparseVector(dict):
    """Coefficient vector over a global packet-id space.

    Maps packet id -> nonzero coefficient.  Plain dict with the invariant
    that zero coefficients are never stored.
    """

    def add_scaled(self, other: "SparseVector", coef: int) -> None:
        if coef == 0:
            return
        for pid, c in other.items():
            v = self.get(pid, 0) ^ gf_mul(coef, c)
            if v:
                self[pid] = v
            else:
                self.pop(pid, None)


class InconsistentSystemError(Exception):
    """A contradictory row was met; equations built from true packet
    values can never conflict, so this indicates a simulator bug."""


def rref(matrix: np.ndarray, ncols: int) -> dict[int, int]:
    """In-place reduced row echelon form over GF(2^8).

    `matrix` is uint8 with shape (rows, ncols + rhs_width); columns past
    `ncols` are treated as the right-hand side.  Returns {pivot column:
    row index}.
    """
    nrows = matrix.shape[0]
    pivots: dict[int, int] = {}
    r = 0
    for c in range(ncols):
        hits = np.nonzero(matrix[r:, c])[0]
        if len(hits) == 0:
            continue
        pr = r + int(hits[0])
        if pr != r:
            matrix[[r, pr]] = matrix[[pr, r]]
        if matrix[r, c] != 1:
            matrix[r] = MUL[INV[matrix[r, c]], matrix[r]]
        col = matrix[:, c].copy()
        col[r] = 0
        upd = np.nonzero(col)[0]
        if len(upd):
            # columns left of c are already zero in the pivot row
            matrix[upd, c:] ^= MUL[col[upd][:, None], matrix[r, c:][None, :]]
        pivots[c] = r
        r += 1
        if r == nrows:
            break
    return pivots


def append_reduced(matrix: np.ndarray, pivots: dict[int, int], row: np.ndarray,
                   ncols: int) -> tuple[np.ndarray, bool]:
    """Reduce `row` against an RREF `matrix` and absorb it if independent.

    Returns the (possibly reallocated) matrix and whether rank grew.
    Raises InconsistentSystemError when the reduced row is 0 = nonzero.
    """
    row = row.copy()
    for c, r in pivots.items():
        if row[c]:
            row ^= MUL[row[c], matrix[r]]
    lead = np.nonzero(row[:ncols])[0]
    if len(lead) == 0:
        if row[ncols:].any():
            raise InconsistentSystemError("contradictory equation")
        return matrix, False
    c = int(lead[0])
    if row[c] != 1:
        row = MUL[INV[row[c]], row]
    col = matrix[:, c].copy()
    upd = np.nonzero(col)[0]
    if len(upd):
        matrix[upd] ^= MUL[col[upd][:, None], row[None, :]]
    matrix = np.vstack([matrix, row])
    pivots[c] = matrix.shape[0] - 1
    return matrix, True


class LinearSystem:
    """Rows of (SparseVector, payload) over a set of unknown packet ids."""

    def __init__(self, unknowns, payload_width: int = 1):
        self.unknowns = sorted(unknowns)
        self.payload_width = payload_width
        self.rows: list[tuple[SparseVector, np.ndarray]] = []

    def add_row(self, coeffs: SparseVector, payload) -> None:
        payload = np.atleast_1d(np.asarray(payload, dtype=np.uint8))
        if set(coeffs) - set(self.unknowns):
            raise ValueError("row support outside the declared unknowns")
        self.rows.append((coeffs, payload))


def solve(system: LinearSystem) -> tuple[dict[int, np.ndarray], set[int]]:
    """Gaussian elimination; returns (solved values, unresolved ids).

    When rank equals the number of unknowns the second element is empty.
    Contradictory rows raise InconsistentSystemError.
    """
    ids = system.unknowns
    col_of = {pid: i for i, pid in enumerate(ids)}
    n = len(ids)
    w = system.payload_width
    m = np.zeros((len(system.rows), n + w), dtype=np.uint8)
    for i, (coeffs, payload) in enumerate(system.rows):
        for pid, c in coeffs.items():
            m[i, col_of[pid]] ^= c
        m[i, n:] = payload
    pivots = rref(m, n)
    for i in range(m.shape[0]):
        if not m[i, :n].any() and m[i, n:].any():
            raise InconsistentSystemError("contradictory equation in system")
    solved: dict[int, np.ndarray] = {}
    for c, r in pivots.items():
        if np.count_nonzero(m[r, :n]) == 1:
            solved[ids[c]] = m[r, n:].copy()
    unresolved = {pid for pid in ids if pid not in solved}
    return solved, unresolved
