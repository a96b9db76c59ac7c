"""Order-independent summation helpers.

Every reduction in the inference path goes through :func:`exact_group_sum`,
which adds float64 values *exactly*; rounding happens only when the exact
total is folded back into a double. The result for a group is therefore a function of the multiset of values in that
group, never of the order they arrived in. That is what makes the sequential
path, the staged pipeline (with any number of partitions) and permuted inputs
agree bit for bit.

How it works: a nonnegative double is ``mant * 2**(exp - 53)`` with a 53-bit
integer mantissa. Placed on a fixed absolute bit grid, the mantissa straddles
at most three 27-bit limbs. Each limb is summed with ``np.bincount``; partial
sums stay below ``2**53`` and are therefore exact in float64. Carries are then
propagated in int64, leaving a canonical limb vector per group, which is
rounded to the nearest double from its top 55 bits plus a sticky bit.
"""

from __future__ import annotations

import numpy as np

_LIMB_BITS = 27
_LIMB_MASK = (1 << _LIMB_BITS) - 1
# bit offset of the grid origin; keeps every normal double at a nonnegative position
_GRID_OFFSET = 1130
# partial limb sums stay exact while a group has fewer than 2**(53 - 27) members
MAX_GROUP_SIZE = 1 << (53 - _LIMB_BITS)

DENSE_KEY_LIMIT = 1 << 22


def _limbs(groups: np.ndarray, values: np.ndarray, n_groups: int) -> tuple[int, np.ndarray]:
    """Exact per-group sums as carry-normalised limb matrices.

    Returns ``(lo_limb, acc)`` where ``acc[g, k]`` holds the 27-bit digit of
    group ``g`` at absolute limb ``lo_limb + k``.
    """
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValueError("exact summation needs finite nonnegative values")
    nz = values > 0
    if not nz.all():
        groups, values = groups[nz], values[nz]
    if values.size == 0:
        return 0, np.zeros((n_groups, 1), dtype=np.int64)

    frac, exp = np.frexp(values)
    mant = np.ldexp(frac, 53).astype(np.int64)
    pos = exp.astype(np.int64) - 53 + _GRID_OFFSET
    if pos.min() < 0:
        raise ValueError("value too small for the summation grid")
    limb = pos // _LIMB_BITS
    off = pos - limb * _LIMB_BITS
    lo_limb = int(limb.min())
    limb -= lo_limb
    # two spare limbs on top absorb carries
    n_limbs = int(limb.max()) + 3 + 2

    keep = _LIMB_BITS - off
    chunks = (
        (mant & ((np.int64(1) << keep) - 1)) << off,
        (mant >> keep) & _LIMB_MASK,
        mant >> (keep + _LIMB_BITS),
    )
    base = groups * n_limbs + limb
    size = n_groups * n_limbs
    acc = np.zeros(size, dtype=np.int64)
    for j, chunk in enumerate(chunks):
        acc += np.bincount(base + j, weights=chunk, minlength=size).astype(np.int64)
    acc = acc.reshape(n_groups, n_limbs)
    _carry(acc)
    return lo_limb, acc


def _carry(acc: np.ndarray) -> None:
    for k in range(acc.shape[1] - 1):
        carry = acc[:, k] >> _LIMB_BITS
        acc[:, k] &= _LIMB_MASK
        acc[:, k + 1] += carry


def _fold(lo_limb: int, acc: np.ndarray) -> np.ndarray:
    """Correctly rounded (nearest, ties to even) double of each limb vector."""
    n_groups, width = acc.shape
    # two zero limbs underneath so every nonzero top limb has two below it
    acc = np.concatenate([np.zeros((n_groups, 2), dtype=np.int64), acc], axis=1)
    lo_limb -= 2
    nonzero = acc != 0
    any_nz = nonzero.any(axis=1)
    top = width + 1 - np.argmax(nonzero[:, ::-1], axis=1)
    top = np.where(any_nz, top, 2)
    rows = np.arange(n_groups)
    l1, l2, l3 = acc[rows, top], acc[rows, top - 1], acc[rows, top - 2]
    if np.any(l1 >> _LIMB_BITS):
        raise OverflowError("limb overflow in exact summation")
    # bits in the top limb, then how many of l3's low bits fall below the 55-bit window
    bits = np.frexp(l1.astype(np.float64))[1].astype(np.int64)
    shift = np.maximum(bits - 1, 0)
    head = (((l1 << _LIMB_BITS) | l2) << (_LIMB_BITS - shift)) | (l3 >> shift)
    below = np.cumsum(nonzero, axis=1)[rows, top - 3 + (top < 3)] * (top >= 3) > 0
    sticky = ((l3 & ((np.int64(1) << shift) - 1)) != 0) | below | ((head & 1) != 0)
    mant = head >> 2
    half = ((head >> 1) & 1) != 0
    mant += half & (sticky | ((mant & 1) != 0))
    exp = (lo_limb + top - 2) * _LIMB_BITS + shift + 2 - _GRID_OFFSET
    return np.where(any_nz, np.ldexp(mant.astype(np.float64), exp), 0.0)


def _align(lo: int, acc: np.ndarray, new_lo: int, width: int) -> np.ndarray:
    out = np.zeros((acc.shape[0], width), dtype=np.int64)
    shift = lo - new_lo
    out[:, shift : shift + acc.shape[1]] = acc
    return out


def exact_group_sum(groups: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    """Sum ``values`` into ``n_groups`` bins, exactly, regardless of order.

    ``groups`` holds the bin index of every value. Values must be finite and
    nonnegative. Returns a float64 array of length ``n_groups``.
    """
    groups = np.asarray(groups, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if groups.shape != values.shape:
        raise ValueError("groups and values must have the same shape")
    if n_groups == 0:
        return np.zeros(0)
    return _fold(*_limbs(groups, values, n_groups))


def group_keys(keys: np.ndarray, key_space: int) -> tuple[np.ndarray, np.ndarray]:
    """Map int64 ``keys`` to dense group ids.

    Returns ``(unique_keys, inverse)`` with ``unique_keys`` ascending and
    ``unique_keys[inverse] == keys``. Small key spaces use a counting pass
    instead of a sort.
    """
    keys = np.asarray(keys, dtype=np.int64)
    if keys.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if key_space <= DENSE_KEY_LIMIT:
        present = np.bincount(keys, minlength=key_space) > 0
        unique = np.flatnonzero(present).astype(np.int64)
        lookup = np.full(key_space, -1, dtype=np.int64)
        lookup[unique] = np.arange(unique.size, dtype=np.int64)
        return unique, lookup[keys]
    unique, inverse = np.unique(keys, return_inverse=True)
    return unique.astype(np.int64), inverse.astype(np.int64).reshape(-1)


def keyed_sum(keys: np.ndarray, values: np.ndarray, key_space: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact per-key sums. Returns ``(unique_keys, sums, counts)`` sorted by key."""
    unique, inverse = group_keys(keys, key_space)
    sums = exact_group_sum(inverse, values, unique.size)
    counts = np.bincount(inverse, minlength=unique.size).astype(np.int64)
    if counts.size and counts.max() >= MAX_GROUP_SIZE:
        raise OverflowError("group too large for exact summation")
    return unique, sums, counts


class KeyedExactSum:
    """Streaming version of :func:`keyed_sum`.

    Blocks of ``(keys, values)`` are added one at a time; the exact partial
    sums are kept as limb vectors, so the final result is bitwise the same
    as one ``keyed_sum`` over the concatenation, whatever the blocking.
    """

    def __init__(self, key_space: int, flush_size: int = 1 << 22):
        self.key_space = key_space
        self.flush_size = flush_size
        self._keys = np.zeros(0, dtype=np.int64)
        self._counts = np.zeros(0, dtype=np.int64)
        self._lo = 0
        self._acc = np.zeros((0, 1), dtype=np.int64)
        self._pending: list[tuple[np.ndarray, np.ndarray]] = []
        self._pending_size = 0

    def add(self, keys: np.ndarray, values: np.ndarray) -> None:
        keys = np.asarray(keys, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if keys.shape != values.shape:
            raise ValueError("keys and values must have the same shape")
        if keys.size == 0:
            return
        # small blocks are batched; merging costs scale with the number of distinct keys
        self._pending.append((keys.reshape(-1), values.reshape(-1)))
        self._pending_size += keys.size
        if self._pending_size >= self.flush_size:
            self._flush()

    def _flush(self) -> None:
        if not self._pending:
            return
        if len(self._pending) == 1:
            keys, values = self._pending[0]
        else:
            keys = np.concatenate([k for k, _ in self._pending])
            values = np.concatenate([v for _, v in self._pending])
        self._pending, self._pending_size = [], 0
        unique, inverse = group_keys(keys, self.key_space)
        counts = np.bincount(inverse, minlength=unique.size).astype(np.int64)
        if counts.max() >= MAX_GROUP_SIZE:
            raise OverflowError("block group too large for exact summation")
        lo, acc = _limbs(inverse, values, unique.size)
        self._merge(unique, counts, lo, acc)

    def _merge(self, unique, counts, lo, acc) -> None:
        if not self._keys.size:
            self._keys, self._counts, self._lo, self._acc = unique, counts, lo, acc
            return
        new_lo = min(lo, self._lo)
        width = max(lo + acc.shape[1], self._lo + self._acc.shape[1]) - new_lo + 1
        keys = np.concatenate([self._keys, unique])
        merged, inverse = group_keys(keys, self.key_space)
        out = np.zeros((merged.size, width), dtype=np.int64)
        total = np.zeros(merged.size, dtype=np.int64)
        # keys are unique within each side, so fancy-index += is safe
        old, new = inverse[: self._keys.size], inverse[self._keys.size :]
        out[old] += _align(self._lo, self._acc, new_lo, width)
        out[new] += _align(lo, acc, new_lo, width)
        _carry(out)
        total[old] += self._counts
        total[new] += counts
        self._keys, self._counts, self._lo, self._acc = merged, total, new_lo, out

    def result(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(unique_keys, sums, counts)`` sorted by key."""
        self._flush()
        return self._keys.copy(), _fold(self._lo, self._acc), self._counts.copy()
