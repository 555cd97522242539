"""Resource-block allocation between over-the-air FL and IT devices.

The horizon has ``M`` subcarriers and ``S`` symbols; each (symbol, subcarrier)
pair is a resource block (RB).  FL needs exactly ``d*T`` RBs in total, and the
rest go to the IT device with the strongest channel on that RB.  RBs are
scanned symbol-major (all subcarriers of symbol 0, then symbol 1, ...).

Allocators use two integer budgets.  Once FL already holds its ``d*T`` RBs
every remaining RB is forced to IT.  Once IT has reached ``M*S - d*T`` RBs
every remaining RB stays with FL.  Both budgets can only be exhausted
together at the very last RB, so at most one of the two corrections ever
changes a decision.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import _rng
from .channel import quantile_threshold
from .errors import InfeasibleError, InvalidInputError, TruncatedStreamError

FL = -1


@dataclass(frozen=True)
class AllocationBudget:
    """IT share ``p_it``, threshold ``q`` and the two integer RB budgets."""

    n_subcarriers: int
    n_symbols: int
    fl_quota: int
    n_devices: int

    def __post_init__(self):
        for name in ("n_subcarriers", "n_symbols", "n_devices"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidInputError(f"{name} must be a positive integer, got {v!r}")
        if int(self.fl_quota) != self.fl_quota or self.fl_quota < 0:
            raise InvalidInputError(f"FL demand must be a non-negative integer, got {self.fl_quota!r}")
        if self.fl_quota > self.total:
            raise InfeasibleError(self.fl_quota, self.total,
                                  math.ceil(self.fl_quota / self.n_subcarriers))

    @property
    def total(self) -> int:
        return self.n_subcarriers * self.n_symbols

    @property
    def it_quota(self) -> int:
        return self.total - self.fl_quota

    @property
    def p_it(self) -> float:
        return self.it_quota / self.total

    @property
    def q(self) -> float:
        """Best-gain threshold; infinite when IT gets nothing."""
        if self.it_quota == 0:
            return math.inf
        return quantile_threshold(self.p_it, self.n_devices)


class AllocationGrid:
    """Binary FL flags ``(S, M)`` and IT flags ``(N, S, M)``.

    The grid may be built in an inconsistent state (e.g. by a test or a
    corrupted file); :func:`validate_allocation` reports what is wrong.
    """

    def __init__(self, fl_flags, it_flags):
        self.fl_flags = np.asarray(fl_flags)
        self.it_flags = np.asarray(it_flags)
        if self.fl_flags.ndim != 2 or self.it_flags.ndim != 3:
            raise InvalidInputError("fl_flags must be (S, M) and it_flags (N, S, M)")
        if self.it_flags.shape[1:] != self.fl_flags.shape:
            raise InvalidInputError(
                f"it_flags {self.it_flags.shape} do not match fl_flags {self.fl_flags.shape}"
            )

    @classmethod
    def from_owner(cls, owner, n_devices: int) -> "AllocationGrid":
        """Build from an ``(S, M)`` array holding the IT device index or -1 for FL."""
        owner = np.asarray(owner)
        it = owner[None, :, :] == np.arange(n_devices)[:, None, None]
        return cls(owner == FL, it)

    @property
    def n_devices(self) -> int:
        return self.it_flags.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.fl_flags.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.fl_flags.shape[1]

    @property
    def owner(self) -> np.ndarray:
        """IT device per RB, -1 for FL.  Only meaningful for a valid grid."""
        it = self.it_flags.astype(bool)
        return np.where(it.any(axis=0), it.argmax(axis=0), FL)

    @property
    def fl_count(self) -> int:
        return int(np.count_nonzero(self.fl_flags))

    @property
    def fl_rb_order(self) -> np.ndarray:
        """Flat indices ``s*M + m`` of the FL RBs in symbol-major order."""
        return np.flatnonzero(self.fl_flags.astype(bool).ravel())

    def it_counts(self) -> np.ndarray:
        return self.it_flags.astype(bool).sum(axis=(1, 2))

    def __eq__(self, other):
        if not isinstance(other, AllocationGrid):
            return NotImplemented
        return (np.array_equal(self.fl_flags, other.fl_flags)
                and np.array_equal(self.it_flags, other.it_flags))

    def __repr__(self):
        return (f"AllocationGrid(N={self.n_devices}, S={self.n_symbols}, "
                f"M={self.n_subcarriers}, fl={self.fl_count})")

    # ------------------------------------------------------------ export

    def to_rle(self) -> str:
        """Run-length text: header line, then one line per symbol of ``count*code``.

        ``code`` is ``F`` for FL or the IT device index.
        """
        lines = [f"cflit-alloc/1 N={self.n_devices} S={self.n_symbols} M={self.n_subcarriers}"]
        for row in self.owner:
            cuts = np.flatnonzero(np.diff(row)) + 1
            starts = np.concatenate([[0], cuts])
            ends = np.concatenate([cuts, [row.size]])
            lines.append(" ".join(
                f"{e - s}*{'F' if row[s] == FL else int(row[s])}" for s, e in zip(starts, ends)
            ))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_rle(cls, text: str) -> "AllocationGrid":
        lines = text.strip("\n").split("\n")
        head = lines[0].split()
        if not head or head[0] != "cflit-alloc/1":
            raise InvalidInputError("not a cflit allocation file")
        dims = dict(tok.split("=") for tok in head[1:])
        N, S, M = int(dims["N"]), int(dims["S"]), int(dims["M"])
        if len(lines) - 1 != S:
            raise InvalidInputError(f"expected {S} symbol lines, found {len(lines) - 1}")
        owner = np.empty((S, M), dtype=np.int64)
        for s, line in enumerate(lines[1:]):
            pos = 0
            for tok in line.split():
                count, code = tok.split("*")
                n = int(count)
                owner[s, pos : pos + n] = FL if code == "F" else int(code)
                pos += n
            if pos != M:
                raise InvalidInputError(f"symbol {s} covers {pos} subcarriers, expected {M}")
        if owner.max(initial=FL) >= N:
            raise InvalidInputError("device index out of range")
        return cls.from_owner(owner, N)

    def summary(self, budget: AllocationBudget | None = None) -> dict:
        out = {
            "n_devices": self.n_devices,
            "n_symbols": self.n_symbols,
            "n_subcarriers": self.n_subcarriers,
            "fl_rbs": self.fl_count,
            "it_rbs_per_device": [int(c) for c in self.it_counts()],
        }
        if budget is not None:
            out["p_it"] = budget.p_it
            out["q"] = None if math.isinf(budget.q) else budget.q
        return out

    def save(self, path, budget: AllocationBudget | None = None) -> tuple[Path, Path]:
        """Write ``<path>.rle`` and ``<path>.json``."""
        base = Path(path)
        rle = base.with_suffix(".rle")
        js = base.with_suffix(".json")
        base.parent.mkdir(parents=True, exist_ok=True)
        rle.write_text(self.to_rle())
        js.write_text(json.dumps(self.summary(budget), indent=2) + "\n")
        return rle, js

    @classmethod
    def load(cls, path) -> "AllocationGrid":
        return cls.from_rle(Path(path).with_suffix(".rle").read_text())


# ---------------------------------------------------------------- allocators

def _symbols(stream, n_devices: int, n_subcarriers: int) -> Iterator[np.ndarray]:
    """Per-symbol ``(N, M)`` gains from an ``(N, S, M)`` array or an iterable."""
    if isinstance(stream, np.ndarray) and stream.ndim == 3:
        full = stream
        stream = (full[:, s, :] for s in range(full.shape[1]))
    for g in stream:
        g = np.asarray(g, dtype=float)
        if g.shape != (n_devices, n_subcarriers):
            raise InvalidInputError(f"symbol gains have shape {g.shape}, expected "
                                    f"{(n_devices, n_subcarriers)}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise InvalidInputError("gains must be finite and non-negative")
        yield g


def _scan(stream, budget: AllocationBudget, tentative) -> Iterator[np.ndarray]:
    """Yield the owner row of each symbol in turn.

    ``tentative(s, best)`` returns the IT wish for every subcarrier of symbol
    ``s`` before budget corrections.  The gains of symbol ``s`` are pulled
    from ``stream`` only when they are needed to decide that symbol.
    """
    M, S = budget.n_subcarriers, budget.n_symbols
    it_quota, fl_quota = budget.it_quota, budget.fl_quota
    gains = _symbols(stream, budget.n_devices, M)
    it_used = 0
    for s in range(S):
        if it_used == it_quota:
            # IT budget spent: the rest stays FL and no gains are needed
            yield np.full(M, FL, dtype=np.int64)
            continue
        try:
            g = next(gains)
        except StopIteration:
            raise TruncatedStreamError(
                f"gain stream ended after {s} of {S} symbols"
            ) from None
        best_dev = g.argmax(axis=0)
        best = g[best_dev, np.arange(M)]
        want = np.asarray(tentative(s, best), dtype=bool)

        # counts before each position, assuming the tentative decisions so far
        it_before = it_used + np.cumsum(want) - want
        fl_before = s * M + np.arange(M) - it_before
        it_full = np.flatnonzero(it_before >= it_quota)
        fl_full = np.flatnonzero(fl_before >= fl_quota)
        a = it_full[0] if it_full.size else M
        b = fl_full[0] if fl_full.size else M
        decide = want.copy()
        if a < b:
            decide[a:] = False
        elif b < a:
            decide[b:] = True
        it_used += int(decide.sum())
        yield np.where(decide, best_dev, FL)


def _collect(rows: Iterable[np.ndarray], budget: AllocationBudget) -> AllocationGrid:
    owner = np.stack(list(rows))
    return AllocationGrid.from_owner(owner, budget.n_devices)


def online_decisions(
    it_gain_stream, m_subcarriers: int, s_symbols: int, fl_rb_demand: int, n_devices: int
) -> Iterator[np.ndarray]:
    """Causal form of :func:`online_allocate`: yields one owner row per symbol."""
    budget = AllocationBudget(m_subcarriers, s_symbols, fl_rb_demand, n_devices)
    q = budget.q
    return _scan(it_gain_stream, budget, lambda s, best: best >= q)


def online_allocate(
    it_gain_stream, m_subcarriers: int, s_symbols: int, fl_rb_demand: int, n_devices: int
) -> AllocationGrid:
    """Threshold-based online allocation.

    An RB goes to IT when its best IT gain reaches the quantile threshold
    ``q`` of the best-of-N gain at level ``p_it``, subject to the two budget
    corrections.  Gains are consumed one symbol at a time.

    Args:
        it_gain_stream: iterable of ``(N, M)`` gain arrays in symbol order, or
            a full ``(N, S, M)`` array.
        m_subcarriers, s_symbols: grid dimensions.
        fl_rb_demand: ``d*T``, the number of RBs FL must receive.
        n_devices: number of IT devices N.

    Raises:
        InfeasibleError: ``fl_rb_demand > M*S``.
        TruncatedStreamError: the stream ends before every RB is decided.
    """
    budget = AllocationBudget(m_subcarriers, s_symbols, fl_rb_demand, n_devices)
    return _collect(
        online_decisions(it_gain_stream, m_subcarriers, s_symbols, fl_rb_demand, n_devices),
        budget,
    )


def rsca_allocate(
    it_gain_stream, m_subcarriers: int, s_symbols: int, fl_rb_demand: int, n_devices: int,
    seed=0,
) -> AllocationGrid:
    """Random allocation: each RB is offered to IT with probability ``p_it``.

    The same budget corrections as :func:`online_allocate` keep the FL count
    exact.
    """
    budget = AllocationBudget(m_subcarriers, s_symbols, fl_rb_demand, n_devices)
    rng = seed if isinstance(seed, np.random.Generator) else _rng.keyed(seed, _rng.RSCA)
    p = budget.p_it
    return _collect(_scan(it_gain_stream, budget, lambda s, best: rng.random(best.size) < p),
                    budget)


def offline_allocate(full_it_gains, fl_rb_demand: int) -> AllocationGrid:
    """Give IT the ``M*S - d*T`` RBs with the largest best gain (non-causal).

    Ties are broken in symbol-major order.
    """
    g = np.asarray(full_it_gains, dtype=float)
    if g.ndim != 3:
        raise InvalidInputError("full gains must be an (N, S, M) array")
    N, S, M = g.shape
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise InvalidInputError("gains must be finite and non-negative")
    budget = AllocationBudget(M, S, fl_rb_demand, N)
    best_dev = g.argmax(axis=0).ravel()
    best = g.max(axis=0).ravel()
    order = np.argsort(-best, kind="stable")
    owner = np.full(S * M, FL, dtype=np.int64)
    chosen = order[: budget.it_quota]
    owner[chosen] = best_dev[chosen]
    return AllocationGrid.from_owner(owner.reshape(S, M), N)


# ---------------------------------------------------------------- checks

@dataclass(frozen=True)
class AllocationReport:
    """Result of :func:`validate_allocation`; truthy when the grid is valid."""

    non_binary: list
    overlaps: list
    unassigned: list
    fl_count: int
    fl_demand: int

    @property
    def ok(self) -> bool:
        return not (self.non_binary or self.overlaps or self.unassigned) and self.fl_count == self.fl_demand

    def __bool__(self):
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        parts = []
        if self.non_binary:
            parts.append(f"{len(self.non_binary)} non-binary entries, first {self.non_binary[0]}")
        if self.overlaps:
            parts.append(f"{len(self.overlaps)} RBs assigned twice, first {self.overlaps[0]}")
        if self.unassigned:
            parts.append(f"{len(self.unassigned)} RBs unassigned, first {self.unassigned[0]}")
        if self.fl_count != self.fl_demand:
            parts.append(f"FL holds {self.fl_count} RBs, demand is {self.fl_demand}")
        return "; ".join(parts)


def validate_allocation(grid: AllocationGrid, fl_rb_demand: int, *, require_full: bool = True) -> AllocationReport:
    """Check binaryness, exclusivity and the FL count.

    Indices in the report are ``(n, s, m)`` with ``n = -1`` for the FL flag.
    With ``require_full`` every RB must be used by somebody.
    """
    o = grid.fl_flags
    b = grid.it_flags
    nb = [(-1, int(s), int(m)) for s, m in zip(*np.nonzero((o != 0) & (o != 1)))]
    nb += [tuple(int(i) for i in idx) for idx in zip(*np.nonzero((b != 0) & (b != 1)))]
    load = (b != 0).sum(axis=0) + (o != 0)
    overlaps = []
    for s, m in zip(*np.nonzero(load > 1)):
        devs = [-1] if o[s, m] else []
        devs += [int(n) for n in np.flatnonzero(b[:, s, m])]
        overlaps.extend((n, int(s), int(m)) for n in devs)
    unassigned = [(int(s), int(m)) for s, m in zip(*np.nonzero(load == 0))] if require_full else []
    return AllocationReport(nb, overlaps, unassigned, int(np.count_nonzero(o)), int(fl_rb_demand))


def partition_fl_rbs(grid: AllocationGrid, d: int) -> list[np.ndarray]:
    """Split the FL RBs into consecutive groups of ``d`` (one group per round)."""
    if int(d) != d or d < 1:
        raise InvalidInputError(f"d must be a positive integer, got {d!r}")
    order = grid.fl_rb_order
    if order.size % d:
        raise InvalidInputError(f"{order.size} FL RBs cannot be split into groups of {d}")
    return list(order.reshape(-1, int(d)))
