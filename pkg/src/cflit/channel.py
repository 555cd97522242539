"""Block-fading Rayleigh channels and order statistics of the best IT gain.

Axis convention used throughout the package: channel arrays are indexed
``[device, symbol, subcarrier]`` so that a C-order ravel of the last two axes
follows the symbol-major scan order of the resource-block allocators.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _rng
from .errors import DomainError, InvalidConfigError, InvalidInputError

_DUMP_MAGIC = b"CFLCHAN1"
_DUMP_HEADER = struct.Struct("<8sQQQQ")


def _check_positive_int(name: str, value) -> int:
    if int(value) != value or value < 1:
        raise InvalidConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _check_order(n) -> int:
    if int(n) != n or n < 1:
        raise InvalidInputError(f"number of devices must be >= 1, got {n!r}")
    return int(n)


def tdl_power_profile(n_taps: int = 6, decay: float = 1.0) -> np.ndarray:
    """Exponential power-delay profile normalised to unit total power."""
    taps = np.arange(_check_positive_int("n_taps", n_taps))
    p = np.exp(-taps / float(decay))
    return p / p.sum()


class BlockFadingField:
    """Lazily generated block-fading channel.

    Coefficients for coherence block ``b`` are drawn from a Philox stream keyed
    by ``(seed, purpose, b)``, so any block can be produced on demand without
    materialising the whole ``devices x S x M`` grid.

    Args:
        n_devices: number of transmitters.
        n_subcarriers: M.
        n_symbols: S.
        seed: base seed.
        coherence_block_len: symbols per coherence block.
        purpose: stream tag separating e.g. FL and IT channels under one seed.
        profile: ``"iid"`` (independent CN(0,1) per subcarrier) or ``"tdl"``
            (frequency response of a tapped delay line with ``n_taps`` taps).
    """

    def __init__(
        self,
        n_devices: int,
        n_subcarriers: int,
        n_symbols: int,
        seed: int,
        coherence_block_len: int = 1,
        purpose: int = _rng.FL_CHANNEL,
        profile: str = "iid",
        n_taps: int = 6,
        tdl_decay: float = 1.0,
    ):
        self.n_devices = _check_positive_int("n_devices", n_devices)
        self.n_subcarriers = _check_positive_int("n_subcarriers", n_subcarriers)
        self.n_symbols = _check_positive_int("n_symbols", n_symbols)
        self.coherence_block_len = _check_positive_int("coherence_block_len", coherence_block_len)
        if profile not in ("iid", "tdl"):
            raise InvalidConfigError(f"unknown channel profile {profile!r}")
        self.seed = int(seed)
        self.purpose = int(purpose)
        self.profile = profile
        self._tdl = tdl_power_profile(n_taps, tdl_decay) if profile == "tdl" else None
        self.n_blocks = -(-self.n_symbols // self.coherence_block_len)

    def block(self, b: int) -> np.ndarray:
        """Coefficients of coherence block ``b`` with shape ``(devices, M)``."""
        if not 0 <= b < self.n_blocks:
            raise InvalidInputError(f"block index {b} outside [0, {self.n_blocks})")
        rng = _rng.keyed(self.seed, self.purpose, b)
        K, M = self.n_devices, self.n_subcarriers
        if self._tdl is None:
            z = rng.standard_normal((K, M, 2))
            return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)
        L = self._tdl.size
        z = rng.standard_normal((K, L, 2))
        taps = (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5 * self._tdl)
        phase = np.exp(-2j * np.pi * np.outer(np.arange(L), np.arange(M)) / M)
        return taps @ phase

    def symbol_block(self, s) -> np.ndarray:
        return np.asarray(s) // self.coherence_block_len

    def at(self, symbols, subcarriers) -> np.ndarray:
        """Coefficients at resource blocks ``(symbols[i], subcarriers[i])``.

        Returns an array of shape ``(devices, len(symbols))``.
        """
        symbols = np.asarray(symbols, dtype=np.int64)
        subcarriers = np.asarray(subcarriers, dtype=np.int64)
        if symbols.shape != subcarriers.shape or symbols.ndim != 1:
            raise InvalidInputError("symbols and subcarriers must be 1-D and equally long")
        out = np.empty((self.n_devices, symbols.size), dtype=complex)
        blocks = self.symbol_block(symbols)
        for b in np.unique(blocks):
            sel = np.nonzero(blocks == b)[0]
            out[:, sel] = self.block(int(b))[:, subcarriers[sel]]
        return out

    def symbol(self, s: int) -> np.ndarray:
        """Coefficients on every subcarrier of symbol ``s``, shape ``(devices, M)``."""
        return self.block(int(s) // self.coherence_block_len)

    def materialize(self) -> "ChannelGrid":
        K, S, M = self.n_devices, self.n_symbols, self.n_subcarriers
        coef = np.empty((K, S, M), dtype=complex)
        for b in range(self.n_blocks):
            lo = b * self.coherence_block_len
            hi = min(lo + self.coherence_block_len, S)
            coef[:, lo:hi, :] = self.block(b)[:, None, :]
        return ChannelGrid(coef, self.coherence_block_len)


@dataclass(frozen=True)
class ChannelGrid:
    """Immutable complex coefficients indexed ``[device, symbol, subcarrier]``."""

    coefficients: np.ndarray
    coherence_block_len: int = 1

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=complex)
        if coef.ndim != 3 or 0 in coef.shape:
            raise InvalidInputError(f"coefficients must be a non-empty 3-D array, got {coef.shape}")
        _check_positive_int("coherence_block_len", self.coherence_block_len)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    @property
    def n_devices(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.coefficients.shape[1]

    @property
    def n_subcarriers(self) -> int:
        return self.coefficients.shape[2]

    @property
    def gains(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    def dump(self, path) -> None:
        """Write a little-endian binary dump (header + float64 re/im pairs)."""
        header = _DUMP_HEADER.pack(
            _DUMP_MAGIC, self.n_devices, self.n_symbols, self.n_subcarriers, self.coherence_block_len
        )
        body = np.ascontiguousarray(self.coefficients).view("<f8").astype("<f8", copy=False)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body.tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "ChannelGrid":
        raw = Path(path).read_bytes()
        magic, K, S, M, coh = _DUMP_HEADER.unpack_from(raw)
        if magic != _DUMP_MAGIC:
            raise InvalidInputError(f"{path} is not a channel dump")
        data = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size)
        if data.size != 2 * K * S * M:
            raise InvalidInputError(f"{path}: expected {2 * K * S * M} floats, found {data.size}")
        coef = data.reshape(K, S, M, 2)
        return cls(coef[..., 0] + 1j * coef[..., 1], int(coh))


def sample_block_fading(
    n_devices: int,
    n_subcarriers: int,
    n_symbols: int,
    seed: int,
    coherence_block_len: int = 1,
    *,
    purpose: int = _rng.FL_CHANNEL,
    profile: str = "iid",
) -> ChannelGrid:
    """Draw a full block-fading grid of standard complex Gaussian coefficients."""
    return BlockFadingField(
        n_devices, n_subcarriers, n_symbols, seed, coherence_block_len, purpose, profile
    ).materialize()


def max_gain(gains) -> tuple[float, int]:
    """Best gain on one resource block and the (0-based) index of its device.

    Ties go to the lowest index.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise InvalidInputError("gains must be a non-empty 1-D sequence")
    if np.any(g < 0):
        raise InvalidInputError("channel gains must be non-negative")
    n = int(np.argmax(g))
    return float(g[n]), n


def best_gains(gains: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`max_gain` along axis 0 (the device axis)."""
    g = np.asarray(gains, dtype=float)
    if g.ndim < 1 or g.shape[0] == 0:
        raise InvalidInputError("gains must have a non-empty device axis")
    idx = np.argmax(g, axis=0)
    return np.take_along_axis(g, idx[None], axis=0)[0], idx


def max_gain_cdf(x, n: int):
    """CDF of the largest of ``n`` i.i.d. Exp(1) gains, ``(1 - e^-x)^n``."""
    n = _check_order(n)
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(x > 0, (-np.expm1(-np.maximum(x, 0.0))) ** n, 0.0)
    return out[()] if out.ndim == 0 else out


def max_gain_pdf(x, n: int):
    """Density of the largest of ``n`` i.i.d. Exp(1) gains (zero for x < 0)."""
    n = _check_order(n)
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    out = np.where(x >= 0, n * np.exp(-xp) * (-np.expm1(-xp)) ** (n - 1), 0.0)
    return out[()] if out.ndim == 0 else out


def quantile_threshold(p_it: float, n: int) -> float:
    """Gain threshold whose exceedance probability for the best of ``n`` is ``p_it``.

    Returns ``-ln(1 - (1 - p_it)^(1/n))``; equals 0 when ``p_it == 1``.

    Raises:
        DomainError: ``p_it <= 0`` (no finite threshold exists).
        InvalidInputError: ``p_it > 1`` or ``n < 1``.
    """
    n = _check_order(n)
    p_it = float(p_it)
    if not np.isfinite(p_it) or p_it > 1.0:
        raise InvalidInputError(f"p_it must lie in (0, 1], got {p_it}")
    if p_it <= 0.0:
        raise DomainError("p_it <= 0 leaves no resource blocks for IT; the threshold is infinite")
    if p_it == 1.0:
        return 0.0
    # 1 - (1 - p_it)^(1/n) via expm1 to keep precision for small p_it
    return float(-np.log(-np.expm1(np.log1p(-p_it) / n)))


class GainOrderStats:
    """Distribution of the best channel gain among ``n`` Rayleigh IT devices."""

    def __init__(self, n_devices: int):
        self.n_devices = _check_order(n_devices)

    def cdf(self, x):
        return max_gain_cdf(x, self.n_devices)

    def pdf(self, x):
        return max_gain_pdf(x, self.n_devices)

    def quantile(self, p_it: float) -> float:
        """Threshold exceeded with probability ``p_it``."""
        return quantile_threshold(p_it, self.n_devices)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.exponential(size=(self.n_devices, *size)).max(axis=0)
