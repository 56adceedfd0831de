"""
Fourier pseudo-spectral machinery on a uniform, doubly periodic 2D grid.

Fields are plain ``float64`` arrays of shape ``(ny, nx)``: axis 0 is y,
axis 1 is x, so in row-major (C) order x varies fastest.  Spectral data
uses the real-to-complex layout ``(ny, nx // 2 + 1)``.

Operators are represented by their Fourier multipliers (``Symbol``); the
constant-coefficient implicit operators of the time steppers are inverted
exactly by division in spectral space.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = ["Grid", "Symbol", "make_grid", "fft_workers"]


def fft_workers() -> int:
    """Number of FFT worker threads, capped by ``LAGFLOW_THREADS`` (default 1)."""
    value = os.environ.get("LAGFLOW_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Symbol:
    """
    Per-mode real multiplier in real-to-complex spectral layout.

    Attributes
    ----------
    multiplier : ndarray, shape (ny, nx // 2 + 1)
        Real multiplier applied to each Fourier coefficient.
    zero_mode : {"pass", "zero", "value"}
        How the (0, 0) mode is treated.  ``"zero"`` asserts that the
        multiplier annihilates constants; ``"pass"`` means the constant mode
        is carried through unchanged (multiplier 1); ``"value"`` means an
        explicit, operator-specific value is stored there.
    """

    multiplier: np.ndarray
    zero_mode: str = "value"

    def __post_init__(self):
        if self.zero_mode not in ("pass", "zero", "value"):
            raise ValueError(f"unknown zero_mode {self.zero_mode!r}")
        if not np.all(np.isfinite(self.multiplier)):
            raise ValueError("symbol multipliers must be finite")
        m0 = self.multiplier[0, 0]
        if self.zero_mode == "zero" and m0 != 0.0:
            raise ValueError("zero_mode='zero' but multiplier at k=0 is nonzero")
        if self.zero_mode == "pass" and m0 != 1.0:
            raise ValueError("zero_mode='pass' but multiplier at k=0 is not 1")

    @cached_property
    def is_constant(self) -> bool:
        return bool(np.all(self.multiplier == self.multiplier[0, 0]))

    def __mul__(self, other: "Symbol") -> "Symbol":
        prod = self.multiplier * other.multiplier
        return Symbol(prod, _zero_mode_of(prod))

    def __add__(self, other: "Symbol") -> "Symbol":
        total = self.multiplier + other.multiplier
        return Symbol(total, _zero_mode_of(total))

    def scaled(self, c: float) -> "Symbol":
        out = c * self.multiplier
        return Symbol(out, _zero_mode_of(out))


def _zero_mode_of(mult: np.ndarray) -> str:
    m0 = mult[0, 0]
    if m0 == 0.0:
        return "zero"
    if m0 == 1.0:
        return "pass"
    return "value"


@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic grid on ``[0, lx) x [0, ly)``.

    Parameters
    ----------
    nx, ny : int
        Number of points (= Fourier modes) per direction; even and >= 4.
    lx, ly : float
        Domain lengths.
    dealias : bool
        When set, nonlinear forces are filtered with the 2/3 rule.  Off by
        default: plain collocation of the nonlinear terms.
    """

    nx: int
    ny: int
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    dealias: bool = False

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"domain lengths must be positive, got {self.lx}, {self.ly}")

    # -- geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.ny, self.nx // 2 + 1)

    @property
    def cell_area(self) -> float:
        return self.lx * self.ly / (self.nx * self.ny)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * (self.lx / self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * (self.ly / self.ny)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(X, Y)`` of shape ``(ny, nx)``."""
        X, Y = np.meshgrid(self.x, self.y, indexing="xy")
        return X, Y

    # -- wavenumbers ------------------------------------------------------
    @cached_property
    def kx(self) -> np.ndarray:
        """Full x wavenumbers in standard FFT order (Nyquist negative)."""
        return np.fft.fftfreq(self.nx, d=1.0 / self.nx) * (2 * math.pi / self.lx)

    @cached_property
    def ky(self) -> np.ndarray:
        return np.fft.fftfreq(self.ny, d=1.0 / self.ny) * (2 * math.pi / self.ly)

    @cached_property
    def _kx_r(self) -> np.ndarray:
        return np.fft.rfftfreq(self.nx, d=1.0 / self.nx) * (2 * math.pi / self.lx)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 in spectral layout."""
        return self._kx_r[None, :] ** 2 + self.ky[:, None] ** 2

    @cached_property
    def _ikx(self) -> np.ndarray:
        kx = self._kx_r.copy()
        kx[-1] = 0.0  # Nyquist column: odd derivative has no real representation
        return (1j * kx)[None, :]

    @cached_property
    def _iky(self) -> np.ndarray:
        ky = self.ky.copy()
        ky[self.ny // 2] = 0.0
        return (1j * ky)[:, None]

    @cached_property
    def _dealias_mask(self) -> np.ndarray:
        kx_max = np.abs(self._kx_r).max()
        ky_max = np.abs(self.ky).max()
        return (np.abs(self._kx_r)[None, :] <= 2 * kx_max / 3) & (
            np.abs(self.ky)[:, None] <= 2 * ky_max / 3
        )

    # -- transforms -------------------------------------------------------
    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f) != self.shape:
                raise ValueError(f"grid mismatch: field shape {np.shape(f)} != {self.shape}")

    def fft(self, f: np.ndarray) -> np.ndarray:
        self.check(f)
        return sfft.rfft2(f, workers=fft_workers())

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfft2(fh, s=self.shape, workers=fft_workers())

    # -- symbols ----------------------------------------------------------
    def symbol(self, multiplier, zero_mode: str | None = None) -> Symbol:
        mult = np.broadcast_to(np.asarray(multiplier, dtype=float), self.spectral_shape).copy()
        return Symbol(mult, zero_mode or _zero_mode_of(mult))

    def identity_symbol(self) -> Symbol:
        return self.symbol(1.0, "pass")

    def neg_laplacian_symbol(self) -> Symbol:
        """Symbol of ``-Δ``: ``|k|^2``."""
        return self.symbol(self.k2, "zero")

    def bilaplacian_symbol(self) -> Symbol:
        """Symbol of ``Δ²``: ``|k|^4``."""
        return self.symbol(self.k2**2, "zero")

    def inv_neg_laplacian_symbol(self) -> Symbol:
        """Symbol of ``(-Δ)^{-1}`` on mean-zero data (0 on the constant mode)."""
        out = np.zeros(self.spectral_shape)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return Symbol(out, "zero")

    def apply_symbol(self, s: Symbol, f: np.ndarray) -> np.ndarray:
        if s.multiplier.shape != self.spectral_shape:
            raise ValueError("grid mismatch: symbol layout does not match grid")
        if s.is_constant:
            self.check(f)
            return s.multiplier[0, 0] * f
        return self.ifft(s.multiplier * self.fft(f))

    # -- differential operators -------------------------------------------
    def gradient(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fh = self.fft(f)
        return self.ifft(self._ikx * fh), self.ifft(self._iky * fh)

    def divergence(self, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
        return self.ifft(self._ikx * self.fft(fx) + self._iky * self.fft(fy))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(f))

    def inverse_laplacian_zero_mean(self, f: np.ndarray) -> np.ndarray:
        """Zero-mean ``g`` with ``Δg = f - mean(f)``."""
        return -self.apply_symbol(self.inv_neg_laplacian_symbol(), f)

    def dealias_filter(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(self._dealias_mask * self.fft(f))

    # -- quadrature -------------------------------------------------------
    def integrate(self, f: np.ndarray) -> float:
        self.check(f)
        return float(self.cell_area * np.sum(f))

    def inner_product(self, f: np.ndarray, g: np.ndarray) -> float:
        self.check(f, g)
        return float(self.cell_area * np.sum(f * g))

    def quadratic_form(self, s: Symbol, f: np.ndarray) -> float:
        """
        ``(S f, f)`` summed in Fourier space (Parseval).

        A sum of non-negative terms for non-negative symbols, so it stays
        accurate when ``f`` is nearly constant, where the real-space product
        would be dominated by FFT round-off.
        """
        if s.multiplier.shape != self.spectral_shape:
            raise ValueError("grid mismatch: symbol layout does not match grid")
        fh = self.fft(f)
        # rfft stores half the kx modes; all but kx = 0 and Nyquist have a
        # conjugate twin
        w = np.full(self.spectral_shape[1], 2.0)
        w[0] = w[-1] = 1.0
        total = np.sum(w * s.multiplier * (fh.real**2 + fh.imag**2))
        return float(self.cell_area * total / f.size)

    def mean(self, f: np.ndarray) -> float:
        return self.integrate(f) / self.area

    # -- implicit solves --------------------------------------------------
    def solve_symbol(self, divisor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Return the field whose transform is ``fft(rhs) / divisor``."""
        divisor = np.broadcast_to(divisor, self.spectral_shape)
        if np.any(divisor == 0.0) or not np.all(np.isfinite(divisor)):
            raise ZeroDivisionError("implicit operator is singular on at least one mode")
        return self.ifft(self.fft(rhs) / divisor)

    def diagonal_divisor(self, a: float, b: float = 0.0, c: float = 0.0, d: float = 0.0) -> np.ndarray:
        k2 = self.k2
        return a + b * k2 + c * k2**2 + d * (k2 > 0)

    def solve_diagonal(self, a: float, b: float, c: float, d: float, rhs: np.ndarray) -> np.ndarray:
        """Invert ``a I + b(-Δ) + c Δ² + d (I - mean)`` exactly."""
        return self.solve_symbol(self.diagonal_divisor(a, b, c, d), rhs)


def make_grid(nx: int, ny: int | None = None, lx: float = 2 * math.pi, ly: float | None = None,
              dealias: bool = False) -> Grid:
    return Grid(nx, nx if ny is None else ny, lx, lx if ly is None else ly, dealias)
