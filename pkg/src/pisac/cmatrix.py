"""Complex matrix algebra carried out entirely over real matrices.

A complex m x n matrix is stored as a (re, im) pair of real matrices.
The widening operator embeds it into the 2m x 2n real block matrix
[[re, -im], [im, re]], which turns complex products into real products
and lets log-determinants and solves run on real symmetric machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Reciprocal-condition floor below which a matrix is treated as singular.
RCOND_FLOOR = 1e-14


class DimensionMismatchError(ValueError):
    """Operand shapes are incompatible."""


class SingularMatrixError(ValueError):
    """Matrix is singular (or numerically indistinguishable from singular)."""


class NotPositiveDefiniteError(ValueError):
    """Input is not Hermitian positive definite."""


@dataclass
class CMatrix:
    """Complex matrix as a (real part, imaginary part) pair."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.atleast_2d(np.asarray(self.re, dtype=np.float64))
        self.im = np.atleast_2d(np.asarray(self.im, dtype=np.float64))
        if self.re.shape != self.im.shape:
            raise DimensionMismatchError(
                f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")
        if self.re.ndim != 2:
            raise DimensionMismatchError("CMatrix must be 2-D")
        if not (np.isfinite(self.re).all() and np.isfinite(self.im).all()):
            raise ValueError("CMatrix entries must be finite")

    @property
    def shape(self):
        return self.re.shape

    @classmethod
    def from_complex(cls, z) -> "CMatrix":
        z = np.atleast_2d(np.asarray(z, dtype=np.complex128))
        return cls(z.real.copy(), z.imag.copy())

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @classmethod
    def eye(cls, n: int) -> "CMatrix":
        return cls(np.eye(n), np.zeros((n, n)))

    @classmethod
    def zeros(cls, m: int, n: int) -> "CMatrix":
        return cls(np.zeros((m, n)), np.zeros((m, n)))

    def conj_t(self) -> "CMatrix":
        """Hermitian transpose."""
        return CMatrix(self.re.T.copy(), -self.im.T.copy())

    def __add__(self, other: "CMatrix") -> "CMatrix":
        if self.shape != other.shape:
            raise DimensionMismatchError(f"{self.shape} + {other.shape}")
        return CMatrix(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "CMatrix") -> "CMatrix":
        if self.shape != other.shape:
            raise DimensionMismatchError(f"{self.shape} - {other.shape}")
        return CMatrix(self.re - other.re, self.im - other.im)

    def scale(self, alpha: float) -> "CMatrix":
        return CMatrix(alpha * self.re, alpha * self.im)

    def fro_norm(self) -> float:
        return float(np.sqrt((self.re ** 2).sum() + (self.im ** 2).sum()))


@dataclass
class WidenedMatrix:
    """2m x 2n real block form [[re, -im], [im, re]] of a complex matrix."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        m2, n2 = self.data.shape
        if m2 % 2 or n2 % 2:
            raise DimensionMismatchError("widened matrix must have even dims")

    def to_cmatrix(self) -> CMatrix:
        m = self.data.shape[0] // 2
        n = self.data.shape[1] // 2
        return CMatrix(self.data[:m, :n].copy(), self.data[m:, :n].copy())


def widen(c: CMatrix) -> WidenedMatrix:
    """Embed a complex matrix into its 2m x 2n real block form."""
    top = np.hstack([c.re, -c.im])
    bot = np.hstack([c.im, c.re])
    return WidenedMatrix(np.vstack([top, bot]))


def cmul(a: CMatrix, b: CMatrix) -> CMatrix:
    """Complex matrix product using only real arithmetic."""
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(f"{a.shape} @ {b.shape}")
    return CMatrix(a.re @ b.re - a.im @ b.im, a.re @ b.im + a.im @ b.re)


def _check_square(c: CMatrix):
    if c.shape[0] != c.shape[1]:
        raise DimensionMismatchError(f"square matrix required, got {c.shape}")


def logdet_hpd(d: CMatrix) -> float:
    """Natural log of det(D) for Hermitian positive definite D.

    Computed as half the log-determinant of the symmetric positive
    definite widened block form, via Cholesky.
    """
    _check_square(d)
    scale = max(np.abs(d.re).max(), np.abs(d.im).max(), 1e-300)
    if (np.abs(d.re - d.re.T).max() > 1e-8 * scale
            or np.abs(d.im + d.im.T).max() > 1e-8 * scale):
        raise NotPositiveDefiniteError("matrix is not Hermitian")
    try:
        chol = np.linalg.cholesky(widen(d).data)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("Cholesky factorization failed") from exc
    # logdet(widened) = 2 * log|det D|
    return float(np.log(np.diag(chol)).sum())


def _rcond(a: np.ndarray) -> float:
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0:
        return 0.0
    return float(sv[-1] / sv[0])


def _solve_widened(m: CMatrix, rhs_re: np.ndarray, rhs_im: np.ndarray):
    """Solve M x = y by pivoted elimination on the widened system."""
    wide = widen(m).data
    if _rcond(wide) < RCOND_FLOOR:
        raise SingularMatrixError("matrix is singular to working precision")
    n = m.shape[0]
    sol = np.linalg.solve(wide, np.vstack([rhs_re, rhs_im]))
    return sol[:n], sol[n:]


def cinverse(m: CMatrix) -> CMatrix:
    """Inverse of a complex matrix over real arithmetic.

    Primary path uses the real/imaginary inversion identities
        re(N) = (re(M) + im(M) re(M)^-1 im(M))^-1
        im(N) = -re(M)^-1 im(M) re(N)
    and falls back to the widened 2n x 2n solve when re(M) is singular.
    """
    _check_square(m)
    n = m.shape[0]
    if _rcond(widen(m).data) < RCOND_FLOOR:
        raise SingularMatrixError("matrix is singular to working precision")
    if _rcond(m.re) >= RCOND_FLOOR:
        try:
            re_m_inv = np.linalg.solve(m.re, np.eye(n))
            inner = m.re + m.im @ re_m_inv @ m.im
            if _rcond(inner) >= RCOND_FLOOR:
                re_n = np.linalg.solve(inner, np.eye(n))
                im_n = -re_m_inv @ m.im @ re_n
                return CMatrix(re_n, im_n)
        except np.linalg.LinAlgError:
            pass
    re_n, im_n = _solve_widened(m, np.eye(n), np.zeros((n, n)))
    return CMatrix(re_n, im_n)


def csolve(m: CMatrix, y: CMatrix) -> CMatrix:
    """Solve M x = y for a (possibly multi-column) right-hand side."""
    _check_square(m)
    if y.shape[0] != m.shape[0]:
        raise DimensionMismatchError(f"rhs rows {y.shape[0]} != {m.shape[0]}")
    re_x, im_x = _solve_widened(m, y.re, y.im)
    return CMatrix(re_x, im_x)
