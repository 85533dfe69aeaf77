"""Performance functionals: user rates, sensing covariance, combiner,
sensing SINR/power, MA spacing, and the penalty training loss.

Every metric has two routes: a complex reference (numpy complex128)
and a widened route that only touches real matrices.  The widened
route is what the differentiable training graph re-expresses; the
complex route is the evaluation/oracle path.  Both must agree to
1e-9 relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cmatrix import (CMatrix, NotPositiveDefiniteError, cmul, csolve,
                      logdet_hpd, widen)
from .scenario import SystemConfig

LN2 = math.log(2.0)


@dataclass
class BeamformingSet:
    """All transmit-side beamforming variables: per-user precoders W_k
    (n_t x n_k), the sensing beamformer v (n_t x 1) and, optionally,
    the receive combiner d (n_r x 1)."""

    w: list  # K CMatrix, each n_t x n_k
    v: CMatrix
    d: CMatrix | None = None

    def total_power(self) -> float:
        """Tr(sum_k W_k W_k^H) = sum of squared precoder entries."""
        return float(sum((wk.re ** 2).sum() + (wk.im ** 2).sum()
                         for wk in self.w))


@dataclass
class MetricsRecord:
    """Per-scenario evaluation result."""

    rates: list              # bits/s/Hz per user
    sum_rate: float
    gamma_s: float
    p_s: float
    d_k: list                # min inter-MA spacing per user, m
    power_ok: bool = True
    sinr_ok: bool = True
    spacing_ok: bool = True


def _cvec_norm(x: CMatrix) -> float:
    return float(np.sqrt((x.re ** 2).sum() + (x.im ** 2).sum()))


def _signal_matrix(beams: BeamformingSet, skip_user: int | None):
    """sum_{u != skip} W_u W_u^H + v v^H as complex128."""
    m = beams.v.to_complex() @ beams.v.to_complex().conj().T
    for u, wk in enumerate(beams.w):
        if u == skip_user:
            continue
        wz = wk.to_complex()
        m = m + wz @ wz.conj().T
    return m


def _widened_signal(beams: BeamformingSet, skip_user: int | None) -> np.ndarray:
    """Widened sum_{u != skip} W_u W_u^T(hat) + v(hat) v(hat)^T."""
    vh = widen(beams.v).data
    m = vh @ vh.T
    for u, wk in enumerate(beams.w):
        if u == skip_user:
            continue
        wh = widen(wk).data
        m = m + wh @ wh.T
    return m


def _pq_stack(h_k: CMatrix, f: CMatrix, beams: BeamformingSet,
              skip_user: int | None):
    """Real/imag stack [P; Q] of H F (sum WW^H + vv^H) F^H H^H."""
    hh = widen(h_k).data
    fh = widen(f).data
    s = _widened_signal(beams, skip_user)
    rhs = np.vstack([h_k.re.T, -h_k.im.T])
    pq = hh @ fh @ s @ fh.T @ rhs
    n_k = h_k.shape[0]
    return pq[:n_k], pq[n_k:]


def _block_logdet(p: np.ndarray, q: np.ndarray, sigma2: float) -> float:
    """(1/2) ln det [[s2 I + P, Q^T], [Q, s2 I + P]] via Cholesky."""
    n = p.shape[0]
    dd = sigma2 * np.eye(n) + p
    blk = np.block([[dd, q.T], [q, dd]])
    blk = 0.5 * (blk + blk.T)  # shed rounding asymmetry before Cholesky
    try:
        chol = np.linalg.cholesky(blk)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("interference matrix not PD") from exc
    return float(np.log(np.diag(chol)).sum())


def user_rate(k: int, h_k: CMatrix, f: CMatrix, beams: BeamformingSet,
              sigma_c2: float, method: str = "complex") -> float:
    """Achievable rate of user k in bits/s/Hz.

    method="complex": log-det difference on complex matrices.
    method="widened": the same value via the real block determinants.
    """
    if method == "complex":
        hz = h_k.to_complex()
        fz = f.to_complex()
        a = hz @ fz
        s_all = a @ _signal_matrix(beams, None) @ a.conj().T
        s_int = a @ _signal_matrix(beams, k) @ a.conj().T
        n_k = h_k.shape[0]
        eye = sigma_c2 * np.eye(n_k)
        _, ld1 = np.linalg.slogdet(eye + s_all)
        _, ld2 = np.linalg.slogdet(eye + s_int)
        return (ld1 - ld2) / LN2
    if method == "widened":
        p1, q1 = _pq_stack(h_k, f, beams, None)
        p2, q2 = _pq_stack(h_k, f, beams, k)
        ld1 = _block_logdet(p1, q1, sigma_c2)
        ld2 = _block_logdet(p2, q2, sigma_c2)
        return (ld1 - ld2) / LN2
    raise ValueError(f"unknown method {method!r}")


def sensing_covariance(g: CMatrix, f: CMatrix, beams: BeamformingSet,
                       sigma_z2: float, method: str = "complex") -> CMatrix:
    """Echo covariance B = G F (sum_k W_k W_k^H) F^H G^H + sigma_z2 I."""
    n_r = g.shape[0]
    if method == "complex":
        gz = g.to_complex() @ f.to_complex()
        b = sigma_z2 * np.eye(n_r, dtype=np.complex128)
        for wk in beams.w:
            gw = gz @ wk.to_complex()
            b = b + gw @ gw.conj().T
        return CMatrix.from_complex(b)
    if method == "widened":
        gh = widen(g).data
        fh = widen(f).data
        s = np.zeros((2 * g.shape[1], 2 * g.shape[1]))
        for wk in beams.w:
            wh = widen(wk).data
            s = s + wh @ wh.T
        rhs = np.vstack([g.re.T, -g.im.T])
        stack = gh @ fh @ s @ fh.T @ rhs
        stack[:n_r] += sigma_z2 * np.eye(n_r)
        return CMatrix(stack[:n_r], stack[n_r:])
    raise ValueError(f"unknown method {method!r}")


def optimal_combiner(b: CMatrix, f_r: CMatrix) -> CMatrix:
    """Closed-form SINR-optimal combiner d = B^-1 f_r / ||B^-1 f_r||."""
    x = csolve(b, f_r)
    nrm = _cvec_norm(x)
    if nrm == 0.0:
        raise ValueError("B^-1 f_r vanished")
    return x.scale(1.0 / nrm)


def sensing_power(d: CMatrix, g: CMatrix, f: CMatrix, v: CMatrix,
                  method: str = "complex") -> float:
    """Combined echo power from the sensing beam: |d^H G F v|^2."""
    if method == "complex":
        z = d.to_complex().conj().T @ g.to_complex() @ f.to_complex() \
            @ v.to_complex()
        return float(np.abs(z[0, 0]) ** 2)
    if method == "widened":
        dh = widen(d).data
        gh = widen(g).data
        fh = widen(f).data
        vh = widen(v).data
        dstack = np.vstack([d.re, d.im])
        out = dh.T @ gh @ fh @ vh @ vh.T @ fh.T @ gh.T @ dstack
        return float(out[0, 0])
    raise ValueError(f"unknown method {method!r}")


def sensing_sinr(d: CMatrix, g: CMatrix, f: CMatrix, v: CMatrix,
                 b: CMatrix, method: str = "complex") -> float:
    """Sensing SINR gamma_s = P_s / (d^H B d)."""
    p_s = sensing_power(d, g, f, v, method=method)
    if method == "complex":
        quad = d.to_complex().conj().T @ b.to_complex() @ d.to_complex()
        denom = float(quad[0, 0].real)
    else:
        dh = widen(d).data
        dstack = np.vstack([d.re, d.im])
        denom = float((dh.T @ widen(b).data @ dstack)[0, 0])
    return p_s / denom


def max_sensing_sinr(f_t: CMatrix, f_r: CMatrix, f: CMatrix, v: CMatrix,
                     b: CMatrix) -> float:
    """SINR at the optimal combiner: |f_t^H F v|^2 * (f_r^H B^-1 f_r)."""
    z = cmul(cmul(f_t.conj_t(), f), v)
    a = float(z.re[0, 0] ** 2 + z.im[0, 0] ** 2)
    x = csolve(b, f_r)
    q = float((f_r.re * x.re).sum() + (f_r.im * x.im).sum())
    return a * q


def min_pairwise_distance(u_local: np.ndarray) -> float:
    """Smallest inter-MA distance within one user's region (inf if < 2 MAs)."""
    u = np.asarray(u_local, dtype=np.float64).reshape(-1, 2)
    n = u.shape[0]
    if n < 2:
        return float("inf")
    best = float("inf")
    for i in range(n):
        for j in range(i + 1, n):
            best = min(best, float(np.linalg.norm(u[i] - u[j])))
    return best


def training_loss(rates, d_k, gamma_s: float, config: SystemConfig):
    """Penalty loss: -sum rate + spacing hinges + sensing-SINR hinge.

    Returns (total, breakdown) where breakdown holds the three terms.
    """
    rate_term = -float(np.sum(rates))
    spacing = 0.0
    for dk in d_k:
        if math.isfinite(dk):
            spacing += config.nu_d * max(config.d_min - dk, 0.0)
    sensing = config.nu_s * max(config.gamma0 - gamma_s, 0.0)
    total = rate_term + spacing + sensing
    return total, {"rate_term": rate_term, "spacing_penalty": spacing,
                   "sinr_penalty": sensing}
