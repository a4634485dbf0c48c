"""Numeric spectral-problem diagnostics: Lax matrices sampled on simulated
fields, the transverse monodromy matrix, its spectral invariants along the
propagation direction, and a finite-difference zero-curvature residual.

The monodromy is taken in t (the periodic direction) and invariance of its
trace is checked along x; tr L2 vanishes identically, so det T stays at 1
up to integration error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnls_sim import FieldState, Grid, SimConfig, spectral_dt
from .zero_curvature import CANONICAL_CONVENTION, Convention

DET_TARGET_ERR = 1e-13
MAX_SUBSTEPS = 64


class FamilyConstraintError(ValueError):
    """Coupling entries violate the requested family's constraints."""


@dataclass(frozen=True)
class LaxSample:
    """Pointwise 3x3 numeric matrices at fixed x and spectral parameter.

    All derivative entries come from spectral differentiation of the field
    snapshot; nothing is finite-differenced in x."""
    x: float
    lam: complex
    L1: np.ndarray  # (n, 3, 3)
    L2: np.ndarray  # (n, 3, 3)


def _check_family(cfg: SimConfig, family: str):
    if family == "M" and abs(cfg.m1 + cfg.m2) > 1e-12:
        raise FamilyConstraintError("family M requires m1 = -m2")
    if family == "N" and (abs(cfg.m1) > 1e-12 or abs(cfg.m2) > 1e-12):
        raise FamilyConstraintError("family N requires m1 = m2 = 0")
    if family not in ("L", "M", "N"):
        raise FamilyConstraintError(f"unknown family {family!r}")


def _l1_arrays(b1, b2, b1t, b2t, lam, eps, m1, m2, kappa):
    n = b1.shape[0]
    out = np.zeros((n, 3, 3), dtype=complex)
    i1 = 0.5 * eps * b1 * np.conj(b1)
    i2 = 0.5 * eps * b2 * np.conj(b2)
    out[:, 0, 0] = -1j * (i1 + i2 + 6 * lam ** 2)
    out[:, 0, 1] = np.conj(b1t) + 3 * lam * np.conj(b1)
    out[:, 0, 2] = np.conj(b2t) + 3 * lam * np.conj(b2)
    out[:, 1, 0] = 0.5 * eps * (-b1t + 3 * lam * b1)
    out[:, 2, 0] = 0.5 * eps * (-b2t + 3 * lam * b2)
    out[:, 1, 1] = 1j * (i1 + 3 * lam ** 2 + m1)
    out[:, 2, 2] = 1j * (i2 + 3 * lam ** 2 + m2)
    out[:, 1, 2] = 1j * (0.5 * eps * np.conj(b2) * b1 + kappa)
    out[:, 2, 1] = 1j * (0.5 * eps * b2 * np.conj(b1) + kappa)
    return out


def _l2_arrays(b1, b2, lam, eps):
    n = b1.shape[0]
    out = np.zeros((n, 3, 3), dtype=complex)
    out[:, 0, 0] = 2 * lam
    out[:, 0, 1] = 1j * np.conj(b1)
    out[:, 0, 2] = 1j * np.conj(b2)
    out[:, 1, 0] = 0.5j * eps * b1
    out[:, 2, 0] = 0.5j * eps * b2
    out[:, 1, 1] = -lam
    out[:, 2, 2] = -lam
    return out


def sample_lax(state: FieldState, lam: complex, cfg: SimConfig,
               family: str = "L") -> LaxSample:
    _check_family(cfg, family)
    g = cfg.grid
    b1t = spectral_dt(g, state.b1)
    b2t = spectral_dt(g, state.b2)
    l1 = _l1_arrays(state.b1, state.b2, b1t, b2t, lam, cfg.eps,
                    cfg.m1, cfg.m2, cfg.kappa)
    l2 = _l2_arrays(state.b1, state.b2, lam, cfg.eps)
    return LaxSample(state.x, lam, l1, l2)


@dataclass(frozen=True)
class Monodromy:
    x: float
    lam: complex
    matrix: np.ndarray
    det_deviation: float

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


def _upsample(b: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation onto a grid refined by `factor`."""
    if factor == 1:
        return b.copy()
    n = b.shape[0]
    spec = np.fft.fft(b)
    out = np.zeros(n * factor, dtype=complex)
    half = n // 2
    out[:half] = spec[:half]
    out[-half:] = spec[-half:]
    # split the Nyquist coefficient symmetrically to keep the signal real-safe
    out[half] = 0.5 * spec[half]
    out[n * factor - half] += 0.5 * spec[half]
    return np.fft.ifft(out) * factor


def default_substeps(lam: complex, cfg: SimConfig, amplitude: float) -> int:
    """Classical RK4 relative error over one period is about
    n_sub * (z / r)^5 / 120 with z the per-cell spectral scale; choose the
    substep count r to push it to ~1e-13."""
    z = (2 * abs(lam) + (1 + 0.5 * cfg.eps) * amplitude) * cfg.grid.dt
    if z <= 0:
        return 2
    r = (cfg.grid.n * z ** 5 / (120.0 * DET_TARGET_ERR)) ** 0.25
    return max(2, min(MAX_SUBSTEPS, math.ceil(r)))


def monodromy(state: FieldState, lam: complex, cfg: SimConfig,
              substeps: int | None = None, allow_complex: bool = False) -> Monodromy:
    """Fundamental solution of Phi_t = L2(t) Phi over one period, classical
    4th-order integration with trigonometrically interpolated midpoints."""
    if abs(complex(lam).imag) > 0 and not allow_complex:
        raise ValueError("complex spectral parameter requires allow_complex")
    if abs(complex(lam).imag) * cfg.grid.period > 60:
        raise ValueError("complex spectral parameter too deep: growth guard")
    r = substeps or default_substeps(lam, cfg, state.max_abs())
    fine = 2 * r
    b1 = _upsample(state.b1, fine)
    b2 = _upsample(state.b2, fine)
    a = _l2_arrays(b1, b2, lam, cfg.eps)
    n_sub = cfg.grid.n * r
    h = cfg.grid.dt / r
    idx = np.arange(n_sub)
    a1 = a[2 * idx]
    a2 = a[(2 * idx + 1) % (2 * n_sub)]
    a4 = a[(2 * idx + 2) % (2 * n_sub)]
    eye = np.eye(3, dtype=complex)
    k1 = a1
    k2 = np.einsum("nij,njk->nik", a2, eye[None, :, :] + 0.5 * h * k1)
    k3 = np.einsum("nij,njk->nik", a2, eye[None, :, :] + 0.5 * h * k2)
    k4 = np.einsum("nij,njk->nik", a4, eye[None, :, :] + h * k3)
    steps = eye[None, :, :] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    # ordered product steps[n-1] ... steps[0] via pairwise tree reduction
    mats = steps
    while mats.shape[0] > 1:
        m = mats.shape[0]
        even = mats[0:m - m % 2]
        paired = np.einsum("nij,njk->nik", even[1::2], even[0::2])
        if m % 2:
            mats = np.concatenate([paired, mats[-1:]], axis=0)
        else:
            mats = paired
    t_mat = mats[0]
    det_dev = abs(np.linalg.det(t_mat) - 1.0)
    if not np.all(np.isfinite(t_mat.view(float))):
        raise RuntimeError("monodromy integration went non-finite")
    return Monodromy(state.x, lam, t_mat, det_dev)


@dataclass(frozen=True)
class InvariantRow:
    x: float
    lam: complex
    trace: complex
    trace_sq: complex
    eigenvalues: tuple
    det_deviation: float


def invariant_scan(trajectory: Sequence[FieldState], lams: Sequence[complex],
                   cfg: SimConfig, substeps: int | None = None,
                   allow_complex: bool = False) -> list:
    rows = []
    for state in trajectory:
        for lam in lams:
            mono = monodromy(state, lam, cfg, substeps=substeps,
                             allow_complex=allow_complex)
            eigs = np.linalg.eigvals(mono.matrix)
            eigs = tuple(sorted(eigs, key=lambda z: (-abs(z), z.real, z.imag)))
            rows.append(InvariantRow(state.x, lam, mono.trace,
                                     complex(np.trace(mono.matrix @ mono.matrix)),
                                     eigs, mono.det_deviation))
    return rows


def trace_drift(rows: Sequence[InvariantRow], lam: complex) -> float:
    """Max relative deviation of tr T(lam; x) from its x=0 value."""
    sel = [r for r in rows if r.lam == lam]
    if len(sel) < 2:
        raise ValueError("need at least two snapshots for a drift")
    base = sel[0].trace
    scale = max(abs(base), 1e-30)
    return max(abs(r.trace - base) for r in sel[1:]) / scale


def residual_fd(trajectory: Sequence[FieldState], lam: complex, cfg: SimConfig,
                conv: Convention = CANONICAL_CONVENTION) -> float:
    """Max-norm of s1 dL1/dt + s2 dL2/dx + [L1, L2] over interior snapshots;
    d/dt is spectral, d/dx centered across snapshots."""
    if len(trajectory) < 3:
        raise ValueError("need at least three snapshots")
    xs = np.array([s.x for s in trajectory])
    hx = np.diff(xs)
    if not np.allclose(hx, hx[0], rtol=1e-9, atol=1e-12):
        raise ValueError("snapshots must be uniformly spaced in x")
    g = cfg.grid
    omega = g.omegas()

    def l_pair(state):
        s = sample_lax(state, lam, cfg)
        return s.L1, s.L2

    worst = 0.0
    l_prev = l_pair(trajectory[0])
    l_here = l_pair(trajectory[1])
    for k in range(1, len(trajectory) - 1):
        l_next = l_pair(trajectory[k + 1])
        l1 = l_here[0]
        dt_l1 = np.fft.ifft(1j * omega[:, None, None]
                            * np.fft.fft(l1, axis=0), axis=0)
        dx_l2 = (l_next[1] - l_prev[1]) / (2 * hx[0])
        comm = np.einsum("nij,njk->nik", l1, l_here[1]) \
            - np.einsum("nij,njk->nik", l_here[1], l1)
        if conv.order == "RL":
            comm = -comm
        res = conv.dt_sign * dt_l1 + conv.dx_sign * dx_l2 + comm
        worst = max(worst, float(np.abs(res).max()))
        l_prev, l_here = l_here, l_next
    return worst
