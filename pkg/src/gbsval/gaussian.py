"""Gaussian states in the hbar = 2 convention.

Two orderings are used and never mixed implicitly:

* ``(x, p)`` for real quadrature covariances ``V`` (vacuum ``V = I``);
* ``(alpha, alpha*)`` for the Q-function covariance ``Q`` and its
  displacement ``alpha_bar`` (vacuum ``Q = I``).

Mode indices are 0-based throughout the Python API.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    InvalidInputError,
    InvalidParameterError,
    InvalidStateError,
    NumericalDegeneracyError,
)

PURITY_TOL = 1e-10
UNITARITY_TOL = 1e-10
PHYSICAL_TOL = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _w_matrix(m: int) -> np.ndarray:
    eye = np.eye(m)
    return np.block([[eye, 1j * eye], [eye, -1j * eye]])


def _swap_matrix(m: int) -> np.ndarray:
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block([[zero, eye], [eye, zero]])


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class SqueezingSpec:
    """``K`` single-mode squeezers of strength ``r`` feeding ``m`` modes."""

    K: int
    m: int
    r: float

    def __post_init__(self):
        if not (1 <= self.K <= self.m):
            raise InvalidParameterError(f"need 1 <= K <= m, got K={self.K}, m={self.m}")
        if not np.isfinite(self.r) or self.r < 0:
            raise InvalidParameterError(f"squeezing r must be >= 0, got {self.r}")

    @property
    def mean_photons(self) -> float:
        """Mean photon number per squeezed input mode, sinh^2 r."""
        return float(np.sinh(self.r) ** 2)


@dataclass(frozen=True)
class Interferometer:
    T: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        T = np.asarray(self.T, dtype=complex)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] == 0:
            raise InvalidInputError(f"interferometer must be a non-empty square matrix, got {T.shape}")
        err = np.max(np.abs(T.conj().T @ T - np.eye(T.shape[0])))
        if err >= UNITARITY_TOL:
            raise InvalidInputError(f"matrix is not unitary (max deviation {err:.3e})")
        object.__setattr__(self, "T", _frozen(T))

    @property
    def m(self) -> int:
        return self.T.shape[0]


@dataclass(frozen=True)
class GaussianState:
    """Q-function covariance plus displacement ``alpha_bar = (beta, beta*)``."""

    Q: np.ndarray
    alpha_bar: np.ndarray | None = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=complex)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] % 2:
            raise InvalidInputError(f"Q must be 2m x 2m, got shape {Q.shape}")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.conj().T)) > 1e-8 * scale:
            raise InvalidInputError("Q is not Hermitian")
        m = Q.shape[0] // 2
        if self.alpha_bar is None:
            alpha = np.zeros(2 * m, dtype=complex)
        else:
            alpha = np.asarray(self.alpha_bar, dtype=complex).reshape(-1)
            if alpha.shape != (2 * m,):
                raise InvalidInputError(f"alpha_bar must have length {2 * m}")
            if np.max(np.abs(alpha[m:] - alpha[:m].conj()), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(alpha))):
                raise InvalidInputError("second half of alpha_bar must conjugate the first")
            alpha = np.concatenate([alpha[:m], alpha[:m].conj()])
        object.__setattr__(self, "Q", _frozen((Q + Q.conj().T) / 2))
        object.__setattr__(self, "alpha_bar", _frozen(alpha))

    @property
    def m(self) -> int:
        return self.Q.shape[0] // 2

    @property
    def displaced(self) -> bool:
        return bool(np.any(np.abs(self.alpha_bar) > 0))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0])

    def check_physical(self) -> None:
        lo = self.min_eigenvalue()
        if lo < 0.5 - PHYSICAL_TOL:
            raise InvalidStateError(f"Q has eigenvalue {lo:.6g} below 1/2")

    def mean_photons(self) -> np.ndarray:
        """Per-mode mean photon number, Q_ii + |beta_i|^2 - 1."""
        m = self.m
        return np.real(np.diag(self.Q)[:m]) + np.abs(self.alpha_bar[:m]) ** 2 - 1.0

    def is_vacuum(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.Q - np.eye(2 * self.m))) < tol and not np.any(np.abs(self.alpha_bar) > tol))


@dataclass(frozen=True)
class KernelMatrix:
    A: np.ndarray
    pure_block: np.ndarray | None = field(default=None)

    @property
    def is_pure(self) -> bool:
        return self.pure_block is not None


# --------------------------------------------------------------------------
# Covariance construction
# --------------------------------------------------------------------------
def build_input_covariance(spec: SqueezingSpec) -> np.ndarray:
    """Input covariance in (x, p) ordering: e^{2r} on squeezed x, e^{-2r} on p."""
    m, K = spec.m, spec.K
    x = np.ones(m)
    p = np.ones(m)
    x[:K] = np.exp(2 * spec.r)
    p[:K] = np.exp(-2 * spec.r)
    return np.diag(np.concatenate([x, p]))


def _check_xp(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1] or V.shape[0] % 2:
        raise InvalidInputError(f"covariance must be 2m x 2m, got {V.shape}")
    if np.max(np.abs(V - V.T)) > 1e-12 * max(1.0, np.max(np.abs(V))):
        raise InvalidInputError("covariance is not symmetric")
    return V


def xp_to_q(V: np.ndarray, displacement: np.ndarray | None = None) -> GaussianState:
    """Map an (x, p) covariance to the Q-function covariance.

    ``displacement`` is the optional real mean vector (x_bar, p_bar); it is
    converted to ``alpha_bar = ((x + ip)/2, (x - ip)/2)``.
    """
    V = _check_xp(V)
    m = V.shape[0] // 2
    W = _w_matrix(m)
    Q = W @ V @ W.conj().T / 4 + np.eye(2 * m) / 2
    alpha = None
    if displacement is not None:
        d = np.asarray(displacement, dtype=float)
        beta = (d[:m] + 1j * d[m:]) / 2
        alpha = np.concatenate([beta, beta.conj()])
    return GaussianState(Q, alpha)


def q_to_xp(state: GaussianState) -> np.ndarray:
    """Inverse of :func:`xp_to_q` for the covariance part."""
    m = state.m
    W = _w_matrix(m)
    Winv = W.conj().T / 2
    V = 4 * Winv @ (state.Q - np.eye(2 * m) / 2) @ Winv.conj().T
    return np.real_if_close(V, tol=1e6).real


def lossy_covariance(V0: np.ndarray, eta_t: float) -> np.ndarray:
    """Uniform loss with transmission ``eta_t``: eta V0 + (1 - eta) I."""
    if not (0.0 <= eta_t <= 1.0):
        raise InvalidParameterError(f"eta_t must lie in [0, 1], got {eta_t}")
    V0 = _check_xp(V0)
    return eta_t * V0 + (1.0 - eta_t) * np.eye(V0.shape[0])


def distinguishable_covariances(spec: SqueezingSpec, eta_ind: float) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split the input into an indistinguishable part and K virtual parts.

    Returns ``(V_actual, [V_virtual_1, ..., V_virtual_K])``; virtual part ``i``
    squeezes only input mode ``i`` with strength weighted by ``1 - eta_ind``.
    """
    if not (0.0 <= eta_ind <= 1.0):
        raise InvalidParameterError(f"eta_ind must lie in [0, 1], got {eta_ind}")
    m = spec.m
    V_in = build_input_covariance(spec)
    actual = eta_ind * V_in + (1.0 - eta_ind) * np.eye(2 * m)
    virtuals = []
    for i in range(spec.K):
        d = np.ones(2 * m)
        d[i] = (1.0 - eta_ind) * (np.exp(2 * spec.r) - 1.0) + 1.0
        d[i + m] = (1.0 - eta_ind) * (np.exp(-2 * spec.r) - 1.0) + 1.0
        virtuals.append(np.diag(d))
    return actual, virtuals


# --------------------------------------------------------------------------
# State transforms
# --------------------------------------------------------------------------
def haar_unitary(m: int, seed: int) -> Interferometer:
    """Haar-random unitary via QR of a complex Ginibre matrix with phase fix."""
    if m < 1:
        raise InvalidParameterError(f"mode count must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return Interferometer(q, seed)


def apply_interferometer(state: GaussianState, itf: Interferometer) -> GaussianState:
    if state.m != itf.m:
        raise InvalidInputError(f"state has {state.m} modes, interferometer has {itf.m}")
    m = state.m
    T = itf.T
    S = np.zeros((2 * m, 2 * m), dtype=complex)
    S[:m, :m] = T
    S[m:, m:] = T.conj()
    return GaussianState(S @ state.Q @ S.conj().T, S @ state.alpha_bar)


def kernel_matrix(state: GaussianState) -> KernelMatrix:
    """A = X (I - Q^{-1}); the pure block B is extracted when A = B + B*."""
    m = state.m
    try:
        Qinv = np.linalg.inv(state.Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("Q is singular") from exc
    if np.linalg.cond(state.Q) > 1e14:
        raise NumericalDegeneracyError("Q is numerically singular")
    A = _swap_matrix(m) @ (np.eye(2 * m) - Qinv)
    A = (A + A.T) / 2
    off = max(np.max(np.abs(A[:m, m:]), initial=0.0), np.max(np.abs(A[m:, :m]), initial=0.0))
    B = A[:m, :m].copy() if off < PURITY_TOL else None
    return KernelMatrix(_frozen(A), None if B is None else _frozen(B))


def q_from_kernel(A: np.ndarray) -> np.ndarray:
    """Reconstruct Q from a kernel matrix: Q = (I - X A)^{-1}."""
    A = np.asarray(A, dtype=complex)
    m = A.shape[0] // 2
    return np.linalg.inv(np.eye(2 * m) - _swap_matrix(m) @ A)


def _mode_rows(modes: Sequence[int], m: int) -> list[int]:
    modes = list(modes)
    return modes + [k + m for k in modes]


def condition_on_heterodyne(state: GaussianState, kept_modes: Sequence[int], outcomes: Sequence[complex]) -> GaussianState:
    """Condition on heterodyne outcomes of every mode not in ``kept_modes``.

    ``outcomes`` lists the complex amplitudes of the discarded modes in
    ascending mode order. The Q-function of the conditional state is the
    Gaussian conditional of the joint Q-function.
    """
    m = state.m
    kept = [int(k) for k in kept_modes]
    if len(set(kept)) != len(kept) or any(k < 0 or k >= m for k in kept):
        raise InvalidInputError(f"invalid kept modes {kept_modes} for {m} modes")
    dropped = [k for k in range(m) if k not in set(kept)]
    outcomes = np.asarray(outcomes, dtype=complex).reshape(-1)
    if outcomes.shape[0] != len(dropped):
        raise InvalidInputError(f"expected {len(dropped)} outcomes, got {outcomes.shape[0]}")
    if not dropped:
        if kept == list(range(m)):
            return state
        rows = _mode_rows(kept, m)
        return GaussianState(state.Q[np.ix_(rows, rows)], state.alpha_bar[rows])
    a = _mode_rows(kept, m)
    b = _mode_rows(dropped, m)
    Q = state.Q
    Qbb = Q[np.ix_(b, b)]
    if np.linalg.cond(Qbb) > 1e14:
        raise NumericalDegeneracyError("heterodyned block of Q is singular")
    gain = np.linalg.solve(Qbb.T, Q[np.ix_(a, b)].T).T
    v = np.concatenate([outcomes, outcomes.conj()])
    Qc = Q[np.ix_(a, a)] - gain @ Q[np.ix_(b, a)]
    alpha = state.alpha_bar[a] + gain @ (v - state.alpha_bar[b])
    return GaussianState(Qc, alpha)


def reduced_state(state: GaussianState, modes: Sequence[int]) -> GaussianState:
    """Partial trace onto ``modes``."""
    rows = _mode_rows(modes, state.m)
    return GaussianState(state.Q[np.ix_(rows, rows)], state.alpha_bar[rows])


def heterodyne_moments(state: GaussianState, modes: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of (Re alpha, Im alpha) for heterodyne on ``modes``."""
    n = len(modes)
    rows = _mode_rows(modes, state.m)
    Qbb = state.Q[np.ix_(rows, rows)]
    W = _w_matrix(n)
    cov = (W.conj().T @ Qbb @ W).real / 4
    beta = state.alpha_bar[list(modes)]
    return np.concatenate([beta.real, beta.imag]), (cov + cov.T) / 2


def output_state(spec: SqueezingSpec, itf: Interferometer, V: np.ndarray | None = None) -> GaussianState:
    """Push an input covariance (default: the ideal squeezed input) through ``itf``."""
    if V is None:
        V = build_input_covariance(spec)
    return apply_interferometer(xp_to_q(V), itf)
