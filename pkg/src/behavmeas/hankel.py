"""Data Hankel matrices and the Hankel factorization of trajectory measures.

Under persistency of excitation the column space of a depth-``L`` Hankel
matrix of exact LTI data equals the set of length-``L`` external
trajectories. Mapping every atom of a trajectory measure through the
pseudoinverse gives a coefficient-space measure whose pushforward recovers it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measure import DiscreteDistribution

RANK_RTOL = 1e-9
MEMBERSHIP_RTOL = 1e-9


class CoefficientMeasure(DiscreteDistribution):
    """Distribution over Hankel coefficient vectors ``g``."""


class OffBehaviorError(ValueError):
    """An atom does not lie in the Hankel column space within tolerance."""


def _as_signal(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w.reshape(-1, 1) if w.ndim == 1 else w


def hankel_layout(w_data, L: int) -> np.ndarray:
    """Block-Hankel matrix whose column ``j`` stacks ``w_j, ..., w_{j+L-1}``."""
    w = _as_signal(w_data)
    N = w.shape[0]
    if L < 1 or N < L:
        raise ValueError(f"need N >= L >= 1, got N={N}, L={L}")
    cols = N - L + 1
    return np.vstack([w[i:i + cols].T for i in range(L)])


def numerical_rank(s: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True)
class HankelMatrix:
    """Hankel matrix with its SVD; the pseudoinverse shares the rank cut-off."""

    M: np.ndarray
    L: int
    data: np.ndarray | None = None
    rtol: float = RANK_RTOL
    U: np.ndarray = field(init=False, repr=False)
    s: np.ndarray = field(init=False, repr=False)
    Vt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        object.__setattr__(self, "M", M)
        U, s, Vt = np.linalg.svd(M, full_matrices=True)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "Vt", Vt)

    @classmethod
    def from_data(cls, w_data, L: int, rtol: float = RANK_RTOL) -> "HankelMatrix":
        w = _as_signal(w_data)
        return cls(hankel_layout(w, L), L, w, rtol)

    @property
    def shape(self):
        return self.M.shape

    @property
    def rank(self) -> int:
        return numerical_rank(self.s, self.rtol)

    @property
    def pinv(self) -> np.ndarray:
        r = self.rank
        return (self.Vt[:r].T / self.s[:r]) @ self.U[:, :r].T

    def column_basis(self) -> np.ndarray:
        return self.U[:, :self.rank]

    def left_kernel(self) -> np.ndarray:
        """Orthonormal rows ``K`` with ``col H = ker K``."""
        return self.U[:, self.rank:].T

    def project(self, w) -> np.ndarray:
        Ur = self.column_basis()
        return Ur @ (Ur.T @ np.asarray(w, dtype=float))


@dataclass
class PEReport:
    order: int
    required_rank: int
    achieved_rank: int
    singular_values: list

    @property
    def passed(self) -> bool:
        return self.achieved_rank == self.required_rank


def build_hankel(w_data, L: int) -> HankelMatrix:
    return HankelMatrix.from_data(w_data, L)


def check_pe(u_data, order: int, rtol: float = RANK_RTOL) -> PEReport:
    """Persistency of excitation: full row rank of the depth-``order`` input Hankel."""
    u = _as_signal(u_data)
    if order < 1 or u.shape[0] < order:
        raise ValueError(f"input of length {u.shape[0]} is too short for order {order}")
    s = np.linalg.svd(hankel_layout(u, order), compute_uv=False)
    return PEReport(order, order * u.shape[1], numerical_rank(s, rtol), s.tolist())


def behavior_rank(H: HankelMatrix, n_x: int, n_u: int = 1):
    """Return ``(rank, expected, gap)`` with ``expected = L n_u + n_x`` and
    ``gap = sigma_rank / sigma_{rank+1}`` (``inf`` past the spectrum)."""
    r = H.rank
    expected = H.L * n_u + n_x
    s = H.s
    if r == 0:
        gap = float("nan")
    elif r >= s.size or s[r] == 0.0:
        gap = float("inf")
    else:
        gap = float(s[r - 1] / s[r])
    return r, expected, gap


def pinv_lift(H: HankelMatrix, w):
    """Minimum-norm coefficients ``g = H^+ w`` and the residual ``|H g - w|``."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != H.shape[0]:
        raise ValueError(f"window has length {w.size}, Hankel has {H.shape[0]} rows")
    g = H.pinv @ w
    return g, float(np.linalg.norm(H.M @ g - w))


def factorize_measure(H: HankelMatrix, mu_ext: DiscreteDistribution,
                      rtol: float = MEMBERSHIP_RTOL) -> CoefficientMeasure:
    """Canonical coefficient lift, atom by atom through the pseudoinverse."""
    W = mu_ext.points
    G = W @ H.pinv.T
    res = np.linalg.norm(G @ H.M.T - W, axis=1)
    scale = np.maximum(np.linalg.norm(W, axis=1), np.finfo(float).tiny)
    bad = np.nonzero(res > rtol * scale)[0]
    if bad.size:
        raise OffBehaviorError(
            f"{bad.size} atom(s) off the behavior, worst relative residual "
            f"{np.max(res[bad] / scale[bad]):.3e}")
    return CoefficientMeasure(mu_ext.weights, G)


def pushforward_measure(H: HankelMatrix, nu: DiscreteDistribution) -> DiscreteDistribution:
    G = nu.points
    if G.shape[1] != H.shape[1]:
        raise ValueError(f"coefficients have length {G.shape[1]}, Hankel has {H.shape[1]} columns")
    return DiscreteDistribution(nu.weights, G @ H.M.T)


def mean_behavior_residual(mu_ext: DiscreteDistribution, H: HankelMatrix) -> float:
    w_bar = mu_ext.mean()
    return float(np.linalg.norm(w_bar - H.project(w_bar)) / max(1.0, np.linalg.norm(w_bar)))


def covariance_transfer_residual(mu_ext: DiscreteDistribution, H: HankelMatrix,
                                 rtol: float = MEMBERSHIP_RTOL) -> float:
    """Relative Frobenius gap between ``Cov[w]`` and ``H Cov[g] H^T``."""
    nu = factorize_measure(H, mu_ext, rtol)
    cw = mu_ext.covariance()
    cg = H.M @ nu.covariance() @ H.M.T
    denom = np.linalg.norm(cw)
    if denom == 0.0:
        return 0.0 if np.linalg.norm(cg) == 0.0 else float("inf")
    return float(np.linalg.norm(cw - cg) / denom)
