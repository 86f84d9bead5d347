"""Covariance-based activity detection on a shared codebook.

Given one slot observation Y (L x M), the decoder works from the sample
covariance S = Y Y^H / M and fits nonnegative activity coefficients γ so
that Σ(γ) = A diag(γ) A^H + σ² I explains S.  Two fitting criteria are
supported, both minimized by cyclic or randomly permuted coordinate
descent with exact single-coordinate updates:

* ``ml``:   f(γ) = log det Σ(γ) + tr(Σ(γ)^{-1} S)
* ``nnls``: f(γ) = || Σ(γ) - S ||_F²

For the likelihood criterion the coordinate minimizer has the closed form

    d* = max( (a_k^H Σ^{-1} S Σ^{-1} a_k - a_k^H Σ^{-1} a_k)
              / (a_k^H Σ^{-1} a_k)²,  -γ_k )

and Σ^{-1} is maintained across steps by rank-one (Sherman-Morrison)
updates, refreshed by a full inversion every ``resync_period`` sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from uracov import _sweeps
from uracov.channel import BudgetExceededError, CodingMatrix, as_rng


class InverseDriftError(RuntimeError):
    """Maintained inverse lost consistency and resynchronization failed."""


@dataclass
class DecoderSettings:
    """Knobs of the coordinate-descent fit."""

    method: str = "ml"              # "ml" or "nnls"
    max_sweeps: int = 15
    rel_tol: float = 1e-6           # stop when a sweep improves less than this
    schedule: str = "random"        # "random" (fresh permutation) or "cyclic"
    resync_period: int = 10         # full re-inversion cadence, in sweeps

    def __post_init__(self) -> None:
        if self.method not in ("ml", "nnls"):
            raise ValueError("method must be 'ml' or 'nnls'")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.rel_tol < 0.0:
            raise ValueError("rel_tol must be nonnegative")
        if self.schedule not in ("random", "cyclic"):
            raise ValueError("schedule must be 'random' or 'cyclic'")
        if self.resync_period < 1:
            raise ValueError("resync_period must be at least 1")


@dataclass
class DecoderState:
    """Mutable fit state: γ plus the maintained Σ(γ) and its inverse."""

    matrix: CodingMatrix
    sigma2: float
    gamma: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray

    @classmethod
    def initial(cls, matrix: CodingMatrix, sigma2: float) -> "DecoderState":
        """Zero-activity state: Σ = σ² I."""
        if sigma2 <= 0.0:
            raise ValueError("sigma2 must be positive")
        dim = matrix.slot_len
        eye = np.eye(dim, dtype=np.complex128)
        return cls(
            matrix=matrix,
            sigma2=sigma2,
            gamma=np.zeros(matrix.num_columns, dtype=np.float64),
            sigma=sigma2 * eye,
            sigma_inv=eye / sigma2,
        )

    def resync(self) -> None:
        """Rebuild Σ from γ and refresh Σ^{-1} by a fresh Hermitian inversion."""
        self.sigma = _covariance_from_gamma(self.matrix, self.gamma, self.sigma2)
        inv = np.linalg.inv(self.sigma)
        self.sigma_inv = 0.5 * (inv + inv.conj().T)


def _covariance_from_gamma(matrix: CodingMatrix, gamma: np.ndarray,
                           sigma2: float) -> np.ndarray:
    """Dense Σ(γ) = A diag(γ) A^H + σ² I built over the support of γ."""
    dim = matrix.slot_len
    sigma = sigma2 * np.eye(dim, dtype=np.complex128)
    support = np.flatnonzero(gamma)
    if support.size:
        cols = matrix.entries[:, support]
        sigma += (cols * gamma[support]) @ cols.conj().T
    return 0.5 * (sigma + sigma.conj().T)


def sample_covariance(y: np.ndarray) -> np.ndarray:
    """Antenna-averaged sample covariance Y Y^H / M, exactly Hermitian."""
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] < 1:
        raise ValueError("need an (slot_len, num_antennas) array with M >= 1")
    sc = (y @ y.conj().T) / y.shape[1]
    return 0.5 * (sc + sc.conj().T)


def ml_cost(state: DecoderState, sample_cov: np.ndarray) -> float:
    """Likelihood cost log det Σ + tr(Σ^{-1} S) at the current state."""
    sign, logdet = np.linalg.slogdet(state.sigma)
    if sign.real <= 0.0:
        raise InverseDriftError("covariance model lost positive definiteness")
    trace = np.sum(state.sigma_inv * sample_cov.conj()).real
    return float(logdet + trace)


def ml_coordinate_step(state: DecoderState, sample_cov: np.ndarray,
                       k: int) -> float:
    """Exact minimizer step d* of the likelihood cost along coordinate k.

    Pure: reads the state, mutates nothing.  Always satisfies d* >= -γ_k.
    """
    # contiguous copy so both inner products below reduce identically
    a = np.ascontiguousarray(state.matrix.entries[:, k])
    v = state.sigma_inv @ a
    den = np.vdot(a, v).real
    w = sample_cov @ v
    quad = np.vdot(v, w).real
    d = (quad - den) / (den * den)
    return float(max(d, -state.gamma[k]))


def nnls_coordinate_step(state: DecoderState, sample_cov: np.ndarray,
                         k: int) -> float:
    """Exact minimizer step of the Frobenius residual along coordinate k."""
    a = state.matrix.entries[:, k]
    num = np.vdot(a, (sample_cov - state.sigma) @ a).real
    norm_sq = np.vdot(a, a).real
    d = num / (norm_sq * norm_sq)
    return float(max(d, -state.gamma[k]))


def rank_one_inverse_update(state: DecoderState, k: int, d: float) -> None:
    """Apply γ_k += d and the matching rank-one updates of Σ and Σ^{-1}.

    Sherman-Morrison:  Σ^{-1} <- Σ^{-1} - d v v^H / (1 + d a^H v)  with
    v = Σ^{-1} a_k.  Raises InverseDriftError when the denominator is not
    positive, which signals accumulated drift; callers resynchronize then.
    """
    if state.gamma[k] + d < 0.0:
        raise ValueError("step would drive the coefficient negative")
    if d == 0.0:
        return
    a = state.matrix.entries[:, k]
    v = state.sigma_inv @ a
    den = np.vdot(a, v).real
    denom = 1.0 + d * den
    if denom <= 0.0:
        raise InverseDriftError("rank-one update denominator not positive")
    state.sigma_inv -= (d / denom) * np.outer(v, v.conj())
    state.sigma += d * np.outer(a, a.conj())
    state.gamma[k] += d


def nnls_residual(state: DecoderState, sample_cov: np.ndarray) -> float:
    """Squared Frobenius residual || Σ(γ) - S ||_F² at the current state."""
    diff = state.sigma - sample_cov
    return float(np.vdot(diff, diff).real)


def khatri_rao_objective(gamma: np.ndarray, matrix: CodingMatrix,
                         sample_cov: np.ndarray, sigma2: float,
                         chunk_cols: int = 256,
                         max_entries: int | None = None) -> float:
    """Vectorized least-squares objective || KR(A) γ - vec(S - σ² I) ||₂².

    The Khatri-Rao matrix with columns vec(a_k a_k^H) is never materialized;
    its action on γ is accumulated column block by column block, each block
    holding at most ``chunk_cols`` columns.  Passing ``max_entries`` caps the
    L² x chunk scratch size and raises BudgetExceededError beyond it.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    a = matrix.entries
    dim, num_cols = a.shape
    if gamma.shape != (num_cols,):
        raise ValueError("gamma length must match the codebook width")
    chunk_cols = max(1, int(chunk_cols))
    if max_entries is not None and dim * dim * chunk_cols > max_entries:
        raise BudgetExceededError(
            f"scratch block of {dim * dim * chunk_cols} entries exceeds "
            f"the budget of {max_entries}"
        )
    target = sample_cov - sigma2 * np.eye(dim, dtype=np.complex128)
    acc = -target.reshape(-1)
    for start in range(0, num_cols, chunk_cols):
        stop = min(start + chunk_cols, num_cols)
        block = a[:, start:stop]
        outer = block[:, None, :] * block.conj()[None, :, :]
        acc = acc + outer.reshape(dim * dim, stop - start) @ gamma[start:stop]
    return float(np.vdot(acc, acc).real)


@dataclass(frozen=True)
class SupportDecision:
    """Chosen active column indices, sorted and unique, plus the rule used."""

    indices: np.ndarray
    mode: str
    param: float

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)


def threshold_support(gamma: np.ndarray, nu: float) -> SupportDecision:
    """Keep every coordinate with γ_r >= ν."""
    gamma = np.asarray(gamma, dtype=np.float64)
    idx = np.flatnonzero(gamma >= nu)
    return SupportDecision(indices=idx, mode="threshold", param=float(nu))


def topk_support(gamma: np.ndarray, k: int) -> SupportDecision:
    """Keep the k largest coordinates, ties broken toward lower indices."""
    gamma = np.asarray(gamma, dtype=np.float64)
    k = int(k)
    if k <= 0:
        idx = np.empty(0, dtype=np.int64)
    else:
        k = min(k, gamma.size)
        order = np.argsort(-gamma, kind="stable")
        idx = np.sort(order[:k])
    return SupportDecision(indices=idx, mode="topk", param=float(k))


def _check_hermitian(sample_cov: np.ndarray) -> np.ndarray:
    sc = np.asarray(sample_cov, dtype=np.complex128)
    if sc.ndim != 2 or sc.shape[0] != sc.shape[1]:
        raise ValueError("sample covariance must be square")
    scale = max(float(np.abs(sc).max()), 1e-300)
    if float(np.abs(sc - sc.conj().T).max()) > 1e-8 * scale:
        raise ValueError("sample covariance is not Hermitian")
    return 0.5 * (sc + sc.conj().T)


def coordinate_descent(sample_cov: np.ndarray, matrix: CodingMatrix,
                       sigma2: float, settings: DecoderSettings | None = None,
                       rng: int | np.random.Generator | None = None,
                       backend: str = "auto") -> np.ndarray:
    """Fit activity coefficients γ to a slot sample covariance.

    Starts from γ = 0, Σ = σ² I and performs up to ``max_sweeps`` full
    coordinate passes, stopping early once the relative per-sweep decrease
    of the active cost falls below ``rel_tol``.  The coordinate order is a
    fresh random permutation per sweep (or the fixed cyclic order), driven
    by ``rng``.  Returns the fitted γ.

    ``backend`` selects the compiled kernels ("kernel"), the pure-python
    reference loop ("reference"), or whichever is available ("auto").
    """
    if settings is None:
        settings = DecoderSettings()
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    if backend == "auto":
        backend = "kernel" if _sweeps.HAVE_NUMBA else "reference"
    if backend not in ("kernel", "reference"):
        raise ValueError("backend must be 'auto', 'kernel' or 'reference'")

    sc = _check_hermitian(sample_cov)
    if sc.shape[0] != matrix.slot_len:
        raise ValueError("sample covariance size must match the codebook rows")
    rng = as_rng(rng)
    num_cols = matrix.num_columns

    if backend == "kernel":
        return _descent_kernel(sc, matrix, sigma2, settings, rng)

    state = DecoderState.initial(matrix, sigma2)
    cost = _active_cost(state, sc, settings.method)
    for sweep in range(1, settings.max_sweeps + 1):
        order = _sweep_order(num_cols, settings.schedule, rng)
        for k in order:
            if settings.method == "ml":
                d = ml_coordinate_step(state, sc, k)
            else:
                d = nnls_coordinate_step(state, sc, k)
            if d != 0.0:
                try:
                    rank_one_inverse_update(state, int(k), d)
                except InverseDriftError:
                    state.resync()
                    rank_one_inverse_update(state, int(k), d)
        if sweep % settings.resync_period == 0:
            state.resync()
        new_cost = _active_cost(state, sc, settings.method)
        if cost - new_cost < settings.rel_tol * abs(cost):
            cost = new_cost
            break
        cost = new_cost
    return state.gamma


def _active_cost(state: DecoderState, sc: np.ndarray, method: str) -> float:
    return ml_cost(state, sc) if method == "ml" else nnls_residual(state, sc)


def _sweep_order(num_cols: int, schedule: str,
                 rng: np.random.Generator) -> np.ndarray:
    if schedule == "random":
        return rng.permutation(num_cols).astype(np.int64)
    return np.arange(num_cols, dtype=np.int64)


def _descent_kernel(sc: np.ndarray, matrix: CodingMatrix, sigma2: float,
                    settings: DecoderSettings,
                    rng: np.random.Generator) -> np.ndarray:
    cols = np.ascontiguousarray(matrix.entries.T)
    num_cols, dim = cols.shape
    gamma = np.zeros(num_cols, dtype=np.float64)
    sc = np.ascontiguousarray(sc)

    if settings.method == "ml":
        sigma_inv = np.eye(dim, dtype=np.complex128) / sigma2
        cost = _kernel_ml_cost(sigma_inv, sc)
        for sweep in range(1, settings.max_sweeps + 1):
            order = _sweep_order(num_cols, settings.schedule, rng)
            status = _sweeps.ml_sweep(cols, sc, sigma_inv, gamma, order)
            if status < 0:
                sigma_inv = _fresh_inverse(matrix, gamma, sigma2)
                status = _sweeps.ml_sweep(cols, sc, sigma_inv, gamma, order)
                if status < 0:
                    raise InverseDriftError(
                        "rank-one updates keep failing after resync")
            if sweep % settings.resync_period == 0:
                sigma_inv = _fresh_inverse(matrix, gamma, sigma2)
            new_cost = _kernel_ml_cost(sigma_inv, sc)
            if cost - new_cost < settings.rel_tol * abs(cost):
                break
            cost = new_cost
        return gamma

    norms = np.sum(np.abs(cols) ** 2, axis=1)
    norm4 = norms * norms
    diff = sc - sigma2 * np.eye(dim, dtype=np.complex128)
    cost = float(np.vdot(diff, diff).real)
    for sweep in range(1, settings.max_sweeps + 1):
        order = _sweep_order(num_cols, settings.schedule, rng)
        _sweeps.nnls_sweep(cols, norm4, diff, gamma, order)
        if sweep % settings.resync_period == 0:
            diff = sc - _covariance_from_gamma(matrix, gamma, sigma2)
        new_cost = float(np.vdot(diff, diff).real)
        if cost - new_cost < settings.rel_tol * abs(cost):
            break
        cost = new_cost
    return gamma


def _kernel_ml_cost(sigma_inv: np.ndarray, sc: np.ndarray) -> float:
    sign, logdet_inv = np.linalg.slogdet(sigma_inv)
    if sign.real <= 0.0:
        raise InverseDriftError("maintained inverse lost positive definiteness")
    trace = np.sum(sigma_inv * sc.conj()).real
    return float(-logdet_inv + trace)


def _fresh_inverse(matrix: CodingMatrix, gamma: np.ndarray,
                   sigma2: float) -> np.ndarray:
    sigma = _covariance_from_gamma(matrix, gamma, sigma2)
    inv = np.linalg.inv(sigma)
    return 0.5 * (inv + inv.conj().T)
