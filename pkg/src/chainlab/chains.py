"""Finite stationary reversible Markov chains.

Construction and validation of transition kernels, stationary
distributions, the spectral quantity lambda = ||A - E_mu|| on L2(mu)
(E_mu being the rank-one averaging operator), total-variation mixing
times, and trajectory sampling started from stationarity. States are
0-indexed throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from ._io import atomic_write_text, fmt_float
from .errors import NumericalError, ValidationError

ROW_TOL = 1e-12
STATIONARITY_TOL = 1e-10
REVERSIBILITY_TOL = 1e-10
# Dense symmetric eigensolve up to this many states, Lanczos beyond.
DENSE_EIG_LIMIT = 2048


def _as_square_matrix(rows) -> np.ndarray:
    A = np.array(rows, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValidationError(f"transition matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("transition matrix has non-finite entries")
    return A


def _check_row_stochastic(A: np.ndarray) -> None:
    if A.min() < -ROW_TOL or A.max() > 1.0 + ROW_TOL:
        raise ValidationError("transition matrix entries must lie in [0, 1]")
    err = float(np.max(np.abs(A.sum(axis=1) - 1.0)))
    if err > ROW_TOL:
        raise ValidationError(f"rows must sum to 1 (max deviation {err:.3e})")


def is_irreducible(A: np.ndarray) -> bool:
    """Strong connectivity of the directed graph of positive transitions."""
    graph = scipy.sparse.csr_matrix(A > 0)
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    return int(n_comp) == 1


def stationary_distribution(A, tol: float = 1e-12) -> np.ndarray:
    """Unique stationary distribution of an irreducible row-stochastic matrix.

    Solves mu^T A = mu^T with sum(mu) = 1 by replacing one row of A^T - I
    with the normalization constraint. The residual ||mu^T A - mu^T||_1 is
    verified against `tol` afterwards, so the returned vector always meets
    the advertised accuracy or an error is raised.
    """
    A = _as_square_matrix(A)
    _check_row_stochastic(A)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if not is_irreducible(A):
        raise ValidationError("chain is reducible: no unique positive stationary vector")
    n = A.shape[0]
    M = A.T - np.eye(n)
    M[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        mu = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"stationary solve failed: {exc}") from exc
    if mu.min() <= 0.0:
        raise NumericalError("stationary solve produced non-positive entries")
    mu = mu / mu.sum()
    residual = float(np.abs(mu @ A - mu).sum())
    if residual > tol:
        raise NumericalError(f"stationary residual {residual:.3e} exceeds tol {tol:.1e}")
    return mu


def stationary_power_iteration(A, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Iterative route to the stationary distribution, kept as an
    independent cross-check of the direct solve.

    Runs left power iteration on the half-lazy average (A + I) / 2, which
    has the same stationary vector and is aperiodic whenever the chain is
    irreducible, so the iteration converges even for periodic chains.
    Failure to reach `tol` within `max_iter` signals reducibility or an
    extremely small spectral gap.
    """
    A = _as_square_matrix(A)
    _check_row_stochastic(A)
    n = A.shape[0]
    B = 0.5 * (A + np.eye(n))
    mu = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        if float(np.abs(mu @ A - mu).sum()) <= tol:
            return mu
        mu = mu @ B
        mu /= mu.sum()
    raise NumericalError(f"power iteration did not converge within {max_iter} steps")


def _lambda_from(rows: np.ndarray, mu: np.ndarray, force_iterative: bool = False) -> float:
    """||A - E_mu|| on L2(mu) via the symmetric conjugation D^1/2 A D^-1/2.

    The conjugated matrix S is symmetric exactly when the chain is
    reversible; subtracting the rank-one projector onto sqrt(mu) removes
    the top eigenvalue, so the norm is the largest remaining |eigenvalue|.
    """
    n = rows.shape[0]
    s = np.sqrt(mu)
    S = rows * (s[:, None] / s[None, :])
    asym = float(np.max(np.abs(S - S.T)))
    if asym > 1e-8:
        raise ValidationError(f"kernel is not reversible (conjugation asymmetry {asym:.3e})")
    S = 0.5 * (S + S.T)
    if n == 1:
        return 0.0
    if n <= DENSE_EIG_LIMIT and not force_iterative:
        M = S - np.outer(s, s)
        eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
        return float(np.max(np.abs(eigs)))

    def matvec(x):
        return S @ x - s * (s @ x)

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = np.full(n, 1.0 / math.sqrt(n))
    try:
        vals = eigsh(op, k=1, which="LM", v0=v0, tol=1e-12,
                     maxiter=50 * n, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise NumericalError(f"Lanczos iteration for lambda did not converge: {exc}") from exc
    return float(abs(vals[0]))


@dataclass(frozen=True)
class TransitionKernel:
    """Validated row-stochastic matrix with cached spectral data.

    `rows[v, w]` is the probability of stepping from v to w, `mu` the
    stationary distribution, and `lam` the operator norm of A - E_mu on
    L2(mu) (the second largest absolute eigenvalue of a reversible chain).
    Construction enforces row sums, positivity of mu, stationarity,
    detailed balance, and lam in [0, 1]; instances are immutable and safe
    for concurrent reads. `tau` is filled in lazily by `mixing_time`.
    """

    rows: np.ndarray
    mu: np.ndarray
    lam: float = field(init=False)
    tau: int | None = field(default=None, init=False)

    def __post_init__(self):
        A = _as_square_matrix(self.rows)
        _check_row_stochastic(A)
        mu = np.array(self.mu, dtype=float)
        if mu.shape != (A.shape[0],):
            raise ValidationError(f"mu has shape {mu.shape}, expected ({A.shape[0]},)")
        if mu.min() <= 0.0:
            raise ValidationError("stationary vector must be strictly positive")
        if abs(float(mu.sum()) - 1.0) > ROW_TOL:
            raise ValidationError("stationary vector must sum to 1")
        stat = float(np.max(np.abs(mu @ A - mu)))
        if stat > STATIONARITY_TOL:
            raise ValidationError(f"mu is not stationary (residual {stat:.3e})")
        flux = mu[:, None] * A
        rev = float(np.max(np.abs(flux - flux.T)))
        if rev > REVERSIBILITY_TOL:
            raise ValidationError(f"detailed balance violated (max imbalance {rev:.3e})")
        lam = _lambda_from(A, mu)
        if lam > 1.0 + 1e-9:
            raise NumericalError(f"computed lambda {lam!r} exceeds 1")
        A.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "rows", A)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", min(lam, 1.0))

    @property
    def n_states(self) -> int:
        return self.rows.shape[0]

    def residuals(self) -> dict:
        """Certificate of the construction invariants, for reports."""
        A, mu = self.rows, self.mu
        flux = mu[:, None] * A
        return {
            "row_sum": float(np.max(np.abs(A.sum(axis=1) - 1.0))),
            "stationarity": float(np.max(np.abs(mu @ A - mu))),
            "detailed_balance": float(np.max(np.abs(flux - flux.T))),
        }


def spectral_lambda(kernel: TransitionKernel) -> float:
    """The cached ||A - E_mu|| on L2(mu) of a validated kernel."""
    return kernel.lam


def mixing_time(kernel: TransitionKernel, threshold: float = 0.25,
                max_steps: int = 100_000) -> int:
    """Smallest t with max_v TV(A^t[v, :], mu) <= threshold.

    Worst case over deterministic start states, computed by direct matrix
    powering. Raises NumericalError at the step cap (periodic or very slow
    chains never get there). The result under the default threshold 1/4 is
    cached on the kernel.
    """
    if not (0.0 < threshold < 1.0):
        raise ValidationError("threshold must lie in (0, 1)")
    if max_steps < 1:
        raise ValidationError("max_steps must be positive")
    if kernel.tau is not None and threshold == 0.25:
        return kernel.tau
    A, mu = kernel.rows, kernel.mu
    P = A.copy()
    tv = math.inf
    for t in range(1, max_steps + 1):
        tv = 0.5 * float(np.max(np.abs(P - mu).sum(axis=1)))
        if tv <= threshold:
            if threshold == 0.25:
                object.__setattr__(kernel, "tau", t)
            return t
        P = P @ A
    raise NumericalError(
        f"chain did not mix to TV {threshold} within {max_steps} steps (TV still {tv:.4f})")


def cumulative_rows(kernel: TransitionKernel) -> np.ndarray:
    """Row-wise CDF of the kernel with the last column pinned to 1."""
    C = np.cumsum(kernel.rows, axis=1)
    C[:, -1] = 1.0
    return C


def _cumulative_mu(kernel: TransitionKernel) -> np.ndarray:
    c = np.cumsum(kernel.mu)
    c[-1] = 1.0
    return c


def sample_start_states(kernel: TransitionKernel, count: int, rng) -> np.ndarray:
    """`count` independent draws from the stationary distribution."""
    cmu = _cumulative_mu(kernel)
    states = np.searchsorted(cmu, rng.random(count), side="right")
    return np.minimum(states, kernel.n_states - 1).astype(np.int64)


def step_states(cum_rows: np.ndarray, states: np.ndarray, rng) -> np.ndarray:
    """Advance a vector of chain states one step in parallel."""
    u = rng.random(states.shape[0])
    nxt = np.sum(cum_rows[states] <= u[:, None], axis=1)
    return np.minimum(nxt, cum_rows.shape[0] - 1).astype(np.int64)


def sample_trajectory(kernel: TransitionKernel, n: int, seed: int) -> np.ndarray:
    """States Y_1..Y_n with Y_1 ~ mu and transitions by the kernel rows.

    Deterministic given the seed.
    """
    if n < 1:
        raise ValidationError("trajectory length must be at least 1")
    rng = np.random.default_rng(seed)
    cum = cumulative_rows(kernel)
    cmu = _cumulative_mu(kernel)
    out = np.empty(n, dtype=np.int64)
    state = min(int(np.searchsorted(cmu, rng.random(), side="right")), kernel.n_states - 1)
    out[0] = state
    for i in range(1, n):
        state = min(int(np.searchsorted(cum[state], rng.random(), side="right")),
                    kernel.n_states - 1)
        out[i] = state
    return out


# ----------------------------------------------------------------------
# Chain families
# ----------------------------------------------------------------------

_KINDS = ("complete", "cycle", "hypercube", "lazy", "metropolis", "file")


@dataclass(frozen=True)
class ChainSpec:
    """Declarative description of a chain to build.

    complete(size): all transitions 1/N (the i.i.d. chain on uniform mu).
    cycle(size, step_prob): move to each cycle neighbour with probability
        step_prob/2, hold otherwise.
    hypercube(dim, hold_prob): flip a uniformly random coordinate of a
        dim-bit string (2^dim states), holding with probability hold_prob.
    lazy(base, hold_prob): hold_prob * I + (1 - hold_prob) * A_base.
    metropolis(target, proposal): Metropolis filter of the proposal chain
        targeting the given strictly positive distribution.
    file(path): row-stochastic matrix from a kernel file.
    """

    kind: str
    size: int = 0
    step_prob: float = 0.5
    hold_prob: float = 0.0
    base: "ChainSpec | None" = None
    target: tuple[float, ...] | None = None
    path: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown chain kind {self.kind!r}")
        if self.kind in ("complete", "cycle", "hypercube") and self.size < 1:
            raise ValidationError(f"{self.kind} chain needs a positive size")
        if self.kind == "cycle" and not (0.0 < self.step_prob <= 1.0):
            raise ValidationError("cycle step_prob must lie in (0, 1]")
        if self.kind == "hypercube" and not (0.0 <= self.hold_prob < 1.0):
            raise ValidationError("hypercube hold_prob must lie in [0, 1)")
        if self.kind == "lazy":
            if self.base is None:
                raise ValidationError("lazy chain needs a base spec")
            if not (0.0 <= self.hold_prob <= 1.0):
                raise ValidationError("lazy hold_prob must lie in [0, 1]")
        if self.kind == "metropolis":
            if self.base is None or self.target is None:
                raise ValidationError("metropolis needs a target and a proposal spec")
            if min(self.target) <= 0.0:
                raise ValidationError("metropolis target must be strictly positive")
        if self.kind == "file" and not self.path:
            raise ValidationError("file chain needs a path")

    @classmethod
    def complete(cls, size: int) -> "ChainSpec":
        return cls("complete", size=size)

    @classmethod
    def cycle(cls, size: int, step_prob: float = 0.5) -> "ChainSpec":
        return cls("cycle", size=size, step_prob=step_prob)

    @classmethod
    def hypercube(cls, dim: int, hold_prob: float = 0.0) -> "ChainSpec":
        return cls("hypercube", size=dim, hold_prob=hold_prob)

    @classmethod
    def lazy(cls, base: "ChainSpec", hold_prob: float) -> "ChainSpec":
        return cls("lazy", base=base, hold_prob=hold_prob)

    @classmethod
    def metropolis(cls, target, proposal: "ChainSpec") -> "ChainSpec":
        return cls("metropolis", target=tuple(float(x) for x in target), base=proposal)

    @classmethod
    def from_file(cls, path: str) -> "ChainSpec":
        return cls("file", path=str(path))


def _matrix_for(spec: ChainSpec) -> np.ndarray:
    if spec.kind == "complete":
        n = spec.size
        return np.full((n, n), 1.0 / n)
    if spec.kind == "cycle":
        n, p = spec.size, spec.step_prob
        A = np.zeros((n, n))
        for v in range(n):
            A[v, v] += 1.0 - p
            A[v, (v + 1) % n] += p / 2.0
            A[v, (v - 1) % n] += p / 2.0
        return A
    if spec.kind == "hypercube":
        d, hold = spec.size, spec.hold_prob
        n = 1 << d
        A = np.zeros((n, n))
        flip = (1.0 - hold) / d
        for v in range(n):
            A[v, v] = hold
            for b in range(d):
                A[v, v ^ (1 << b)] = flip
        return A
    if spec.kind == "lazy":
        base = _matrix_for(spec.base)
        return spec.hold_prob * np.eye(base.shape[0]) + (1.0 - spec.hold_prob) * base
    if spec.kind == "metropolis":
        P = _matrix_for(spec.base)
        pi = np.asarray(spec.target, dtype=float)
        if pi.shape != (P.shape[0],):
            raise ValidationError(
                f"metropolis target has {pi.shape[0]} entries, proposal has {P.shape[0]} states")
        pi = pi / pi.sum()
        num = pi[None, :] * P.T          # pi_w P_wv at (v, w)
        den = pi[:, None] * P            # pi_v P_vw at (v, w)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = np.where(den > 0, np.minimum(1.0, num / den), 0.0)
        A = P * accept
        np.fill_diagonal(A, 0.0)
        A[np.arange(len(A)), np.arange(len(A))] = 1.0 - A.sum(axis=1)
        return A
    if spec.kind == "file":
        return load_kernel_matrix(spec.path)
    raise ValidationError(f"unknown chain kind {spec.kind!r}")


def _eig_cross_check(A: np.ndarray, mu: np.ndarray) -> None:
    """Compare the solved stationary vector against the left eigenvector."""
    w, V = np.linalg.eig(A.T)
    idx = int(np.argmin(np.abs(w - 1.0)))
    vec = V[:, idx]
    if np.max(np.abs(vec.imag)) > 1e-8:
        raise NumericalError("top left eigenvector is not real")
    vec = vec.real
    vec = vec / vec.sum()
    diff = float(np.max(np.abs(vec - mu)))
    if diff > 1e-8:
        raise NumericalError(f"stationary vector disagrees with eigen solve by {diff:.3e}")


def build_chain(spec: ChainSpec) -> TransitionKernel:
    """Build and fully validate the kernel described by `spec`.

    Rejects reducible chains (no unique positive stationary vector) and
    non-reversible ones; the returned kernel carries mu and lambda.
    """
    A = _matrix_for(spec)
    if not is_irreducible(A):
        raise ValidationError("resulting chain is reducible")
    mu = stationary_distribution(A)
    if A.shape[0] <= 512:
        _eig_cross_check(A, mu)
    return TransitionKernel(rows=A, mu=mu)


# ----------------------------------------------------------------------
# Kernel file format: line 1 = N, then N lines of N decimals each.
# ----------------------------------------------------------------------

def load_kernel_matrix(path: str) -> np.ndarray:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read kernel file {path}: {exc}") from exc
    if not lines:
        raise ValidationError(f"kernel file {path} is empty")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ValidationError(f"kernel file {path}: first line must be the state count") from exc
    if n < 1 or len(lines) != n + 1:
        raise ValidationError(f"kernel file {path}: expected {n} rows, found {len(lines) - 1}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != n:
            raise ValidationError(f"kernel file {path}, line {i}: expected {n} values")
        try:
            rows.append([float(x) for x in parts])
        except ValueError as exc:
            raise ValidationError(f"kernel file {path}, line {i}: bad number") from exc
    A = np.array(rows)
    _check_row_stochastic(A)
    return A


def save_kernel_matrix(path: str, rows) -> None:
    A = _as_square_matrix(rows)
    _check_row_stochastic(A)
    lines = [str(A.shape[0])]
    for row in A:
        lines.append(" ".join(fmt_float(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
