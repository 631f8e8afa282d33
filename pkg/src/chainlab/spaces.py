"""Finite-dimensional real normed spaces and step-function families.

Supported spaces: l_p on R^k (1 <= p <= inf, with l_inf as its own kind)
and symmetric d x d matrices under the l2 -> l2 operator norm. Elements
are numpy arrays of shape (k,) or (d, d); a step-function family
f_1..f_n : [N] -> X is an (n, N, ...) table of elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text, fmt_float
from .errors import NumericalError, ValidationError

SYMMETRY_TOL = 1e-12


def check_probability_vector(mu, n: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n,):
        raise ValidationError(f"probability vector has shape {mu.shape}, expected ({n},)")
    if mu.min() <= 0.0:
        raise ValidationError("probability vector must be strictly positive")
    if abs(float(mu.sum()) - 1.0) > 1e-10:
        raise ValidationError("probability vector must sum to 1")
    return mu


@dataclass(frozen=True)
class NormedSpace:
    """Descriptor of one of the supported spaces.

    kind "lp" carries the exponent p (1 <= p < inf), "linf" is the sup
    norm on R^k, and "sym_matrix" is the spectral norm on symmetric
    side x side matrices. `dim` is the ambient real dimension: k for
    vectors, side^2 for matrices.
    """

    kind: str
    dim: int
    p: float = math.inf
    side: int = 0

    def __post_init__(self):
        if self.kind not in ("lp", "linf", "sym_matrix"):
            raise ValidationError(f"unknown space kind {self.kind!r}")
        if self.dim < 1:
            raise ValidationError("space dimension must be positive")
        if self.kind == "lp" and not (1.0 <= self.p < math.inf):
            raise ValidationError("lp exponent must satisfy 1 <= p < inf")
        if self.kind == "sym_matrix" and self.side * self.side != self.dim:
            raise ValidationError("sym_matrix dim must equal side^2")

    @classmethod
    def lp(cls, p, dim: int) -> "NormedSpace":
        p = float(p)
        if math.isnan(p) or p < 1.0:
            raise ValidationError("lp exponent must be at least 1")
        if math.isinf(p):
            return cls.linf(dim)
        return cls("lp", int(dim), p=p)

    @classmethod
    def linf(cls, dim: int) -> "NormedSpace":
        return cls("linf", int(dim), p=math.inf)

    @classmethod
    def sym_matrix(cls, side: int) -> "NormedSpace":
        side = int(side)
        if side < 1:
            raise ValidationError("matrix side must be positive")
        return cls("sym_matrix", side * side, side=side)

    @property
    def element_shape(self) -> tuple[int, ...]:
        if self.kind == "sym_matrix":
            return (self.side, self.side)
        return (self.dim,)

    @property
    def is_matrix(self) -> bool:
        return self.kind == "sym_matrix"

    @property
    def dual_exponent(self) -> float:
        """Hoelder conjugate of p; the dual of l_p is l_q."""
        if self.kind == "linf":
            return 1.0
        if self.kind == "lp":
            return math.inf if self.p == 1.0 else self.p / (self.p - 1.0)
        raise ValidationError("dual exponent is only defined for vector spaces")

    def _check_batch(self, batch) -> np.ndarray:
        arr = np.asarray(batch, dtype=float)
        es = self.element_shape
        if arr.shape[-len(es):] != es:
            raise ValidationError(
                f"element shape {arr.shape[-len(es):]} does not match space {es}")
        if self.is_matrix:
            asym = float(np.max(np.abs(arr - np.swapaxes(arr, -1, -2))))
            if asym > SYMMETRY_TOL:
                raise ValidationError(f"matrix elements must be symmetric (max asymmetry {asym:.3e})")
        return arr

    def norms(self, batch) -> np.ndarray:
        """Norms over the trailing element axes of `batch`."""
        arr = self._check_batch(batch)
        if self.is_matrix:
            return np.max(np.abs(np.linalg.eigvalsh(arr)), axis=-1)
        return np.linalg.norm(arr, ord=self.p, axis=-1)

    def norm(self, x) -> float:
        return float(self.norms(x))

    def dual_norm(self, x) -> float:
        """Dual-space norm; closed form exists for vector spaces only.

        Matrix duals are handled by pairing against rank-one witnesses
        instead of evaluating the nuclear norm.
        """
        if self.is_matrix:
            raise ValidationError("dual norm is only evaluated on vector spaces")
        arr = np.asarray(x, dtype=float)
        if arr.shape != self.element_shape:
            raise ValidationError("dual element has the wrong shape")
        return float(np.linalg.norm(arr, ord=self.dual_exponent))

    def random_elements(self, rng, count: int) -> np.ndarray:
        """Standard-normal elements (symmetrized for matrix spaces)."""
        g = rng.standard_normal((count,) + self.element_shape)
        if self.is_matrix:
            g = 0.5 * (g + np.swapaxes(g, -1, -2))
        return g

    def random_unit(self, rng, count: int) -> np.ndarray:
        """Gaussian directions rescaled to unit norm in this space."""
        g = self.random_elements(rng, count)
        norms = self.norms(g)
        if norms.min() <= 0.0:
            raise NumericalError("degenerate zero draw while sampling unit vectors")
        extra = (1,) * len(self.element_shape)
        return g / norms.reshape((count,) + extra)


@dataclass(frozen=True)
class StepFunctions:
    """Family f_1..f_n : [N] -> X stored as an (n, N, ...) table.

    `centered` records that every f_i has mu-mean zero and max norm at
    most 1 (the normal form produced by `center_and_normalize`);
    `degenerate` flags an all-zero family whose scale was undefined.
    """

    space: NormedSpace
    table: np.ndarray
    centered: bool = False
    max_norm: float = float("nan")
    degenerate: bool = False

    def __post_init__(self):
        arr = np.array(self.table, dtype=float)
        es = self.space.element_shape
        if arr.ndim != 2 + len(es) or arr.shape[2:] != es:
            raise ValidationError(
                f"table shape {arr.shape} does not match (n, N) + {es}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("table needs at least one step and one state")
        self.space._check_batch(arr)
        max_norm = self.max_norm
        if math.isnan(max_norm):
            max_norm = float(self.space.norms(arr).max())
        arr.setflags(write=False)
        object.__setattr__(self, "table", arr)
        object.__setattr__(self, "max_norm", max_norm)

    @property
    def n_steps(self) -> int:
        return self.table.shape[0]

    @property
    def n_states(self) -> int:
        return self.table.shape[1]

    def norms(self) -> np.ndarray:
        return self.space.norms(self.table)

    def prefix(self, n: int) -> "StepFunctions":
        """First n functions of the family; centering survives restriction."""
        if not (1 <= n <= self.n_steps):
            raise ValidationError(f"prefix length {n} out of range 1..{self.n_steps}")
        return StepFunctions(self.space, self.table[:n], centered=self.centered,
                             degenerate=self.degenerate)

    def scaled(self, factor: float) -> "StepFunctions":
        return StepFunctions(self.space, self.table * factor, centered=self.centered,
                             degenerate=self.degenerate)


def center_and_normalize(f: StepFunctions, mu) -> StepFunctions:
    """Subtract the mu-mean from every f_i, then rescale the whole table so
    that max_{i,v} ||f_i(v)|| <= 1 (a no-op when the max is already <= 1).

    An all-zero family after centering has no meaningful scale; it comes
    back unscaled with the `degenerate` flag set. The operation is
    idempotent.
    """
    mu = check_probability_vector(mu, f.n_states)
    means = np.tensordot(f.table, mu, axes=(1, 0))
    centered = f.table - means[:, None]
    m = float(f.space.norms(centered).max())
    if m <= 1e-15:
        return StepFunctions(f.space, centered, centered=True, degenerate=True)
    scale = 1.0 / m if m > 1.0 else 1.0
    out = StepFunctions(f.space, centered * scale, centered=True)
    resid = float(np.max(np.abs(np.tensordot(out.table, mu, axes=(1, 0)))))
    if resid > 1e-10:
        raise NumericalError(f"centering residual {resid:.3e} exceeds 1e-10")
    return out


def smoothness_pair_value(space: NormedSpace, x, y, tau: float) -> float:
    """(||x + tau y|| + ||x - tau y||) / 2 - 1 for one pair of unit vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * (space.norm(x + tau * y) + space.norm(x - tau * y)) - 1.0


def estimate_smoothness(space: NormedSpace, tau: float, trials: int, seed: int,
                        _chunk: int = 2048) -> float:
    """Monte Carlo lower bound on the modulus of uniform smoothness at tau.

    Maximizes (||x + tau y|| + ||x - tau y||) / 2 - 1 over sampled
    unit-norm pairs. The true modulus is the supremum over all such pairs,
    so the estimate only ever approaches it from below, and it is
    nondecreasing in `trials` for a fixed seed (the sample stream is a
    prefix). The value is always >= 0 by the triangle inequality.
    """
    if tau <= 0:
        raise ValidationError("tau must be positive")
    if trials < 1:
        raise ValidationError("need at least one trial")
    rng = np.random.default_rng(seed)
    best = -math.inf
    left = trials
    es = space.element_shape
    extra = (1,) * len(es)
    while left > 0:
        c = min(left, _chunk)
        left -= c
        g = rng.standard_normal((c, 2) + es)
        if space.is_matrix:
            g = 0.5 * (g + np.swapaxes(g, -1, -2))
        norms = space.norms(g)
        if norms.min() <= 0.0:
            raise NumericalError("degenerate zero draw while sampling unit vectors")
        g = g / norms.reshape((c, 2) + extra)
        x, y = g[:, 0], g[:, 1]
        vals = 0.5 * (space.norms(x + tau * y) + space.norms(x - tau * y)) - 1.0
        best = max(best, float(vals.max()))
    return best


# ----------------------------------------------------------------------
# Functions file format: header "n N kind dim", then one line of `dim`
# decimals per (i, v) in row-major order (matrix entries row-major).
# ----------------------------------------------------------------------

def _kind_token(space: NormedSpace) -> str:
    if space.kind == "lp":
        return f"lp:{fmt_float(space.p)}"
    return space.kind


def _space_from_token(token: str, dim: int) -> NormedSpace:
    if token == "linf":
        return NormedSpace.linf(dim)
    if token == "sym_matrix":
        side = math.isqrt(dim)
        if side * side != dim:
            raise ValidationError(f"sym_matrix dim {dim} is not a perfect square")
        return NormedSpace.sym_matrix(side)
    if token.startswith("lp:"):
        try:
            return NormedSpace.lp(float(token[3:]), dim)
        except ValueError as exc:
            raise ValidationError(f"bad lp exponent in kind token {token!r}") from exc
    raise ValidationError(f"unknown space kind token {token!r}")


def save_functions(path: str, f: StepFunctions) -> None:
    header = f"{f.n_steps} {f.n_states} {_kind_token(f.space)} {f.space.dim}"
    lines = [header]
    flat = f.table.reshape(f.n_steps * f.n_states, f.space.dim)
    for row in flat:
        lines.append(" ".join(fmt_float(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_functions(path: str) -> StepFunctions:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read functions file {path}: {exc}") from exc
    if not lines:
        raise ValidationError(f"functions file {path} is empty")
    head = lines[0].split()
    if len(head) != 4:
        raise ValidationError(f"functions file {path}: header must be 'n N kind dim'")
    try:
        n, n_states, dim = int(head[0]), int(head[1]), int(head[3])
    except ValueError as exc:
        raise ValidationError(f"functions file {path}: bad header numbers") from exc
    space = _space_from_token(head[2], dim)
    if len(lines) != 1 + n * n_states:
        raise ValidationError(
            f"functions file {path}: expected {n * n_states} value lines, found {len(lines) - 1}")
    values = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != dim:
            raise ValidationError(f"functions file {path}, line {i}: expected {dim} values")
        try:
            values.append([float(x) for x in parts])
        except ValueError as exc:
            raise ValidationError(f"functions file {path}, line {i}: bad number") from exc
    table = np.array(values).reshape((n, n_states) + space.element_shape)
    return StepFunctions(space, table)
