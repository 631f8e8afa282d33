"""Witness processes, chaining metrics, admissible sequences, and upper
bounds for the gamma functionals.

A witness process is the finite set T of scalar processes
t(i, v) = <witness, f_i(v)> obtained by pairing a step-function family
with dual witnesses, so that the Banach norm of the chain sum equals
sup_{t in T} sum_i t(i, Y_i). Gamma functionals are always reported as
upper bounds realized by a concrete admissible sequence; the exact
infimum is never claimed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text, fmt_float
from .errors import ValidationError
from .montecarlo import McEstimate, gaussian_field_chunks, summarize_samples
from .spaces import StepFunctions, check_probability_vector

METRICS = ("d1", "d2", "linf", "l2")
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class WitnessProcess:
    """Finite T subset of R^(n x N); points has shape (m, n, N).

    `meta` carries the generating dual witnesses aligned with the point
    index (vectors for dual pairings, (x, y) pairs for matrices). The set
    must contain the zero process; builders also close it under negation.
    """

    points: np.ndarray
    origin_kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[0] < 1:
            raise ValidationError(f"points must have shape (m, n, N), got {pts.shape}")
        flat_max = np.max(np.abs(pts), axis=(1, 2))
        zero_hits = np.flatnonzero(flat_max <= ZERO_TOL)
        if len(zero_hits) == 0:
            raise ValidationError("witness process must contain the zero process")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_zero_index", int(zero_hits[0]))

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def n_steps(self) -> int:
        return self.points.shape[1]

    @property
    def n_states(self) -> int:
        return self.points.shape[2]

    @property
    def zero_index(self) -> int:
        return self._zero_index

    def is_symmetric(self, tol: float = ZERO_TOL) -> bool:
        """Closure under negation, up to `tol` per coordinate."""
        pts = self.points
        canon = {(row + 0.0).tobytes() for row in pts}
        if all((-row + 0.0).tobytes() in canon for row in pts):
            return True
        for row in pts:                     # tolerance fallback
            diffs = np.max(np.abs(pts + row), axis=(1, 2))
            if diffs.min() > tol:
                return False
        return True

    def centering_residual(self, mu) -> float:
        """max_{t, i} |E_mu t(i, .)|; zero when the family was centered."""
        mu = check_probability_vector(mu, self.n_states)
        return float(np.max(np.abs(np.tensordot(self.points, mu, axes=(2, 0)))))

    def validate(self, mu=None, symmetric: bool = True, tol: float = 1e-10) -> None:
        if symmetric and not self.is_symmetric():
            raise ValidationError("witness process is not closed under negation")
        if mu is not None and self.centering_residual(mu) > tol:
            raise ValidationError("witness process is not centered under mu")

    def sup_pairing(self, trajectory) -> float:
        """sup_{t in T} sum_i t(i, Y_i) along one trajectory."""
        y = np.asarray(trajectory, dtype=np.int64)
        if y.shape != (self.n_steps,):
            raise ValidationError(f"trajectory must have length {self.n_steps}")
        sums = self.points[:, np.arange(self.n_steps), y].sum(axis=1)
        return float(sums.max())


def _interleaved(half: np.ndarray, zero_row: np.ndarray) -> np.ndarray:
    """[0, +p_0, -p_0, +p_1, -p_1, ...] stacking used by all builders."""
    m = 2 * half.shape[0] + 1
    out = np.empty((m,) + half.shape[1:])
    out[0] = zero_row
    out[1::2] = half
    out[2::2] = -half
    return out


def build_witness_process(f: StepFunctions, kind: str, count: int | None = None,
                          seed: int | None = None) -> WitnessProcess:
    """Witness sets realizing ||sum_i f_i(Y_i)|| as sup_t sum_i t(i, Y_i).

    dual_sample: `count` random unit vectors of the dual space, paired as
        t(i, v) = <x*, f_i(v)>; vector spaces only. Plus negations and 0.
    matrix_pairs: `count` pairs (x, y) of l2-unit vectors paired as
        t(i, v) = <x, f_i(v) y>; matrix spaces only. Closed under
        (x, y) -> (-x, y), plus 0.
    linf_exact: the deterministic 2k+1 witnesses (signed standard basis
        plus 0) whose supremum reproduces the sup norm exactly; l_inf
        spaces only. `count` and `seed` are ignored.
    """
    space = f.space
    table = f.table
    n, n_states = f.n_steps, f.n_states
    if kind == "linf_exact":
        if space.kind != "linf":
            raise ValidationError("linf_exact witnesses require an l_inf space")
        half = np.moveaxis(table, 2, 0)                     # (k, n, N)
        points = _interleaved(half, np.zeros((n, n_states)))
        k = space.dim
        duals = np.zeros((2 * k + 1, k))
        duals[1::2] = np.eye(k)
        duals[2::2] = -np.eye(k)
        return WitnessProcess(points, "linf_exact", {"duals": duals})

    if count is None or count < 1:
        raise ValidationError(f"{kind} witnesses need count >= 1")
    rng = np.random.default_rng(seed)

    if kind == "dual_sample":
        if space.is_matrix:
            raise ValidationError(
                "dual_sample witnesses are for vector spaces; use matrix_pairs")
        q = space.dual_exponent
        g = rng.standard_normal((count, space.dim))
        norms = np.linalg.norm(g, ord=q, axis=1)
        duals_half = g / norms[:, None]
        half = np.einsum("cj,ivj->civ", duals_half, table)
        points = _interleaved(half, np.zeros((n, n_states)))
        duals = _interleaved(duals_half, np.zeros(space.dim))
        return WitnessProcess(points, "dual_sample", {"duals": duals})

    if kind == "matrix_pairs":
        if not space.is_matrix:
            raise ValidationError("matrix_pairs witnesses require a sym_matrix space")
        d = space.side
        x = rng.standard_normal((count, d))
        y = rng.standard_normal((count, d))
        x /= np.linalg.norm(x, axis=1)[:, None]
        y /= np.linalg.norm(y, axis=1)[:, None]
        half = np.einsum("ca,ivab,cb->civ", x, table, y)
        points = _interleaved(half, np.zeros((n, n_states)))
        x_all = _interleaved(x, np.zeros(d))
        y_all = np.empty((2 * count + 1, d))
        y_all[0] = 0.0
        y_all[1::2] = y
        y_all[2::2] = y
        return WitnessProcess(points, "matrix_pairs", {"x": x_all, "y": y_all})

    raise ValidationError(f"unknown witness kind {kind!r}")


# ----------------------------------------------------------------------
# Metrics on scalar processes
# ----------------------------------------------------------------------

def metric(s, t, which: str, lam: float = 0.0, mu=None) -> float:
    """Distance between two scalar processes on [n] x [N].

    linf: max_{i,v} |s - t|                  (unscaled sup metric)
    l2:   sqrt(sum_i E_mu (s - t)^2)         (unscaled L2(1 (x) mu) metric)
    d1:   (40 / (1-lam)) * linf
    d2:   sqrt(16 / (1-lam)) * l2
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape != t.shape or s.ndim != 2:
        raise ValidationError("metric arguments must be (n, N) arrays of equal shape")
    if which not in METRICS:
        raise ValidationError(f"unknown metric {which!r}")
    delta = s - t
    if which in ("d1", "d2") and not (0.0 <= lam < 1.0):
        raise ValidationError("scaled metrics need lambda in [0, 1)")
    if which in ("l2", "d2"):
        mu = check_probability_vector(mu, s.shape[1])
        base = math.sqrt(float(np.einsum("iv,iv,v->", delta, delta, mu)))
        return base if which == "l2" else math.sqrt(16.0 / (1.0 - lam)) * base
    base = float(np.max(np.abs(delta))) if delta.size else 0.0
    return base if which == "linf" else (40.0 / (1.0 - lam)) * base


def pairwise_distances(points: np.ndarray, which: str, lam: float = 0.0,
                       mu=None) -> np.ndarray:
    """Full (m, m) distance matrix between witness points; exact zeros on
    the diagonal and exactly symmetric."""
    if which not in METRICS:
        raise ValidationError(f"unknown metric {which!r}")
    m = points.shape[0]
    D = np.empty((m, m))
    if which in ("l2", "d2"):
        mu = check_probability_vector(mu, points.shape[2])
        for a in range(m):
            delta = points - points[a]
            D[a] = np.sqrt(np.einsum("miv,miv,v->m", delta, delta, mu))
        if which == "d2":
            if not (0.0 <= lam < 1.0):
                raise ValidationError("scaled metrics need lambda in [0, 1)")
            D *= math.sqrt(16.0 / (1.0 - lam))
    else:
        for a in range(m):
            D[a] = np.max(np.abs(points - points[a]), axis=(1, 2))
        if which == "d1":
            if not (0.0 <= lam < 1.0):
                raise ValidationError("scaled metrics need lambda in [0, 1)")
            D *= 40.0 / (1.0 - lam)
    return D


# ----------------------------------------------------------------------
# Admissible sequences and gamma functionals
# ----------------------------------------------------------------------

def _level_cap(i: int, m: int) -> int:
    # |T_0| = 1 and |T_i| <= 2^(2^i); the cap saturates at m quickly.
    if i == 0:
        return 1
    if (1 << i) >= 63:
        return m
    return min(m, 1 << (1 << i))


@dataclass(frozen=True)
class AdmissibleSequence:
    """Nested index sets T_0 subset ... subset T_depth over a witness
    process, with |T_0| = 1 and |T_i| <= 2^(2^i)."""

    levels: tuple[tuple[int, ...], ...]
    depth: int

    def __post_init__(self):
        levels = tuple(tuple(int(j) for j in level) for level in self.levels)
        if len(levels) != self.depth + 1:
            raise ValidationError("need depth + 1 levels")
        if len(levels[0]) != 1:
            raise ValidationError("level 0 must be a singleton")
        prev: set[int] = set()
        for i, level in enumerate(levels):
            if len(level) == 0:
                raise ValidationError("levels must be nonempty")
            if len(level) != len(set(level)):
                raise ValidationError(f"level {i} has duplicate indices")
            if i >= 1 and (1 << i) < 63 and len(level) > (1 << (1 << i)):
                raise ValidationError(f"level {i} exceeds its cardinality cap")
            if not prev.issubset(level):
                raise ValidationError(f"level {i} does not contain level {i - 1}")
            prev = set(level)
        object.__setattr__(self, "levels", levels)

    def to_json_dict(self) -> dict:
        return {"depth": self.depth, "levels": [list(level) for level in self.levels]}

    @classmethod
    def from_json_dict(cls, data: dict) -> "AdmissibleSequence":
        try:
            return cls(levels=tuple(tuple(level) for level in data["levels"]),
                       depth=int(data["depth"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed sequence JSON: {exc}") from exc


def greedy_admissible_sequence(T: WitnessProcess, which: str = "l2",
                               depth: int = 5, lam: float = 0.0,
                               mu=None) -> AdmissibleSequence:
    """Admissible sequence grown by farthest-point insertion.

    One global greedy ordering starts at the zero process; level i is its
    prefix of length min(2^(2^i), |T|), so nesting is automatic. Ties in
    the farthest-point choice go to the lowest point index, making the
    construction deterministic.
    """
    if depth < 0:
        raise ValidationError("depth must be nonnegative")
    D = pairwise_distances(T.points, which, lam=lam, mu=mu)
    m = T.count
    order = [T.zero_index]
    mind = D[T.zero_index].copy()
    mind[T.zero_index] = -1.0
    while len(order) < m:
        nxt = int(np.argmax(mind))
        order.append(nxt)
        np.minimum(mind, D[nxt], out=mind)
        mind[nxt] = -1.0
    levels = tuple(tuple(order[:_level_cap(i, m)]) for i in range(depth + 1))
    return AdmissibleSequence(levels=levels, depth=depth)


def gamma_upper(T: WitnessProcess, seq: AdmissibleSequence, alpha: int,
                which: str = "l2", lam: float = 0.0, mu=None) -> float:
    """sup_{t in T} sum_i 2^(i/alpha) dist(t, T_i) for one admissible
    sequence: an upper bound on gamma_alpha, since any admissible sequence
    witnesses the infimum. Levels past the last one are treated as final
    (exact once the final level exhausts T)."""
    if alpha not in (1, 2):
        raise ValidationError("alpha must be 1 or 2")
    for level in seq.levels:
        if max(level) >= T.count:
            raise ValidationError("sequence indexes points outside the process")
    D = pairwise_distances(T.points, which, lam=lam, mu=mu)
    total = np.zeros(T.count)
    for i, level in enumerate(seq.levels):
        total += 2.0 ** (i / alpha) * D[:, list(level)].min(axis=1)
    return float(total.max())


def linf_two_stage_sequence(T: WitnessProcess, depth: int | None = None,
                            ) -> AdmissibleSequence:
    """The explicit sequence for exact l_inf witness sets: the zero
    singleton through level ceil(log2 log2 (2k+1)), then the full set.

    The full set of 2k+1 points fits the cap at the switch level because
    2^(2^(switch+1)) >= (2k+1)^2.
    """
    m = T.count
    if m < 3 or m % 2 == 0:
        raise ValidationError("expected a 2k+1 point witness process")
    k = (m - 1) // 2
    switch = math.ceil(math.log2(math.log2(2 * k + 1)))
    if depth is None:
        depth = switch + 1
    if depth < switch + 1:
        raise ValidationError(f"depth must be at least {switch + 1} to reach the full set")
    zero = (T.zero_index,)
    full = tuple(range(m))
    levels = tuple(zero if i <= switch else full for i in range(depth + 1))
    return AdmissibleSequence(levels=levels, depth=depth)


def gaussian_sup_mc(T: WitnessProcess, mu, trials: int, seed: int) -> McEstimate:
    """Monte Carlo estimate of E[sup_{t in T} <g, t>] where g has
    independent N(0, mu_v) coordinates per (i, v).

    Shares the Gaussian-field generator with estimate_L, so matched seeds
    make the two comparable draw for draw.
    """
    mu = check_probability_vector(mu, T.n_states)
    if trials < 2:
        raise ValidationError("need at least 2 trials")
    rng = np.random.default_rng(seed)
    values = np.empty(trials)
    pos = 0
    for G in gaussian_field_chunks(rng, trials, T.n_steps, T.n_states, mu):
        scores = np.tensordot(G, T.points, axes=([1, 2], [1, 2]))
        values[pos:pos + len(G)] = scores.max(axis=1)
        pos += len(G)
    return summarize_samples(values, seed)


# ----------------------------------------------------------------------
# Serialization: witness files reuse the functions-file layout with an
# extra first-line tag; sequences go to JSON.
# ----------------------------------------------------------------------

def save_witness_process(path: str, T: WitnessProcess) -> None:
    lines = [f"witness {T.origin_kind}", f"{T.count} {T.n_steps} {T.n_states}"]
    for p in range(T.count):
        for i in range(T.n_steps):
            lines.append(" ".join(fmt_float(x) for x in T.points[p, i]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_witness_process(path: str) -> WitnessProcess:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read witness file {path}: {exc}") from exc
    if len(lines) < 2 or not lines[0].startswith("witness"):
        raise ValidationError(f"witness file {path}: missing 'witness <kind>' tag line")
    tag = lines[0].split()
    origin = tag[1] if len(tag) > 1 else "unknown"
    try:
        m, n, n_states = (int(x) for x in lines[1].split())
    except ValueError as exc:
        raise ValidationError(f"witness file {path}: bad shape line") from exc
    if len(lines) != 2 + m * n:
        raise ValidationError(
            f"witness file {path}: expected {m * n} value lines, found {len(lines) - 2}")
    values = []
    for i, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if len(parts) != n_states:
            raise ValidationError(f"witness file {path}, line {i}: expected {n_states} values")
        try:
            values.append([float(x) for x in parts])
        except ValueError as exc:
            raise ValidationError(f"witness file {path}, line {i}: bad number") from exc
    points = np.array(values).reshape(m, n, n_states)
    return WitnessProcess(points, origin)


def save_sequence(path: str, seq: AdmissibleSequence) -> None:
    atomic_write_text(path, json.dumps(seq.to_json_dict(), indent=2) + "\n")


def load_sequence(path: str) -> AdmissibleSequence:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read sequence file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"sequence file {path} is not valid JSON: {exc}") from exc
    return AdmissibleSequence.from_json_dict(data)
