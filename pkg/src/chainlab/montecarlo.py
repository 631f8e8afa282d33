"""Monte Carlo estimators: Gaussian complexity of a step-function family
and ground-truth statistics of the Markov chain sum.

All estimators are deterministic given their seed; trials of a given call
consume one contiguous random stream, so matched seeds reuse identical
draws (which turns homogeneity checks into exact tests). Per-trial values
are accumulated with compensated summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chains import TransitionKernel, cumulative_rows, sample_start_states, step_states
from .errors import ValidationError
from .spaces import StepFunctions, check_probability_vector

_CHUNK_ELEMENTS = 1 << 22
_TRIAL_CHUNK = 8192


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("an estimate needs at least one trial")
        if not math.isfinite(self.mean):
            raise ValidationError("estimate mean must be finite")
        if self.stderr < 0.0:
            raise ValidationError("stderr must be nonnegative")

    def to_json_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr,
                "trials": self.trials, "seed": self.seed}


@dataclass(frozen=True)
class TailCurve:
    """Empirical survival function P(value >= threshold) on an ascending
    grid; nonincreasing by construction."""

    thresholds: np.ndarray
    probabilities: np.ndarray
    trials: int

    def __post_init__(self):
        th = np.asarray(self.thresholds, dtype=float)
        pr = np.asarray(self.probabilities, dtype=float)
        if th.ndim != 1 or th.shape != pr.shape:
            raise ValidationError("thresholds and probabilities must be matching vectors")
        if np.any(np.diff(th) < 0):
            raise ValidationError("thresholds must be ascending")
        if pr.min() < 0.0 or pr.max() > 1.0:
            raise ValidationError("probabilities must lie in [0, 1]")
        if np.any(np.diff(pr) > 1e-12):
            raise ValidationError("probabilities must be nonincreasing in the threshold")
        th.setflags(write=False)
        pr.setflags(write=False)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "probabilities", pr)


def summarize_samples(values: np.ndarray, seed: int) -> McEstimate:
    """Sample mean and standard error via exactly rounded accumulation."""
    trials = len(values)
    mean = math.fsum(values) / trials
    if trials > 1:
        var = math.fsum((values - mean) ** 2) / (trials - 1)
        stderr = math.sqrt(var / trials)
    else:
        stderr = 0.0
    return McEstimate(mean=mean, stderr=stderr, trials=trials, seed=seed)


def gaussian_field_chunks(rng, trials: int, n: int, n_states: int, mu):
    """Chunks of (c, n, N) Gaussians with Var(g_v) = mu_v per column v.

    The chunk policy depends only on (n, N), so two estimators consuming
    this generator with equal seeds see bitwise-identical fields.
    """
    sqrt_mu = np.sqrt(mu)
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n * n_states))
    left = trials
    while left > 0:
        c = min(left, chunk)
        left -= c
        yield rng.standard_normal((c, n, n_states)) * sqrt_mu


def estimate_L(f: StepFunctions, mu, trials: int, seed: int) -> McEstimate:
    """Gaussian complexity E|| sum_i sum_v g_v^(i) f_i(v) || with
    independent g_v^(i) of variance mu_v, by direct simulation."""
    mu = check_probability_vector(mu, f.n_states)
    if trials < 2:
        raise ValidationError("need at least 2 trials")
    if not f.centered:
        raise ValidationError("family must be centered/normalized first")
    rng = np.random.default_rng(seed)
    values = np.empty(trials)
    pos = 0
    for G in gaussian_field_chunks(rng, trials, f.n_steps, f.n_states, mu):
        sums = np.tensordot(G, f.table, axes=([1, 2], [0, 1]))
        values[pos:pos + len(G)] = f.space.norms(sums)
        pos += len(G)
    return summarize_samples(values, seed)


def chain_sum_samples(f: StepFunctions, kernel: TransitionKernel, trials: int,
                      seed: int) -> np.ndarray:
    """Per-trial ||sum_i f_i(Y_i)|| over independent stationary trajectories."""
    if f.n_states != kernel.n_states:
        raise ValidationError(
            f"family has {f.n_states} states, kernel has {kernel.n_states}")
    if not f.centered:
        raise ValidationError("family must be centered first")
    if trials < 2:
        raise ValidationError("need at least 2 trials")
    rng = np.random.default_rng(seed)
    cum = cumulative_rows(kernel)
    values = np.empty(trials)
    pos = 0
    while pos < trials:
        c = min(_TRIAL_CHUNK, trials - pos)
        states = sample_start_states(kernel, c, rng)
        acc = f.table[0, states].astype(float)
        for i in range(1, f.n_steps):
            states = step_states(cum, states, rng)
            acc += f.table[i, states]
        values[pos:pos + c] = f.space.norms(acc)
        pos += c
    return values


def default_threshold_grid(mean: float, count: int = 32, lo_factor: float = 0.1,
                           hi_factor: float = 10.0) -> np.ndarray:
    """Log-spaced grid spanning [lo_factor * mean, hi_factor * mean]."""
    if count < 2:
        raise ValidationError("threshold grid needs at least 2 points")
    if not (0.0 < lo_factor < hi_factor):
        raise ValidationError("need 0 < lo_factor < hi_factor")
    if mean <= 0.0:
        return np.linspace(0.0, 1.0, count)
    return np.geomspace(lo_factor * mean, hi_factor * mean, count)


def estimate_chain_sum(f: StepFunctions, kernel: TransitionKernel, trials: int,
                       seed: int, thresholds=None, threshold_count: int = 32,
                       lo_factor: float = 0.1, hi_factor: float = 10.0,
                       ) -> tuple[McEstimate, TailCurve]:
    """Chain-sum ground truth: sample mean with standard error plus the
    empirical tail on a threshold grid (log-spaced around the empirical
    mean unless a grid is supplied)."""
    values = chain_sum_samples(f, kernel, trials, seed)
    est = summarize_samples(values, seed)
    if thresholds is None:
        thresholds = default_threshold_grid(est.mean, threshold_count, lo_factor, hi_factor)
    else:
        thresholds = np.asarray(thresholds, dtype=float)
    probs = (values[:, None] >= thresholds[None, :]).mean(axis=0)
    return est, TailCurve(thresholds=thresholds, probabilities=probs, trials=trials)


def tail_comparison_csv(tail: TailCurve, bound_columns: dict) -> str:
    """Wide CSV text comparing one empirical tail against named bounds.

    Columns: threshold, empirical_tail, then one column per entry of
    `bound_columns` (name -> values aligned with the threshold grid).
    """
    from ._io import fmt_float

    names = list(bound_columns)
    for name, vals in bound_columns.items():
        if len(vals) != len(tail.thresholds):
            raise ValidationError(f"bound column {name!r} does not match the grid")
    lines = [",".join(["threshold", "empirical_tail"] + names)]
    for i, (u, p) in enumerate(zip(tail.thresholds, tail.probabilities)):
        cells = [fmt_float(u), fmt_float(p)]
        cells += [fmt_float(bound_columns[name][i]) for name in names]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_tail_comparison(path: str, tail: TailCurve, bound_columns: dict) -> None:
    from ._io import atomic_write_text

    atomic_write_text(path, tail_comparison_csv(tail, bound_columns))


def variance_statistics(f: StepFunctions, mu, matrix_form: bool | None = None,
                        ) -> tuple[float, float | None]:
    """(sum_i E_mu ||f_i||^2, ||sum_i E_mu[f_i(v)^2]|| or None).

    The second statistic is the operator norm of the summed stationary
    matrix second moments; it only exists for symmetric-matrix families,
    and requesting it on a vector space is an error.
    """
    mu = check_probability_vector(mu, f.n_states)
    if matrix_form is None:
        matrix_form = f.space.is_matrix
    if matrix_form and not f.space.is_matrix:
        raise ValidationError("matrix variance norm requested on a vector space")
    norms2 = f.norms() ** 2
    sigma2 = math.fsum(np.tensordot(norms2, mu, axes=(1, 0)))
    variance_norm = None
    if matrix_form:
        sq = np.einsum("ivab,ivbc,v->ac", f.table, f.table, mu)
        sq = 0.5 * (sq + sq.T)
        variance_norm = float(np.max(np.abs(np.linalg.eigvalsh(sq))))
    return sigma2, variance_norm
