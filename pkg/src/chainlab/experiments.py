"""Config-driven experiment orchestration.

Builds a chain, generates (or loads) a step-function family, estimates the
chain-sum ground truth and the Gaussian complexity by Monte Carlo across a
sweep of n, evaluates every enabled closed-form bound, and emits one CSV
and one JSON report. Everything is reproducible from (config, seed): the
CSV produced by two identical runs is byte-identical.
"""

from __future__ import annotations

import configparser
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import bounds as bd
from ._io import atomic_write_text, fmt_float
from .chains import ChainSpec, TransitionKernel, build_chain, mixing_time
from .errors import NumericalError, ValidationError
from .montecarlo import estimate_chain_sum, estimate_L, variance_statistics
from .spaces import NormedSpace, StepFunctions, center_and_normalize, load_functions

CSV_HEADER = "n,threshold,empirical_mean,empirical_tail,bound_name,bound_value,ratio"
OUTPUT_DIR_ENV = "CHAINLAB_OUTPUT_DIR"

TAIL_BOUNDS = ("paulin", "main_tail", "nsw", "mcdiarmid", "naor")
EXPECTATION_BOUNDS = ("main_expectation", "sharp_expectation", "gaussian_matrix_expectation")
KNOWN_BOUNDS = TAIL_BOUNDS + EXPECTATION_BOUNDS

FUNCTION_KINDS = ("random_unit_vectors", "random_rademacher_matrices", "file")

# Sub-stream tags for deriving per-stage seeds from the experiment seed.
_SEED_FUNCTIONS = 1
_SEED_L = 2
_SEED_CHAIN = 3


def child_seed(seed: int, stage: int, n: int) -> int:
    """Deterministic sub-seed for one (stage, sweep point)."""
    ss = np.random.SeedSequence([int(seed), int(stage), int(n)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    chain: ChainSpec
    space: NormedSpace
    functions_kind: str
    functions_path: str | None
    n_sweep: tuple[int, ...]
    trials: int
    l_trials: int
    seed: int
    constants: bd.UniversalConstants
    bounds_enabled: tuple[str, ...]
    threshold_count: int = 32
    threshold_lo: float = 0.1
    threshold_hi: float = 10.0
    naor_s: float = 1.0
    output_dir: str = "out"
    mixing_threshold: float = 0.25
    mixing_cap: int = 100_000

    def __post_init__(self):
        if self.functions_kind not in FUNCTION_KINDS:
            raise ValidationError(f"unknown functions kind {self.functions_kind!r}")
        if self.functions_kind == "file" and not self.functions_path:
            raise ValidationError("functions kind 'file' needs a path")
        if self.functions_kind == "random_rademacher_matrices" and not self.space.is_matrix:
            raise ValidationError("random_rademacher_matrices requires a sym_matrix space")
        if self.functions_kind == "random_unit_vectors" and self.space.is_matrix:
            raise ValidationError("random_unit_vectors requires a vector space")
        if not self.n_sweep:
            raise ValidationError("n_sweep must be nonempty")
        if any(n < 1 for n in self.n_sweep) or any(
                b <= a for a, b in zip(self.n_sweep, self.n_sweep[1:])):
            raise ValidationError("n_sweep must be positive and strictly ascending")
        if self.l_trials < 2 or self.trials < 2:
            raise ValidationError("trials and l_trials must be at least 2")
        tails = [b for b in self.bounds_enabled if b in TAIL_BOUNDS]
        if tails and self.trials < 100:
            raise ValidationError("tail experiments need trials >= 100")
        for name in self.bounds_enabled:
            if name not in KNOWN_BOUNDS:
                raise ValidationError(f"unknown bound {name!r}")
        if ("nsw" in self.bounds_enabled or
                "gaussian_matrix_expectation" in self.bounds_enabled) and not self.space.is_matrix:
            raise ValidationError("nsw and gaussian_matrix_expectation need a sym_matrix space")
        if "paulin" in self.bounds_enabled and self.space.dim != 1:
            raise ValidationError("the paulin bound applies to scalar families only")
        if "sharp_expectation" in self.bounds_enabled and self.space.kind == "lp":
            raise ValidationError("sharp_expectation needs a sym_matrix or linf space")
        if self.threshold_count < 2 or not (0.0 < self.threshold_lo < self.threshold_hi):
            raise ValidationError("bad threshold grid parameters")
        if self.naor_s <= 0.0:
            raise ValidationError("naor_s must be positive")


# ----------------------------------------------------------------------
# Config file parsing (flat INI with sections; defaults are materialized
# into the report for provenance)
# ----------------------------------------------------------------------

def _chain_from_section(sec) -> ChainSpec:
    kind = sec.get("kind", "complete")
    if kind in ("complete", "cycle", "hypercube"):
        size = sec.getint("size", fallback=0)
        if kind == "cycle":
            return ChainSpec.cycle(size, sec.getfloat("step_prob", fallback=0.5))
        if kind == "hypercube":
            return ChainSpec.hypercube(size, sec.getfloat("hold_prob", fallback=0.0))
        return ChainSpec.complete(size)
    if kind in ("lazy", "metropolis"):
        base_kind = sec.get("base_kind", "cycle")
        base_size = sec.getint("base_size", fallback=0)
        if base_kind == "cycle":
            base = ChainSpec.cycle(base_size, sec.getfloat("base_step_prob", fallback=0.5))
        elif base_kind == "hypercube":
            base = ChainSpec.hypercube(base_size, sec.getfloat("base_hold_prob", fallback=0.0))
        elif base_kind == "complete":
            base = ChainSpec.complete(base_size)
        elif base_kind == "file":
            base = ChainSpec.from_file(sec.get("base_path", ""))
        else:
            raise ValidationError(f"unsupported base chain kind {base_kind!r}")
        if kind == "lazy":
            return ChainSpec.lazy(base, sec.getfloat("hold_prob", fallback=0.5))
        target = [float(x) for x in sec.get("target", "").split()]
        return ChainSpec.metropolis(target, base)
    if kind == "file":
        return ChainSpec.from_file(sec.get("path", ""))
    raise ValidationError(f"unknown chain kind {kind!r}")


def _space_from_section(sec) -> NormedSpace:
    kind = sec.get("kind", "lp")
    if kind == "sym_matrix":
        return NormedSpace.sym_matrix(sec.getint("side", fallback=0))
    if kind == "linf":
        return NormedSpace.linf(sec.getint("dim", fallback=0))
    if kind == "lp":
        return NormedSpace.lp(sec.getfloat("p", fallback=2.0), sec.getint("dim", fallback=0))
    raise ValidationError(f"unknown space kind {kind!r}")


def parse_config(path: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str          # keep key case (constants are capitalized)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from exc
    try:
        return config_from_parser(cp)
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed config {path}: {exc}") from exc


def config_from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    def section(name):
        return cp[name] if cp.has_section(name) else cp["DEFAULT"]

    chain = _chain_from_section(section("chain"))
    space = _space_from_section(section("space"))
    fsec = section("functions")
    sweep = section("sweep")
    bsec = section("bounds")
    csec = section("constants")
    tsec = section("thresholds")
    osec = section("output")

    n_sweep = tuple(int(x) for x in sweep.get("n", "").split())
    consts = bd.UniversalConstants(
        c_naor=csec.getfloat("c_naor", fallback=1.0),
        C_main=csec.getfloat("C_main", fallback=1.0),
        C1_tail=csec.getfloat("C1_tail", fallback=1.0),
        C2_tail=csec.getfloat("C2_tail", fallback=1.0),
        C_gauss=csec.getfloat("C_gauss", fallback=1.0),
        C_net=csec.getfloat("C_net", fallback=1.0),
    )
    return ExperimentConfig(
        chain=chain,
        space=space,
        functions_kind=fsec.get("kind", "random_unit_vectors"),
        functions_path=fsec.get("path", fallback=None),
        n_sweep=n_sweep,
        trials=sweep.getint("trials", fallback=400),
        l_trials=sweep.getint("l_trials", fallback=200),
        seed=sweep.getint("seed", fallback=0),
        constants=consts,
        bounds_enabled=tuple(bsec.get("enabled", "").split()),
        threshold_count=tsec.getint("count", fallback=32),
        threshold_lo=tsec.getfloat("lo_factor", fallback=0.1),
        threshold_hi=tsec.getfloat("hi_factor", fallback=10.0),
        naor_s=bsec.getfloat("naor_s", fallback=1.0),
        output_dir=osec.get("dir", "out"),
        mixing_threshold=sweep.getfloat("mixing_threshold", fallback=0.25),
        mixing_cap=sweep.getint("mixing_cap", fallback=100_000),
    )


def _chain_dict(spec: ChainSpec) -> dict:
    out = {"kind": spec.kind}
    if spec.kind in ("complete", "cycle", "hypercube"):
        out["size"] = spec.size
    if spec.kind == "cycle":
        out["step_prob"] = spec.step_prob
    if spec.kind in ("hypercube", "lazy"):
        out["hold_prob"] = spec.hold_prob
    if spec.base is not None:
        out["base"] = _chain_dict(spec.base)
    if spec.target is not None:
        out["target"] = list(spec.target)
    if spec.path is not None:
        out["path"] = spec.path
    return out


def resolved_config_dict(config: ExperimentConfig) -> dict:
    """Every effective setting, defaults included, for provenance."""
    return {
        "chain": _chain_dict(config.chain),
        "space": {"kind": config.space.kind, "dim": config.space.dim,
                  "p": config.space.p, "side": config.space.side},
        "functions": {"kind": config.functions_kind, "path": config.functions_path},
        "sweep": {"n": list(config.n_sweep), "trials": config.trials,
                  "l_trials": config.l_trials, "seed": config.seed,
                  "mixing_threshold": config.mixing_threshold,
                  "mixing_cap": config.mixing_cap},
        "bounds": {"enabled": list(config.bounds_enabled), "naor_s": config.naor_s},
        "constants": config.constants.as_dict(),
        "thresholds": {"count": config.threshold_count,
                       "lo_factor": config.threshold_lo,
                       "hi_factor": config.threshold_hi},
        "output": {"dir": config.output_dir},
    }


# ----------------------------------------------------------------------
# Running
# ----------------------------------------------------------------------

@contextmanager
def _stage(name: str):
    """Re-raise module errors with the failing stage named."""
    try:
        yield
    except (ValidationError, NumericalError) as exc:
        raise type(exc)(f"stage '{name}': {exc}") from exc


def _generate_functions(config: ExperimentConfig, kernel: TransitionKernel) -> StepFunctions:
    n_max = config.n_sweep[-1]
    n_states = kernel.n_states
    space = config.space
    if config.functions_kind == "file":
        raw = load_functions(config.functions_path)
        if raw.space != space:
            raise ValidationError("functions file space does not match the configured space")
        if raw.n_states != n_states:
            raise ValidationError(
                f"functions file has {raw.n_states} states, chain has {n_states}")
        if raw.n_steps < n_max:
            raise ValidationError(
                f"functions file provides {raw.n_steps} steps, sweep needs {n_max}")
    else:
        rng = np.random.default_rng(child_seed(config.seed, _SEED_FUNCTIONS, 0))
        if config.functions_kind == "random_unit_vectors":
            g = rng.standard_normal((n_max, n_states, space.dim))
            norms = space.norms(g)
            raw = StepFunctions(space, g / norms[..., None])
        else:
            d = space.side
            signs = rng.integers(0, 2, size=(n_max, n_states, d, d)) * 2 - 1
            entries = signs / math.sqrt(d)
            sym = 0.5 * (entries + np.swapaxes(entries, -1, -2))
            raw = StepFunctions(space, sym)
    f = center_and_normalize(raw, kernel.mu)
    if f.degenerate:
        raise ValidationError("function family is identically zero after centering")
    return f


def _tail_bound_value(name: str, u: float, n: int, config: ExperimentConfig,
                      lam: float, L: float, sigma2: float, mean: float,
                      c_vec, tau: int | None) -> bd.BoundReport:
    if name == "paulin":
        M = max(c_vec) / 2.0        # c_i = 2 max_v ||f_i(v)||, so M = max norm
        return bd.paulin_tail(u, sigma2, M, lam, clip=True)
    if name == "main_tail":
        return bd.main_tail(u, config.space.dim, lam, L, config.constants, clip=True)
    if name == "nsw":
        return bd.nsw_tail(u, sigma2, lam, config.space.dim, clip=True)
    if name == "mcdiarmid":
        shifted = max(u - mean, 0.0)  # centered bound applied to P(W >= u)
        return bd.mcdiarmid_tail(shifted, c_vec, tau=tau, clip=True)
    if name == "naor":
        return bd.naor_bounds(u / math.sqrt(n), n, config.naor_s,
                              config.constants, clip=True)
    raise ValidationError(f"unknown tail bound {name!r}")


def _expectation_bound(name: str, config: ExperimentConfig, lam: float, L: float,
                       variance_norm: float | None) -> bd.BoundReport:
    space = config.space
    if name == "main_expectation":
        return bd.main_expectation(space.dim, lam, L, config.constants)
    if name == "sharp_expectation":
        kind = "matrix" if space.is_matrix else "linf"
        size = space.side if space.is_matrix else space.dim
        return bd.sharp_expectation(kind, size, lam, L, config.constants)
    if name == "gaussian_matrix_expectation":
        return bd.gaussian_matrix_expectation(variance_norm, space.dim, config.constants)
    raise ValidationError(f"unknown expectation bound {name!r}")


@dataclass
class ExperimentReport:
    rows: list
    metadata: dict
    sweep: list

    def csv_text(self) -> str:
        lines = [CSV_HEADER]
        for row in self.rows:
            cells = []
            for key in ("n", "threshold", "empirical_mean", "empirical_tail",
                        "bound_name", "bound_value", "ratio"):
                val = row[key]
                if val is None:
                    cells.append("")
                elif isinstance(val, str):
                    cells.append(val)
                elif isinstance(val, (int, np.integer)):
                    cells.append(str(int(val)))
                else:
                    cells.append(fmt_float(val))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def json_text(self) -> str:
        import json
        return json.dumps({"metadata": self.metadata, "sweep": self.sweep}, indent=2) + "\n"

    def write(self, out_dir: str) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "report.csv")
        json_path = os.path.join(out_dir, "report.json")
        atomic_write_text(csv_path, self.csv_text())
        atomic_write_text(json_path, self.json_text())
        return csv_path, json_path


def resolve_output_dir(config: ExperimentConfig, override: str | None = None) -> str:
    """CLI flag > environment variable > config value."""
    if override:
        return override
    return os.environ.get(OUTPUT_DIR_ENV) or config.output_dir


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Execute the full sweep described by `config`.

    Any module error propagates with the failing stage named. The report
    is fully determined by (config, seed).
    """
    t_start = time.perf_counter()
    with _stage("build_chain"):
        kernel = build_chain(config.chain)
    with _stage("generate_functions"):
        f_full = _generate_functions(config, kernel)
    lam = kernel.lam

    tau = None
    if "mcdiarmid" in config.bounds_enabled:
        with _stage("mixing_time"):
            tau = mixing_time(kernel, config.mixing_threshold, config.mixing_cap)
    else:
        try:
            tau = mixing_time(kernel, config.mixing_threshold, config.mixing_cap)
        except NumericalError:
            tau = None              # metadata-only; slow mixing is not fatal here

    rows = []
    sweep_out = []
    seeds_used = {}
    for n in config.n_sweep:
        f_n = f_full.prefix(n)
        with _stage(f"variance_statistics(n={n})"):
            sigma2, variance_norm = variance_statistics(f_n, kernel.mu)
        seed_l = child_seed(config.seed, _SEED_L, n)
        with _stage(f"estimate_L(n={n})"):
            l_est = estimate_L(f_n, kernel.mu, config.l_trials, seed_l)
        seed_mc = child_seed(config.seed, _SEED_CHAIN, n)
        with _stage(f"estimate_chain_sum(n={n})"):
            est, tail = estimate_chain_sum(
                f_n, kernel, config.trials, seed_mc,
                threshold_count=config.threshold_count,
                lo_factor=config.threshold_lo, hi_factor=config.threshold_hi)
        seeds_used[str(n)] = {"estimate_L": seed_l, "estimate_chain_sum": seed_mc}

        c_vec = (2.0 * f_n.norms().max(axis=1)).tolist()
        bound_reports = {}
        with _stage(f"bounds(n={n})"):
            for name in config.bounds_enabled:
                if name in EXPECTATION_BOUNDS:
                    rep = _expectation_bound(name, config, lam, l_est.mean, variance_norm)
                    bound_reports[name] = rep.to_json_dict()
                    rows.append({
                        "n": n, "threshold": None, "empirical_mean": est.mean,
                        "empirical_tail": None, "bound_name": name,
                        "bound_value": rep.value,
                        "ratio": est.mean / rep.value if rep.value > 0 else math.nan,
                    })
                else:
                    reps = []
                    for u, p_emp in zip(tail.thresholds, tail.probabilities):
                        rep = _tail_bound_value(name, float(u), n, config, lam,
                                                l_est.mean, sigma2, est.mean,
                                                c_vec, tau)
                        reps.append(rep.to_json_dict())
                        rows.append({
                            "n": n, "threshold": float(u), "empirical_mean": est.mean,
                            "empirical_tail": float(p_emp), "bound_name": name,
                            "bound_value": rep.value,
                            "ratio": float(p_emp) / rep.value if rep.value > 0 else math.nan,
                        })
                    bound_reports[name] = reps
        for row in rows:
            if not math.isfinite(row["ratio"] if row["ratio"] is not None else 0.0):
                raise NumericalError(f"non-finite ratio for bound {row['bound_name']}")
        sweep_out.append({
            "n": n,
            "empirical_mean": est.mean,
            "empirical_stderr": est.stderr,
            "L": l_est.to_json_dict(),
            "sigma2": sigma2,
            "variance_norm": variance_norm,
            "thresholds": [float(x) for x in tail.thresholds],
            "empirical_tail": [float(x) for x in tail.probabilities],
            "bounds": bound_reports,
        })

    metadata = {
        "config": resolved_config_dict(config),
        "n_states": kernel.n_states,
        "lambda": lam,
        "tau": tau,
        "kernel_residuals": kernel.residuals(),
        "seeds": seeds_used,
        "wall_time_s": time.perf_counter() - t_start,
    }
    return ExperimentReport(rows=rows, metadata=metadata, sweep=sweep_out)
