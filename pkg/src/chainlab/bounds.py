"""Closed-form concentration bounds with every universal constant exposed.

Each evaluator returns a BoundReport that echoes its inputs. Tail bounds
return the raw formula value by default so that formula-level invariants
stay exactly testable; pass clip=True to cap the value at 1 when it is
consumed as a probability (the flag records when capping occurred).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class UniversalConstants:
    """The unnamed constants of the bounds, all defaulting to 1.

    c_naor: tail exponent constant of the smooth-space bound.
    C_main: expectation constants (main and sharp variants, and the
        smooth-space expectation companion).
    C1_tail, C2_tail: prefactor and exponent constants of the chaining
        tail bound.
    C_gauss: Gaussian matrix-series expectation constant.
    C_net: covering-number constant in the dual-ball level sums.
    """

    c_naor: float = 1.0
    C_main: float = 1.0
    C1_tail: float = 1.0
    C2_tail: float = 1.0
    C_gauss: float = 1.0
    C_net: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0.0:
                raise ValidationError(f"constant {f.name} must be strictly positive")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_CONSTANTS = UniversalConstants()


@dataclass
class BoundReport:
    """One evaluated bound: value, exponent (when the bound is an
    exponential), a full echo of the inputs, and the clipping flag."""

    name: str
    value: float
    exponent: float | None
    params: dict
    clipped: bool = False
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.value >= 0.0):
            raise NumericalError(f"bound {self.name} produced negative value {self.value!r}")
        if self.clipped and not (self.aux.get("raw_value", 0.0) > 1.0):
            raise NumericalError("clipped reports must record a raw value above 1")

    def to_json_dict(self) -> dict:
        out = {
            "name": self.name,
            "value": self.value,
            "exponent": self.exponent,
            "clipped": self.clipped,
            "params": dict(self.params),
        }
        if self.aux:
            out["aux"] = dict(self.aux)
        return out


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


def _check_lambda(lam: float) -> float:
    _require(0.0 <= lam < 1.0, f"lambda must lie in [0, 1), got {lam!r}; "
                               "the bound is vacuous at lambda = 1")
    return float(lam)


def _tail_report(name, raw, exponent, params, clip, aux=None) -> BoundReport:
    aux = dict(aux or {})
    value, clipped = raw, False
    if clip and raw > 1.0:
        aux["raw_value"] = raw
        value, clipped = 1.0, True
    return BoundReport(name, value, exponent, params, clipped, aux)


def paulin_tail(u: float, sigma2: float, M: float, lam: float,
                clip: bool = False) -> BoundReport:
    """Markov-chain Bernstein tail for a scalar sum of step functions:

        2 exp( -u^2 (2(1-lam) - (1-lam)^2) / (8 sigma2 + 20 u M) )

    sigma2 is the summed stationary second moment and M the uniform bound
    on the steps. The simpler companion form
    2 exp(-min(u^2 (1-lam) / (16 sigma2), u (1-lam) / (40 M))) is reported
    alongside; the raw value never exceeds it.
    """
    _require(u >= 0.0, "threshold u must be nonnegative")
    _require(sigma2 > 0.0, "sigma2 must be positive")
    _require(M > 0.0, "M must be positive")
    lam = _check_lambda(lam)
    g = 1.0 - lam
    expo = -(u * u) * (2.0 * g - g * g) / (8.0 * sigma2 + 20.0 * u * M)
    raw = 2.0 * math.exp(expo)
    simp_expo = -min(u * u * g / (16.0 * sigma2), u * g / (40.0 * M))
    simplified = 2.0 * math.exp(simp_expo)
    if raw > simplified + 1e-12:
        raise NumericalError(
            f"raw Bernstein value {raw!r} exceeds its simplified form {simplified!r}")
    params = {"u": u, "sigma2": sigma2, "M": M, "lambda": lam}
    aux = {"simplified_value": simplified, "simplified_exponent": simp_expo}
    return _tail_report("paulin", raw, expo, params, clip, aux)


def naor_bounds(u: float, n: int, s: float,
                consts: UniversalConstants = DEFAULT_CONSTANTS,
                clip: bool = False) -> BoundReport:
    """Smooth-space tail for independent steps at threshold u * sqrt(n):

        exp(s + 2 - c u^2)

    where s bounds the modulus of uniform smoothness via rho(tau) <= s tau^2.
    The expectation companion C sqrt(n s) rides along in aux.
    """
    _require(n >= 1, "n must be at least 1")
    _require(s > 0.0, "smoothness parameter s must be positive")
    expo = s + 2.0 - consts.c_naor * u * u
    raw = math.exp(expo)
    params = {"u": u, "n": n, "s": s, **consts.as_dict()}
    aux = {"expectation": consts.C_main * math.sqrt(n * s),
           "threshold": u * math.sqrt(n)}
    return _tail_report("naor", raw, expo, params, clip, aux)


def main_expectation(k: int, lam: float, L: float,
                     consts: UniversalConstants = DEFAULT_CONSTANTS) -> BoundReport:
    """Chaining bound on E||f_1(Y_1)+...+f_n(Y_n)|| over a k-dimensional space:

        C k / (1-lam) + C L / sqrt(1-lam)

    with L the Gaussian complexity of the family.
    """
    _require(k >= 1, "dimension k must be at least 1")
    _require(L >= 0.0, "L must be nonnegative")
    lam = _check_lambda(lam)
    value = consts.C_main * k / (1.0 - lam) + consts.C_main * L / math.sqrt(1.0 - lam)
    params = {"k": k, "lambda": lam, "L": L, **consts.as_dict()}
    return BoundReport("main_expectation", value, None, params)


def main_tail(u: float, k: int, lam: float, L: float,
              consts: UniversalConstants = DEFAULT_CONSTANTS,
              clip: bool = False) -> BoundReport:
    """Chaining tail bound:

        C1 exp( -C2 (1-lam) min(u / k, u^2 / L^2) )
    """
    _require(u >= 0.0, "threshold u must be nonnegative")
    _require(k >= 1, "dimension k must be at least 1")
    _require(L > 0.0, "L must be positive")
    lam = _check_lambda(lam)
    expo = -consts.C2_tail * (1.0 - lam) * min(u / k, (u * u) / (L * L))
    raw = consts.C1_tail * math.exp(expo)
    params = {"u": u, "k": k, "lambda": lam, "L": L, **consts.as_dict()}
    return _tail_report("main_tail", raw, expo, params, clip)


def sharp_expectation(kind: str, size: float, lam: float, L: float,
                      consts: UniversalConstants = DEFAULT_CONSTANTS) -> BoundReport:
    """Sharper leading term for the two special spaces:

        matrices (side d):  C d / (1-lam)      + C L / sqrt(1-lam)
        l_inf    (dim k):   C log(k) / (1-lam) + C L / sqrt(1-lam)

    (natural log; the lead replaces the generic ambient-dimension term).
    """
    _require(kind in ("matrix", "linf"), f"unknown sharp variant {kind!r}")
    _require(size >= 1, "size must be at least 1")
    _require(L >= 0.0, "L must be nonnegative")
    lam = _check_lambda(lam)
    lead = float(size) if kind == "matrix" else math.log(size)
    value = consts.C_main * lead / (1.0 - lam) + consts.C_main * L / math.sqrt(1.0 - lam)
    params = {"kind": kind, "size": size, "lambda": lam, "L": L, **consts.as_dict()}
    return BoundReport("sharp_expectation", value, None, params, aux={"lead_term": lead})


def gaussian_matrix_expectation(variance_norm: float, k: float,
                                consts: UniversalConstants = DEFAULT_CONSTANTS) -> BoundReport:
    """Expected operator norm of a Gaussian matrix series in terms of the
    norm of the summed squares.

    Two readings are evaluated: the literal product form
    C * variance_norm * sqrt(log k) and the square-root form
    C * sqrt(variance_norm * log k) that the bound is consumed as. The
    square-root form is the primary value; the literal form rides along
    in aux (they agree at variance_norm = 1).
    """
    _require(variance_norm >= 0.0, "variance_norm must be nonnegative")
    _require(k >= 2, "k must be at least 2 (log k would not be usable)")
    logk = math.log(k)
    as_stated = consts.C_gauss * variance_norm * math.sqrt(logk)
    primary = consts.C_gauss * math.sqrt(variance_norm * logk)
    params = {"variance_norm": variance_norm, "k": k, **consts.as_dict()}
    return BoundReport("gaussian_matrix_expectation", primary, None, params,
                       aux={"as_stated_value": as_stated})


def nsw_tail(u: float, sigma2: float, lam: float, k: float,
             clip: bool = False) -> BoundReport:
    """Matrix Bernstein tail for Markov chains with dimensional prefactor:

        k^(1 - pi/8) exp( -u^2 pi^2/32^2 / (alpha(lam) sigma2 + beta(lam) u) )

    alpha(lam) = (1+lam)/(1-lam); beta(lam) = 4/(3 pi) at lam = 0 and
    (8/pi)/(1-lam) otherwise. The threshold in the numerator and the
    denominator is the same u (flagged in aux: the source display uses two
    letters for it).
    """
    _require(u >= 0.0, "threshold u must be nonnegative")
    _require(sigma2 > 0.0, "sigma2 must be positive")
    _require(k >= 1, "k must be at least 1")
    lam = _check_lambda(lam)
    alpha = (1.0 + lam) / (1.0 - lam)
    beta = 4.0 / (3.0 * math.pi) if lam == 0.0 else (8.0 / math.pi) / (1.0 - lam)
    expo = -(u * u) * (math.pi ** 2) / 1024.0 / (alpha * sigma2 + beta * u)
    raw = k ** (1.0 - math.pi / 8.0) * math.exp(expo)
    params = {"u": u, "sigma2": sigma2, "lambda": lam, "k": k}
    aux = {"alpha": alpha, "beta": beta,
           "threshold_note": "single threshold u used in numerator and denominator"}
    return _tail_report("nsw", raw, expo, params, clip, aux)


def mcdiarmid_tail(u: float, c, tau: int | None = None,
                   clip: bool = False) -> BoundReport:
    """Bounded-difference tail:

        2 exp( -2 u^2 / sum(c_i^2) )            independent inputs
        2 exp( -2 u^2 / (tau sum(c_i^2)) )      chain with mixing time tau

    tau = 1 reproduces the independent form exactly.
    """
    _require(u >= 0.0, "threshold u must be nonnegative")
    c = [float(x) for x in c]
    _require(len(c) > 0, "bounded-difference vector c must be nonempty")
    _require(min(c) > 0.0, "all c_i must be positive")
    if tau is not None:
        _require(int(tau) == tau and tau >= 1, "tau must be a positive integer")
    factor = 1 if tau is None else int(tau)
    denom = factor * math.fsum(x * x for x in c)
    expo = -2.0 * u * u / denom
    raw = 2.0 * math.exp(expo)
    params = {"u": u, "c": c, "tau": tau}
    return _tail_report("mcdiarmid", raw, expo, params, clip)


def gamma1_analytic(kind: str, k: int,
                    consts: UniversalConstants = DEFAULT_CONSTANTS) -> float:
    """Closed-form level sums bounding the gamma_1 functional.

    dual_ball: C_net * sum_{i>=0} 2^i min(1, 2^(-2^i / k)), the geometric
    sum produced by epsilon-nets of a k-dimensional dual ball; truncated
    once terms drop below 1e-15. The total is O(k).

    linf: sum_{i=0}^{ceil(log2 log2 (2k+1))} 2^i, the cost of the
    two-stage sequence over the 2k+1 exact witnesses (base-2 logs, with
    the real-valued upper index rounded up to keep the sequence
    admissible).
    """
    _require(k >= 1, "k must be at least 1")
    if kind == "dual_ball":
        total = 0.0
        for i in range(1024):
            radius = 2.0 ** (-(2.0 ** i) / k)
            term = consts.C_net * (2.0 ** i) * min(1.0, radius)
            if term < 1e-15:
                break
            total += term
        return total
    if kind == "linf":
        top = math.ceil(math.log2(math.log2(2 * k + 1)))
        return float(2 ** (top + 1) - 1)
    raise ValidationError(f"unknown gamma1 kind {kind!r}")
