"""Stochastic model of the Retina-OT-Rt circuit.

Covers the SGC dendritic field (density, parent-node and terminal presence
probabilities, Poisson activation, response and energy accumulation) and the
one-stage versus two-stage SGC-to-Rt integration, including a Monte Carlo
check that two-stage activation never falls below one-stage activation.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

DEFAULT_SEED = 20240611
VIOLATION_TOL = 1e-12


@dataclass(frozen=True)
class DendriticFieldParams:
    alpha: float = 0.5
    b: float = 1.0
    c: float | None = None  # None -> pi / field_radius (half a period across the field)
    field_radius: float = 2000.0  # micrometres
    gp_sigma: float = 1.0
    p_max: float = 0.5
    tau: float = 0.02  # seconds
    e_unit: float = 1.0

    def __post_init__(self):
        if self.c is None:
            object.__setattr__(self, "c", math.pi / self.field_radius)
        for name in ("alpha", "b", "c", "field_radius", "gp_sigma", "p_max", "tau", "e_unit"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.field_radius <= 0 or self.gp_sigma <= 0:
            raise ValueError("field_radius and gp_sigma must be positive")
        if not 0 < self.p_max < 1:
            raise ValueError(f"p_max must lie in (0, 1), got {self.p_max}")
        if self.tau <= 0 or self.e_unit <= 0:
            raise ValueError("tau and e_unit must be positive")
        if self._min_density() < -1e-12:
            raise ValueError(
                f"density alpha*cos(c*r) + b becomes negative on [0, {self.field_radius}] "
                f"(alpha={self.alpha}, b={self.b}, c={self.c})"
            )

    def _min_density(self) -> float:
        # cos(c r) over r in [0, R] reaches its extremes at the ends or at multiples of pi/c
        lo, hi = sorted((0.0, self.c * self.field_radius))
        cands = [math.cos(lo), math.cos(hi)]
        k = math.ceil(lo / math.pi)
        while k * math.pi <= hi and len(cands) < 4:
            cands.append(math.cos(k * math.pi))
            k += 1
        return min(self.alpha * v + self.b for v in cands)


def density(params: DendriticFieldParams, r: float) -> float:
    """Dendritic terminal density at distance r from the field centre."""
    if not 0 <= r <= params.field_radius:
        raise ValueError(f"r={r} outside [0, {params.field_radius}]")
    return params.alpha * math.cos(params.c * r) + params.b


def parent_probability(params: DendriticFieldParams, r: float, area: float) -> float:
    """Probability that a parent node (two symmetric dendrites) occurs in a region of ``area``."""
    if area < 0:
        raise ValueError(f"area must be non-negative, got {area}")
    return 0.5 * density(params, r) * area


def dendrite_presence(params: DendriticFieldParams, r: float, area: float, offset: float) -> float:
    """Presence probability of a dendrite at ``offset`` from its parent: Gaussian density times parent probability."""
    g = math.exp(-0.5 * (offset / params.gp_sigma) ** 2) / (math.sqrt(2 * math.pi) * params.gp_sigma)
    return g * parent_probability(params, r, area)


def activation_pmf(rho_times_area, n_a):
    """Poisson probability of ``n_a`` activated terminals given expected count rho*A."""
    lam = np.asarray(rho_times_area, dtype=np.float64)
    n = np.asarray(n_a)
    if np.any(lam < 0) or np.any(n < 0):
        raise ValueError("rho*A and n_a must be non-negative")
    if not np.all(np.equal(np.mod(n, 1), 0)):
        raise ValueError("n_a must be an integer")
    out = stats.poisson.pmf(n, lam)
    return float(out) if np.ndim(out) == 0 else out


def response_probability(params: DendriticFieldParams, delta_t: float) -> float:
    """P_r(dt) = p_max (1 - exp(-dt / tau)); tends to p_max as dt grows."""
    if not delta_t > 0:
        raise ValueError(f"delta_t must be positive, got {delta_t}")
    if math.isinf(delta_t):
        return params.p_max
    return params.p_max * -math.expm1(-delta_t / params.tau)


def response(params: DendriticFieldParams, n_a: int, delta_t: float, moving: bool = False) -> float:
    """Response to a static stimulus, plus p_max for a moving one."""
    if n_a < 0:
        raise ValueError("n_a must be non-negative")
    y = n_a * response_probability(params, delta_t)
    return y + params.p_max if moving else y


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float


def expected_extra_activations(params: DendriticFieldParams, rho_times_area: float, cutoff: int = 200) -> SeriesValue:
    """Truncated sum over n >= 1 of n * P_a(n) * (1 - (1 - p_max)^n).

    The tail bound is the Poisson mean mass beyond the cutoff, sum_{n > cutoff} n P_a(n),
    which dominates the omitted terms.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    lam = float(rho_times_area)
    if lam < 0:
        raise ValueError("rho*A must be non-negative")
    n = np.arange(1, cutoff + 1)
    pmf = stats.poisson.pmf(n, lam)
    value = float(np.sum(n * pmf * -np.expm1(n * math.log1p(-params.p_max))))
    # sum_{n>K} n P(n; lam) = lam * P(N >= K; lam)
    tail = lam * float(stats.poisson.sf(cutoff - 1, lam)) if lam > 0 else 0.0
    return SeriesValue(value, tail)


def accumulate_energy(e_t: float, e_unit: float, p_next: float) -> float:
    if not 0 <= p_next <= 1:
        raise ValueError(f"p_next must lie in [0, 1], got {p_next}")
    if not (math.isfinite(e_t) and math.isfinite(e_unit)):
        raise ValueError("energies must be finite")
    return e_t + e_unit * p_next


def energy_trace(e0: float, e_unit: float, probabilities) -> np.ndarray:
    out = [e0]
    for p in probabilities:
        out.append(accumulate_energy(out[-1], e_unit, p))
    return np.array(out)


def n_subsets(set_size: int, spacing: int) -> int:
    """Number of interleaved subsets when elements are taken every ``spacing`` sites."""
    if spacing < 1:
        raise ValueError("spacing must be >= 1")
    return set_size // spacing


@dataclass(frozen=True)
class TwoStageInstance:
    p: np.ndarray  # subset selection probabilities
    e: np.ndarray  # per-subset activation probabilities

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        e = np.asarray(self.e, dtype=np.float64)
        if p.ndim != 1 or p.shape != e.shape or p.size == 0:
            raise ValueError("p and e must be non-empty vectors of equal length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"p must be a probability vector (sum={p.sum()!r})")
        if np.any((e < 0) | (e > 1)):
            raise ValueError("every e_i must lie in [0, 1]")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "e", e)

    @property
    def n_subsets(self) -> int:
        return self.p.size


def one_stage(instance: TwoStageInstance) -> float:
    """Expected activation when a single subset is sampled directly."""
    return float(np.dot(instance.p, instance.e))


def two_stage(instance: TwoStageInstance) -> float:
    """Activation probability when every subset converges through intermediate points."""
    return float(1.0 - np.prod(1.0 - instance.e))


@dataclass
class TrialReport:
    trials: int
    violations: int
    max_gap: float  # max of E1 - E2 (<= 0 when the inequality holds)
    min_margin: float  # min of E2 - E1
    seed: int
    n_subsets_range: tuple[int, int]
    grid_cases: int = 0
    grid_violations: int = 0
    counterexample: dict | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.grid_violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_subsets_range"] = list(self.n_subsets_range)
        d["passed"] = self.passed
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _batch_gaps(p: np.ndarray, e: np.ndarray) -> np.ndarray:
    e1 = np.sum(p * e, axis=1)
    e2 = 1.0 - np.prod(1.0 - e, axis=1)
    return e1 - e2


def grid_instances(levels=(0.0, 0.25, 0.5, 0.75, 1.0), q_levels=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Every two-subset instance with e on ``levels`` and p = (q, 1 - q)."""
    for e1, e2 in itertools.product(levels, repeat=2):
        for q in q_levels:
            yield TwoStageInstance(np.array([q, 1.0 - q]), np.array([e1, e2]))


def verify_proposition(
    n_trials: int = 100_000,
    n_subsets_range: tuple[int, int] = (1, 20),
    rng_seed: int = DEFAULT_SEED,
    include_grid: bool = True,
) -> TrialReport:
    """Sample random instances (p uniform on the simplex, e uniform on [0,1]^N) and check E1 <= E2.

    Draws are made in fixed-size blocks from one generator, so the result depends
    only on ``rng_seed``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    lo, hi = n_subsets_range
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid subset-count range {n_subsets_range}")
    rng = np.random.default_rng(rng_seed)
    sizes = rng.integers(lo, hi + 1, size=n_trials)
    max_gap, min_margin, violations, counterexample = -np.inf, np.inf, 0, None
    for n in range(lo, hi + 1):
        idx = np.nonzero(sizes == n)[0]
        if idx.size == 0:
            continue
        p = rng.dirichlet(np.ones(n), size=idx.size)
        e = rng.uniform(0.0, 1.0, size=(idx.size, n))
        gaps = _batch_gaps(p, e)
        max_gap = max(max_gap, float(gaps.max()))
        min_margin = min(min_margin, float((-gaps).min()))
        bad = np.nonzero(gaps > VIOLATION_TOL)[0]
        violations += bad.size
        if bad.size and counterexample is None:
            i = bad[0]
            counterexample = {"trial": int(idx[i]), "p": p[i].tolist(), "e": e[i].tolist(), "gap": float(gaps[i])}
    grid_cases = grid_violations = 0
    if include_grid:
        for inst in grid_instances():
            grid_cases += 1
            gap = one_stage(inst) - two_stage(inst)
            if gap > VIOLATION_TOL:
                grid_violations += 1
                if counterexample is None:
                    counterexample = {"trial": "grid", "p": inst.p.tolist(), "e": inst.e.tolist(), "gap": gap}
    return TrialReport(
        trials=n_trials,
        violations=violations,
        max_gap=float(max_gap),
        min_margin=float(min_margin),
        seed=int(rng_seed),
        n_subsets_range=(lo, hi),
        grid_cases=grid_cases,
        grid_violations=grid_violations,
        counterexample=counterexample,
    )
