"""Bandwidth allocation under a shared gateway budget.

Every solver works on vectors ``a`` with ``a_i >= floor`` and
``sum(a) <= B``. Unused bandwidth is modelled as an extra "slack"
component, so moves that release or reclaim capacity are ordinary
transfers and feasibility is preserved by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .satisfaction import ParametricSatisfaction, QualityInputs, image_quality, required_bandwidth

TOTAL_ABS = "total_abs"
MAX_ABS = "max_abs"
TOTAL_ONE_SIDED = "total_one_sided"
OBJECTIVES = (TOTAL_ABS, MAX_ABS, TOTAL_ONE_SIDED)
STRATEGIES = ("sa", "ga", "tabu")

# keeps every allocation strictly positive when a_min is 0 (delay needs A > 0)
FLOOR_FRACTION = 1e-6


@dataclass(frozen=True)
class Customer:
    id: str
    tau: float
    file_bits: float
    quality: QualityInputs
    q: int = 1
    p: int = 1

    def __post_init__(self):
        if not 0 <= self.tau <= 1:
            raise ValueError(f"customer {self.id}: tau must lie in [0, 1]")
        if self.file_bits <= 0:
            raise ValueError(f"customer {self.id}: file size must be positive")

    @property
    def iq(self) -> float:
        return image_quality(self.quality)


@dataclass
class Scenario:
    customers: list[Customer]
    total_bandwidth: float
    objective: str = TOTAL_ABS
    model: object = field(default_factory=lambda: ParametricSatisfaction().fit())
    a_min: float = 0.0

    def __post_init__(self):
        if self.total_bandwidth <= 0:
            raise ValueError("total bandwidth must be positive")
        if not self.customers:
            raise ValueError("scenario needs at least one customer")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.a_min < 0 or self.n * self.a_min > self.total_bandwidth:
            raise ValueError("per-customer floor is infeasible for this budget")
        self.iq = np.array([c.iq for c in self.customers])
        self.file_bits = np.array([float(c.file_bits) for c in self.customers])
        self.tau = np.array([c.tau for c in self.customers])

    @property
    def n(self) -> int:
        return len(self.customers)

    @property
    def floor(self) -> float:
        """Lower bound used by the solvers: ``a_min``, or a tiny positive share when that is 0."""
        if self.a_min > 0:
            return self.a_min
        return FLOOR_FRACTION * self.total_bandwidth / self.n


@dataclass
class Allocation:
    a: np.ndarray
    objective_value: float
    evaluations: int
    seed: int | None = None
    strategy: str = ""

    def __eq__(self, other):
        if not isinstance(other, Allocation):
            return NotImplemented
        return (np.array_equal(self.a, other.a) and self.objective_value == other.objective_value
                and self.evaluations == other.evaluations and self.seed == other.seed
                and self.strategy == other.strategy)


def satisfaction_levels(a, sc: Scenario) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    # an infinite delay from a tiny share is the right limit: satisfaction 0
    with np.errstate(over="ignore", divide="ignore"):
        return sc.model._predict(sc.iq, sc.file_bits / a)


def _dissatisfaction(us: np.ndarray, tau: np.ndarray, objective: str) -> np.ndarray:
    if objective == TOTAL_ONE_SIDED:
        return np.maximum(tau - us, 0.0)
    return np.abs(us - tau)


def _aggregate(d: np.ndarray, objective: str) -> np.ndarray:
    return d.max(axis=-1) if objective == MAX_ABS else d.sum(axis=-1)


def dissatisfaction(a, sc: Scenario) -> np.ndarray:
    return _dissatisfaction(satisfaction_levels(a, sc), sc.tau, sc.objective)


def _objective_batch(A: np.ndarray, sc: Scenario) -> np.ndarray:
    m, n = A.shape
    us = sc.model._predict(np.tile(sc.iq, m), (sc.file_bits[None, :] / A).ravel()).reshape(m, n)
    return _aggregate(_dissatisfaction(us, sc.tau[None, :], sc.objective), sc.objective)


def is_feasible(a, sc: Scenario, rel_tol: float = 0.0) -> bool:
    a = np.asarray(a, dtype=np.float64)
    return (a.shape == (sc.n,) and bool(np.all(a > 0)) and bool(np.all(a >= sc.a_min))
            and math.fsum(a) <= sc.total_bandwidth * (1 + rel_tol))


def evaluate_objective(a, sc: Scenario) -> float:
    """Total, worst-case or one-sided dissatisfaction of allocation ``a``."""
    if not is_feasible(a, sc, rel_tol=1e-12):
        raise ValueError("allocation is infeasible: needs 0 < a_i, a_i >= a_min, sum(a) <= B")
    return float(_aggregate(dissatisfaction(a, sc), sc.objective))


def _sum_ok(a: np.ndarray, budget: float) -> bool:
    return float(np.sum(a)) <= budget and math.fsum(a) <= budget


def project(a, sc: Scenario) -> np.ndarray:
    """Map any vector onto the feasible set.

    Entries are raised to the floor, then the parts above the floor are
    scaled down together when the budget is exceeded. The last loop trims
    rounding residue so the sum never exceeds B.
    """
    B, floor = sc.total_bandwidth, sc.floor
    a = np.maximum(np.asarray(a, dtype=np.float64), floor)
    room = B - sc.n * floor
    x = a - floor
    s = x.sum()
    if s > room:
        x = x * (room / s)
        a = floor + x
    while not _sum_ok(a, B):
        i = int(np.argmax(a))
        over = max(float(np.sum(a)), math.fsum(a)) - B
        a[i] = max(floor, min(a[i] - over, np.nextafter(a[i], -np.inf)))
    return a


def allocate_bruteforce(sc: Scenario, grid_steps: int = 41) -> Allocation:
    """Exhaustive search over ``a_i = floor + j_i * (B - n floor) / G`` with ``sum(j) <= G``.

    Among tied optima the point using the most grid steps wins, so spare
    bandwidth is handed out rather than left idle; remaining ties go to
    the lexicographically first ``j``.
    """
    if sc.n > 3:
        raise ValueError("brute force is limited to n <= 3 customers")
    if not 1 <= grid_steps <= 64:
        raise ValueError("grid_steps must lie in 1..64")
    G = grid_steps
    J = np.array([j for j in itertools.product(range(G + 1), repeat=sc.n) if sum(j) <= G], dtype=np.float64)
    step = (sc.total_bandwidth - sc.n * sc.floor) / G
    A = sc.floor + J * step
    for r in np.flatnonzero(J.sum(axis=1) == G):
        if not _sum_ok(A[r], sc.total_bandwidth):
            A[r] = project(A[r], sc)
    values = _objective_batch(A, sc)
    ties = np.flatnonzero(values == values.min())
    best = int(ties[np.argmax(J[ties].sum(axis=1))])
    return Allocation(A[best].copy(), float(values[best]), len(A), None, "bruteforce")


def allocate_baseline(sc: Scenario) -> Allocation:
    """Give each customer the bandwidth it needs to reach its threshold.

    Surplus is split equally; when the needs exceed B every share is
    scaled by ``B / sum(needs)``. Customers who cannot reach their
    threshold count as needing all of B.
    """
    B = sc.total_bandwidth
    need = np.array([
        required_bandwidth(iq, f, tau, sc.model, B) or B
        for iq, f, tau in zip(sc.iq, sc.file_bits, sc.tau)
    ])
    total = need.sum()
    if total <= B:
        a = need + (B - total) / sc.n
    else:
        a = B * need / total
    a = project(a, sc)
    return Allocation(a, evaluate_objective(a, sc), 1, None, "baseline")


@dataclass
class _Tracker:
    """Counts evaluations and remembers the best vector seen."""

    sc: Scenario
    evaluations: int = 0
    best_a: np.ndarray | None = None
    best_value: float = math.inf

    def batch(self, A: np.ndarray) -> np.ndarray:
        values = _objective_batch(A, self.sc)
        self.evaluations += len(A)
        i = int(np.argmin(values))
        if values[i] < self.best_value:
            self.best_value = float(values[i])
            self.best_a = A[i].copy()
        return values

    def one(self, a: np.ndarray) -> float:
        return float(self.batch(a[None, :])[0])


_PAIR_STARTS_MAX_N = 8


def _warm_starts(sc: Scenario) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Starting points for the local search, and extra candidates to score.

    Starts are the equal split, the threshold baseline (monotone models) and,
    for small n, the midpoint of every pair of customers. The candidates are
    the single-winner corners. The absolute objectives often favour serving
    one or two customers well, and a local walk rarely crosses between faces.
    Corners are scored only: from a corner every small step looks worse.
    """
    B, n, floor = sc.total_bandwidth, sc.n, sc.floor
    starts = [project(np.full(n, B / n), sc)]
    if getattr(sc.model, "monotone", False):
        starts.append(allocate_baseline(sc).a)
    if 2 < n <= _PAIR_STARTS_MAX_N:
        for i in range(n):
            for j in range(i + 1, n):
                pair = np.full(n, floor)
                pair[[i, j]] = (B - (n - 2) * floor) / 2
                starts.append(project(pair, sc))
    corners = []
    for i in range(n):
        corner = np.full(n, floor)
        corner[i] = B - (n - 1) * floor
        corners.append(project(corner, sc))
    return starts, corners


def _scalar_predictor(model):
    fast = getattr(model, "_predict_one", None)
    if fast is not None:
        return fast
    return lambda iq, d: float(model._predict(np.array([iq]), np.array([d]))[0])


def _simulated_annealing(sc, rng, tracker, start, step=None, cooling=0.95, iters_per_temp=200,
                         stop_ratio=1e-4, swap_prob=0.1):
    B, n, floor = sc.total_bandwidth, sc.n, sc.floor
    step = B / 50 if step is None else step
    predict = _scalar_predictor(sc.model)
    iq, fb, tau = sc.iq.tolist(), sc.file_bits.tolist(), sc.tau.tolist()
    one_sided = sc.objective == TOTAL_ONE_SIDED
    agg = max if sc.objective == MAX_ABS else math.fsum

    def dis(k, ak):
        gap = tau[k] - predict(iq[k], fb[k] / ak)
        return max(gap, 0.0) if one_sided else abs(gap)

    a = [float(x) for x in start]
    d = [dis(k, a[k]) for k in range(n)]
    current = agg(d)
    t0 = max(current, 1e-12)
    temp = t0
    while temp >= stop_ratio * t0:
        picks_i = rng.integers(n + 1, size=iters_per_temp).tolist()
        picks_j = rng.integers(n, size=iters_per_temp).tolist()
        sizes = rng.random(iters_per_temp).tolist()
        coins = rng.random(iters_per_temp).tolist()
        swaps = (rng.random(iters_per_temp) < swap_prob).tolist()
        for t in range(iters_per_temp):
            # component n is the unused slack
            i, j = picks_i[t], picks_j[t]
            j += j >= i
            cand = a[:]
            cd = d[:]
            if swaps[t] and i < n and j < n:
                # exchanging two shares lets the walk jump between faces
                cand[i], cand[j] = cand[j], cand[i]
                if sum(cand) > B:
                    continue
                cd[i], cd[j] = dis(i, cand[i]), dis(j, cand[j])
            else:
                avail = (B - math.fsum(a)) if j == n else a[j] - floor
                amount = min(step * sizes[t], max(avail, 0.0))
                if j < n:
                    cand[j] = max(floor, cand[j] - amount)
                    cd[j] = dis(j, cand[j])
                if i < n:
                    cand[i] += amount
                    over = max(math.fsum(cand), sum(cand)) - B
                    if over > 0:
                        cand[i] = max(a[i], cand[i] - over)
                        for _ in range(4):
                            if math.fsum(cand) <= B and sum(cand) <= B:
                                break
                            cand[i] = math.nextafter(cand[i], -math.inf)
                        else:
                            # a tiny entry cannot absorb the residue; drop the gain
                            cand[i] = a[i]
                    cd[i] = dis(i, cand[i])
            value = agg(cd)
            tracker.evaluations += 1
            if value < tracker.best_value:
                tracker.best_value, tracker.best_a = value, np.array(cand)
            delta = value - current
            if delta <= 0 or coins[t] < math.exp(-delta / temp):
                a, d, current = cand, cd, value
        temp *= cooling


def _genetic(sc, rng, tracker, start, population=64, generations=200, elite=2, mutation_sd=None,
             jump_prob=0.1):
    B, n, floor = sc.total_bandwidth, sc.n, sc.floor
    sd = B / 100 if mutation_sd is None else mutation_sd
    room = B - n * floor
    # random feasible vectors: Dirichlet shares of the room, slack included
    shares = rng.dirichlet(np.ones(n + 1), size=population - 1)[:, :n]
    pop = np.vstack([start[None, :], floor + shares * room])
    pop = np.array([p if _sum_ok(p, B) else project(p, sc) for p in pop])
    fit = tracker.batch(pop)
    for _ in range(generations):
        order = np.argsort(fit, kind="stable")
        children = [pop[order[:elite]]]
        m = population - elite
        a_idx = rng.integers(0, population, size=(m, 2))
        b_idx = rng.integers(0, population, size=(m, 2))

        def tournament(pairs):
            first, second = pairs[:, 0], pairs[:, 1]
            return np.where(fit[second] < fit[first], second, first)

        p1, p2 = pop[tournament(a_idx)], pop[tournament(b_idx)]
        lam = rng.random((m, n))
        kids = lam * p1 + (1 - lam) * p2 + rng.normal(0.0, sd, (m, n))
        # jump mutations reach other faces: exchange two shares, or pour
        # one share into another so a customer drops to the floor
        pick = rng.integers(0, n, size=(m, 2))
        jump = rng.random(m) < jump_prob
        pour = rng.random(m) < 0.5
        for r in np.flatnonzero(jump):
            i, j = pick[r]
            if pour[r]:
                kids[r, j] += kids[r, i] - floor
                kids[r, i] = floor
            else:
                kids[r, i], kids[r, j] = kids[r, j], kids[r, i]
        kids = np.array([project(k, sc) for k in kids])
        children.append(kids)
        pop = np.vstack(children)
        fit = np.concatenate([fit[order[:elite]], tracker.batch(kids)])


def _tabu(sc, rng, tracker, start, steps=100, tenure=20, iterations=2000):
    B, n, floor = sc.total_bandwidth, sc.n, sc.floor
    unit = (B - n * floor) / steps
    u = np.floor((start - floor) / unit + 1e-9).astype(np.int64)
    u = np.maximum(u, 0)
    while u.sum() > steps:
        u[int(np.argmax(u))] -= 1
    moves = [(i, j) for i in range(n + 1) for j in range(n + 1) if i != j]
    swaps = list(itertools.combinations(range(n), 2))
    tabu_until = {}

    def vector(units):
        a = floor + units * unit
        return a if _sum_ok(a, B) else project(a, sc)

    tracker.one(vector(u))
    for it in range(iterations):
        slack = steps - u.sum()
        cands, labels = [], []
        for i, j in moves:
            if (slack if j == n else u[j]) < 1:
                continue
            v = u.copy()
            if j < n:
                v[j] -= 1
            if i < n:
                v[i] += 1
            cands.append(v)
            labels.append((i, j))
        # swapping two shares reaches another face in one move
        for i, j in swaps:
            if u[i] != u[j]:
                v = u.copy()
                v[i], v[j] = u[j], u[i]
                cands.append(v)
                labels.append(("swap", i, j))
        if not cands:
            break
        best_before = tracker.best_value
        vecs = np.array([vector(v) for v in cands])
        values = tracker.batch(vecs)
        chosen = None
        for k in np.argsort(values, kind="stable"):
            allowed = tabu_until.get(labels[k], -1) < it
            if allowed or values[k] < best_before:
                chosen = k
                break
        if chosen is None:
            continue
        label = labels[chosen]
        u = cands[chosen]
        # forbid undoing this move for a while; a swap is its own inverse
        tabu_until[label if label[0] == "swap" else label[::-1]] = it + tenure


def allocate_metaheuristic(sc: Scenario, strategy: str = "sa", cfg: dict | None = None,
                           seed: int = 0, warm_start: bool = True) -> Allocation:
    """Search allocations with simulated annealing, a genetic algorithm or tabu search.

    The result is the best vector evaluated. That includes every warm
    start and corner, so for monotone models the threshold baseline is
    never beaten by the returned allocation.
    """
    cfg = dict(cfg or {})
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    _validate_cfg(strategy, cfg)
    rng = np.random.default_rng(seed)
    tracker = _Tracker(sc)
    if warm_start:
        starts, corners = _warm_starts(sc)
        tracker.batch(np.array(corners))
    else:
        starts = [project(np.full(sc.n, sc.total_bandwidth / sc.n), sc)]
    values = tracker.batch(np.array(starts))
    start = starts[int(np.argmin(values))]
    run = {"sa": _simulated_annealing, "ga": _genetic, "tabu": _tabu}[strategy]
    run(sc, rng, tracker, start, **cfg)
    a = tracker.best_a
    return Allocation(a, evaluate_objective(a, sc), tracker.evaluations, seed, strategy)


_CFG_KEYS = {
    "sa": {"step", "cooling", "iters_per_temp", "stop_ratio", "swap_prob"},
    "ga": {"population", "generations", "elite", "mutation_sd", "jump_prob"},
    "tabu": {"steps", "tenure", "iterations"},
}


def _validate_cfg(strategy: str, cfg: dict) -> None:
    unknown = set(cfg) - _CFG_KEYS[strategy]
    if unknown:
        raise ValueError(f"unknown {strategy} parameters: {sorted(unknown)}")
    positive = {"step", "iters_per_temp", "population", "generations", "mutation_sd",
                "steps", "tenure", "iterations", "stop_ratio"}
    for key, value in cfg.items():
        if value is None:
            continue
        if key in positive and value <= 0:
            raise ValueError(f"{strategy} parameter {key} must be positive")
    for key in ("swap_prob", "jump_prob"):
        if key in cfg and not 0 <= cfg[key] <= 1:
            raise ValueError(f"{key} must lie in [0, 1]")
    if "cooling" in cfg and not 0 < cfg["cooling"] < 1:
        raise ValueError("cooling must lie in (0, 1)")
    if "elite" in cfg and not 0 <= cfg["elite"] < cfg.get("population", 64):
        raise ValueError("elite must be smaller than the population")
    if cfg.get("population", 64) < 2:
        raise ValueError("population must be at least 2")


def sweep_selection(variants: list[list[Customer]], total_bandwidth: float, objective: str = TOTAL_ABS,
                    model=None, grid_steps: int = 41, a_min: float = 0.0):
    """Jointly pick each customer's object count and bandwidth by exhaustive search.

    ``variants[i]`` lists customer ``i`` under each candidate selection
    (different ``q`` give different quality and file size). Returns the
    chosen variant index per customer and the winning allocation.
    """
    if len(variants) > 3:
        raise ValueError("selection sweep is limited to n <= 3 customers")
    model = model or ParametricSatisfaction().fit()
    best = None
    for combo in itertools.product(*(range(len(v)) for v in variants)):
        customers = [variants[i][k] for i, k in enumerate(combo)]
        alloc = allocate_bruteforce(Scenario(customers, total_bandwidth, objective, model, a_min), grid_steps)
        if best is None or alloc.objective_value < best[1].objective_value:
            best = (list(combo), alloc)
    return best


class BandwidthAllocator(BaseEstimator):
    """Estimator facade: ``fit(scenario)`` solves it and stores ``allocation_``.

    ``strategy`` is ``"sa"``, ``"ga"``, ``"tabu"``, ``"bruteforce"`` or
    ``"baseline"``; ``params`` holds strategy-specific settings.
    """

    def __init__(self, strategy="sa", random_state=0, params=None, grid_steps=41, warm_start=True):
        self.strategy = strategy
        self.random_state = random_state
        self.params = params
        self.grid_steps = grid_steps
        self.warm_start = warm_start

    def fit(self, scenario: Scenario, y=None):
        if self.strategy == "bruteforce":
            self.allocation_ = allocate_bruteforce(scenario, self.grid_steps)
        elif self.strategy == "baseline":
            self.allocation_ = allocate_baseline(scenario)
        else:
            self.allocation_ = allocate_metaheuristic(scenario, self.strategy, self.params,
                                                      self.random_state, self.warm_start)
        self.scenario_ = scenario
        return self

    def predict(self, scenario: Scenario | None = None) -> np.ndarray:
        """The fitted bandwidth vector (re-solving when given a new scenario)."""
        if scenario is not None:
            self.fit(scenario)
        return self.allocation_.a

    def score(self, scenario: Scenario, y=None) -> float:
        """Negative objective, so higher is better as sklearn expects."""
        return -evaluate_objective(self.predict(scenario), scenario)
