"""Monte-Carlo checks of the prototype and majority-vote robustness results.

Each experiment returns a :class:`BoundReport`. Bound-type reports compare
an empirical quantity with a theoretical bound; identity-type reports carry
a residual that must be exactly zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import rng
from .ensemble import (
    ErrorIndicatorTable,
    bounded_dependence_bound,
    decompose_distribution,
    decompose_vote_error,
    flip_bound_check,
    independent_vote_error,
    symmetric_improvement_threshold,
)
from .errors import InfeasibleError
from .prototype import BalancedSupport, FeatureMap, build_balanced_support, clip_to_ball, fit_prototypes


@dataclass
class BoundReport:
    name: str
    empirical: float | None
    bound: float | None
    holds: bool | None
    trials: int
    confidence: str = ""
    kind: str = "bound"
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def __post_init__(self):
        if self.holds is not None:
            self.holds = bool(self.holds)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


# ------------------------------------------------------------- generators


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 4
    dim: int = 3
    separation: float = 1.0
    bound: float = 1.0
    noise: float = 0.3
    pool_sizes: tuple[int, ...] | None = None
    seed: int = 0

    def pools(self) -> tuple[int, ...]:
        return self.pool_sizes if self.pool_sizes is not None else (100,) * self.n_classes


def _helmert_simplex(C: int) -> np.ndarray:
    """Regular simplex with C unit-norm vertices in R^(C-1)."""
    v = np.eye(C) - 1.0 / C
    basis = np.zeros((C, C - 1))
    for j in range(1, C):
        basis[:j, j - 1] = 1.0
        basis[j, j - 1] = -j
        basis[:, j - 1] /= np.linalg.norm(basis[:, j - 1])
    pts = v @ basis
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _greedy_sphere(C: int, dim: int, seed: int, n_candidates: int = 4096) -> np.ndarray:
    cand = rng.generator(seed, "placement").standard_normal((n_candidates, dim))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    first = np.zeros(dim)
    first[0] = 1.0
    chosen = [first]
    dmin = np.linalg.norm(cand - first, axis=1)
    for _ in range(C - 1):
        i = int(np.argmax(dmin))
        chosen.append(cand[i])
        dmin = np.minimum(dmin, np.linalg.norm(cand - cand[i], axis=1))
    return np.vstack(chosen)


def min_pairwise_distance(points: np.ndarray) -> float:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    d[np.diag_indices(len(points))] = np.inf
    return float(d.min())


def place_prototypes(n_classes: int, dim: int, separation: float, bound: float = 1.0, seed: int = 0) -> np.ndarray:
    """Class centers inside the ``bound``-ball with minimum pairwise distance
    ``separation``: antipodal for 2 classes, a regular polygon in the plane,
    a regular simplex when ``n_classes <= dim + 1``, greedy farthest points
    on the sphere otherwise."""
    C = n_classes
    if C < 2:
        raise ValueError("need at least 2 classes")
    if separation <= 0:
        raise ValueError("separation must be positive")
    if separation > 2 * bound:
        raise InfeasibleError(f"separation {separation} exceeds the ball diameter {2 * bound}")
    if C == 2:
        unit = np.zeros((2, dim))
        unit[0, 0], unit[1, 0] = 1.0, -1.0
    elif dim == 2:
        a = 2 * np.pi * np.arange(C) / C
        unit = np.column_stack([np.cos(a), np.sin(a)])
    elif C <= dim + 1:
        unit = np.zeros((C, dim))
        unit[:, : C - 1] = _helmert_simplex(C)
    else:
        unit = _greedy_sphere(C, dim, seed)
    radius = separation / min_pairwise_distance(unit)
    if radius > bound * (1 + 1e-12):
        raise InfeasibleError(
            f"cannot place {C} centers {separation} apart in a radius-{bound} ball in {dim} dims "
            f"(largest achievable separation {bound * min_pairwise_distance(unit):.4f})"
        )
    return unit * min(radius, bound)


def sample_class(spec: SyntheticSpec, centers: np.ndarray, c: int, n: int, *stream) -> np.ndarray:
    """``n`` draws of class ``c``: Gaussian around the center, clipped to the
    ball. Draws come from a per-(stream, class) generator, so a smaller pool
    is a prefix of a larger one."""
    g = rng.generator(spec.seed, *stream, "class", c)
    x = centers[c] + spec.noise * g.standard_normal((n, spec.dim))
    return clip_to_ball(x, spec.bound)


def gen_gaussian_prototype_data(spec: SyntheticSpec, *stream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(X, y, centers) with per-class pool sizes from ``spec``."""
    centers = place_prototypes(spec.n_classes, spec.dim, spec.separation, spec.bound, spec.seed)
    xs, ys = [], []
    for c, n in enumerate(spec.pools()):
        xs.append(sample_class(spec, centers, c, n, *stream))
        ys.append(np.full(n, c))
    return np.vstack(xs), np.concatenate(ys), centers


def population_prototypes(spec: SyntheticSpec, centers: np.ndarray, n_mc: int = 400_000) -> np.ndarray:
    """Monte-Carlo class means after clipping (clipping moves them off the centers)."""
    if spec.noise == 0:
        return clip_to_ball(centers, spec.bound)
    return np.vstack([sample_class(spec, centers, c, n_mc, "population").mean(axis=0) for c in range(spec.n_classes)])


# ---------------------------------------------------------- concentration


def concentration_radius(bound: float, n_classes: int, delta: float, k: int) -> float:
    return bound * math.sqrt(2.0 * math.log(2.0 * n_classes / delta) / k)


def concentration_experiment(spec: SyntheticSpec, k: int, delta: float = 0.05, trials: int = 1000) -> BoundReport:
    """Fraction of balanced supports whose worst class mean lies within the
    concentration radius of the population mean; must be ``>= 1 - delta``."""
    if trials < 100:
        raise ValueError("need at least 100 trials")
    t0 = time.perf_counter()
    centers = place_prototypes(spec.n_classes, spec.dim, spec.separation, spec.bound, spec.seed)
    mu = population_prototypes(spec, centers)
    radius = concentration_radius(spec.bound, spec.n_classes, delta, k)
    worst = np.zeros(trials)
    for c in range(spec.n_classes):
        draws = sample_class(spec, centers, c, trials * k, "concentration", k).reshape(trials, k, spec.dim)
        dev = np.linalg.norm(draws.mean(axis=1) - mu[c], axis=1)
        worst = np.maximum(worst, dev)
    coverage = float((worst <= radius).mean())
    return BoundReport(
        f"concentration_k{k}",
        1.0 - coverage,
        delta,
        1.0 - coverage <= delta,
        trials,
        f"fraction of trials outside radius {radius:.4f} must be <= delta = {delta}",
        details={
            "coverage": coverage,
            "k": k,
            "radius": radius,
            "max_deviation": float(worst.max()),
            "mean_deviation": float(worst.mean()),
            "C": spec.n_classes,
            "B": spec.bound,
            "delta": delta,
        },
        seconds=time.perf_counter() - t0,
    )


# ------------------------------------------------------------------ margin


def margin_quantities(spec: SyntheticSpec, k: int, delta: float, rho: float, separation: float | None = None):
    eps = concentration_radius(spec.bound, spec.n_classes, delta, k) + rho
    sep = spec.separation if separation is None else separation
    gamma = 0.5 * sep - eps
    bound = spec.n_classes * math.exp(-(gamma**2) / (2 * spec.bound**2))
    return eps, gamma, bound


def _balanced_error(model, queries: list[np.ndarray]) -> tuple[float, list[np.ndarray]]:
    preds = [model.predict(q) for q in queries]
    errs = [float((p != c).mean()) for c, p in enumerate(preds)]
    return float(np.mean(errs)), preds


def margin_bound_experiment(
    spec: SyntheticSpec,
    k: int,
    delta: float = 0.05,
    rho: float = 0.0,
    trials: int = 200,
    n_query: int = 200,
    prior_ratio: int = 10,
) -> BoundReport:
    """Balanced error of prototype models against ``C exp(-gamma^2 / 2B^2)``,
    and its invariance to class priors.

    Every trial builds two pools with identical class-conditional draws and
    priors 1:1 and ``prior_ratio``:1 (class 0 inflated). With supports taken
    from the shared part of the pools the two models must predict
    identically; with supports resampled from each pool the paired
    difference in balanced error must stay within 3 standard errors of 0.
    """
    t0 = time.perf_counter()
    centers = place_prototypes(spec.n_classes, spec.dim, spec.separation, spec.bound, spec.seed)
    measured_sep = min_pairwise_distance(population_prototypes(spec, centers))
    eps, gamma, bound = margin_quantities(spec, k, delta, rho, measured_sep)
    base = {"k": k, "delta": delta, "rho": rho, "epsilon_k": eps, "gamma": gamma, "separation": measured_sep}
    if gamma <= 0:
        return BoundReport("margin_bound", None, bound, None, 0, "hypothesis gamma > 0 not met; skipped", details=base)

    C = spec.n_classes
    fm = FeatureMap.identity(spec.dim, spec.bound)
    pool_bal = [2 * k] * C
    pool_imb = [2 * k * prior_ratio] + [2 * k] * (C - 1)
    errs_bal, errs_imb, errs_shared, diffs = [], [], [], []
    exact_equal = True
    for t in range(trials):
        draws = [sample_class(spec, centers, c, pool_imb[c], "margin", t) for c in range(C)]
        queries = [sample_class(spec, centers, c, n_query, "margin-query", t) for c in range(C)]
        r_seed = rng.derive_seed(spec.seed, "residual", t)

        def model_from(pool_sizes, support_seed, shared):
            X = np.vstack([draws[c][: pool_sizes[c]] for c in range(C)])
            y = np.concatenate([np.full(pool_sizes[c], c) for c in range(C)])
            offsets = np.concatenate([[0], np.cumsum(pool_sizes)[:-1]])
            if shared:
                sup = BalancedSupport(tuple(offsets[c] + np.arange(k) for c in range(C)), k)
            else:
                sup = build_balanced_support(y, np.arange(len(y)), k, support_seed, C)
            return fit_prototypes(fm, sup, X, rho, r_seed)

        shared_bal = model_from(pool_bal, 0, True)
        shared_imb = model_from(pool_imb, 0, True)
        e_sb, p_sb = _balanced_error(shared_bal, queries)
        e_si, p_si = _balanced_error(shared_imb, queries)
        same = all(np.array_equal(a, b) for a, b in zip(p_sb, p_si)) and e_sb == e_si
        exact_equal &= bool(same)
        errs_shared.append(e_sb)

        s_seed = rng.derive_seed(spec.seed, "support", t)
        e_b, _ = _balanced_error(model_from(pool_bal, s_seed, False), queries)
        e_i, _ = _balanced_error(model_from(pool_imb, s_seed, False), queries)
        errs_bal.append(e_b)
        errs_imb.append(e_i)
        diffs.append(e_b - e_i)

    errs = np.asarray(errs_shared)
    within = float((errs <= bound).mean())
    quantile = float(np.quantile(errs, 1 - delta, method="higher"))
    d = np.asarray(diffs)
    se = d.std(ddof=1) / math.sqrt(len(d)) if d.std(ddof=1) > 0 else 0.0
    z = abs(d.mean()) / se if se > 0 else 0.0
    prior_ok = z < 3.0 and exact_equal
    return BoundReport(
        "margin_bound",
        quantile,
        bound,
        within >= 1 - delta and prior_ok,
        trials,
        f"{1 - delta:.2f}-quantile of balanced error vs bound; <= bound in {within:.3f} of trials (need >= {1 - delta}); "
        f"prior 1:1 vs {prior_ratio}:1 paired z = {z:.2f} (need < 3); bound is vacuous when > 1",
        details={
            **base,
            "fraction_within_bound": within,
            "mean_balanced_error": float(errs.mean()),
            "vacuous": bound >= 1.0,
            "exact_prediction_equality": exact_equal,
            "balanced_error_prior_1_1": float(np.mean(errs_bal)),
            f"balanced_error_prior_{prior_ratio}_1": float(np.mean(errs_imb)),
            "paired_difference_mean": float(d.mean()),
            "paired_difference_se": float(se),
            "paired_z": float(z),
        },
        seconds=time.perf_counter() - t0,
    )


# ------------------------------------------------------------ joint errors


def joint_cells(errors: Sequence[float], covariances: Sequence[float], p_triple: float | str | None = None) -> np.ndarray:
    """Probabilities of the 8 outcomes of (I_H, I_L, I_X), index ``4h + 2l + x``,
    matching the given marginals and pairwise covariances (HL, HX, LX).

    Marginals and pairwise moments fix every cell up to ``p_triple``, which
    must lie in an interval; ``None`` picks the point closest to
    ``e_H e_L e_X`` (the independent value), ``"min"``/``"max"`` the ends.
    """
    eH, eL, eX = map(float, errors)
    cHL, cHX, cLX = map(float, covariances)
    pHL, pHX, pLX = eH * eL + cHL, eH * eX + cHX, eL * eX + cLX
    lower = {
        "P(all three) >= 0": 0.0,
        "P(H only) >= 0": pHL + pHX - eH,
        "P(L only) >= 0": pHL + pLX - eL,
        "P(X only) >= 0": pHX + pLX - eX,
    }
    upper = {
        "P(H,L not X) >= 0": pHL,
        "P(H,X not L) >= 0": pHX,
        "P(L,X not H) >= 0": pLX,
        "P(none) >= 0": 1.0 - eH - eL - eX + pHL + pHX + pLX,
    }
    lo, hi = max(lower.values()), min(upper.values())
    for v in (eH, eL, eX):
        if not 0.0 <= v <= 1.0:
            raise InfeasibleError(f"marginal {v} outside [0, 1]")
    if lo > hi + 1e-12:
        lname = max(lower, key=lower.get)
        hname = min(upper, key=upper.get)
        raise InfeasibleError(f"no joint law: constraints {lname!r} and {hname!r} conflict (need {lo:.6g} <= {hi:.6g})")
    if p_triple is None:
        t = min(max(eH * eL * eX, lo), hi)
    elif p_triple == "min":
        t = lo
    elif p_triple == "max":
        t = hi
    else:
        t = float(p_triple)
        if not lo - 1e-12 <= t <= hi + 1e-12:
            raise InfeasibleError(f"p_triple={t} outside feasible [{lo:.6g}, {hi:.6g}]")
    cells = np.array([
        1.0 - eH - eL - eX + pHL + pHX + pLX - t,  # 000
        eX - pHX - pLX + t,  # 001
        eL - pHL - pLX + t,  # 010
        pLX - t,  # 011
        eH - pHL - pHX + t,  # 100
        pHX - t,  # 101
        pHL - t,  # 110
        t,  # 111
    ])
    # project boundary round-off back onto the simplex
    cells = np.clip(cells, 0.0, None)
    return cells / cells.sum()


_BITS = np.array([[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)], dtype=np.uint8)


def sample_cells(cells: np.ndarray, n: int, g: np.random.Generator) -> np.ndarray:
    return _BITS[g.choice(8, size=n, p=cells)]


def joint_error_simulator(
    errors: Sequence[float],
    covariances: Sequence[float],
    n: int,
    seed: int = 0,
    p_triple: float | str | None = None,
    c: int = 0,
) -> ErrorIndicatorTable:
    """``n`` indicator triples drawn from the joint law of :func:`joint_cells`."""
    cells = joint_cells(errors, covariances, p_triple)
    I = sample_cells(cells, n, rng.generator(seed, "joint"))
    return ErrorIndicatorTable(np.full(n, c), I)


def vote_identity_experiment(n_tables: int = 1000, seed: int = 0) -> BoundReport:
    """The three-voter decomposition on random exact laws and random tables."""
    t0 = time.perf_counter()
    g = rng.generator(seed, "identity")
    worst_law = Fraction(0)
    worst_table = 0.0
    for i in range(n_tables):
        w = g.integers(0, 1000, size=8)
        w[g.integers(0, 8)] += 1
        total = int(w.sum())
        law = [Fraction(int(v), total) for v in w]
        worst_law = max(worst_law, decompose_distribution(law)[-1])
        n = int(g.integers(1, 400))
        I = sample_cells(np.asarray(w, dtype=float) / total, n, g)
        worst_table = max(worst_table, decompose_vote_error(ErrorIndicatorTable(np.zeros(n), I), 0).identity_residual)
    holds = worst_law == 0 and worst_table == 0.0
    return BoundReport(
        "vote_identity", float(max(worst_law, worst_table)), 0.0, holds, n_tables,
        "residual must be exactly 0", kind="identity",
        details={"max_residual_exact_law": worst_law, "max_residual_tables": worst_table},
        seconds=time.perf_counter() - t0,
    )


def independence_experiment(eps: float = 0.1, n: int = 1_000_000, seed: int = 0) -> BoundReport:
    t0 = time.perf_counter()
    table = joint_error_simulator((eps,) * 3, (0.0,) * 3, n, seed)
    target = independent_vote_error(eps, eps, eps)
    emp = table.ensemble_error(0)
    sigma = math.sqrt(target * (1 - target) / n)
    return BoundReport(
        "independence", emp, target, abs(emp - target) <= 3 * sigma, n,
        f"|empirical - {target:.4f}| <= 3 sigma = {3 * sigma:.2e}", kind="estimate",
        details={"sigma": sigma, "z": (emp - target) / sigma, "error_rates": table.error_rates(0)},
        seconds=time.perf_counter() - t0,
    )


def bounded_dependence_experiment(n_joints: int = 200, n: int = 20_000, seed: int = 0, slack: float = 1e-12) -> BoundReport:
    """Random feasible joints; measured ensemble error against the
    bounded-dependence bound with the measured covariance cap."""
    t0 = time.perf_counter()
    g = rng.generator(seed, "bounded")
    ok = 0
    worst_gap = -np.inf
    for j in range(n_joints):
        cells = g.dirichlet(np.full(8, 0.5))
        e = [cells[_BITS[:, v] == 1].sum() for v in range(3)]
        pairs = [cells[(_BITS[:, a] == 1) & (_BITS[:, b] == 1)].sum() for a, b in ((0, 1), (0, 2), (1, 2))]
        covs = [pairs[0] - e[0] * e[1], pairs[1] - e[0] * e[2], pairs[2] - e[1] * e[2]]
        table = joint_error_simulator(e, covs, n, rng.derive_seed(seed, "bounded", j), p_triple=cells[7])
        em = table.error_rates(0)
        kappa = table.kappa(0)
        b = bounded_dependence_bound(*em, kappa)
        emp = table.ensemble_error(0)
        worst_gap = max(worst_gap, emp - b)
        ok += emp <= b + slack
    return BoundReport(
        "bounded_dependence", float(worst_gap), 0.0, ok == n_joints, n_joints,
        f"e_ens <= pairwise products + 3 kappa in {ok}/{n_joints} joints (float slack {slack})",
        details={"max_excess_over_bound": worst_gap, "samples_per_joint": n},
        seconds=time.perf_counter() - t0,
    )


def symmetric_improvement_experiment(
    epsilons: Sequence[float] = (0.05, 0.1, 0.2),
    kappa_fractions: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 0.9),
    n: int = 100_000,
    seed: int = 0,
) -> BoundReport:
    """Equal base error ``eps`` and equal pairwise covariance below the
    improvement cap; the majority must beat ``eps``. The triple-error mass is
    set to its smallest feasible value, the worst case for the vote."""
    t0 = time.perf_counter()
    rows = []
    for i, eps in enumerate(epsilons):
        thr = symmetric_improvement_threshold(eps).threshold
        for j, frac in enumerate(kappa_fractions):
            kappa = frac * thr
            table = joint_error_simulator((eps,) * 3, (kappa,) * 3, n, rng.derive_seed(seed, "symmetric", i, j), p_triple="min")
            emp = table.ensemble_error(0)
            rows.append({"epsilon": eps, "kappa": kappa, "threshold": thr, "e_ens": emp, "improved": emp < eps})
    holds = all(r["improved"] for r in rows)
    return BoundReport(
        "symmetric_improvement", max(r["e_ens"] - r["epsilon"] for r in rows), 0.0, holds, len(rows),
        f"e_ens < epsilon in {sum(r['improved'] for r in rows)}/{len(rows)} simulations of {n} samples",
        details={"runs": rows},
        seconds=time.perf_counter() - t0,
    )


# -------------------------------------------------------------- prior shift


def prior_shift_experiment(
    p_L: float,
    p_X: float,
    dependence: str = "independent",
    n: int = 100_000,
    seed: int = 0,
    base_error: float = 0.2,
) -> BoundReport:
    """Simulated decision flips of L and X with H fixed.

    Pre-shift, the three voters agree on every sample (all right with
    probability ``1 - base_error``, all wrong otherwise): the regime in which
    a single flip cannot move a two-of-three majority.
    """
    if dependence not in ("independent", "comonotone"):
        raise ValueError("dependence must be 'independent' or 'comonotone'")
    t0 = time.perf_counter()
    g = rng.generator(seed, "prior_shift", dependence)
    wrong = (g.uniform(size=n) < base_error).astype(np.uint8)
    I = np.repeat(wrong[:, None], 3, axis=1)
    if dependence == "independent":
        fL = g.uniform(size=n) < p_L
        fX = g.uniform(size=n) < p_X
    else:
        u = g.uniform(size=n)
        fL, fX = u < p_L, u < p_X
    F = np.column_stack([np.zeros(n, dtype=np.uint8), fL, fX]).astype(np.uint8)
    chk = flip_bound_check(ErrorIndicatorTable(np.zeros(n), I, flips=F))
    min_sigma = math.sqrt(max(chk.min_pair_bound * (1 - chk.min_pair_bound), 1e-300) / n)
    holds = bool(chk.holds)
    details = {
        "dependence": dependence,
        "p_flip": chk.p_flip,
        "joint_LX_flip_rate": chk.joint_LX_flip_rate,
        "min_bound": chk.min_pair_bound,
        "product_bound": chk.product_bound,
    }
    if dependence == "independent":
        within = chk.ens_flip_rate <= chk.product_bound + 3 * chk.sigma_product
        details["within_product_plus_3sigma"] = within
        holds = holds and within
    else:
        tight = abs(chk.ens_flip_rate - chk.min_pair_bound) <= 3 * min_sigma
        details["attains_min_bound_within_3sigma"] = tight
        holds = holds and tight
    return BoundReport(
        f"prior_shift_{dependence}", chk.ens_flip_rate, chk.min_pair_bound, holds, n,
        "ensemble flip rate <= min(p_L, p_X)"
        + (" and <= p_L p_X + 3 sigma" if dependence == "independent" else "; comonotone flips attain it"),
        details=details,
        seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------- vote benefit


@dataclass(frozen=True)
class BenefitTask:
    """Four classes, class 3 the minority. Classes differ by a mean shift of
    norm ``dense_shift`` spread over ``n_dense`` features. Majority class
    ``c`` is also shifted by ``majority_shift`` on feature ``c``; class 3
    instead carries a symmetric bimodal offset ``+-axis_shift`` on feature 3,
    which threshold learners exploit and class means cannot."""

    axis_shift: float = 5.0
    majority_shift: float = 5.0
    dense_shift: float = 3.2
    n_dense: int = 16
    train_counts: tuple[int, ...] = (150, 150, 150, 50)
    test_counts: tuple[int, ...] = (300, 300, 300, 2000)


def gen_benefit_task(task: BenefitTask, seed: int):
    g = rng.generator(seed, "benefit", "centers")
    dense = g.standard_normal((4, task.n_dense))
    dense /= np.linalg.norm(dense, axis=1, keepdims=True)
    centers = np.zeros((4, task.n_dense + 4))
    centers[:, 4:] = task.dense_shift * dense
    for c in range(3):
        centers[c, c] = task.majority_shift

    def draw(counts, tag):
        gg = rng.generator(seed, "benefit", tag)
        X = np.vstack([centers[c] + gg.standard_normal((n, centers.shape[1])) for c, n in enumerate(counts)])
        y = np.concatenate([np.full(n, c) for c, n in enumerate(counts)])
        minority = y == 3
        X[minority, 3] += task.axis_shift * gg.choice([-1.0, 1.0], size=int(minority.sum()))
        return X, y

    return draw(task.train_counts, "train") + draw(task.test_counts, "test")


class Subspace:
    """Restricts a classifier to a fixed set of columns."""

    def __init__(self, model, columns):
        self.model = model
        self.columns = np.asarray(columns, dtype=np.intp)

    def fit(self, X, y, n_classes=None):
        self.model.fit(np.asarray(X)[:, self.columns], y, n_classes)
        return self

    def predict(self, X):
        return self.model.predict(np.asarray(X)[:, self.columns])

    def predict_proba(self, X):
        return self.model.predict_proba(np.asarray(X)[:, self.columns])


def benefit_learners(seed: int, task: BenefitTask = BenefitTask()):
    """H, L, X for the benefit task. The two boosters share the four axis
    features but split the dense block between them (even and odd columns),
    so their mistakes come from different evidence."""
    from .gbdt import GbdtClassifier, GbdtConfig
    from .prototype import ProtoClassifier

    dense = 4 + np.arange(task.n_dense)
    kw = dict(n_rounds=20, learning_rate=0.3, subsample=0.6, colsample=0.7)
    return (
        ProtoClassifier(seed=seed),
        Subspace(GbdtClassifier(GbdtConfig.leaf_wise(31, seed=rng.derive_seed(seed, "L"), **kw)), np.r_[0:4, dense[0::2]]),
        Subspace(GbdtClassifier(GbdtConfig.depth_wise(6, seed=rng.derive_seed(seed, "X"), **kw)), np.r_[0:4, dense[1::2]]),
    )


def ensemble_benefit_experiment(seeds: Sequence[int] = tuple(range(20)), task: BenefitTask = BenefitTask(), alpha: float = 0.05) -> BoundReport:
    """Minority-class error of the hard vote against each base learner.

    A seed counts as a success only when the learners' measured minority
    errors sit inside the symmetric improvement region (worst error as the
    common rate, largest pairwise covariance below its threshold) and the
    vote's error is strictly below all three. One-sided sign test over seeds.
    """
    from scipy.stats import binomtest

    from .ensemble import vote

    t0 = time.perf_counter()
    runs = []
    for s in seeds:
        Xtr, ytr, Xte, yte = gen_benefit_task(task, s)
        learners = benefit_learners(s, task)
        for m in learners:
            m.fit(Xtr, ytr, 4)
        preds = np.column_stack([m.predict(Xte) for m in learners])
        post = np.stack([m.predict_proba(Xte) for m in learners])
        ens = vote(preds, post)
        table = ErrorIndicatorTable.from_predictions(yte, preds)
        e = table.error_rates(3)
        e_ens = float((ens[yte == 3] != 3).mean())
        eps = float(e.max())
        kappa = table.kappa(3)
        thr = symmetric_improvement_threshold(eps).threshold if eps < 0.5 else 0.0
        runs.append({
            "seed": s,
            "errors": e,
            "e_ens": e_ens,
            "win": e_ens < float(e.min()),
            "kappa": kappa,
            "region_threshold": thr,
            "in_region": kappa < thr,
            "success": e_ens < float(e.min()) and kappa < thr,
        })
    wins = sum(r["win"] for r in runs)
    region = sum(r["in_region"] for r in runs)
    successes = sum(r["success"] for r in runs)
    p = binomtest(successes, len(runs), 0.5, alternative="greater").pvalue
    return BoundReport(
        "ensemble_benefit", float(p), alpha, p < alpha, len(runs),
        f"learners inside the symmetric region and vote strictly better than each in {successes}/{len(runs)} seeds "
        f"(region {region}, wins {wins}); one-sided sign test p = {p:.4g}",
        details={
            "successes": successes,
            "wins": wins,
            "mean_errors": np.mean([r["errors"] for r in runs], axis=0),
            "mean_e_ens": float(np.mean([r["e_ens"] for r in runs])),
            "seeds_in_symmetric_region": region,
            "runs": runs,
        },
        seconds=time.perf_counter() - t0,
    )


# -------------------------------------------------------------- the suite


def default_spec(seed: int = 0) -> SyntheticSpec:
    return SyntheticSpec(n_classes=4, dim=3, separation=1.0, bound=1.0, noise=0.5, seed=seed)


def run_all(seed: int = 0, quick: bool = False) -> list[BoundReport]:
    """Every lab experiment at its default size (``quick`` shrinks them)."""
    trials = 200 if quick else 1000
    reports = []
    spec = default_spec(seed)
    for k in (25, 100, 400):
        reports.append(concentration_experiment(spec, k, 0.05, trials))
    margin_spec = SyntheticSpec(n_classes=4, dim=3, separation=math.sqrt(8 / 3), bound=1.0, noise=0.35, seed=seed)
    reports.append(margin_bound_experiment(margin_spec, k=100, delta=0.05, rho=0.05, trials=50 if quick else 200))
    reports.append(vote_identity_experiment(200 if quick else 1000, seed))
    reports.append(independence_experiment(0.1, 200_000 if quick else 1_000_000, seed))
    reports.append(bounded_dependence_experiment(50 if quick else 200, 20_000, seed))
    reports.append(symmetric_improvement_experiment(n=100_000, seed=seed))
    n_flip = 20_000 if quick else 100_000
    reports.append(prior_shift_experiment(0.2, 0.2, "independent", n_flip, seed))
    reports.append(prior_shift_experiment(0.2, 0.2, "comonotone", n_flip, seed))
    reports.append(ensemble_benefit_experiment(tuple(range(seed, seed + 20))))
    return reports
