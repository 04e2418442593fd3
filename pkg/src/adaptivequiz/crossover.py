"""Randomized crossover experiment analysis.

Students alternate between two homework treatments across four exam
periods; every student eventually sees both treatments, so the treatment
contrast is estimated within subjects. Exam scores are modeled with a
random-intercept linear mixed model

    score = intercept + treatment + math + treatment:math + exam + b_student + noise

with b_student ~ N(0, sigma_b^2) capturing persistent ability differences.

Estimation is maximum likelihood via the profile likelihood of the variance
ratio lambda = sigma_b^2 / sigma^2: for any fixed lambda the GLS estimates
and the residual variance have closed forms (per-student Woodbury identity,
all block operations scalar), leaving a one-dimensional search over lambda.
ML rather than REML is used throughout because nested fixed-effect models
are compared with likelihood-ratio tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from .irt import chi_square_sf

TREATMENTS = ("traditional", "tutorweb")  # reference level first
MATH_LEVELS = ("weak", "strong")
EXAMS = (1, 2, 3, 4)
ALL_TERMS = ("treatment", "math", "interaction", "exam")

LAMBDA_MAX = 1e4


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExamRecord:
    student_id: str
    exam: int
    treatment: str
    math_background: str
    score: float

    def __post_init__(self) -> None:
        if self.exam not in EXAMS:
            raise ValueError(f"exam must be one of {EXAMS}, got {self.exam}")
        if self.treatment not in TREATMENTS:
            raise ValueError(f"treatment must be one of {TREATMENTS}, got {self.treatment!r}")
        if self.math_background not in MATH_LEVELS:
            raise ValueError(f"math_background must be one of {MATH_LEVELS}, got {self.math_background!r}")


@dataclass
class CrossoverSchedule:
    """Per-student treatment sequence over the exam periods."""

    group_a: list[str]
    group_b: list[str]
    n_exams: int = 4

    def sequence(self, student_id: str) -> list[tuple[int, str]]:
        if student_id in set(self.group_a):
            first = "tutorweb"
        elif student_id in set(self.group_b):
            first = "traditional"
        else:
            raise KeyError(f"student {student_id!r} not in schedule")
        other = "traditional" if first == "tutorweb" else "tutorweb"
        return [(k, first if k % 2 == 1 else other) for k in range(1, self.n_exams + 1)]


@dataclass
class LmmFit:
    """ML fit of the random-intercept model for one fixed-effect term set."""

    fixed_names: list[str]
    fixed: np.ndarray
    cov_fixed: np.ndarray
    sigma_b2: float
    sigma2: float
    lambda_ratio: float
    loglik: float
    n_obs: int
    n_students: int

    def coef(self, name: str) -> float:
        return float(self.fixed[self.fixed_names.index(name)])

    def se(self, name: str) -> float:
        i = self.fixed_names.index(name)
        return float(np.sqrt(self.cov_fixed[i, i]))


# ---------------------------------------------------------------------------
# Design
# ---------------------------------------------------------------------------


def randomize_crossover(
    student_ids: Sequence[str], rng: np.random.Generator | int | None = None, n_exams: int = 4
) -> CrossoverSchedule:
    """Randomly split students into two near-equal crossed groups.

    Group A starts on the quiz treatment, group B on traditional homework,
    and the groups swap every period. Sizes differ by at most one.
    """
    ids = list(student_ids)
    if len(ids) < 2:
        raise ValueError(f"need at least 2 students to cross, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("student ids must be unique")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    order = [ids[i] for i in gen.permutation(len(ids))]
    half = (len(ids) + 1) // 2
    return CrossoverSchedule(group_a=order[:half], group_b=order[half:], n_exams=n_exams)


def _term_columns(terms: Iterable[str]) -> list[str]:
    terms = set(terms)
    unknown = terms - set(ALL_TERMS)
    if unknown:
        raise ValueError(f"unknown model terms: {sorted(unknown)}")
    if "interaction" in terms and not {"treatment", "math"} <= terms:
        raise ValueError("interaction term requires both treatment and math terms")
    names = ["intercept"]
    if "treatment" in terms:
        names.append("treatment[tutorweb]")
    if "math" in terms:
        names.append("math[strong]")
    if "interaction" in terms:
        names.append("treatment[tutorweb]:math[strong]")
    if "exam" in terms:
        names += [f"exam[{k}]" for k in EXAMS[1:]]
    return names


def design_matrix(
    records: Sequence[ExamRecord], terms: Iterable[str] = ALL_TERMS
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str], list[str]]:
    """Dummy-coded fixed design X, student indicator design Z, and scores y.

    Reference levels are traditional homework, weak math background, and
    exam 1, so the treatment coefficient is the tutorweb-minus-traditional
    contrast. Returns ``(X, Z, y, column_names, student_ids)`` with one Z
    column per student (sorted by id, so row order never matters).
    """
    if not records:
        raise ValueError("no exam records")
    seen: set[tuple[str, int]] = set()
    for r in records:
        key = (r.student_id, r.exam)
        if key in seen:
            raise ValueError(f"duplicate record for student {r.student_id!r} exam {r.exam}")
        seen.add(key)
    names = _term_columns(terms)
    students = sorted({r.student_id for r in records})
    srow = {s: i for i, s in enumerate(students)}
    n = len(records)
    X = np.zeros((n, len(names)))
    Z = np.zeros((n, len(students)))
    y = np.empty(n)
    col = {name: j for j, name in enumerate(names)}
    for i, r in enumerate(records):
        X[i, 0] = 1.0
        trt = 1.0 if r.treatment == "tutorweb" else 0.0
        math = 1.0 if r.math_background == "strong" else 0.0
        if "treatment[tutorweb]" in col:
            X[i, col["treatment[tutorweb]"]] = trt
        if "math[strong]" in col:
            X[i, col["math[strong]"]] = math
        if "treatment[tutorweb]:math[strong]" in col:
            X[i, col["treatment[tutorweb]:math[strong]"]] = trt * math
        if r.exam > 1 and f"exam[{r.exam}]" in col:
            X[i, col[f"exam[{r.exam}]"]] = 1.0
        Z[i, srow[r.student_id]] = 1.0
        y[i] = r.score
    return X, Z, y, names, students


# ---------------------------------------------------------------------------
# Profile-likelihood ML fit
# ---------------------------------------------------------------------------


def _cluster_stats(X: np.ndarray, Z: np.ndarray, y: np.ndarray):
    """Per-student cross products; everything later is scalar per cluster."""
    if Z.ndim != 2 or Z.shape[0] != X.shape[0]:
        raise ValueError("Z must have one row per observation")
    if not np.all((Z == 0.0) | (Z == 1.0)) or not np.all(Z.sum(axis=1) == 1.0):
        raise ValueError("Z must be a one-hot student indicator matrix")
    cluster = Z.argmax(axis=1)
    n_clusters = Z.shape[1]
    if len(np.unique(cluster)) != n_clusters:
        raise ValueError("every student column in Z needs at least one observation")
    p = X.shape[1]
    sizes = np.bincount(cluster, minlength=n_clusters).astype(float)
    Xt1 = np.zeros((n_clusters, p))
    yt1 = np.zeros(n_clusters)
    np.add.at(Xt1, cluster, X)
    np.add.at(yt1, cluster, y)
    return {
        "cluster": cluster,
        "sizes": sizes,
        "Xt1": Xt1,
        "yt1": yt1,
        "XtX": X.T @ X,
        "Xty": X.T @ y,
        "yty": float(y @ y),
        "n": X.shape[0],
        "p": p,
    }


def _gls_pieces(stats: dict, lam: float):
    """A = X' V^-1 X, b = X' V^-1 y, c = y' V^-1 y and log|V| at a variance ratio.

    With V_j = I + lam * 1 1' per student, V_j^-1 = I - f_j 1 1' where
    f_j = lam / (1 + lam n_j), so only rank-one corrections are needed.
    """
    f = lam / (1.0 + lam * stats["sizes"])
    A = stats["XtX"] - (stats["Xt1"] * f[:, None]).T @ stats["Xt1"]
    b = stats["Xty"] - stats["Xt1"].T @ (f * stats["yt1"])
    c = stats["yty"] - float(f @ (stats["yt1"] ** 2))
    logdet_v = float(np.sum(np.log1p(lam * stats["sizes"])))
    return A, b, c, logdet_v


def _profile_neg2ll(stats: dict, lam: float) -> float:
    n = stats["n"]
    A, b, c, logdet_v = _gls_pieces(stats, lam)
    try:
        beta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.inf
    rss = c - float(beta @ b)
    if rss <= 0:
        return np.inf
    sigma2 = rss / n
    return n * np.log(2.0 * np.pi * sigma2) + logdet_v + n


def _profile_grad(stats: dict, lam: float) -> float:
    """d/d(lambda) of the profiled -2 log-likelihood.

    By the envelope theorem the GLS residual sum differentiates through
    V^-1 only: d(rss)/dlam = -sum_j t_j^2 with t_j the student's residual
    sum shrunk by 1/(1 + lam n_j). Unlike differences of the objective,
    this is accurate to machine precision, so root-finding on it pins the
    variance ratio far more tightly than comparing function values can.
    """
    A, b, c, _ = _gls_pieces(stats, lam)
    beta = np.linalg.solve(A, b)
    rss = c - float(beta @ b)
    resid_sums = stats["yt1"] - stats["Xt1"] @ beta
    t = resid_sums / (1.0 + lam * stats["sizes"])
    n = stats["n"]
    return -n * float(t @ t) / rss + float(np.sum(stats["sizes"] / (1.0 + lam * stats["sizes"])))


def fit_lmm(X: np.ndarray, Z: np.ndarray, y: np.ndarray, fixed_names: Sequence[str] | None = None) -> LmmFit:
    """ML fit of y = X beta + Z b + eps with a scalar random intercept per student.

    The variance ratio lambda = sigma_b^2 / sigma^2 is profiled out: each
    candidate lambda yields closed-form GLS estimates, and lambda itself is
    found by one-dimensional bounded search on [0, 1e4]. When the boundary
    lambda = 0 fits as well as the interior optimum (e.g. one observation
    per student, where the two variances are not separable), the boundary is
    preferred and the fit collapses to ordinary least squares exactly.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d design matrix")
    n, p = X.shape
    if n < p:
        raise ValueError(f"fewer observations ({n}) than fixed parameters ({p})")
    if np.linalg.matrix_rank(X) < p:
        raise ValueError("X is rank deficient on the observed rows")
    stats = _cluster_stats(X, np.asarray(Z, dtype=float), y)

    # The profile -2ll is minimized where its derivative crosses zero; a
    # nonnegative derivative at 0 puts the optimum on the boundary and the
    # fit collapses to OLS. The tolerance absorbs rounding noise in the
    # flat, non-identifiable case (e.g. one observation per student), where
    # the derivative is identically zero in exact arithmetic.
    grad_tol = 1e-9 * X.shape[0]
    if _profile_grad(stats, 0.0) >= -grad_tol:
        lam = 0.0
    else:
        lo, hi = 0.0, 1.0
        while hi < LAMBDA_MAX and _profile_grad(stats, hi) < 0.0:
            lo, hi = hi, hi * 4.0
        hi = min(hi, LAMBDA_MAX)
        if _profile_grad(stats, hi) < 0.0:
            lam = LAMBDA_MAX  # optimum beyond the search cap
        else:
            lam = float(brentq(lambda v: _profile_grad(stats, v), lo, hi, xtol=1e-12, rtol=1e-15))
        # Belt and braces: never prefer an interior point the boundary matches.
        if _profile_neg2ll(stats, 0.0) <= _profile_neg2ll(stats, lam) + 1e-9:
            lam = 0.0

    A, b, c, logdet_v = _gls_pieces(stats, lam)
    beta = np.linalg.solve(A, b)
    rss = c - float(beta @ b)
    sigma2 = rss / n
    loglik = -0.5 * (n * np.log(2.0 * np.pi * sigma2) + logdet_v + n)
    cov_fixed = sigma2 * np.linalg.inv(A)
    names = list(fixed_names) if fixed_names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValueError("fixed_names length does not match X columns")
    return LmmFit(
        fixed_names=names,
        fixed=beta,
        cov_fixed=cov_fixed,
        sigma_b2=lam * sigma2,
        sigma2=sigma2,
        lambda_ratio=lam,
        loglik=float(loglik),
        n_obs=n,
        n_students=Z.shape[1],
    )


def fit_terms(records: Sequence[ExamRecord], terms: Iterable[str] = ALL_TERMS) -> LmmFit:
    """Convenience wrapper: build the design for a term set and fit it."""
    X, Z, y, names, _ = design_matrix(records, terms)
    return fit_lmm(X, Z, y, fixed_names=names)


# ---------------------------------------------------------------------------
# Term testing and elimination
# ---------------------------------------------------------------------------


def lrt_term(full: LmmFit, reduced: LmmFit) -> float:
    """Likelihood-ratio p-value for dropping the terms absent from ``reduced``.

    Both fits must be ML fits of the same data with nested fixed-effect sets.
    """
    if not set(reduced.fixed_names) <= set(full.fixed_names):
        raise ValueError("reduced model terms must be a subset of the full model's")
    if reduced.n_obs != full.n_obs:
        raise ValueError("fits compare different data")
    df = len(full.fixed_names) - len(reduced.fixed_names)
    if df == 0:
        return 1.0  # identical term sets: nothing to test
    stat = max(0.0, 2.0 * (full.loglik - reduced.loglik))
    return chi_square_sf(stat, df)


@dataclass(frozen=True)
class TermTest:
    term: str
    p_value: float
    dropped: bool


@dataclass
class EliminationResult:
    fit: LmmFit
    terms: tuple[str, ...]
    trace: list[TermTest] = field(default_factory=list)


def backward_eliminate(records: Sequence[ExamRecord], alpha: float = 0.05) -> EliminationResult:
    """Backward term elimination from the full crossover model.

    The interaction is tested first and dropped when non-significant; only
    then is the treatment main effect tested. Math background and exam
    effects are retained throughout (they are design controls, not
    hypotheses under test). Every test's p-value lands in the trace.
    """
    current: tuple[str, ...] = ALL_TERMS
    fit_full = fit_terms(records, current)
    trace: list[TermTest] = []

    reduced_terms = ("treatment", "math", "exam")
    fit_reduced = fit_terms(records, reduced_terms)
    p_int = lrt_term(fit_full, fit_reduced)
    drop_int = p_int >= alpha
    trace.append(TermTest("interaction", p_int, drop_int))
    if drop_int:
        current, fit_full = reduced_terms, fit_reduced

        final_terms = ("math", "exam")
        fit_final = fit_terms(records, final_terms)
        p_trt = lrt_term(fit_full, fit_final)
        drop_trt = p_trt >= alpha
        trace.append(TermTest("treatment", p_trt, drop_trt))
        if drop_trt:
            current, fit_full = final_terms, fit_final

    return EliminationResult(fit=fit_full, terms=current, trace=trace)


def treatment_ci(fit: LmmFit, level: float = 0.95) -> tuple[float, float]:
    """Wald confidence interval for the treatment contrast."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    name = "treatment[tutorweb]"
    if name not in fit.fixed_names:
        raise ValueError("fit does not contain a treatment term")
    z = ndtri(0.5 + level / 2.0)
    est, se = fit.coef(name), fit.se(name)
    return est - z * se, est + z * se


# ---------------------------------------------------------------------------
# exams.csv
# ---------------------------------------------------------------------------

_CSV_FIELDS = ("student_id", "exam", "treatment", "math", "score")


def write_exams_csv(records: Iterable[ExamRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for r in records:
            writer.writerow([r.student_id, r.exam, r.treatment, r.math_background, repr(r.score)])


def read_exams_csv(path) -> list[ExamRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(
                    ExamRecord(
                        student_id=row["student_id"],
                        exam=int(row["exam"]),
                        treatment=row["treatment"],
                        math_background=row["math"],
                        score=float(row["score"]),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records
