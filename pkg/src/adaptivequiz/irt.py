"""Item response theory calibration of quiz banks.

Four logistic response models are fitted to first-exposure answer data by
marginal maximum likelihood, with the latent student ability integrated out
against a standard normal prior using Gauss-Hermite quadrature:

    m1  difficulty only (Rasch / 1PL):       P = logistic(z - beta_i)
    m2  common discrimination:               P = logistic(alpha (z - beta_i))
    m3  per-item discrimination (2PL):       P = logistic(alpha_i (z - beta_i))
    m4  2PL plus per-item guessing (3PL):    P = c_i + (1 - c_i) logistic(...)

The variants are strictly nested (m1 in m2 in m3 in m4), so they can be
compared with likelihood-ratio tests; ``select_model`` walks up the chain
and keeps the smallest variant the data cannot reject.

Responses gathered by random allocation are sparse and unbalanced (some
items barely answered), so all parameters are box-bounded and items whose
estimates hit a bound are flagged rather than dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gammaincc, log_expit, logsumexp

from .bank import ItemBank, ResponseRecord, first_exposure_filter

VARIANTS = ("m1", "m2", "m3", "m4")

BETA_BOUNDS = (-6.0, 6.0)
ALPHA_BOUNDS = (0.05, 10.0)
GUESS_BOUNDS = (0.0, 0.5)

_BOUND_TOL = 1e-6  # distance at which an estimate counts as "at a bound"


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass
class ResponseMatrix:
    """Sparse binary first-exposure response matrix.

    ``rows[c]``, ``cols[c]``, ``values[c]`` give the student index, item
    index, and 0/1 outcome of cell ``c``. At most one cell exists per
    (student, item) pair and every student and item is referenced by at
    least one cell.
    """

    students: list[str]
    items: list[str]
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.int8)
        if not (self.rows.shape == self.cols.shape == self.values.shape):
            raise ValueError("rows, cols, values must have identical shapes")
        if self.n_cells:
            pairs = self.rows * len(self.items) + self.cols
            if len(np.unique(pairs)) != self.n_cells:
                raise ValueError("duplicate (student, item) cell; filter first exposures")
            if set(np.unique(self.rows)) != set(range(len(self.students))):
                raise ValueError("every student must have at least one response")
            if set(np.unique(self.cols)) != set(range(len(self.items))):
                raise ValueError("every item must have at least one response")
        elif self.students or self.items:
            raise ValueError("empty cell set but non-empty student/item lists")

    @property
    def n_students(self) -> int:
        return len(self.students)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_cells(self) -> int:
        return len(self.values)

    def item_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-item (times answered, times correct) within this matrix."""
        n = np.bincount(self.cols, minlength=self.n_items)
        k = np.bincount(self.cols, weights=self.values.astype(float), minlength=self.n_items)
        return n, k.astype(np.int64)

    def _indicators(self):
        """Sparse student-by-item indicators of correct and wrong cells.

        Cached: the likelihood and its score reduce to products of these
        with small item-by-node tables, which keeps every optimizer
        evaluation linear in the number of observed cells.
        """
        cached = getattr(self, "_indicator_cache", None)
        if cached is None:
            from scipy.sparse import csr_matrix

            shape = (self.n_students, self.n_items)
            right = csr_matrix(
                (self.values.astype(float), (self.rows, self.cols)), shape=shape
            )
            wrong = csr_matrix(
                ((1.0 - self.values).astype(float), (self.rows, self.cols)), shape=shape
            )
            right.eliminate_zeros()
            wrong.eliminate_zeros()
            cached = (right, wrong, right.T.tocsr(), wrong.T.tocsr())
            object.__setattr__(self, "_indicator_cache", cached)
        return cached

    @classmethod
    def from_records(
        cls,
        records: Iterable[ResponseRecord],
        item_order: Sequence[str] | None = None,
    ) -> "ResponseMatrix":
        """Build a matrix from a response log.

        First-exposure filtering is applied unconditionally (it is
        idempotent). ``item_order`` fixes the column order, e.g. to a bank's
        item list; items with no responses are dropped either way, since an
        unanswered item cannot be calibrated. Without it, students and items
        are ordered by id.
        """
        kept = first_exposure_filter(records)
        if not kept:
            return cls(students=[], items=[], rows=[], cols=[], values=[])
        students = sorted({r.student_id for r in kept})
        answered = {r.item_id for r in kept}
        if item_order is not None:
            items = [i for i in item_order if i in answered]
            stray = answered - set(item_order)
            if stray:
                raise ValueError(f"responses reference items outside the given order: {sorted(stray)}")
        else:
            items = sorted(answered)
        srow = {s: i for i, s in enumerate(students)}
        scol = {s: i for i, s in enumerate(items)}
        rows = np.array([srow[r.student_id] for r in kept])
        cols = np.array([scol[r.item_id] for r in kept])
        values = np.array([1 if r.correct else 0 for r in kept])
        return cls(students=students, items=items, rows=rows, cols=cols, values=values)


@dataclass
class FitConfig:
    n_quadrature: int = 21
    tol: float = 1e-9  # relative log-likelihood change at convergence
    max_iter: int = 500


@dataclass
class IrtModel:
    """A fitted (or explicitly parameterized) response model.

    ``alpha`` is None for m1 (fixed at 1), a scalar for m2, and a per-item
    array for m3/m4. ``guessing`` exists only for m4. ``item_flags`` marks
    items whose estimates are unreliable (degenerate data or estimates
    pinned at a bound).
    """

    variant: str
    item_ids: list[str]
    beta: np.ndarray
    alpha: float | np.ndarray | None = None
    guessing: np.ndarray | None = None
    loglik: float = np.nan
    n_quadrature: int = 21
    converged: bool = True
    item_flags: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if self.variant == "m1" and self.alpha is not None:
            raise ValueError("m1 fixes the discrimination at 1; alpha must be None")
        if self.variant == "m2":
            self.alpha = float(np.asarray(self.alpha))
        if self.variant in ("m3", "m4"):
            self.alpha = np.asarray(self.alpha, dtype=float)
            if self.alpha.shape != self.beta.shape:
                raise ValueError("per-item alpha must match beta in length")
        if self.variant == "m4":
            self.guessing = np.asarray(self.guessing, dtype=float)
            if self.guessing.shape != self.beta.shape:
                raise ValueError("guessing must match beta in length")
            if np.any((self.guessing < 0) | (self.guessing >= 1)):
                raise ValueError("guessing parameters must lie in [0, 1)")
        elif self.guessing is not None:
            raise ValueError(f"{self.variant} has no guessing parameters")

    @property
    def n_items(self) -> int:
        return len(self.beta)

    @property
    def n_params(self) -> int:
        return {
            "m1": self.n_items,
            "m2": self.n_items + 1,
            "m3": 2 * self.n_items,
            "m4": 3 * self.n_items,
        }[self.variant]

    def alpha_vector(self) -> np.ndarray:
        if self.variant == "m1":
            return np.ones(self.n_items)
        if self.variant == "m2":
            return np.full(self.n_items, float(self.alpha))
        return self.alpha

    def guessing_vector(self) -> np.ndarray | None:
        return self.guessing if self.variant == "m4" else None


def prob_correct(model: IrtModel, item_index: int, z) -> np.ndarray | float:
    """Model probability of a correct answer to one item at ability z.

    Strictly increasing in z (m1-m3; m4 non-decreasing, floored at the
    guessing level) and decreasing in the item's difficulty.
    """
    if not 0 <= item_index < model.n_items:
        raise IndexError(f"item index {item_index} out of range (0..{model.n_items - 1})")
    z = np.asarray(z, dtype=float)
    a = model.alpha_vector()[item_index]
    p = expit(a * (z - model.beta[item_index]))
    if model.variant == "m4":
        c = model.guessing[item_index]
        p = c + (1.0 - c) * p
    return float(p) if p.ndim == 0 else p


# ---------------------------------------------------------------------------
# Marginal likelihood machinery
# ---------------------------------------------------------------------------


def _gh_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes/log-weights rescaled for a standard normal weight."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return np.sqrt(2.0) * x, np.log(w) - 0.5 * np.log(np.pi)


def _response_tables(
    beta: np.ndarray, alpha: np.ndarray, guess: np.ndarray | None, nodes: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per item x node: logistic value s, log P(correct), log P(wrong).

    Everything is kept in log space so extreme |alpha (z - beta)| cannot
    underflow the likelihood.
    """
    lin = alpha[:, None] * (nodes[None, :] - beta[:, None])
    s = expit(lin)
    log_s = log_expit(lin)
    log_1ms = log_expit(-lin)
    if guess is None:
        return s, log_s, log_1ms
    with np.errstate(divide="ignore"):  # log(0) -> -inf is the intended limit
        log_c = np.log(guess)[:, None]
    log_1mc = np.log1p(-guess)[:, None]
    log_p = np.logaddexp(log_c, log_1mc + log_s)  # log(c + (1-c) s)
    log_q = log_1mc + log_1ms  # log((1-c)(1-s))
    return s, log_p, log_q


def _marginal_loglik(
    matrix: ResponseMatrix,
    beta: np.ndarray,
    alpha: np.ndarray,
    guess: np.ndarray | None,
    nodes: np.ndarray,
    logw: np.ndarray,
    with_counts: bool = False,
):
    """Marginal log-likelihood, optionally with expected node-count tables.

    Per student m and node k, ``A[m, k]`` sums the log response
    probabilities of the student's cells; both it and the expected counts
    ``r1[i, k]`` / ``r0[i, k]`` (posterior mass of students answering item i
    right / wrong, per node) are sparse products of the cell indicators with
    item-by-node tables. Summation order is fixed by the sparse structure,
    so repeated evaluations are bit-identical regardless of scheduling.
    """
    s, log_p, log_q = _response_tables(beta, alpha, guess, nodes)
    right, wrong, right_t, wrong_t = matrix._indicators()
    a = right @ log_p + wrong @ log_q
    b = logw[None, :] + a
    ll_m = logsumexp(b, axis=1)
    ll = float(ll_m.sum())
    if not with_counts:
        return ll, s
    post = np.exp(b - ll_m[:, None])
    r1 = right_t @ post
    r0 = wrong_t @ post
    return ll, s, r1, r0


def _pack(variant: str, beta, alpha, guess) -> np.ndarray:
    if variant == "m1":
        return np.asarray(beta, dtype=float).copy()
    if variant == "m2":
        return np.concatenate([beta, [float(np.mean(alpha))]])
    if variant == "m3":
        return np.concatenate([beta, alpha])
    return np.concatenate([beta, alpha, guess])


def _unpack(variant: str, theta: np.ndarray, n_items: int):
    beta = theta[:n_items]
    if variant == "m1":
        return beta, np.ones(n_items), None
    if variant == "m2":
        return beta, np.full(n_items, theta[n_items]), None
    if variant == "m3":
        return beta, theta[n_items : 2 * n_items], None
    return beta, theta[n_items : 2 * n_items], theta[2 * n_items :]


def _bounds(variant: str, n_items: int) -> list[tuple[float, float]]:
    bounds = [BETA_BOUNDS] * n_items
    if variant == "m2":
        bounds += [ALPHA_BOUNDS]
    elif variant in ("m3", "m4"):
        bounds += [ALPHA_BOUNDS] * n_items
    if variant == "m4":
        bounds += [GUESS_BOUNDS] * n_items
    return bounds


def _neg_loglik_and_grad(
    theta: np.ndarray, variant: str, matrix: ResponseMatrix, nodes: np.ndarray, logw: np.ndarray
) -> tuple[float, np.ndarray]:
    n_items = matrix.n_items
    beta, alpha, guess = _unpack(variant, theta, n_items)
    ll, s, r1, r0 = _marginal_loglik(matrix, beta, alpha, guess, nodes, logw, with_counts=True)

    # d log-term / d linear-predictor, per item x node, for a right and a
    # wrong answer. For a wrong answer the (1-c) factors cancel exactly,
    # leaving -s for every variant.
    if guess is None:
        d1_lin = 1.0 - s
    else:
        c = guess[:, None]
        p = c + (1.0 - c) * s
        d1_lin = (1.0 - c) * s * (1.0 - s) / p
    g_lin = r1 * d1_lin - r0 * s  # summed d log-term / d lin, weighted by counts

    g_beta = -alpha * g_lin.sum(axis=1)
    grad = [g_beta]
    if variant in ("m2", "m3", "m4"):
        g_alpha_item = g_lin @ nodes - beta * g_lin.sum(axis=1)
        grad.append(np.atleast_1d(g_alpha_item.sum()) if variant == "m2" else g_alpha_item)
    if variant == "m4":
        g_guess = (r1 * (1.0 - s) / p).sum(axis=1) - r0.sum(axis=1) / (1.0 - guess)
        grad.append(g_guess)
    return -ll, -np.concatenate(grad)


def _initial_beta(matrix: ResponseMatrix) -> np.ndarray:
    """Start difficulties at the logit of observed difficulty, clamped to +-4."""
    n, k = matrix.item_counts()
    frac_wrong = 1.0 - (k + 0.5) / (n + 1.0)  # lightly smoothed to dodge 0/1
    return np.clip(np.log(frac_wrong) - np.log1p(-frac_wrong), -4.0, 4.0)


def _degenerate_flags(matrix: ResponseMatrix) -> dict[str, list[str]]:
    n, k = matrix.item_counts()
    flags: dict[str, list[str]] = {}
    for i, item_id in enumerate(matrix.items):
        if k[i] == n[i]:
            flags.setdefault(item_id, []).append("all_correct")
        elif k[i] == 0:
            flags.setdefault(item_id, []).append("all_wrong")
    return flags


def _bound_flags(model: IrtModel) -> None:
    alpha = model.alpha_vector()
    guess = model.guessing_vector()
    for i, item_id in enumerate(model.item_ids):
        hits = []
        if min(abs(model.beta[i] - b) for b in BETA_BOUNDS) < _BOUND_TOL:
            hits.append("beta_at_bound")
        if model.variant in ("m3", "m4") and min(abs(alpha[i] - b) for b in ALPHA_BOUNDS) < _BOUND_TOL:
            hits.append("alpha_at_bound")
        if guess is not None and abs(guess[i] - GUESS_BOUNDS[1]) < _BOUND_TOL:
            hits.append("guessing_at_bound")
        if hits:
            model.item_flags.setdefault(item_id, []).extend(hits)
    if model.variant == "m2" and min(abs(float(model.alpha) - b) for b in ALPHA_BOUNDS) < _BOUND_TOL:
        model.item_flags.setdefault("*", []).append("alpha_at_bound")


def _fit_one(
    matrix: ResponseMatrix,
    variant: str,
    config: FitConfig,
    nodes: np.ndarray,
    logw: np.ndarray,
    theta0: np.ndarray,
) -> IrtModel:
    result = minimize(
        _neg_loglik_and_grad,
        theta0,
        args=(variant, matrix, nodes, logw),
        method="L-BFGS-B",
        jac=True,
        bounds=_bounds(variant, matrix.n_items),
        options={"maxiter": config.max_iter, "ftol": config.tol, "gtol": 1e-8},
    )
    beta, alpha, guess = _unpack(variant, result.x, matrix.n_items)
    model = IrtModel(
        variant=variant,
        item_ids=list(matrix.items),
        beta=beta.copy(),
        alpha=None if variant == "m1" else (float(alpha[0]) if variant == "m2" else alpha.copy()),
        guessing=None if guess is None else guess.copy(),
        n_quadrature=config.n_quadrature,
        converged=bool(result.success),
        item_flags=_degenerate_flags(matrix),
    )
    model.loglik = log_likelihood(model, matrix)
    _bound_flags(model)
    return model


def _fit_chain(matrix: ResponseMatrix, upto: str, config: FitConfig) -> dict[str, IrtModel]:
    """Fit variants m1..upto in nesting order, warm-starting each from the last.

    Starting a larger variant exactly at the smaller one's optimum makes the
    fitted log-likelihoods monotone along the chain by construction.
    """
    nodes, logw = _gh_rule(config.n_quadrature)
    fits: dict[str, IrtModel] = {}
    beta = _initial_beta(matrix)
    alpha = np.ones(matrix.n_items)
    guess = np.zeros(matrix.n_items)
    for variant in VARIANTS[: VARIANTS.index(upto) + 1]:
        theta0 = _pack(variant, beta, alpha, guess)
        model = _fit_one(matrix, variant, config, nodes, logw, theta0)
        fits[variant] = model
        beta = model.beta
        alpha = model.alpha_vector()
    return fits


def fit(matrix: ResponseMatrix, variant: str = "m1", config: FitConfig | None = None) -> IrtModel:
    """Fit one model variant by marginal maximum likelihood.

    The ability prior is standard normal, integrated with Gauss-Hermite
    quadrature; parameters are maximized under box bounds with an analytic
    score. Larger variants are reached by stepping up the nested chain from
    m1, so refitting a sequence of variants on the same data always yields
    non-decreasing log-likelihoods.

    Items with degenerate data (all correct / all wrong) or estimates pinned
    at a bound are retained but flagged in ``item_flags``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    if matrix.n_cells == 0:
        raise ValueError("cannot fit an empty response matrix")
    config = config or FitConfig()
    return _fit_chain(matrix, variant, config)[variant]


def fit_all(matrix: ResponseMatrix, config: FitConfig | None = None) -> dict[str, IrtModel]:
    """Fit every variant in one warm-started pass up the nested chain."""
    if matrix.n_cells == 0:
        raise ValueError("cannot fit an empty response matrix")
    return _fit_chain(matrix, "m4", config or FitConfig())


def log_likelihood(model: IrtModel, matrix: ResponseMatrix) -> float:
    """Marginal log-likelihood of a matrix under a model (same quadrature as fit)."""
    if matrix.n_cells == 0:
        return 0.0
    if matrix.n_items != model.n_items:
        raise ValueError(
            f"matrix has {matrix.n_items} items but model has {model.n_items}"
        )
    nodes, logw = _gh_rule(model.n_quadrature)
    ll, _ = _marginal_loglik(
        matrix, model.beta, model.alpha_vector(), model.guessing_vector(), nodes, logw
    )
    return ll


# ---------------------------------------------------------------------------
# Model comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LrtResult:
    smaller: str
    larger: str
    stat: float
    df: int
    p_value: float


def chi_square_sf(x: float, df: int) -> float:
    """Upper-tail chi-square probability Q(df/2, x/2)."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if x < 0:
        raise ValueError(f"statistic must be >= 0, got {x}")
    return float(gammaincc(df / 2.0, x / 2.0))


def lrt_compare(smaller: IrtModel, larger: IrtModel) -> LrtResult:
    """Likelihood-ratio test of two nested variants fitted to the same matrix."""
    order = {v: i for i, v in enumerate(VARIANTS)}
    if order[smaller.variant] >= order[larger.variant]:
        raise ValueError(f"{smaller.variant} is not nested in {larger.variant}")
    if smaller.n_items != larger.n_items:
        raise ValueError("models were fitted to different item sets")
    stat = max(0.0, 2.0 * (larger.loglik - smaller.loglik))
    df = larger.n_params - smaller.n_params
    return LrtResult(
        smaller=smaller.variant,
        larger=larger.variant,
        stat=stat,
        df=df,
        p_value=chi_square_sf(stat, df),
    )


@dataclass
class SelectionResult:
    model: IrtModel
    fits: dict[str, IrtModel]
    table: list[LrtResult]
    accepted: list[str]


def select_model(
    matrix: ResponseMatrix, alpha: float = 0.05, config: FitConfig | None = None
) -> SelectionResult:
    """Pick the smallest variant the data cannot reject.

    Steps up the nested chain: each larger variant is tested against the
    currently accepted model and accepted only when its likelihood-ratio
    p-value falls below ``alpha``. All three comparisons are performed (a
    rejected step does not end the walk, so e.g. strong per-item
    discrimination can still lift m1 directly to m3 when the common-slope
    step alone looks insignificant). The comparison table is returned for
    reporting.
    """
    fits = fit_all(matrix, config)
    selected = fits["m1"]
    accepted = ["m1"]
    table = []
    for larger in VARIANTS[1:]:
        row = lrt_compare(selected, fits[larger])
        table.append(row)
        if row.p_value < alpha:
            selected = fits[larger]
            accepted.append(larger)
    return SelectionResult(model=selected, fits=fits, table=table, accepted=accepted)


# ---------------------------------------------------------------------------
# Bank diagnostics
# ---------------------------------------------------------------------------


@dataclass
class AverageStudentReport:
    """How the bank looks to a student of average ability (z = 0).

    A healthy bank spreads these probabilities across [0, 1] roughly
    symmetrically around one half. ``all_above_half`` fires when every
    single item is easier than a coin flip for the average student, the
    worst imbalance the diagnostic is designed to catch.
    """

    item_ids: list[str]
    p_correct: np.ndarray
    histogram: np.ndarray  # counts over 10 equal bins spanning [0, 1]
    n_easy: int  # items with P(correct | z=0) > 0.5
    n_hard: int  # items with P(correct | z=0) < 0.5
    all_above_half: bool
    item_flags: dict[str, list[str]] = field(default_factory=dict)


def average_student_report(model: IrtModel, bank: ItemBank | None = None) -> AverageStudentReport:
    """Per-item P(correct) at average ability, plus the bank balance summary."""
    if bank is not None:
        bank_ids = {it.item_id for it in bank.items}
        missing = [i for i in model.item_ids if i not in bank_ids]
        if missing:
            raise ValueError(f"model items not present in bank {bank.bank_id!r}: {missing}")
    p = np.array([prob_correct(model, i, 0.0) for i in range(model.n_items)])
    hist, _ = np.histogram(p, bins=10, range=(0.0, 1.0))
    return AverageStudentReport(
        item_ids=list(model.item_ids),
        p_correct=p,
        histogram=hist,
        n_easy=int(np.sum(p > 0.5)),
        n_hard=int(np.sum(p < 0.5)),
        all_above_half=bool(np.all(p > 0.5)),
        item_flags=dict(model.item_flags),
    )
