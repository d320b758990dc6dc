"""Multiplicative-weights training loop for the multi-kernel margin problem.

The trainer runs T = ceil((8 rho^2 / eps^2) ln n) rounds. Each round picks the
worst-margin point of each class from the violation vector g, adds 1/2 to
both dual coordinates, refreshes the O(m n) caches v_i = G_i a and
q_i = a' G_i a with two kernel columns per kernel, and recomputes the primal
block coefficients in closed form. No n x n matrix is ever formed: the primal
matrix is an exponential of arrow matrices, which collapses to a cosh/sinh
pair per kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleDual, NumericalFailure
from .kernels import GramAccessor, bind


@dataclass
class SolverConfig:
    """Training knobs.

    eps is the target approximation error; rho the spectral width bound,
    3/2 for trace-normalized kernels. Margin is "hard" or "l2" (2-norm soft
    margin with parameter C, realized as ridge = 1/C on each kernel).
    quash_threshold switches cosh/sinh to a shifted exp once the largest
    exponent would otherwise overflow; the shift cancels in normalization.
    """

    eps: float
    rho: float = 1.5
    margin: str = "hard"
    C: float | None = None
    quash_threshold: float = 20.0
    max_iters_override: int | None = None
    min_quadform: float = 1e-12

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if not self.rho > 0.0:
            raise ValueError("rho must be positive")
        if self.eps >= 2.0 * self.rho:
            raise ValueError("eps must be smaller than 2*rho")
        if self.margin not in ("hard", "l2"):
            raise ValueError("margin must be 'hard' or 'l2'")
        if self.margin == "l2" and (self.C is None or not self.C > 0.0):
            raise ValueError("2-norm margin requires C > 0")
        if not self.quash_threshold > 0.0:
            raise ValueError("quash_threshold must be positive")
        if self.max_iters_override is not None and self.max_iters_override < 1:
            raise ValueError("max_iters_override must be at least 1")

    @property
    def eps_prime(self) -> float:
        return -math.log1p(-self.eps / (2.0 * self.rho))


@dataclass(frozen=True)
class DualUpdate:
    """One sparse dual step: coordinate j_plus (label +1) and j_minus (label -1)
    each receive mass 1/2, so the step sums to 1 and is label-balanced."""

    j_plus: int
    j_minus: int


@dataclass
class SolverState:
    """Accumulated dual vector plus the incremental per-kernel caches."""

    alpha_bar: np.ndarray  # (n,) accumulated dual, entries are multiples of 1/2
    v: np.ndarray  # (m, n) rows v_i = G_i @ alpha_bar
    q: np.ndarray  # (m,) quadforms alpha_bar' G_i alpha_bar
    p12: np.ndarray  # (m,) normalized off-diagonal primal coefficients (<= 0)
    g: np.ndarray  # (n,) aggregate violation direction
    t: int
    e_m: float  # shared normalization carrier from the last exponentiation
    accessor: GramAccessor
    config: SolverConfig
    max_step_width: float = 0.0
    min_oracle_value: float = 0.0
    last_s_max: float = 0.0
    _col_plus: np.ndarray = field(default=None, repr=False)
    _col_minus: np.ndarray = field(default=None, repr=False)

    @classmethod
    def fresh(cls, accessor: GramAccessor, config: SolverConfig) -> "SolverState":
        m, n = accessor.m, accessor.n
        return cls(
            alpha_bar=np.zeros(n),
            v=np.zeros((m, n)),
            q=np.zeros(m),
            p12=np.zeros(m),
            g=np.zeros(n),
            t=0,
            e_m=1.0,
            accessor=accessor,
            config=config,
            _col_plus=np.empty((m, n)),
            _col_minus=np.empty((m, n)),
        )


def iteration_budget(config: SolverConfig, n: int) -> int:
    """ceil((8 rho^2 / eps^2) ln n), unless overridden."""
    if n < 2:
        raise ValueError("need at least 2 points")
    if config.max_iters_override is not None:
        return int(config.max_iters_override)
    return int(math.ceil((8.0 * config.rho**2 / config.eps**2) * math.log(n)))


def _find_pair(g: np.ndarray, pos_idx: np.ndarray, neg_idx: np.ndarray) -> DualUpdate:
    # np.argmax takes the first maximum, so ties break toward the lowest index.
    jp = int(pos_idx[np.argmax(g[pos_idx])])
    jm = int(neg_idx[np.argmax(g[neg_idx])])
    return DualUpdate(jp, jm)


def find_alpha(g: np.ndarray, labels: np.ndarray) -> DualUpdate:
    """Pick the highest-violation point of each class from g."""
    pos_idx = np.flatnonzero(labels > 0)
    neg_idx = np.flatnonzero(labels < 0)
    if pos_idx.size == 0 or neg_idx.size == 0:
        raise InfeasibleDual("both label classes are required")
    return _find_pair(np.asarray(g, dtype=np.float64), pos_idx, neg_idx)


def apply_update(state: SolverState, update: DualUpdate, accessor: GramAccessor) -> SolverState:
    """Add 1/2 to both chosen coordinates and refresh v_i, q_i incrementally.

    Cost is O(m n) plus two on-demand kernel columns per kernel. The v_i
    terms of the q update are read before v is mutated.
    """
    jp, jm = update.j_plus, update.j_minus
    cp = accessor.signed_columns_all(jp, out=state._col_plus)
    cm = accessor.signed_columns_all(jm, out=state._col_minus)
    v = state.v
    step_quad = 0.25 * (cp[:, jp] + cm[:, jm] + 2.0 * cp[:, jm])
    state.q += v[:, jp] + v[:, jm]
    state.q += step_quad
    width = math.sqrt(max(float(step_quad.max()), 0.0))
    if width > state.max_step_width:
        state.max_step_width = width
    np.add(cp, cm, out=cp)
    cp *= 0.5
    v += cp
    state.alpha_bar[jp] += 0.5
    state.alpha_bar[jm] += 0.5
    state.t += 1
    return state


def exponentiate_m(
    state: SolverState,
    eps_prime: float,
    rho: float,
    quash_threshold: float = 20.0,
    min_quadform: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form primal refresh: per-kernel cosh/sinh coefficients and g.

    Per kernel, s_i = (eps'/(2 rho)) sqrt(q_i). Below the quash threshold the
    exact cosh/sinh pair is used; above it both are replaced by exp shifted
    down by max_k s_k, with the shift recorded in e_m so the trace normalizer
    S = m (n-1) e_m + 2 sum_i p11_i stays in consistent units. The sinh block
    carries a minus sign, which points g toward margin violators. Kernels
    whose quadform sits below min_quadform contribute nothing to g.
    """
    q = state.q
    v = state.v
    m, n = v.shape
    u_raw = np.sqrt(np.maximum(q, 0.0))
    s = (eps_prime / (2.0 * rho)) * u_raw
    s_max = float(s.max())
    if s_max < quash_threshold:
        p11 = np.cosh(s)
        p12 = -np.sinh(s)
        e_m = 1.0
    else:
        p11 = np.exp(s - s_max)
        p12 = -p11
        e_m = math.exp(-s_max)
    norm = m * (n - 1) * e_m + 2.0 * float(p11.sum())
    p12 = p12 / norm
    weights = np.where(u_raw >= min_quadform, 2.0 * p12 / np.maximum(u_raw, min_quadform), 0.0)
    g = weights @ v
    state.p12 = p12
    state.g = g
    state.e_m = e_m
    state.last_s_max = s_max
    return p12, g


def arrow_exp(a: float, u) -> np.ndarray:
    """Exact exponential of the (n+1)x(n+1) arrow matrix [[a I, u], [u', a]].

    Eigenvalues are a (multiplicity n-1) and a +/- |u|, which assembles into
    e^a [cosh|u| uu' / |u|^2 + (I - uu'/|u|^2)] on the top-left block,
    e^a sinh|u| u/|u| on the borders, and e^a cosh|u| in the corner.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or u.size < 1:
        raise ValueError("u must be a non-empty vector")
    n = u.size
    ea = math.exp(a)
    out = np.zeros((n + 1, n + 1))
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        np.fill_diagonal(out, ea)
        return out
    uhat = u / norm
    ch = math.cosh(norm)
    sh = math.sinh(norm)
    top = (ch - 1.0) * np.outer(uhat, uhat)
    top[np.diag_indices(n)] += 1.0
    out[:n, :n] = ea * top
    border = (ea * sh) * uhat
    out[:n, n] = border
    out[n, :n] = border
    out[n, n] = ea * ch
    return out


def train(dataset, specs, config: SolverConfig, trace=None) -> tuple[SolverState, int]:
    """Run the full primal-dual loop and return the final state.

    Deterministic for fixed inputs. `trace`, when given, receives one text
    line per iteration (iteration, chosen pair, max_i s_i, g' alpha_t).
    Raises InfeasibleDual when a class is missing and NumericalFailure with
    the iteration index if g or q turns non-finite.
    """
    y = dataset.labels
    pos_idx = np.flatnonzero(y > 0)
    neg_idx = np.flatnonzero(y < 0)
    if pos_idx.size == 0 or neg_idx.size == 0:
        raise InfeasibleDual("training data must contain both classes")
    accessor = bind(specs, dataset, C=config.C, margin_mode=config.margin)
    total = iteration_budget(config, dataset.n)
    state = SolverState.fresh(accessor, config)
    eps_prime = config.eps_prime
    for t in range(1, total + 1):
        update = _find_pair(state.g, pos_idx, neg_idx)
        oracle_value = 0.5 * (state.g[update.j_plus] + state.g[update.j_minus])
        if oracle_value < state.min_oracle_value:
            state.min_oracle_value = oracle_value
        apply_update(state, update, accessor)
        exponentiate_m(
            state,
            eps_prime,
            config.rho,
            quash_threshold=config.quash_threshold,
            min_quadform=config.min_quadform,
        )
        if not (math.isfinite(float(state.q.max())) and math.isfinite(float(state.g @ state.g))):
            raise NumericalFailure(t)
        if trace is not None:
            trace.write(
                f"iter={t} j_plus={update.j_plus} j_minus={update.j_minus} "
                f"s_max={state.last_s_max:.6g} oracle_value={oracle_value:.6g}\n"
            )
    return state, total
