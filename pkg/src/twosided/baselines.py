"""Classic multi-task models as structural settings of the two-sided network,
single-task ridge/hinge learners, and the tensor-completion transfer baseline.

Every reconstruction uses a 1-of-N domain code, linear activation and a fixed
or regularised P:

========  ============  ===============  ==========  =========
name      descriptor    P                reg on P    reg on Q'
========  ============  ===============  ==========  =========
RMTL      [I_M | 1]     identity         none        none
FEDA      [I_M | 1]     ones(M+1) (x) I  none        none (block mask)
MTFL      I_M           identity         none        (2,1)-norm
GOMTL     I_M           learned, K<D     Frobenius   entry-wise l1
STL       I_M           identity         none        none
========  ============  ===============  ==========  =========
"""
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import EncodedData
from .descriptor import ONE_HOT_ATOMIC, DescriptorSchema
from .errors import (
    ConflictError,
    InvalidRankError,
    ShapeError,
    SingularityError,
    UnknownBaselineError,
)
from .model import Structure, hidden_width
from .optim import RegSpec, TrainConfig, fit

log = logging.getLogger(__name__)

BASELINES = ("STL", "RMTL", "FEDA", "MTFL", "GOMTL")


@dataclass
class BaselineSpec:
    name: str
    schema: DescriptorSchema
    structure: Structure
    reg_p: RegSpec = field(default_factory=RegSpec)
    reg_q: RegSpec = field(default_factory=RegSpec)

    @property
    def K(self):
        if self.structure.P is not None:
            return np.shape(self.structure.P)[1]
        return None

    def train_config(self, base):
        """``base`` with this baseline's regularisers."""
        return replace(base, reg_p=self.reg_p, reg_q=self.reg_q)


def feda_mask(M, D):
    """Permitted entries of Q for FEDA.

    Hidden units come in M+1 blocks of width D: block 0 is the shared copy of
    x, block i the copy owned by domain i. The bias row (last) may only write
    block 0, domain row i-1 only block i.
    """
    mask = np.zeros((M + 1, (M + 1) * D))
    mask[M, :D] = 1.0
    for i in range(M):
        mask[i, (i + 1) * D:(i + 2) * D] = 1.0
    return mask


def make_baseline(name, M, D, lam_p=1e-3, lam_q=1e-3, K=None):
    """Structural configuration reproducing a classic MTL/MDL model."""
    key = str(name).upper().replace("-", "").replace("_", "")
    if key not in BASELINES:
        raise UnknownBaselineError(f"unknown baseline {name!r}; expected one of {BASELINES}")
    eye = np.eye(D)
    if key == "RMTL":
        schema = DescriptorSchema((("domain", M),), ONE_HOT_ATOMIC, shared_bias=True)
        return BaselineSpec(key, schema, Structure("linear", True, eye))
    if key == "FEDA":
        schema = DescriptorSchema((("domain", M),), ONE_HOT_ATOMIC, shared_bias=True)
        P = np.kron(np.ones((1, M + 1)), eye)
        return BaselineSpec(key, schema, Structure("linear", True, P, feda_mask(M, D)))
    schema = DescriptorSchema((("domain", M),), ONE_HOT_ATOMIC, shared_bias=False)
    if key == "MTFL":
        return BaselineSpec(key, schema, Structure("linear", True, eye), reg_q=RegSpec("l21", lam_q))
    if key == "GOMTL":
        if K is None:
            K = hidden_width(D) if D >= 2 else 1
        rng = np.random.default_rng(0)
        P0 = rng.uniform(-1 / np.sqrt(D), 1 / np.sqrt(D), size=(D, K))
        return BaselineSpec(
            key, schema, Structure("linear", False, P0),
            reg_p=RegSpec("frobenius", lam_p), reg_q=RegSpec("l1", lam_q),
        )
    return BaselineSpec(key, schema, Structure("linear", True, eye))


def encode_for_baseline(spec, X, y, groups):
    """Encoded data where domain ``g`` gets row ``g`` of the baseline's Z."""
    groups = np.asarray(groups, dtype=np.int64)
    Z = spec.schema.encode_many(groups.reshape(-1, 1))
    return EncodedData(X, Z, y, groups, n_groups=spec.schema.cardinalities[0])


def fit_baseline(spec, X, y, groups, config):
    data = encode_for_baseline(spec, X, y, groups)
    return fit(data, spec.train_config(config), spec.structure)


# -- single-task learning -------------------------------------------------


def ridge(X, y, lam):
    """Closed-form ridge regression ``(X'X + lam I)^-1 X'y``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    G = X.T @ X + lam * np.eye(X.shape[1])
    if lam == 0.0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise SingularityError(
            "normal equations are singular with lambda=0; use a positive ridge lambda"
        )
    try:
        return np.linalg.solve(G, X.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"{exc}; use a positive ridge lambda") from exc


def hinge_fit(X, y, lam, config=None):
    """l2-regularised linear hinge classifier trained by SGD."""
    X = np.asarray(X, dtype=np.float64)
    D = X.shape[1]
    config = config or TrainConfig(learning_rate=0.05, epochs=100)
    config = replace(config, loss="hinge", reg_p=RegSpec(), reg_q=RegSpec("frobenius", lam))
    data = EncodedData(X, np.ones((X.shape[0], 1)), y, np.zeros(X.shape[0], dtype=np.int64))
    model = fit(data, config, Structure("linear", True, np.eye(D)))
    return model.Q[0].copy()


def stl_fit(X, y, groups=None, loss="squared", lam=1e-3, config=None):
    """Independent linear model per group; one pooled model when ``groups`` is None.

    Returns an (M, D) array, row ``g`` fitted on instances with ``groups == g``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if groups is None:
        groups = np.zeros(X.shape[0], dtype=np.int64)
    groups = np.asarray(groups, dtype=np.int64)
    M = int(groups.max()) + 1
    W = np.zeros((M, X.shape[1]))
    for g in range(M):
        sel = groups == g
        if not sel.any():
            continue
        if loss == "squared":
            W[g] = ridge(X[sel], y[sel], lam)
        else:
            W[g] = hinge_fit(X[sel], y[sel], lam, config)
    return W


# -- tensor completion ---------------------------------------------------


@dataclass
class ModelTensor:
    """Per-domain linear models stacked as a (D, p_1, ..., p_N) tensor."""

    entries: np.ndarray
    observed: np.ndarray
    converged: bool | None = None
    residual: float | None = None

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.entries.shape[1:] != self.observed.shape:
            raise ShapeError(
                f"observed mask {self.observed.shape} does not match grid {self.entries.shape[1:]}"
            )

    @property
    def grid(self):
        return self.observed.shape

    def slice(self, levels):
        return self.entries[(slice(None),) + tuple(levels)]


def tensor_store(models, grid):
    """Place each domain's weight vector at its grid cell.

    ``models`` is an iterable of ``(levels, weights)`` pairs (or a dict).
    """
    pairs = models.items() if isinstance(models, dict) else models
    grid = tuple(int(g) for g in grid)
    entries = None
    observed = np.zeros(grid, dtype=bool)
    for levels, w in pairs:
        levels = tuple(int(v) for v in levels)
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if len(levels) != len(grid) or any(not 0 <= l < g for l, g in zip(levels, grid)):
            raise ShapeError(f"cell {levels} is outside grid {grid}")
        if entries is None:
            entries = np.zeros((w.shape[0],) + grid)
        elif w.shape[0] != entries.shape[0]:
            raise ShapeError(f"cell {levels} has {w.shape[0]} weights, expected {entries.shape[0]}")
        if observed[levels]:
            raise ConflictError(f"domain {levels} was assigned twice")
        observed[levels] = True
        entries[(slice(None),) + levels] = w
    if entries is None:
        raise ShapeError("no models to store")
    return ModelTensor(entries, observed)


def _khatri_rao(factors, R):
    out = np.ones((1, R))
    for A in factors:
        out = (out[:, None, :] * A[None, :, :]).reshape(-1, R)
    return out


def _cp_full(factors):
    R = factors[0].shape[1]
    shape = tuple(A.shape[0] for A in factors)
    return (factors[0] @ _khatri_rao(factors[1:], R).T).reshape(shape)


def _svd_init(T, W, rank, rng):
    """Leading singular vectors of each zero-filled unfolding, padded randomly."""
    filled = np.where(W, T, 0.0)
    factors = []
    for n, d in enumerate(T.shape):
        U, sv, _ = np.linalg.svd(np.moveaxis(filled, n, 0).reshape(d, -1), full_matrices=False)
        k = min(rank, U.shape[1])
        A = rng.normal(scale=1e-2, size=(d, rank))
        A[:, :k] = U[:, :k] * (np.sqrt(sv[:k]) if n == 0 else 1.0)
        factors.append(A)
    return factors


def _cp_als(T, W, rank, iters, seed, tol, restarts=2):
    """CP factors fitted to the entries of ``T`` where ``W`` is True.

    ALS is run from an SVD-based start and from ``restarts`` random starts;
    the fit with the lowest residual wins.
    """
    rng = np.random.default_rng(seed)
    scale = np.sqrt(np.abs(T[W]).mean() + 1e-12) if W.any() else 1.0
    starts = [_svd_init(T, W, rank, rng)]
    starts += [[rng.normal(scale=scale, size=(d, rank)) for d in T.shape]
               for _ in range(restarts)]
    total = float((T[W] ** 2).sum()) or 1.0
    best = None
    for factors in starts:
        run = _als_sweeps(T, W, factors, rank, iters, tol, total)
        if best is None or run[1] < best[1]:
            best = run
        if best[2] and best[1] <= 1e-20 * total:
            break
    return best


def _als_sweeps(T, W, factors, rank, iters, tol, total):
    dims = T.shape
    best = (np.inf, [A.copy() for A in factors])
    prev = np.inf
    converged = False
    for it in range(iters):
        for n in range(len(dims)):
            others = [factors[m] for m in range(len(dims)) if m != n]
            KR = _khatri_rao(others, rank)
            Tn = np.moveaxis(T, n, 0).reshape(dims[n], -1)
            Wn = np.moveaxis(W, n, 0).reshape(dims[n], -1)
            # per-row weighted least squares, solved together via normal equations
            Wf = Wn.astype(np.float64)
            G = np.einsum("ij,jr,js->irs", Wf, KR, KR)
            b = np.einsum("ij,ij,jr->ir", Wf, Tn, KR)
            rows = Wn.any(axis=1)
            sol = np.einsum("irs,is->ir", np.linalg.pinv(G[rows], rcond=1e-13), b[rows])
            factors[n][rows] = sol
        resid = float(((_cp_full(factors) - T)[W] ** 2).sum())
        if resid < best[0]:
            best = (resid, [A.copy() for A in factors])
        if resid <= 1e-28 * total or abs(prev - resid) <= tol * resid:
            converged = True
            break
        prev = resid
    log.debug("cp-als rank %d stopped after %d sweeps, residual %.3g", rank, it + 1, best[0])
    return best[1], best[0], converged


def tensor_complete(t, rank=None, iters=1000, seed=0, tol=1e-15, ranks=(1, 2, 3)):
    """Fill unobserved cells of ``t`` from a rank-``rank`` CP model.

    The CP model is fitted by alternating least squares on observed entries
    only; observed entries are returned unchanged. With ``rank=None`` the
    rank is picked from ``ranks`` by leave-one-cell-out validation.
    """
    if rank is None:
        rank = select_rank(t, ranks, iters=min(iters, 100), seed=seed)
    if int(rank) < 1:
        raise InvalidRankError(f"rank must be >= 1, got {rank}")
    rank = int(rank)
    obs = t.observed
    for axis, p in enumerate(obs.shape):
        lv = np.moveaxis(obs, axis, 0).reshape(p, -1).any(axis=1)
        if not lv.all():
            warnings.warn(
                f"factor {axis} level(s) {np.flatnonzero(~lv).tolist()} have no observed "
                "cell; their slices are not identifiable",
                RuntimeWarning,
                stacklevel=2,
            )
    W = np.broadcast_to(obs, t.entries.shape)
    factors, resid, converged = _cp_als(t.entries, W, rank, iters, seed, tol)
    filled = np.where(W, t.entries, _cp_full(factors))
    return ModelTensor(filled, obs.copy(), converged, resid)


def _all_levels_seen(obs):
    for axis, p in enumerate(obs.shape):
        if not np.moveaxis(obs, axis, 0).reshape(p, -1).any(axis=1).all():
            return False
    return True


def select_rank(t, ranks=(1, 2, 3), iters=100, seed=0):
    """Rank with the lowest leave-one-observed-cell-out reconstruction error.

    Only cells whose removal keeps every factor level observed are used for
    validation; without any such cell the smallest rank is returned.
    """
    cells = []
    for cell in map(tuple, np.argwhere(t.observed)):
        obs = t.observed.copy()
        obs[cell] = False
        if _all_levels_seen(obs):
            cells.append(cell)
    if not cells:
        return ranks[0]
    scores = {}
    for R in ranks:
        err = 0.0
        for cell in cells:
            obs = t.observed.copy()
            obs[cell] = False
            W = np.broadcast_to(obs, t.entries.shape)
            factors, _, _ = _cp_als(t.entries, W, R, iters, seed, 1e-10)
            idx = (slice(None),) + cell
            err += float(((_cp_full(factors)[idx] - t.entries[idx]) ** 2).sum())
        scores[R] = err
    log.debug("rank validation scores %s", scores)
    # prefer the smaller rank unless a larger one is clearly better; errors at
    # round-off level relative to the data count as ties
    floor = 1e-12 * float((t.entries[:, t.observed] ** 2).sum())
    best = ranks[0]
    for R in ranks[1:]:
        if scores[R] < 0.9 * scores[best] - floor:
            best = R
    return best
