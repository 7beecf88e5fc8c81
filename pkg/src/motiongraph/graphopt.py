"""Affinity-graph objective and the alternating reconstruction solver.

The joint objective over structure X (N x 3P) and affinity A (N x N) is

    J(X, A) = lambda_s * ||L(A) X||_F^2
            + lambda_t * 0.5 * sum_ij A_ij ||X_i - X_j||^2
            + sum_ij rho_ij A_ij
            + lambda_o * sum_(n,p valid) dist^2(X_np, ray_np)

with L(A) = diag(A 1) - A. The first term is the self-expressive
smoothness residual (rows of L X equal X_i - sum_j A_ij X_j once row sums
are constrained to one), the second the Laplacian quadratic form written
so it stays symmetric and nonnegative for asymmetric A, the third a
linear reconstructability penalty, and the last ties each entry to its
own viewing ray. J is quadratic in X for fixed A and, restricted to a
row of A, quadratic with linear constraints, so both block solves are
exact and the alternation never increases J.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import EmptySupportError, MotionGraphError, RankDeficiencyError, SchemaError
from .geometry import PartnerPolicy, Scene, TrajectoryMatrix, _pair_scores, _ray_grid, pseudo_triangulate, scene_scale


@dataclass
class ObjectiveWeights:
    """Weights of the four objective terms; ``rho`` is an optional dense
    (N, N) matrix of per-pair penalties."""

    lambda_s: float = 1.0
    lambda_t: float = 0.1
    lambda_o: float = 10.0
    rho: np.ndarray | None = None

    def __post_init__(self):
        if min(self.lambda_s, self.lambda_t, self.lambda_o) < 0:
            raise SchemaError(["objective weights must be nonnegative"])
        if self.rho is not None:
            self.rho = np.asarray(self.rho, dtype=np.float64)


@dataclass
class SupportDomain:
    """Per-frame candidate neighbor lists (each of size <= k, no self)."""

    neighbors: list[np.ndarray]
    k: int

    def __post_init__(self):
        self.neighbors = [np.asarray(nb, dtype=np.int64) for nb in self.neighbors]
        n = len(self.neighbors)
        problems = []
        for i, nb in enumerate(self.neighbors):
            if nb.size > self.k:
                problems.append(f"frame {i} lists {nb.size} neighbors, k={self.k}")
            if np.any(nb == i):
                problems.append(f"frame {i} lists itself as a neighbor")
            if nb.size and (nb.min() < 0 or nb.max() >= n):
                problems.append(f"frame {i} lists out-of-range neighbors")
            if np.unique(nb).size != nb.size:
                problems.append(f"frame {i} lists duplicate neighbors")
        if problems:
            raise SchemaError(problems)

    @property
    def n_frames(self) -> int:
        return len(self.neighbors)


@dataclass
class ObjectiveValue:
    total: float
    smoothness: float
    compactness: float
    penalty: float
    data: float


def build_laplacian(a: np.ndarray) -> np.ndarray:
    """L = diag(A 1) - A. Rows always sum to zero."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SchemaError([f"affinity must be square, got {a.shape}"])
    return np.diag(a.sum(axis=1)) - a


def validate_affinity(a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SchemaError([f"affinity must be square, got {a.shape}"])
    if np.any(np.diag(a) != 0):
        raise SchemaError(["affinity diagonal must be zero"])
    if a.min() < 0:
        raise SchemaError(["affinity entries must be nonnegative"])


def _as_data(x) -> np.ndarray:
    return x.data if isinstance(x, TrajectoryMatrix) else np.asarray(x, dtype=np.float64)


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    g = x @ x.T
    d = np.diag(g)
    return np.maximum(d[:, None] + d[None, :] - 2.0 * g, 0.0)


def _data_blocks(scene: Scene, lambda_o: float):
    """Per-(frame, joint) 3x3 quadratic blocks for the ray data term.

    Block Q = 2 * lambda_o * (I - d d^T) and offset b = Q @ origin; zero
    where the observation is missing.
    """
    n, p = scene.n_frames, scene.n_joints
    origins, dirs = _ray_grid(scene)
    blocks = np.zeros((n, p, 3, 3))
    rhs = np.zeros((n, p, 3))
    eye = np.eye(3)
    for joint in range(p):
        rows = np.where(scene.valid[:, joint])[0]
        if rows.size == 0:
            continue
        d = dirs[rows, joint]
        q = 2.0 * lambda_o * (eye[None] - d[:, :, None] * d[:, None, :])
        blocks[rows, joint] = q
        rhs[rows, joint] = np.einsum("nij,nj->ni", q, origins[rows])
    return blocks, rhs


def evaluate_objective(x, a: np.ndarray, scene: Scene, weights: ObjectiveWeights) -> ObjectiveValue:
    """All four objective terms at (X, A)."""
    xd = _as_data(x)
    a = np.asarray(a, dtype=np.float64)
    lap = build_laplacian(a)
    smooth = weights.lambda_s * float(np.sum((lap @ xd) ** 2))
    compact = weights.lambda_t * 0.5 * float(np.sum(a * _pairwise_sq_dists(xd)))
    penalty = 0.0 if weights.rho is None else float(np.sum(weights.rho * a))

    origins, dirs = _ray_grid(scene)
    pts = xd.reshape(scene.n_frames, scene.n_joints, 3)
    w = pts - origins[:, None, :]
    along = np.einsum("npk,npk->np", w, np.nan_to_num(dirs))
    sq = np.einsum("npk,npk->np", w, w) - along**2
    data = weights.lambda_o * float(np.maximum(sq, 0.0)[scene.valid].sum())
    return ObjectiveValue(smooth + compact + penalty + data, smooth, compact, penalty, data)


def _structure_system(a: np.ndarray, scene: Scene, weights: ObjectiveWeights):
    """Shared N x N coupling matrix and per-joint data blocks for the
    normal equations of the structure solve."""
    lap = build_laplacian(a)
    lap_t = build_laplacian(a.T)
    coupling = 2.0 * weights.lambda_s * (lap.T @ lap) + weights.lambda_t * (lap + lap_t)
    blocks, rhs = _data_blocks(scene, weights.lambda_o)
    return coupling, blocks, rhs


def _cho_solve_checked(h: np.ndarray, b: np.ndarray):
    """Cholesky solve that treats numerically singular systems as failures.

    A positive semi-definite singular system can factor "successfully"
    with a pivot at roundoff level and still produce a small residual
    (consistent right hand side), so the pivot spread is checked too.
    Returns None when the system should be considered rank deficient.
    """
    try:
        factor = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None
    # Exactly singular systems factor with pivots near sqrt(eps) * scale;
    # the pivot ratio is scale free, so 1e-7 separates them from merely
    # ill-conditioned but solvable systems (heavily decimated scenes sit
    # just under 1e-6), and the residual check below backstops the rest.
    pivots = np.diag(factor[0])
    if pivots.min() <= 0 or pivots.min() < 1e-7 * pivots.max():
        return None
    sol = scipy.linalg.cho_solve(factor, b, check_finite=False)
    if not np.all(np.isfinite(sol)) or np.linalg.norm(h @ sol - b) > 1e-8 * max(np.linalg.norm(b), 1.0):
        return None
    return sol


def solve_structure(a: np.ndarray, scene: Scene, weights: ObjectiveWeights) -> TrajectoryMatrix:
    """Minimize J over X for fixed A: one SPD solve of size 3N per joint.

    Raises
    ------
    RankDeficiencyError
        Naming every joint whose system is not positive definite (e.g. a
        joint with a single ray and no smoothness coupling).
    """
    n, p = scene.n_frames, scene.n_joints
    coupling, blocks, rhs = _structure_system(a, scene, weights)
    base = np.kron(coupling, np.eye(3))
    x = np.zeros((n, 3 * p))
    failed: list[int] = []
    idx = np.arange(n)
    for joint in range(p):
        h = base.copy().reshape(n, 3, n, 3)
        h[idx, :, idx, :] += blocks[:, joint]
        h = h.reshape(3 * n, 3 * n)
        sol = _cho_solve_checked(h, rhs[:, joint].reshape(3 * n))
        if sol is None:
            failed.append(joint)
            continue
        x[:, 3 * joint : 3 * joint + 3] = sol.reshape(n, 3)
    if failed:
        raise RankDeficiencyError(failed)
    return TrajectoryMatrix(x, np.ones((n, p), dtype=bool))


def _simplex_qp(p_mat: np.ndarray, q: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Minimize 0.5 a^T P a + q^T a over the probability simplex.

    Primal active-set method. The equality constraint stays active; bound
    constraints enter and leave by Bland's lowest-index rule, which keeps
    the iteration finite and deterministic.
    """
    k = q.shape[0]
    if k == 1:
        return np.ones(1)
    if np.abs(p_mat).max() < 1e-300:
        # Pure linear program on the simplex: optimum at a vertex.
        best = int(np.argmin(q))
        a = np.zeros(k)
        a[best] = 1.0
        return a
    a = _active_set(p_mat, q, max_iter)
    if a is None:
        # Exactly duplicated descriptor columns (e.g. several frames
        # sharing one barycenter fill) make P singular and the active set
        # can cycle between the duplicates. A ridge far below the data
        # scale picks the unique nearby optimum; healthy rows never take
        # this path, so their output is unchanged.
        ridge = 1e-9 * float(np.abs(np.diag(p_mat)).max() or 1.0)
        a = _active_set(p_mat + ridge * np.eye(k), q, max_iter)
    if a is None:
        raise MotionGraphError("active-set iteration limit exceeded in affinity row solve")
    return a


def _active_set(p_mat: np.ndarray, q: np.ndarray, max_iter: int | None = None):
    """One active-set run; returns None when the iteration cap trips."""
    k = q.shape[0]
    if max_iter is None:
        max_iter = 12 * k + 60
    a = np.full(k, 1.0 / k)
    free = np.ones(k, dtype=bool)
    for _ in range(max_iter):
        f_idx = np.where(free)[0]
        m = f_idx.size
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = p_mat[np.ix_(f_idx, f_idx)]
        kkt[:m, m] = 1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([-q[f_idx], [1.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
            if not np.all(np.isfinite(sol)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        cand = sol[:m]
        nu = sol[m]
        if cand.min() >= -1e-12:
            trial = np.zeros(k)
            trial[f_idx] = np.maximum(cand, 0.0)
            grad = p_mat @ trial + q
            bound = ~free
            mult = grad[bound] + nu
            if not bound.any() or mult.min() >= -1e-10:
                return trial
            # Release the lowest-index violated bound (Bland's rule).
            b_idx = np.where(bound)[0]
            release = b_idx[np.where(mult < -1e-10)[0][0]]
            a = trial
            free[release] = True
            continue
        # Step toward the subproblem optimum until a bound blocks.
        cur = a[f_idx]
        delta = cand - cur
        shrink = delta < -1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.where(shrink, cur / -delta, np.inf)
        alpha = min(steps.min(), 1.0)
        block = f_idx[int(np.argmin(steps))]
        a = a.copy()
        a[f_idx] = cur + alpha * delta
        a[block] = 0.0
        free[block] = False
    return None


def solve_affinity(x, support: SupportDomain, weights: ObjectiveWeights) -> np.ndarray:
    """Minimize J over A for fixed X.

    Rows decouple: row i solves a QP over its support entries under
    a_ij >= 0 and sum_j a_ij = 1. Entries outside the support stay zero.
    """
    xd = _as_data(x)
    n = xd.shape[0]
    if support.n_frames != n:
        raise SchemaError([f"support covers {support.n_frames} frames, structure has {n}"])
    empty = [i for i in range(n) if support.neighbors[i].size == 0]
    if empty:
        raise EmptySupportError(empty)
    a = np.zeros((n, n))
    for i in range(n):
        nbrs = support.neighbors[i]
        g = xd[nbrs]
        target = xd[i]
        p_mat = 2.0 * weights.lambda_s * (g @ g.T)
        lin = -2.0 * weights.lambda_s * (g @ target)
        lin = lin + 0.5 * weights.lambda_t * np.sum((xd[i] - g) ** 2, axis=1)
        if weights.rho is not None:
            lin = lin + weights.rho[i, nbrs]
        a[i, nbrs] = _simplex_qp(p_mat, lin)
    return a


def alternating_reconstruction(
    scene: Scene,
    support: SupportDomain,
    weights: ObjectiveWeights,
    x_init: TrajectoryMatrix | None = None,
    a_init: np.ndarray | None = None,
    max_iters: int = 50,
    tol: float = 1e-6,
    policy: PartnerPolicy | None = None,
):
    """Alternate exact block minimizations of J until the relative
    decrease drops below ``tol``.

    Returns ``(x, a, trace)`` where ``trace[k]`` is the objective value
    after iteration k (``trace[0]`` is the value at the initialization).
    The trace is non-increasing because each half step is an exact
    minimization of the same objective.
    """
    if x_init is None:
        x_init = pseudo_triangulate(scene, policy)
    x = x_init
    a = a_init if a_init is not None else solve_affinity(x, support, weights)
    trace = [evaluate_objective(x, a, scene, weights).total]
    for _ in range(max_iters):
        x = solve_structure(a, scene, weights)
        a = solve_affinity(x, support, weights)
        trace.append(evaluate_objective(x, a, scene, weights).total)
        rel = (trace[-2] - trace[-1]) / max(abs(trace[-2]), 1e-12)
        if rel < tol:
            break
    return x, a, np.array(trace)


def structure_solve_backward(
    a: np.ndarray,
    scene: Scene,
    weights: ObjectiveWeights,
    x_solution,
    upstream_grad: np.ndarray,
) -> np.ndarray:
    """Gradient of a scalar loss with respect to A through the structure
    solve, by implicit differentiation of the per-joint normal equations
    H(A) x = b.

    One adjoint solve per joint with the forward system matrix; the right
    hand side b collects only ray terms and carries no dependence on A,
    so the gradient reduces to -u^T (dH/dA_ij) x with u = H^{-1} g.
    """
    xd = _as_data(x_solution)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != xd.shape:
        raise SchemaError([f"upstream gradient shape {g.shape} does not match structure {xd.shape}"])
    n, p = scene.n_frames, scene.n_joints
    coupling, blocks, _ = _structure_system(a, scene, weights)
    base = np.kron(coupling, np.eye(3))
    adjoint = np.zeros_like(xd)
    idx = np.arange(n)
    for joint in range(p):
        h = base.copy().reshape(n, 3, n, 3)
        h[idx, :, idx, :] += blocks[:, joint]
        h = h.reshape(3 * n, 3 * n)
        sol = _cho_solve_checked(h, g[:, 3 * joint : 3 * joint + 3].reshape(3 * n))
        if sol is None:
            raise RankDeficiencyError([joint])
        adjoint[:, 3 * joint : 3 * joint + 3] = sol.reshape(n, 3)

    lap = build_laplacian(a)
    lx = lap @ xd
    lu = lap @ adjoint
    s_lx = np.sum(adjoint * lx, axis=1)
    s_lu = np.sum(lu * xd, axis=1)
    s_ux = np.sum(adjoint * xd, axis=1)
    m_lx = lx @ adjoint.T
    m_lu = lu @ xd.T
    m_ux = adjoint @ xd.T
    grad = -(
        2.0 * weights.lambda_s * (s_lx[:, None] - m_lx + s_lu[:, None] - m_lu)
        + weights.lambda_t * (s_ux[:, None] + s_ux[None, :] - m_ux - m_ux.T)
    )
    np.fill_diagonal(grad, 0.0)
    return grad


def reconstructability_penalty(scene: Scene, scale: float = 1.0, policy: PartnerPolicy | None = None) -> np.ndarray:
    """Per-pair penalty matrix rho from pairwise triangulation scores.

    rho_ij grows with the average midpoint score of the joints frames i
    and j observe in common, capped at the scene scale; pairs with no
    usable common joint receive the cap. Diagonal is zero.
    """
    if policy is None:
        policy = PartnerPolicy()
    n = scene.n_frames
    origins, dirs = _ray_grid(scene)
    cap = scene_scale(scene)
    total = np.zeros((n, n))
    count = np.zeros((n, n))
    for joint in range(scene.n_joints):
        frames = np.where(scene.valid[:, joint])[0]
        if frames.size < 2:
            continue
        _, scores = _pair_scores(origins[frames], dirs[frames, joint], np.deg2rad(policy.min_angle_deg))
        capped = np.minimum(scores, cap)
        ij = np.ix_(frames, frames)
        total[ij] += capped
        count[ij] += 1.0
    with np.errstate(invalid="ignore"):
        rho = np.where(count > 0, total / np.maximum(count, 1.0), cap)
    np.fill_diagonal(rho, 0.0)
    return scale * rho
