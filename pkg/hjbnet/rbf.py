"""
Meshfree value-function approximation with inverse multiquadric radial basis
functions: V(t, x) ~ Theta(t) Psi(x) with Psi_j(x) = 1/sqrt(|x - c_j|^2 + z^2).

The collocation points are the centers themselves, so the collocation matrix
is square (and symmetric positive definite). The linear PDE

    dV/dt + grad(V)'F + l = 0,   V(T, .) = 0

is stepped backward in time with implicit Euler:

    Theta_n (A - dt B_n) = Theta_{n+1} A + dt L_n

split into substeps of length dt/m whenever the advection moves more than
one center spacing in a step.
"""
import logging
import math
import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, get_lapack_funcs, lu_factor, lu_solve
from scipy.spatial.distance import pdist, squareform
from scipy.stats import qmc

from hjbnet.errors import (
    DegeneratePoints, DimensionMismatch, EmptyBounds, IndexOutOfRange,
    SingularSystem,
)
from hjbnet.utils import CenterStrategy


log = logging.getLogger(__name__)

COND_MAX = 1e12
MIN_SEPARATION = 1e-8
MAX_SUBSTEPS = 1000


def _check_distinct(points):
    if len(points) > 1:
        separation = float(np.min(pdist(points)))
        if separation <= MIN_SEPARATION:
            raise DegeneratePoints(separation)


class RbfBasis:

    """
    IMQ basis with centers c_1..c_M in R^d and shape parameter z.
    """

    __slots__ = ('centers', 'shape', '_diff', '_weight', '_spacing')

    def __init__(self, centers, shape):
        centers = np.array(centers, dtype=float, ndmin=2)
        if shape <= 0:
            raise ValueError('shape parameter must be positive')
        _check_distinct(centers)
        centers.flags.writeable = False
        self.centers = centers
        self.shape = float(shape)
        # Pairwise geometry between centers, built on first use
        self._diff = None
        self._weight = None
        self._spacing = None

    @property
    def size(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]

    @property
    def spacing(self):
        """
        Median distance from a center to its nearest neighbor, or the shape
        parameter for a single center.
        """
        if self._spacing is None:
            if self.size == 1:
                self._spacing = self.shape
            else:
                dist = squareform(pdist(self.centers))
                np.fill_diagonal(dist, np.inf)
                self._spacing = float(np.median(dist.min(axis=1)))
        return self._spacing

    def _check_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionMismatch('point', (self.dim,), x.shape)
        return x

    def _geometry(self, x):
        """
        Returns x - c_b with shape (..., M, d) and |x - c_b|^2 + z^2 with
        shape (..., M).
        """
        diff = self._check_points(x)[..., None, :] - self.centers
        return diff, np.einsum('...d,...d->...', diff, diff) + self.shape ** 2

    def values(self, x):
        """
        Psi(x): shape (..., M).
        """
        _, sq = self._geometry(x)
        return 1.0 / np.sqrt(sq)

    def gradients(self, x):
        """
        Gradients of every basis function at x: shape (..., M, d).
        """
        diff, sq = self._geometry(x)
        return -diff * (sq ** -1.5)[..., None]

    def center_geometry(self):
        """
        Cached (diff, weight) at the collocation points: diff[b, j] = c_j - c_b
        and weight[b, j] = (|c_j - c_b|^2 + z^2)^(-3/2), so that
        grad phi_b(c_j) = -weight[b, j] * diff[b, j].
        """
        if self._diff is None:
            diff = self.centers[None, :, :] - self.centers[:, None, :]
            sq = np.einsum('bjd,bjd->bj', diff, diff) + self.shape ** 2
            self._diff = diff
            self._weight = sq ** -1.5
        return self._diff, self._weight

    def __str__(self):
        return '<RbfBasis M={}, d={}, z={}>'.format(
            self.size, self.dim, self.shape
        )


def phi(basis, j, x):
    if not 0 <= j < basis.size:
        raise IndexOutOfRange('basis index', j, basis.size - 1)
    return float(basis.values(x)[j])


def grad_phi(basis, j, x):
    if not 0 <= j < basis.size:
        raise IndexOutOfRange('basis index', j, basis.size - 1)
    return basis.gradients(x)[j]


def collocation_matrix(basis, points=None):
    """
    A[b, j] = phi_b(x_j). The collocation points default to the centers.
    """
    if points is None:
        points = basis.centers
    points = np.array(points, dtype=float, ndmin=2)
    _check_distinct(points)
    return basis.values(points).T


def advection_matrix(basis, points, F_values):
    """
    B[b, j] = grad phi_b(x_j) . F(x_j). `points=None` selects the centers
    (and the cached geometry).
    """
    F_values = np.asarray(F_values, dtype=float)
    if points is None:
        if F_values.shape != basis.centers.shape:
            raise DimensionMismatch('F', basis.centers.shape, F_values.shape)
        diff, weight = basis.center_geometry()
        return -weight * np.einsum('bjd,jd->bj', diff, F_values)
    points = np.array(points, dtype=float, ndmin=2)
    if F_values.shape != points.shape:
        raise DimensionMismatch('F', points.shape, F_values.shape)
    grads = basis.gradients(points)
    return np.einsum('jbd,jd->bj', grads, F_values)


def _rcond(lu, anorm):
    gecon, = get_lapack_funcs(('gecon',), (lu,))
    rcond, _ = gecon(lu, anorm, norm='1')
    return rcond


def advection_substeps(basis, F_values, dt):
    """
    Number of implicit substeps that keep dt/m * max|F| within one center
    spacing, capped at MAX_SUBSTEPS.
    """
    speed = float(np.max(np.linalg.norm(np.asarray(F_values, dtype=float),
                                        axis=-1), initial=0.0))
    steps = math.ceil(dt * speed / basis.spacing)
    return int(min(max(steps, 1), MAX_SUBSTEPS))


def _factor(system, cond_max):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', LinAlgWarning)
        lu, piv = lu_factor(system)
    rcond = _rcond(lu, np.linalg.norm(system, 1))
    if not rcond > 1.0 / cond_max:
        raise SingularSystem(1.0 / rcond if rcond > 0 else np.inf)
    return lu, piv


def backward_step(A, B_n, L_n, theta_next, dt, cond_max=COND_MAX,
                  substeps=1):
    """
    Implicit Euler over [t_n, t_n + dt] in `substeps` equal substeps h with
    B_n and L_n frozen, each solved as the transposed system
    (A - h B_n)' Theta' = (Theta_next A + h L_n)'. Returns Theta_n and the
    largest substep residual.
    """
    h = dt / substeps
    L_n = np.asarray(L_n, dtype=float)
    factor = _factor((A - h * B_n).T, cond_max)
    theta = np.asarray(theta_next, dtype=float)
    residual = 0.0
    for _ in range(substeps):
        prev = theta
        theta = lu_solve(factor, prev @ A + h * L_n)
        residual = max(residual, step_residual(A, B_n, L_n, prev, theta, h))
    return theta, residual


def step_residual(A, B_n, L_n, theta_next, theta_n, dt):
    """
    max_j |(Theta_next - Theta_n) A / dt + Theta_n B + L| / max(1, |L|_inf)
    """
    L_n = np.asarray(L_n, dtype=float)
    res = (theta_next - theta_n) @ A / dt + theta_n @ B_n + L_n
    return float(np.max(np.abs(res)) / max(1.0, float(np.max(np.abs(L_n)))))


class ValueApprox:

    """
    Coefficient rows Theta(t_n) over a fixed basis, one per grid node, with
    the terminal row identically zero.
    """

    __slots__ = ('basis', 'coefficients', 'grid', 'residual')

    def __init__(self, basis, coefficients, grid, residual=0.0):
        coefficients = np.array(coefficients, dtype=float)
        expected = (grid.node_count, basis.size)
        if coefficients.shape != expected:
            raise DimensionMismatch('coefficients', expected,
                                    coefficients.shape)
        if np.any(coefficients[-1]):
            raise ValueError('terminal coefficients must be zero')
        coefficients.flags.writeable = False
        self.basis = basis
        self.coefficients = coefficients
        self.grid = grid
        self.residual = residual

    @classmethod
    def zeros(cls, basis, grid):
        return cls(basis, np.zeros((grid.node_count, basis.size)), grid)

    def _check_node(self, n):
        if not 0 <= n < self.grid.node_count:
            raise IndexOutOfRange('node', n, self.grid.node_count - 1)

    def value(self, n, x):
        self._check_node(n)
        return self.basis.values(x) @ self.coefficients[n]

    def gradient(self, n, x):
        self._check_node(n)
        return np.einsum('b,...bd->...d', self.coefficients[n],
                         self.basis.gradients(x))

    def values_along(self, states):
        """
        V(t_n, x_n) for a trajectory sampled on the grid.
        """
        return np.einsum('nb,nb->n', self.coefficients,
                         self.basis.values(states))

    def gradients_along(self, states):
        return np.einsum('nb,nbd->nd', self.coefficients,
                         self.basis.gradients(states))

    def collocation_values(self):
        """
        V(t_n, c_j) for every node and center: shape (N_t, M).
        """
        return self.coefficients @ collocation_matrix(self.basis)

    def collocation_gradients(self):
        """
        grad V(t_n, c_j): shape (N_t, M, d).
        """
        diff, weight = self.basis.center_geometry()
        return -np.einsum('nb,bj,bjd->njd', self.coefficients, weight, diff,
                          optimize=True)

    def coefficients_at(self, t):
        return self.grid.interpolate(self.coefficients, t)

    def gradient_at(self, t, x):
        """
        Gradient with coefficients interpolated linearly in time.
        """
        return np.einsum('b,...bd->...d', self.coefficients_at(t),
                         self.basis.gradients(x))


def eval_value(va, n, x):
    return va.value(n, x)


def eval_grad(va, n, x):
    return va.gradient(n, x)


def solve_linear_pde(basis, F_field, l_field, grid, cond_max=COND_MAX):
    """
    Solve dV/dt + grad(V)'F + l = 0 with V(T, .) = 0 at the centers.
    `F_field` has shape (N_t, M, d), or (N_t, d) for a field frozen in x;
    `l_field` has shape (N_t, M), or (N_t,).
    """
    M, d = basis.size, basis.dim
    N_t = grid.node_count
    F_field = np.asarray(F_field, dtype=float)
    l_field = np.asarray(l_field, dtype=float)
    if F_field.shape == (N_t, d):
        F_field = np.broadcast_to(F_field[:, None, :], (N_t, M, d))
    if l_field.shape == (N_t,):
        l_field = np.broadcast_to(l_field[:, None], (N_t, M))
    if F_field.shape != (N_t, M, d):
        raise DimensionMismatch('F field', (N_t, M, d), F_field.shape)
    if l_field.shape != (N_t, M):
        raise DimensionMismatch('l field', (N_t, M), l_field.shape)

    A = collocation_matrix(basis)
    dt = grid.dt
    theta = np.zeros((N_t, M))
    residual = 0.0
    most = 1
    for n in range(N_t - 2, -1, -1):
        B = advection_matrix(basis, None, F_field[n])
        substeps = advection_substeps(basis, F_field[n], dt)
        most = max(most, substeps)
        try:
            theta[n], res = backward_step(A, B, l_field[n], theta[n + 1], dt,
                                          cond_max, substeps)
        except SingularSystem as exc:
            raise SingularSystem(exc.cond, grid.nodes[n]) from exc
        residual = max(residual, res)
    log.debug('solved linear PDE on %s (residual %.3e, up to %d substeps)',
              basis, residual, most)
    return ValueApprox(basis, theta, grid, residual=residual)


def _box(bounds):
    try:
        lower, upper = (np.atleast_1d(np.asarray(b, dtype=float))
                        for b in bounds)
    except (TypeError, ValueError) as exc:
        raise EmptyBounds('expected a (lower, upper) pair') from exc
    if lower.shape != upper.shape or lower.ndim != 1 or lower.size == 0:
        raise EmptyBounds('lower and upper must be vectors of equal size')
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise EmptyBounds('bounds must be finite')
    if np.any(upper < lower):
        raise EmptyBounds('upper bound below lower bound')
    return lower, upper


def _grid_points(lower, upper, count, rng):
    dim = lower.size
    per_axis = 1
    while per_axis ** dim < count:
        per_axis += 1
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
    mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
    mesh = mesh.reshape(-1, dim)
    if len(mesh) > count:
        keep = np.sort(rng.choice(len(mesh), size=count, replace=False))
        mesh = mesh[keep]
    return mesh


def _redraw_clashes(points, lower, upper, rng, attempts=100):
    """
    Replace every point within MIN_SEPARATION of an earlier one (clipping
    piles points up on the faces of the box) by a uniform draw in the box.
    """
    for _ in range(attempts):
        close = np.tril(squareform(pdist(points)) <= MIN_SEPARATION, k=-1)
        clash = np.any(close, axis=1)
        if not np.any(clash):
            break
        log.debug('redrawing %d coincident centers', int(clash.sum()))
        points[clash] = rng.uniform(lower, upper,
                                    size=(int(clash.sum()), lower.size))
    return points


def sample_centers(strategy, bounds, count, seed, trajectory=None,
                   jitter=0.25):
    """
    Deterministic center placement inside the box `bounds = (lower, upper)`:
        'halton-box': scrambled Halton points
        'grid': tensor grid, thinned at random down to `count` points
        'trajectory': points drawn along `trajectory` (an array of states)
                      plus Gaussian jitter scaled by `jitter` times the box
                      width, clipped to the box; points that clipping
                      makes coincide are redrawn uniformly in the box
    A single center is placed at the box center.
    """
    lower, upper = _box(bounds)
    if count < 1:
        raise ValueError('at least one center is required')
    strategy = CenterStrategy.get(strategy)
    if count == 1:
        return ((lower + upper) / 2)[None, :]

    rng = np.random.default_rng(seed)
    if strategy is CenterStrategy.HALTON_BOX:
        sampler = qmc.Halton(d=lower.size, scramble=True, seed=rng)
        points = lower + sampler.random(count) * (upper - lower)
    elif strategy is CenterStrategy.GRID:
        points = _grid_points(lower, upper, count, rng)
    else:
        if trajectory is None:
            raise ValueError("strategy 'trajectory' needs a rollout")
        trajectory = np.array(trajectory, dtype=float, ndmin=2)
        if trajectory.shape[1] != lower.size:
            raise DimensionMismatch('trajectory', (None, lower.size),
                                    trajectory.shape)
        base = trajectory[rng.integers(0, len(trajectory), size=count)]
        noise = rng.standard_normal((count, lower.size))
        points = np.clip(base + jitter * (upper - lower) * noise,
                         lower, upper)
        points = _redraw_clashes(points, lower, upper, rng)
    log.debug('sampled %d centers (%s)', count, strategy.value)
    return points
