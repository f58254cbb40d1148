"""l1 minimization with a residual budget (basis pursuit denoising).

Solves ``min ||a||_1  s.t.  ||p - Psi a||_2 <= delta`` through its penalized
form ``min 0.5 ||p - Psi a||^2 + lam ||a||_1``.  The penalized problem is
reduced through a QR factorization of the scaled library and handled by
FISTA, finished by an exact feature-sign active-set search;
``lam`` is then tuned by geometric bisection until the residual meets
``delta``.  Columns are scaled to unit norm before solving; the returned
coefficients refer to the original columns and ``lam`` to the scaled problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, DataError

MAX_ITER = 10_000
OBJ_RTOL = 1e-10
BISECTION_STEPS = 30
# lam is never driven below LAM_FLOOR * lam_max
LAM_FLOOR = 1e-8
# basis pursuit (delta == 0) stops within BP_RTOL * ||p|| of the least-squares floor
BP_RTOL = 1e-8
# an infeasible positive delta stops within FLOOR_RTOL * ||p|| of the floor; going
# further pushes lam to where the gradient is dominated by rounding error
FLOOR_RTOL = 1e-6


@dataclass
class SparseCoefficients:
    a: np.ndarray
    residual_norm: float
    lam: float
    iterations: int = 0
    bisection_steps: int = 0
    mode: str = "constrained"  # "zero" | "constrained" | "limit"
    infeasible: bool = False
    dropped_columns: list = field(default_factory=list)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.a)

    def diagnostics(self) -> dict:
        return {
            "lambda": self.lam,
            "iterations": self.iterations,
            "bisection_steps": self.bisection_steps,
            "mode": self.mode,
            "infeasible": self.infeasible,
            "dropped_columns": list(self.dropped_columns),
            "support_size": int(self.support.size),
        }


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def normalize_columns(psi, rtol=1e-12):
    """Unit-norm copy of ``psi`` without its (numerically) zero columns.

    Returns ``(X, keep, norms)`` with ``X = psi[:, keep] / norms``.
    """
    norms = np.linalg.norm(psi, axis=0)
    top = norms.max() if norms.size else 0.0
    keep = np.flatnonzero(norms > rtol * top) if top > 0 else np.array([], dtype=int)
    return psi[:, keep] / norms[keep], keep, norms[keep]


class _Problem:
    """Penalized lasso on unit-norm columns, reduced through a QR factorization.

    With ``X = Q R`` the data term ``||p - X a||^2`` equals
    ``||y - R a||^2 + perp`` where ``y = Q^T p``, so every solve happens in
    ``min(N, K)`` dimensions with the conditioning of ``R`` rather than of
    the Gram matrix.
    """

    def __init__(self, X, p):
        self.X = X
        self.p = p
        Q, self.R = np.linalg.qr(X)
        self.y = Q.T @ p
        self.pp = float(p @ p)
        r_perp = p - Q @ self.y  # direct, to avoid cancellation in pp - y.y
        self.perp = float(r_perp @ r_perp)
        self.G = self.R.T @ self.R
        self.c = self.R.T @ self.y
        self.L = float(np.linalg.eigvalsh(self.G)[-1]) if self.G.size else 1.0
        self.lam_max = float(np.max(np.abs(self.c))) if self.c.size else 0.0
        self.iterations = 0

    def neg_grad(self, a):
        return self.R.T @ (self.y - self.R @ a)

    def residual(self, a):
        r = self.y - self.R @ a
        return float(np.sqrt(r @ r + self.perp))

    def objective(self, a, lam):
        r = self.y - self.R @ a
        return 0.5 * (r @ r + self.perp) + lam * np.abs(a).sum()

    def tol(self, a, lam, rtol=1e-10):
        # rtol relative to lam plus the rounding error of the gradient itself
        s = np.sqrt(self.L)
        return rtol * lam + 32 * np.finfo(float).eps * s * (np.sqrt(self.pp) + s * np.linalg.norm(a))

    def kkt_ok(self, a, lam, rtol=1e-9):
        g = self.neg_grad(a)
        tol = self.tol(a, lam, rtol)
        S = a != 0
        if np.any(np.abs(g) > lam + tol):
            return False
        return bool(np.all(np.abs(g[S] - lam * np.sign(a[S])) <= tol))

    def segment(self, S, signs):
        """``(a_ls, w)`` with ``a_S(lam) = a_ls - lam * w`` on a fixed support/sign pattern."""
        RS = self.R[:, S]
        Q2, R2 = np.linalg.qr(RS)
        d = np.abs(np.diag(R2))
        if R2.shape[0] < R2.shape[1] or d.min() <= 1e-12 * d.max():
            # rank-deficient support: minimum-norm solution of the normal equations
            GS = self.G[np.ix_(S, S)]
            return (
                np.linalg.lstsq(GS, self.c[S], rcond=1e-12)[0],
                np.linalg.lstsq(GS, signs, rcond=1e-12)[0],
            )
        a_ls = np.linalg.solve(R2, Q2.T @ self.y)
        w = np.linalg.solve(R2, np.linalg.solve(R2.T, signs))
        return a_ls, w

    def exact(self, S, signs, lam):
        a = np.zeros_like(self.c)
        if S.size:
            a_ls, w = self.segment(S, signs)
            a[S] = a_ls - lam * w
        return a

    def polish(self, S, signs, lam):
        """Exact minimizer if the optimal support/signs are as given, else None."""
        a = self.exact(S, signs, lam)
        if np.any(np.sign(a[S]) != signs):
            return None
        return a if self.kkt_ok(a, lam) else None

    def refine(self, x, lam, max_steps=None):
        """Feature-sign active-set search started at ``x``; exact optimum or None."""
        n = x.size
        max_steps = max_steps or 20 * n + 20
        x = x.copy()
        for _ in range(max_steps):
            g = self.neg_grad(x)
            tol = self.tol(x, lam)
            active = x != 0
            theta = np.sign(x)
            if np.all(np.abs(g[active] - lam * theta[active]) <= tol):
                off = np.where(active, 0.0, np.abs(g))
                i = int(np.argmax(off))
                if off[i] <= lam + tol:
                    return x if self.kkt_ok(x, lam) else None
                theta[i] = np.sign(g[i])
                active[i] = True
            A = np.flatnonzero(active)
            cur = x[A]
            diff = self.exact(A, theta[A], lam)[A] - cur
            # candidates: the full step and every zero crossing along it
            with np.errstate(divide="ignore", invalid="ignore"):
                cross = -cur / diff
            cands = [(1.0, None)] + [(float(cross[j]), j) for j in np.flatnonzero((cross > 0) & (cross < 1))]
            best, best_f = x, self.objective(x, lam)
            for step, j in cands:
                z = cur + step * diff
                if j is not None:
                    z[j] = 0.0
                cand = x.copy()
                cand[A] = z
                f = self.objective(cand, lam)
                if f < best_f:
                    best, best_f = cand, f
            if best is x:
                return None
            x = best
        return None

    def solve(self, lam, a0=None, max_iter=MAX_ITER):
        """Penalized minimizer at ``lam``: FISTA, finished by an exact active-set search."""
        if a0 is not None and np.any(a0):
            S = np.flatnonzero(a0)
            hit = self.polish(S, np.sign(a0[S]), lam)
            if hit is not None:
                return hit
            hit = self.refine(a0, lam)
            if hit is not None:
                return hit
        x = np.zeros_like(self.c) if a0 is None else a0.copy()
        y, t = x.copy(), 1.0
        step = 1.0 / self.L
        f_old = self.objective(x, lam)
        for k in range(1, max_iter + 1):
            self.iterations += 1
            x_new = soft_threshold(y + step * self.neg_grad(y), step * lam)
            f_new = self.objective(x_new, lam)
            if f_new > f_old:
                # monotone restart
                y, t = x.copy(), 1.0
                continue
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            y = x_new + ((t - 1) / t_new) * (x_new - x)
            done = abs(f_old - f_new) <= OBJ_RTOL * max(abs(f_new), 1e-300)
            x, t, f_old = x_new, t_new, f_new
            if done or k % 100 == 0:
                hit = self.refine(x, lam)
                if hit is not None:
                    return hit
                if done:
                    return x
        raise ConvergenceError(
            f"FISTA did not converge in {max_iter} iterations at lam={lam:.3e}",
            {"lambda": lam, "iterations": self.iterations, "objective": f_old},
        )


def _segment_lambda(prob, a, lam_lo, lam_hi, delta):
    """Exact lam in [lam_lo, lam_hi] where the residual on ``a``'s active segment equals ``delta``."""
    S = np.flatnonzero(a)
    if S.size == 0:
        return None
    s = np.sign(a[S])
    a_ls, w = prob.segment(S, s)
    r0 = prob.y - prob.R[:, S] @ a_ls
    q = prob.R[:, S] @ w
    # ||r0 + lam q||^2 + perp = delta^2
    A, B, C = q @ q, 2 * r0 @ q, r0 @ r0 + prob.perp - delta * delta
    disc = B * B - 4 * A * C
    if A <= 0 or disc < 0:
        return None
    root = (-B + np.sqrt(disc)) / (2 * A)
    if not lam_lo <= root <= lam_hi:
        return None
    full = np.zeros_like(prob.c)
    full[S] = a_ls - root * w
    if np.all(np.sign(full[S]) == s) and prob.kkt_ok(full, root) and prob.residual(full) <= delta * (1 + 1e-9):
        return root, full
    return None


def solve_l1(psi, p, delta, max_iter=MAX_ITER, bisection_steps=BISECTION_STEPS) -> SparseCoefficients:
    """Sparsest coefficients whose residual stays within ``delta``.

    * ``delta >= ||p||``: the zero vector.
    * ``delta`` below the least-squares residual floor: the ``lam -> 0``
      limit is returned with ``infeasible=True``.
    * ``delta == 0``: basis pursuit through the same continuation, accepted
      once the residual is within ``BP_RTOL * ||p||`` of the floor.
    """
    psi = np.asarray(psi, dtype=float)
    p = np.asarray(p, dtype=float).ravel()
    if psi.ndim != 2 or psi.shape[0] != p.shape[0]:
        raise DataError(f"Psi shape {psi.shape} incompatible with {p.shape[0]} measurements")
    if delta < 0:
        raise DataError("delta must be nonnegative")
    X, keep, norms = normalize_columns(psi)
    dropped = sorted(set(range(psi.shape[1])) - set(keep.tolist()))
    prob = _Problem(X, p)
    pnorm = float(np.linalg.norm(p))

    def result(a_scaled, lam, mode, steps=0, infeasible=False):
        a = np.zeros(psi.shape[1])
        a[keep] = a_scaled / norms
        return SparseCoefficients(
            a=a,
            residual_norm=float(np.linalg.norm(p - psi @ a)),
            lam=float(lam),
            iterations=prob.iterations,
            bisection_steps=steps,
            mode=mode,
            infeasible=infeasible,
            dropped_columns=dropped,
        )

    if delta >= pnorm or keep.size == 0:
        return result(np.zeros(keep.size), prob.lam_max, "zero", infeasible=delta < pnorm)

    floor = prob.residual(np.linalg.lstsq(prob.R, prob.y, rcond=None)[0])
    tol = BP_RTOL * pnorm
    lam_min = LAM_FLOOR * prob.lam_max

    # walk lam down by decades until the residual budget is met
    lam_hi, a_hi = prob.lam_max, np.zeros(keep.size)
    lam, a = prob.lam_max, a_hi
    limit = delta <= floor + tol
    target = floor + (tol if delta == 0 else FLOOR_RTOL * pnorm) if limit else delta
    while True:
        lam = max(lam / 10.0, lam_min)
        a = prob.solve(lam, a, max_iter)
        if prob.residual(a) <= target:
            break
        if lam <= lam_min:
            break
        lam_hi, a_hi = lam, a
    if limit or prob.residual(a) > target:
        return result(a, lam, "limit", infeasible=delta + tol < floor)

    lam_lo, a_lo = lam, a
    steps = 0
    for steps in range(1, bisection_steps + 1):
        seg = _segment_lambda(prob, a_lo, lam_lo, lam_hi, delta)
        if seg is not None:
            lam_lo, a_lo = seg
            break
        mid = np.sqrt(lam_lo * lam_hi)
        a_mid = prob.solve(mid, a_lo, max_iter)
        if prob.residual(a_mid) <= delta:
            lam_lo, a_lo = mid, a_mid
        else:
            lam_hi, a_hi = mid, a_mid
    return result(a_lo, lam_lo, "constrained", steps)


def kkt_violation(psi, p, coef: SparseCoefficients) -> dict:
    """Relative stationarity errors of ``coef`` on the unit-column problem.

    ``off`` is ``max(|g| / lam) - 1`` over all columns (must be <= 0 up to
    tolerance) and ``on`` is ``max | |g_S| / lam - 1 |`` over the support, where
    ``g = X^T (p - X a)``.
    """
    psi = np.asarray(psi, dtype=float)
    X, keep, norms = normalize_columns(psi)
    a = coef.a[keep] * norms
    g = X.T @ (np.asarray(p, dtype=float) - X @ a)
    lam = coef.lam
    off = float(np.max(np.abs(g)) / lam - 1.0) if g.size else -1.0
    S = a != 0
    on = float(np.max(np.abs(np.abs(g[S]) / lam - 1.0))) if np.any(S) else 0.0
    sign_ok = bool(np.all(np.sign(g[S]) == np.sign(a[S])))
    return {"off": off, "on": on, "sign_ok": sign_ok}
