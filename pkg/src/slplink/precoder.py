"""Zero-forcing and interference-exploiting symbol-level precoders.

Both precoders transmit x = gamma * pinv(H) @ starget and differ in the
target vector: zero forcing sends the nominal symbols, the balancing precoder
relaxes each user's symbol into its constructive-interference region and
minimizes ||pinv(H) @ starget||^2, which maximizes the common scale gamma
under the per-slot power budget.

The relaxation is a convex QP.  Every region is the nominal point plus a
non-negative combination of boundary directions, so the QP is solved as
non-negative least squares on the real-stacked 2K-dimensional problem with an
active-set iteration (tolerance relative to the gradient scale, iteration cap
200, ties broken by first violated index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import ConstellationSpec, cir_of

SOLVER_TOL = 1e-8
SOLVER_MAX_ITER = 200

_GEN_CACHE: dict[tuple[str, int, int], np.ndarray] = {}


class SolverError(RuntimeError):
    pass


def pseudo_inverse(h: np.ndarray) -> np.ndarray:
    """Right pseudo-inverse H^H (H H^H)^-1 for a full-row-rank (K, N) channel."""
    gram = h @ h.conj().T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("channel matrix is rank deficient")
    return h.conj().T @ np.linalg.inv(gram)


def zf_precode(h: np.ndarray, s: np.ndarray, p_t: float = 1.0):
    """Zero-forcing transmit vector for one symbol slot.

    Returns (x, gamma) with x = gamma * pinv(H) s and ||x||^2 = p_t, so the
    noise-free receive signal is gamma * s for every user.
    """
    d = pseudo_inverse(h)
    w = d @ s
    gamma = np.sqrt(p_t / np.vdot(w, w).real)
    return gamma * w, float(gamma)


def _boundary_directions(spec: ConstellationSpec, q: int) -> np.ndarray:
    """(2, n) real columns spanning the region of point q from its apex."""
    key = (spec.kind, spec.order, q)
    cached = _GEN_CACHE.get(key)
    if cached is not None:
        return cached
    region = cir_of(spec, q)
    if region.kind == "cone":
        phi = np.angle(region.apex)
        theta = region.half_angle
        angles = [phi + theta, phi - theta]
        if spec.order == 2:
            # the cone is a half plane; two edge directions are antiparallel
            # and need the axis direction to span it
            angles.append(phi)
        dirs = np.stack([[np.cos(a) for a in angles], [np.sin(a) for a in angles]])
    else:
        cols = []
        if region.re_dir:
            cols.append([float(region.re_dir), 0.0])
        if region.im_dir:
            cols.append([0.0, float(region.im_dir)])
        dirs = np.array(cols, dtype=float).T if cols else np.zeros((2, 0))
    _GEN_CACHE[key] = dirs
    return dirs


def _nnls_active_set(gram: np.ndarray, lin: np.ndarray,
                     tol: float = SOLVER_TOL, max_iter: int = SOLVER_MAX_ITER) -> np.ndarray:
    """min 0.5 lam' G lam + g' lam subject to lam >= 0.

    Lawson-Hanson style active-set iteration.  The stationarity tolerance is
    tol * max(1, ||g||_inf); ties on the most violated index resolve to the
    smallest index.  Raises SolverError with the KKT residual when the
    iteration cap is hit.
    """
    n = lin.size
    lam = np.zeros(n)
    if n == 0:
        return lam
    passive = np.zeros(n, dtype=bool)
    scale = max(1.0, float(np.max(np.abs(lin))))
    eps = tol * scale
    tiny = 1e-14 * scale

    def _sub_solve():
        z = np.zeros(n)
        sub = gram[np.ix_(passive, passive)]
        rhs = -lin[passive]
        try:
            z[passive] = np.linalg.solve(sub, rhs)
        except np.linalg.LinAlgError:
            z[passive] = np.linalg.lstsq(sub, rhs, rcond=None)[0]
        return z

    iters = 0
    while True:
        grad = lin + gram @ lam
        cand = np.where(passive, -np.inf, -grad)
        pick = int(np.argmax(cand))
        if cand[pick] <= eps:
            return lam
        passive[pick] = True
        while True:
            iters += 1
            if iters > max_iter:
                resid = float(np.max(np.maximum(-(lin + gram @ lam), 0.0))) / scale
                raise SolverError(
                    f"active-set iteration cap {max_iter} exceeded, KKT residual {resid:.3e}")
            z = _sub_solve()
            if np.all(z[passive] > 0.0):
                lam = z
                break
            clip = passive & (z <= 0.0)
            denom = lam - z
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(denom > tiny, lam / np.maximum(denom, tiny), 0.0)
            alpha = float(np.min(steps[clip]))
            lam = lam + alpha * (z - lam)
            lam[clip & (lam <= tiny)] = 0.0
            lam[~passive] = 0.0
            passive = lam > 0.0


@dataclass
class SlotSolution:
    x: np.ndarray
    gamma: float
    s_tilde: np.ndarray


class CisbWorkspace:
    """Per-channel state for repeated balancing solves.

    Precomputes the pseudo-inverse and the real-stacked Gram matrix once, then
    solves one QP per symbol slot.  All slots of a block share the instance.
    """

    def __init__(self, h: np.ndarray, spec: ConstellationSpec, p_t: float = 1.0):
        self.spec = spec
        self.p_t = p_t
        self.k = h.shape[0]
        self.pinv = pseudo_inverse(h)
        re, im = self.pinv.real, self.pinv.imag
        a = np.block([[re, -im], [im, re]])
        self.gram = a.T @ a
        self._dirs = [_boundary_directions(spec, q) for q in range(spec.order)]

    def solve(self, q_vec: np.ndarray) -> SlotSolution:
        """Balancing solution for one slot of per-user point indices."""
        k = self.k
        spec = self.spec
        v = spec.points[q_vec]
        u0 = np.concatenate([v.real, v.imag])
        mu0 = self.gram @ u0

        cols = [self._dirs[q] for q in q_vec]
        n_tot = sum(c.shape[1] for c in cols)
        if n_tot == 0:
            s_tilde = v
        else:
            p = np.zeros((2 * k, n_tot))
            j = 0
            for uk, c in enumerate(cols):
                w = c.shape[1]
                p[uk, j:j + w] = c[0]
                p[k + uk, j:j + w] = c[1]
                j += w
            lin = p.T @ mu0
            gram = p.T @ (self.gram @ p)
            lam = _nnls_active_set(gram, lin)
            u = u0 + p @ lam
            s_tilde = u[:k] + 1j * u[k:]

        w = self.pinv @ s_tilde
        obj = np.vdot(w, w).real
        gamma = float(np.sqrt(self.p_t / obj))
        return SlotSolution(x=gamma * w, gamma=gamma, s_tilde=s_tilde)


def cisb_target(h: np.ndarray, s: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Relaxed target vector: the region point minimizing ||pinv(H) starget||^2."""
    from .constellation import ml_decide_many

    q_vec = ml_decide_many(spec, np.asarray(s))
    if not np.allclose(spec.points[q_vec], s, atol=1e-9):
        raise ValueError("symbol vector holds values outside the constellation")
    ws = CisbWorkspace(h, spec)
    return ws.solve(q_vec).s_tilde


def cisb_precode(h: np.ndarray, s: np.ndarray, spec: ConstellationSpec, p_t: float = 1.0):
    """Balancing transmit vector for one slot.  Returns (x, gamma, s_tilde)."""
    from .constellation import ml_decide_many

    q_vec = ml_decide_many(spec, np.asarray(s))
    ws = CisbWorkspace(h, spec, p_t=p_t)
    sol = ws.solve(q_vec)
    return sol.x, sol.gamma, sol.s_tilde


def power_allocate(gammas: np.ndarray, powers: np.ndarray | None = None):
    """Block power reallocation across symbol slots.

    Given per-slot scales gamma[l] and budgets P[l], returns (gamma_bar,
    scale) so that transmitting scale[l] * x[l] yields the common receive
    scale gamma_bar while the total block energy is conserved.  A uniform
    gamma vector short-circuits to gamma_bar = gamma exactly.
    """
    gammas = np.asarray(gammas, dtype=float)
    if gammas.ndim != 1 or gammas.size == 0:
        raise ValueError("gammas must be a non-empty 1-D array")
    if np.any(gammas <= 0.0):
        raise ValueError("per-slot scales must be positive")
    if powers is None:
        powers = np.ones_like(gammas)
    powers = np.asarray(powers, dtype=float)
    if powers.shape != gammas.shape or np.any(powers <= 0.0):
        raise ValueError("powers must match gammas and be positive")

    if np.all(gammas == gammas[0]):
        gamma_bar = float(gammas[0])
    else:
        gamma_bar = float(np.sqrt(powers.sum() / np.sum(powers / gammas**2)))
    return gamma_bar, gamma_bar / gammas


def demod_signal(y: np.ndarray, mode: str, gamma_bar: float | None = None) -> np.ndarray:
    """Receiver-side signal entering the demodulator.

    mode "wr": the block was rescaled to the common gamma_bar, divide it out.
    mode "wor": per-slot scales were kept, pass the signal through unchanged.
    """
    if mode == "wr":
        if gamma_bar is None:
            raise ValueError("mode 'wr' needs gamma_bar")
        return y / gamma_bar
    if mode == "wor":
        return y
    raise ValueError(f"unknown mode {mode!r}")
