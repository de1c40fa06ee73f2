"""First-order and quasi-Newton optimizers on flat parameter vectors."""
from __future__ import annotations

import warnings
from collections import deque
from typing import Callable

import numpy as np
from scipy.optimize import line_search

try:
    from scipy.optimize._linesearch import LineSearchWarning
except ImportError:  # pragma: no cover
    LineSearchWarning = RuntimeWarning


class Adam:
    """Adam with bias correction; state lives on the instance."""

    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


class _Memo:
    """Caches the last value/gradient so the line search does not recompute."""

    def __init__(self, fun_and_grad: Callable):
        self.fun_and_grad = fun_and_grad
        self.x = None
        self.f = None
        self.g = None
        self.calls = 0

    def __call__(self, x):
        if self.x is None or not np.array_equal(x, self.x):
            f, g = self.fun_and_grad(x)
            self.calls += 1
            self.x = np.array(x, copy=True)
            self.f = float(f)
            self.g = np.asarray(g, dtype=float)
        return self.f, self.g

    def f_only(self, x):
        return self(x)[0]

    def g_only(self, x):
        return self(x)[1]


def lbfgs(
    fun_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iter: int = 100,
    memory: int = 10,
    gtol: float = 1e-10,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> tuple[np.ndarray, float, int]:
    """Limited-memory BFGS with a strong-Wolfe line search.

    Never returns a point worse than ``x0``: every accepted step satisfies
    the sufficient-decrease condition. Returns (x, f, iterations).
    """
    memo = _Memo(fun_and_grad)
    x = np.array(x0, dtype=float)
    f, g = memo(x)
    if not np.isfinite(f):
        return x, f, 0
    s_hist: deque = deque(maxlen=memory)
    y_hist: deque = deque(maxlen=memory)
    f_prev = None
    it = 0
    while it < max_iter:
        if np.max(np.abs(g)) <= gtol:
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(s_hist), reversed(y_hist)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            q *= (s @ y) / (y @ y)
        else:
            q /= max(1.0, np.linalg.norm(g))
        for a, rho, s, y in reversed(alphas):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        if g @ d >= 0:
            s_hist.clear()
            y_hist.clear()
            d = -g / max(1.0, np.linalg.norm(g))
        with warnings.catch_warnings():
            # a failed Wolfe search falls back to backtracking below
            warnings.simplefilter("ignore", LineSearchWarning)
            step, *_ = line_search(
                memo.f_only, memo.g_only, x, d, gfk=g, old_fval=f, old_old_fval=f_prev, c1=1e-4, c2=0.9, maxiter=30
            )
        if step is None:
            step = _backtrack(memo, x, f, g, d)
            if step is None:
                if s_hist:
                    s_hist.clear()
                    y_hist.clear()
                    continue
                break
        x_new = x + step * d
        f_new, g_new = memo(x_new)
        if not np.isfinite(f_new) or f_new > f:
            break
        s = x_new - x
        y = g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
        f_prev, f, g, x = f, f_new, g_new, x_new
        it += 1
        if callback is not None:
            callback(it, x, f)
    return x, f, it


def _backtrack(memo: _Memo, x, f, g, d, shrink: float = 0.5, max_steps: int = 40):
    slope = g @ d
    t = 1.0
    for _ in range(max_steps):
        ft = memo.f_only(x + t * d)
        if np.isfinite(ft) and ft <= f + 1e-4 * t * slope:
            return t
        t *= shrink
    return None
