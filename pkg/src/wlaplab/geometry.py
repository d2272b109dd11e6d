"""Symbolic differential geometry on the catalog spaces.

Real spaces are handled through their ambient embedding: the sphere factor
S^m(r) sits in R^{m+1}, so every function is represented by an extension U
and tangential derivatives come from projecting ambient ones.  The formulas
below hold for *any* extension, evaluated on the sphere:

    grad u  = P grad U
    Hess u  = P (D^2 U) P - (x . grad_x U / r^2) P_sphere
    Lap u   = trace(Hess u)

Complex-Gaussian functions are polynomials in z and zbar treated as
independent (Wirtinger) variables.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import sympy as sp

from .errors import SymbolicDerivativeUnavailable
from .spaces import ModelSpace, SpaceKind


def _exact(value: float):
    return sp.nsimplify(value, rational=True)


class EmbeddedGeometry:
    """Riemannian data of a real catalog space in ambient coordinates."""

    def __init__(self, space: ModelSpace):
        if space.is_complex:
            raise SymbolicDerivativeUnavailable("EmbeddedGeometry handles real-convention spaces")
        self.space = space
        self.m = space.sphere_dim
        if space.kind is SpaceKind.GAUSSIAN:
            self.x = ()
            self.t = sp.symbols(f"x1:{space.real_dimension + 1}", real=True)
            self.r2 = None
            self.f = _exact(space.lam) / 2 * sum(s**2 for s in self.t)
        elif space.kind is SpaceKind.SPHERE:
            self.x = sp.symbols(f"x1:{self.m + 2}", real=True)
            self.t = ()
            self.r2 = _exact(space.radius**2)
            self.f = sp.Integer(0)
        else:
            self.x = sp.symbols(f"x1:{self.m + 2}", real=True)
            self.t = sp.symbols(f"t1:{space.flat_dim + 1}", real=True)
            self.r2 = sp.Integer(2 * (self.m - 1))
            self.f = sp.Rational(1, 4) * sum(s**2 for s in self.t)
        self.coords = tuple(self.x) + tuple(self.t)
        d = len(self.coords)
        ns = len(self.x)
        P = sp.eye(d)
        Ps = sp.zeros(d, d)
        if ns:
            xv = sp.Matrix(self.x)
            Ps[:ns, :ns] = sp.eye(ns) - xv * xv.T / self.r2
            P[:ns, :ns] = Ps[:ns, :ns]
        self.P = P
        self.Ps = Ps

    def grad(self, U) -> sp.Matrix:
        return self.P * sp.Matrix([sp.diff(U, c) for c in self.coords])

    def hess(self, U) -> sp.Matrix:
        H = sp.hessian(U, self.coords)
        out = self.P * H * self.P
        if self.x:
            radial = sum(xi * sp.diff(U, xi) for xi in self.x) / self.r2
            out = out - radial * self.Ps
        return out

    def lap(self, U):
        # trace(P_s) = m on the sphere; use the constant so the extension is simple
        H = sp.hessian(U, self.coords)
        tr = sum((self.P * H * self.P)[i, i] for i in range(len(self.coords)))
        if self.x:
            tr = tr - self.m * sum(xi * sp.diff(U, xi) for xi in self.x) / self.r2
        return tr

    def dot(self, a: sp.Matrix, b: sp.Matrix):
        return (a.T * b)[0, 0]

    def weighted_lap(self, U):
        """Delta_f U = Delta U - <grad f, grad U>."""
        return self.lap(U) - self.dot(self.grad(self.f), self.grad(U))

    @cached_property
    def ricci(self) -> sp.Matrix:
        if not self.x:
            return sp.zeros(len(self.coords), len(self.coords))
        return sp.Rational(self.m - 1) / self.r2 * self.Ps

    @cached_property
    def ricci_f(self) -> sp.Matrix:
        return self.ricci + self.hess(self.f)

    def lambdify(self, expr):
        fn = sp.lambdify(self.coords, expr, modules="numpy")

        def call(nodes):
            nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
            out = fn(*nodes.T)
            return np.broadcast_to(np.asarray(out, dtype=float), (nodes.shape[0],)).copy()

        return call


class ComplexFlat:
    """C^n with g_{i jbar} = delta_ij and F = -|z|^2."""

    def __init__(self, n: int):
        self.n = n
        self.z = sp.symbols(f"z1:{n + 1}")
        self.zb = sp.symbols(f"zb1:{n + 1}")
        self.F = -sum(a * b for a, b in zip(self.z, self.zb))
        self._swap = {**dict(zip(self.z, self.zb)), **dict(zip(self.zb, self.z))}

    def conj(self, expr):
        return sp.sympify(expr).xreplace(self._swap).xreplace({sp.I: -sp.I})

    def dbar(self, u) -> list:
        return [sp.diff(u, b) for b in self.zb]

    def delta_F(self, u):
        """Delta_F u = g^{i jbar} (d_i d_jbar u + d_i F d_jbar u)."""
        return sp.expand(sum(sp.diff(u, a, b) + sp.diff(self.F, a) * sp.diff(u, b)
                             for a, b in zip(self.z, self.zb)))

    def lambdify(self, expr):
        fn = sp.lambdify(self.z + self.zb, expr, modules="numpy")

        def call(z):
            z = np.atleast_2d(np.asarray(z, dtype=complex))
            out = fn(*z.T, *np.conj(z).T)
            return np.broadcast_to(np.asarray(out, dtype=complex), (z.shape[0],)).copy()

        return call


def fano_symbols():
    return sp.symbols("theta phi", real=True)
