"""Independent oracles shared by the unit tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from twophase.constitutive import (
    FluidParams,
    GibbsPoint,
    HelmholtzPoint,
    chi_bar,
    gibbs_eval,
    helmholtz_reduced_eval,
)

FD_STEP = 1e-6


def rel_err(analytic, numeric) -> float:
    """Largest ``|a - b| / max(|a|, 1)``: relative for large values, absolute near zero."""
    a = np.asarray(analytic, dtype=float)
    b = np.asarray(numeric, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1.0)))


def central(f, x, h=FD_STEP):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def random_gibbs_points(rng, size: int, dim: int = 2) -> GibbsPoint:
    return GibbsPoint(
        p=rng.uniform(-5.0, 5.0, size),
        theta=rng.uniform(0.2, 5.0, size),
        chi=rng.uniform(0.0, 1.0, size),
        g=rng.uniform(-2.0, 2.0, (dim, size)),
    )


def random_helmholtz_points(rng, size: int, dim: int = 2) -> HelmholtzPoint:
    return HelmholtzPoint(
        rho=rng.uniform(0.8, 2.2, size),
        theta=rng.uniform(0.2, 5.0, size),
        r=rng.uniform(-2.0, 2.0, (dim, size)),
    )


def derivative_errors(params: FluidParams, rng, size: int = 1000) -> dict[str, float]:
    """Analytic-vs-centered-difference errors of every coded constitutive derivative."""
    out = {}
    gp = random_gibbs_points(rng, size)
    tg = gibbs_eval(params, gp)

    def G(**kw):
        return gibbs_eval(params, GibbsPoint(**{**gp.__dict__, **kw})).G

    out["tau = G_p"] = rel_err(tg.tau, central(lambda p: G(p=p), gp.p))
    out["s = -G_theta"] = rel_err(tg.s, -central(lambda t: G(theta=t), gp.theta))
    out["G_chi"] = rel_err(tg.G_chi, central(lambda c: G(chi=c), gp.chi))
    for a in range(gp.g.shape[0]):
        def shift(x, a=a):
            g = gp.g.copy()
            g[a] = x
            return G(g=g)
        out[f"G_g[{a}]"] = rel_err(tg.G_g[a], central(shift, gp.g[a]))

    hp = random_helmholtz_points(rng, size)
    th = helmholtz_reduced_eval(params, hp)

    def F(**kw):
        return helmholtz_reduced_eval(params, HelmholtzPoint(**{**hp.__dict__, **kw})).F

    out["s = -F_theta"] = rel_err(th.s, -central(lambda t: F(theta=t), hp.theta))
    out["F_rho"] = rel_err(th.F_rho, central(lambda r: F(rho=r), hp.rho))
    for a in range(hp.r.shape[0]):
        def shift(x, a=a):
            r = hp.r.copy()
            r[a] = x
            return F(r=r)
        out[f"F_r[{a}]"] = rel_err(th.F_r[a], central(shift, hp.r[a]))

    c, c1, c2 = chi_bar(params, hp.rho)
    out["chi_bar'"] = rel_err(c1, central(lambda r: chi_bar(params, r)[0], hp.rho))
    out["chi_bar''"] = rel_err(c2, central(lambda r: chi_bar(params, r)[1], hp.rho))

    W = params.W
    theta, chi, q = gp.theta, gp.chi, rng.uniform(0.0, 4.0, size)
    out["W_theta"] = rel_err(W.d_theta(theta, chi, q), central(lambda t: W.value(t, chi, q), theta))
    out["W_chi"] = rel_err(W.d_chi(theta, chi, q), central(lambda x: W.value(theta, x, q), chi))
    out["W_q"] = rel_err(W.d_q(theta, chi, q), central(lambda x: W.value(theta, chi, x), q))
    out["W_chichi"] = rel_err(W.d_chi_chi(theta, chi, q), central(lambda x: W.d_chi(theta, x, q), chi))
    e_partials = W.energy_partials(theta, chi, q)
    s_partials = W.entropy_partials(theta, chi, q)
    for i, name in enumerate(("theta", "chi", "q")):
        def along(x, i=i, kind="e"):
            args = [theta, chi, q]
            args[i] = x
            return W.energy(*args) if kind == "e" else -W.d_theta(*args)
        out[f"e_{name}"] = rel_err(e_partials[i], central(along, [theta, chi, q][i]))
        out[f"s_{name}"] = rel_err(s_partials[i], central(lambda x, i=i: along(x, i, "s"), [theta, chi, q][i]))
    return out


def slaving_identity_residual(params: FluidParams, rng, size: int = 1000) -> float:
    """Max relative residual of ``W_chi / tau* = -rho^2 F_rho + rho^2 (chi''/chi') r . F_r``."""
    hp = random_helmholtz_points(rng, size)
    th = helmholtz_reduced_eval(params, hp)
    c, c1, c2 = chi_bar(params, hp.rho)
    q = c1**2 * np.sum(hp.r**2, axis=0)
    lhs = params.W.d_chi(hp.theta, c, q) / params.tau_star
    t1 = -hp.rho**2 * th.F_rho
    t2 = hp.rho**2 * (c2 / c1) * np.sum(hp.r * th.F_r, axis=0)
    scale = np.maximum.reduce([np.abs(lhs), np.abs(t1), np.abs(t2)])
    return float(np.max(np.abs(lhs - (t1 + t2)) / scale))
