"""Config-to-objects plumbing shared by the suite and the command line."""
from dataclasses import dataclass

import numpy as np

from .gains import assemble_gains, select_gammas
from .pde_sim import ClosedLoopProblem, Nonlinearity, initial_data
from .spectral import SpectralParams, build_system, choose_mode_count

EXTRA_PAIRS = 2
MIN_PAIRS = 6


@dataclass(frozen=True, eq=False)
class Design:
    params: SpectralParams
    system: object
    N: int
    gammas: np.ndarray
    gains: object


def mode_count(config):
    if config.N_override is not None:
        return int(config.N_override)
    return choose_mode_count(config.rho, SpectralParams(config.alpha, config.c))


def spectral_system(config, N=None):
    N = mode_count(config) if N is None else N
    params = SpectralParams(config.alpha, config.c)
    return build_system(params, max(N + EXTRA_PAIRS, MIN_PAIRS))


def design(config, system=None, gammas=None):
    """Spectral system, shifts and gains for ``config``.

    ``gammas`` bypasses the shift selection (used for fault injection).
    """
    N = mode_count(config)
    if system is None:
        system = spectral_system(config, N)
    if gammas is None:
        gammas = select_gammas(config.rho, N, config.gamma_spacing, system,
                               check_contraction=config.require_contraction)
    gammas = np.asarray(gammas, dtype=float)
    return Design(system.params, system, N, gammas, assemble_gains(system, gammas, N))


def nonlinearity(config):
    nl = config.nonlinearity
    table = nl.get("table")
    return Nonlinearity(
        kind=nl.get("kind", "zero"), m=float(nl.get("m", 2.0)),
        coeff=float(nl.get("coeff", 1.0)), table=tuple(table) if table else None,
    )


def initial_sampler(config, system=None):
    spec = config.initial_data
    params = dict(spec.get("params", {}))
    if spec.get("preset") == "bandlimited":
        params["seed"] = spec.get("seed", 0)
    return initial_data(spec.get("preset", "eigenmode"), alpha=config.alpha,
                        system=system, **params)


def problem(config, controller=None, system=None, **changes):
    """ClosedLoopProblem from ``config``; keyword arguments override fields."""
    if system is None and controller is not None:
        system = controller.system
    kw = dict(
        c=config.c, alpha=config.alpha, M=config.M, dt=config.dt, T=config.T,
        y0=initial_sampler(config, system),
        nonlinearity=nonlinearity(config), controller=controller, theta=config.theta,
        blowup_cap=config.blowup_cap, save_every=config.save_every,
        max_steps=config.max_steps,
    )
    kw.update(changes)
    return ClosedLoopProblem(**kw)
