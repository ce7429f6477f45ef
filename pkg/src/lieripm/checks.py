"""Finite-difference verification of every block family at random operating points."""

from dataclasses import dataclass

import numpy as np

from .constraints import (ROT, AxisBlock, BoxBlock, FaultyBlock, InitialRotBlock,
                          InitialVecBlock, JointWrenchBlock, ObstacleBlock, PivotBlock,
                          RotDynBlock, RotKinBlock, TransDynBlock, TransKinBlock, fd_check)
from .costs import ChordalCostBlock, QuadCostBlock
from .lie import random_rotation
from .rigid_body import nonstandard_inertia

GRAD_TOL = 1e-6
HESS_TOL = 1e-4


def _random_spd(rng):
    A = rng.normal(size=(3, 3))
    return A @ A.T + 0.5 * np.eye(3)


def _unit(rng):
    a = rng.normal(size=3)
    return a / np.linalg.norm(a)


def random_values(block, rng):
    """Random local values for the slot kinds of ``block``."""
    return [random_rotation(rng) if k == ROT else rng.normal(size=int(k)) for k in block.kinds]


def block_catalogue(rng):
    """One randomly parameterized instance of each block family, keyed by family name.

    Families cover the kinematic, dynamic and joint constraints, obstacle and
    box inequalities, and both cost expansions.
    """
    I_ns = nonstandard_inertia(np.diag(rng.uniform(0.5, 2.0, size=3)))
    dt = float(rng.uniform(0.01, 0.1))
    r1, r2 = rng.normal(size=3), rng.normal(size=3)
    blocks = [
        RotKinBlock((0, 1, 2)),
        TransKinBlock((0, 1, 2), dt),
        InitialRotBlock((0,), random_rotation(rng)),
        InitialVecBlock((0,), rng.normal(size=3)),
        RotDynBlock((0, 1, 2), I_ns, dt),
        TransDynBlock((0, 1, 2, 3), float(rng.uniform(0.5, 2.0)), np.array([0, 0, -9.81]), dt),
        PivotBlock((0, 1, 2, 3), r1, r2),
        AxisBlock((0, 1), _unit(rng)),
        JointWrenchBlock((0, 1, 2, 3), r1, r2, _unit(rng), dt),
        ObstacleBlock((0,), rng.normal(size=2), float(rng.uniform(0.2, 1.0))),
        BoxBlock((0,), -np.ones(3), np.ones(3)),
        ChordalCostBlock((0,), random_rotation(rng), _random_spd(rng)),
        QuadCostBlock((0,), rng.normal(size=3), _random_spd(rng)),
    ]
    return {b.family: b for b in blocks}


@dataclass
class CheckRow:
    family: str
    grad_err: float
    hess_err: float

    @property
    def passed(self):
        return bool(self.grad_err <= GRAD_TOL and self.hess_err <= HESS_TOL)


def check_blocks(blocks, states=100, rng=None, fault=None):
    """Worst gradient/Hessian errors per family over ``states`` random states and directions.

    ``blocks`` maps family names to block instances.  ``fault`` names a
    family whose Jacobian is perturbed before checking.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    rows = []
    for fam, block in blocks.items():
        if fam == fault:
            block = FaultyBlock(block, entry=(0, 0), delta=1e-3)
        g = h = 0.0
        for _ in range(states):
            ge, he = fd_check(block, random_values(block, rng), trials=1, rng=rng)
            g, h = max(g, ge), max(h, he)
        rows.append(CheckRow(fam, g, h))
    return rows
